//! Experiment configuration files.
//!
//! The format is a TOML subset: `key = value` lines grouped under `[section]`
//! and dotted `[section.sub]` headers, with floats, integers, booleans,
//! strings and flat arrays of numbers. Every key has a default that depends on
//! the experiment kind; a file only lists what it changes.
//!
//! ```toml
//! [experiment]
//! kind = "reproduce-example-2"
//!
//! [sde]
//! system = "example-2"
//! x0 = 1.0
//! c = 1.0
//!
//! [sde.g]
//! clock = 1.0
//!
//! [subordinator]
//! family = "stable"
//! beta = 0.5
//!
//! [mc]
//! paths = 10000
//! times = [0.5, 1.0, 2.0]
//! ```
//!
//! Parsing reports every problem it finds, each with its line number.

use std::fmt;
use std::path::{Path, PathBuf};

use toml_edit::{Array, DocumentMut, Item, Table, Value};

use crate::error::{Error, Result};
use crate::levy::{JumpLaw, LevyMeasure, QuadratureConfig, SubordinatorSpec};
use crate::lyapunov::{GridSpec, LyapunovCandidate, StabilityCriteria, Theorem};
use crate::sde::{Affine, AffineJump, CoefficientSet, IntegratorConfig, TcSdeSpec};
use crate::stability::McConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Simulate,
    VerifyLyapunov,
    EstimateStability,
    CheckDuality,
    ReproduceExample1,
    ReproduceExample2,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Simulate,
        ExperimentKind::VerifyLyapunov,
        ExperimentKind::EstimateStability,
        ExperimentKind::CheckDuality,
        ExperimentKind::ReproduceExample1,
        ExperimentKind::ReproduceExample2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::VerifyLyapunov => "verify-lyapunov",
            ExperimentKind::EstimateStability => "estimate-stability",
            ExperimentKind::CheckDuality => "check-duality",
            ExperimentKind::ReproduceExample1 => "reproduce-example-1",
            ExperimentKind::ReproduceExample2 => "reproduce-example-2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Named coefficient presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemPreset {
    ExampleOne,
    ExampleTwo,
    ExampleTwoReduced,
    Custom,
}

impl SystemPreset {
    const ALL: [SystemPreset; 4] = [
        SystemPreset::ExampleOne,
        SystemPreset::ExampleTwo,
        SystemPreset::ExampleTwoReduced,
        SystemPreset::Custom,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SystemPreset::ExampleOne => "example-1",
            SystemPreset::ExampleTwo => "example-2",
            SystemPreset::ExampleTwoReduced => "example-2-reduced",
            SystemPreset::Custom => "custom",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// `(f, k, g, h)` of the preset; `custom` starts from all zeros.
    fn coefficients(&self) -> (Affine, Affine, Affine, AffineJump) {
        let lin = Affine::linear;
        match self {
            SystemPreset::ExampleOne => (
                lin(-1.0),
                lin(0.25),
                lin(1.0),
                AffineJump {
                    xy: 1.0,
                    ..Default::default()
                },
            ),
            SystemPreset::ExampleTwo | SystemPreset::ExampleTwoReduced => (
                if *self == SystemPreset::ExampleTwo {
                    lin(-1.0)
                } else {
                    Affine::default()
                },
                Affine::default(),
                Affine {
                    clock: 1.0,
                    ..Default::default()
                },
                AffineJump {
                    xy2: 1.0,
                    x: -1.0,
                    ..Default::default()
                },
            ),
            SystemPreset::Custom => Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeSection {
    pub system: SystemPreset,
    pub x0: f64,
    pub c: f64,
    pub f: Affine,
    pub k: Affine,
    pub g: Affine,
    pub h: AffineJump,
}

impl SdeSection {
    fn preset(system: SystemPreset, x0: f64) -> Self {
        let (f, k, g, h) = system.coefficients();
        Self {
            system,
            x0,
            c: 1.0,
            f,
            k,
            g,
            h,
        }
    }
}

/// Subordinator parameters; only those of the selected family are used.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorSection {
    pub family: String,
    pub beta: f64,
    pub theta: f64,
    pub shape: f64,
    pub rate: f64,
    pub slope: f64,
    pub intensity: f64,
    pub jump_law: String,
    pub jump_size: f64,
    pub jump_rate: f64,
    pub jump_lo: f64,
    pub jump_hi: f64,
}

impl Default for SubordinatorSection {
    fn default() -> Self {
        Self {
            family: "stable".into(),
            beta: 0.5,
            theta: 1.0,
            shape: 1.0,
            rate: 1.0,
            slope: 1.0,
            intensity: 1.0,
            jump_law: "exponential".into(),
            jump_size: 1.0,
            jump_rate: 1.0,
            jump_lo: 0.0,
            jump_hi: 1.0,
        }
    }
}

impl SubordinatorSection {
    pub fn build(&self) -> Result<SubordinatorSpec> {
        let spec = match self.family.as_str() {
            "stable" => SubordinatorSpec::Stable { beta: self.beta },
            "tempered-stable" => SubordinatorSpec::TemperedStable {
                beta: self.beta,
                theta: self.theta,
            },
            "gamma" => SubordinatorSpec::Gamma {
                shape: self.shape,
                rate: self.rate,
            },
            "compound-poisson" => SubordinatorSpec::CompoundPoisson {
                rate: self.intensity,
                jumps: match self.jump_law.as_str() {
                    "fixed" => JumpLaw::Fixed(self.jump_size),
                    "exponential" => JumpLaw::Exponential { rate: self.jump_rate },
                    "uniform" => JumpLaw::Uniform {
                        lo: self.jump_lo,
                        hi: self.jump_hi,
                    },
                    other => return Err(Error::Configuration(format!("unknown jump law {other:?}"))),
                },
            },
            "deterministic" => SubordinatorSpec::Deterministic { slope: self.slope },
            other => return Err(Error::Configuration(format!("unknown subordinator family {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevySection {
    /// `uniform` (constant `height` on `(lo, hi)`) or `power-law` (`scale·|y|^{−exponent}`)
    pub kind: String,
    pub lo: f64,
    pub hi: f64,
    pub height: f64,
    pub exponent: f64,
    pub scale: f64,
    pub cutoff: f64,
}

impl Default for LevySection {
    fn default() -> Self {
        Self {
            kind: "uniform".into(),
            lo: -1.0,
            hi: 1.0,
            height: 1.0,
            exponent: 1.5,
            scale: 1.0,
            cutoff: 1e-9,
        }
    }
}

impl LevySection {
    pub fn build(&self, c: f64) -> Result<LevyMeasure> {
        match self.kind.as_str() {
            "uniform" => LevyMeasure::uniform(self.lo, self.hi, self.height, c, self.cutoff),
            "power-law" => LevyMeasure::power_law(self.exponent, self.lo, self.hi, self.scale, c, self.cutoff),
            other => Err(Error::Configuration(format!("unknown Lévy measure kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSection {
    /// `abs-power`, `abs`, `square` or `bounded-square`
    pub candidate: String,
    pub alpha: f64,
    pub scale: f64,
    pub exclusion_radius: f64,
}

impl CandidateSection {
    pub fn build(&self) -> Result<LyapunovCandidate> {
        let base = match self.candidate.as_str() {
            "abs-power" => LyapunovCandidate::abs_power(self.alpha, self.scale),
            "abs" => LyapunovCandidate::abs(self.scale),
            "square" => LyapunovCandidate::square(self.scale),
            "bounded-square" => LyapunovCandidate::bounded_square(),
            other => return Err(Error::Configuration(format!("unknown Lyapunov candidate {other:?}"))),
        };
        Ok(base.with_exclusion_radius(self.exclusion_radius))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriteriaSection {
    pub theorem: Theorem,
    pub h: f64,
    pub p: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// `γ_i(α) = gamma_i·α^{gamma_i_power}`
    pub gamma1: f64,
    pub gamma1_power: f64,
    pub gamma2: f64,
    pub gamma2_power: f64,
    pub radii: Vec<f64>,
    pub radial_ladder: Vec<f64>,
    pub radial_level: f64,
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub x_points: usize,
    pub scatter: usize,
    pub tau_pass: f64,
}

impl CriteriaSection {
    pub fn build(&self, quadrature: QuadratureConfig) -> StabilityCriteria {
        let grid = GridSpec::new(
            self.t1.clone(),
            self.t2.clone(),
            GridSpec::linspace(self.x_min, self.x_max, self.x_points),
        )
        .with_scatter(self.scatter);
        let (g1, p1, g2, p2) = (self.gamma1, self.gamma1_power, self.gamma2, self.gamma2_power);
        let mut crit = StabilityCriteria::new(self.theorem, grid)
            .with_domain(self.h)
            .with_moment(self.p, self.alpha1, self.alpha2, self.alpha3)
            .with_gammas(move |a| g1 * a.powf(p1), move |a| g2 * a.powf(p2), self.radii.clone())
            .with_radial(self.radial_ladder.clone(), self.radial_level);
        crit.tau_pass = self.tau_pass;
        crit.quadrature = quadrature;
        crit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSection {
    pub paths: usize,
    pub times: Vec<f64>,
    pub confidence: f64,
    pub seed: u64,
    pub p: f64,
    /// relative slack added to moment-bound comparisons
    pub slack: f64,
    /// bound `factor·|x0|^p·e^{−rate·t}`; a negative rate disables the comparison
    pub bound_factor: f64,
    pub bound_rate: f64,
    /// stay radius `r`; zero disables the stay-probability table
    pub radius: f64,
    pub stay_horizon: f64,
    /// stay probability required for a pass
    pub stay_min: f64,
    pub duality_steps: Vec<f64>,
    pub duality_threshold: f64,
}

impl McSection {
    pub fn mc(&self) -> McConfig {
        McConfig {
            paths: self.paths,
            report_times: self.times.clone(),
            confidence: self.confidence,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub svg: bool,
}

/// A fully validated experiment definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub sde: SdeSection,
    pub subordinator: SubordinatorSection,
    pub levy: LevySection,
    pub lyapunov: CandidateSection,
    pub criteria: CriteriaSection,
    pub mc: McSection,
    pub integrator: IntegratorConfig,
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Defaults for an experiment kind.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let example_one = kind == ExperimentKind::ReproduceExample1;
        let duality = kind == ExperimentKind::CheckDuality;
        let system = match kind {
            ExperimentKind::ReproduceExample1 => SystemPreset::ExampleOne,
            ExperimentKind::CheckDuality => SystemPreset::ExampleTwoReduced,
            _ => SystemPreset::ExampleTwo,
        };
        let sde = SdeSection::preset(system, if example_one { 0.01 } else { 1.0 });
        let lyapunov = if example_one {
            CandidateSection {
                candidate: "abs-power".into(),
                alpha: 0.5,
                scale: 1.0,
                exclusion_radius: 1e-6,
            }
        } else {
            CandidateSection {
                candidate: "abs".into(),
                alpha: 1.0,
                scale: 1.0,
                exclusion_radius: 1e-6,
            }
        };
        let criteria = CriteriaSection {
            theorem: if example_one {
                Theorem::Global
            } else {
                Theorem::PthMoment
            },
            h: if example_one { 2.0 } else { f64::INFINITY },
            p: 1.0,
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 1.0,
            gamma1: 0.5,
            gamma1_power: 0.5,
            gamma2: 0.1,
            gamma2_power: 0.5,
            radii: vec![0.05, 0.5, 1.0],
            radial_ladder: vec![10.0, 1e3, 1e6],
            radial_level: 100.0,
            t1: vec![0.0, 1.0, 5.0],
            t2: vec![0.0, 0.7, 3.0],
            x_min: if example_one { -50.0 } else { -5.0 },
            x_max: if example_one { 50.0 } else { 5.0 },
            x_points: if example_one { 201 } else { 101 },
            scatter: 64,
            tau_pass: 1e-9,
        };
        let mc = McSection {
            paths: match kind {
                ExperimentKind::ReproduceExample1 | ExperimentKind::ReproduceExample2 => 10_000,
                ExperimentKind::CheckDuality => 100,
                ExperimentKind::Simulate => 10,
                _ => 1000,
            },
            times: vec![0.5, 1.0, 2.0],
            confidence: 0.99,
            seed: 0,
            p: 1.0,
            slack: 0.10,
            bound_factor: 1.0,
            bound_rate: if example_one { -1.0 } else { 1.0 },
            radius: if example_one { 0.5 } else { 0.0 },
            stay_horizon: 20.0,
            stay_min: 0.95,
            duality_steps: vec![4e-3, 2e-3, 1e-3],
            duality_threshold: 0.05,
        };
        let integrator = IntegratorConfig {
            dt: if example_one { 1e-2 } else { 1e-3 },
            op_step: if duality { 1e-4 } else { 1e-3 },
            ..IntegratorConfig::default()
        };
        Self {
            kind,
            sde,
            subordinator: SubordinatorSection::default(),
            levy: LevySection::default(),
            lyapunov,
            criteria,
            mc,
            integrator,
            output: OutputSection {
                dir: PathBuf::from("out"),
                svg: false,
            },
        }
    }

    pub fn tc_spec(&self) -> Result<TcSdeSpec> {
        let coeffs = CoefficientSet::affine(self.sde.f, self.sde.k, self.sde.g, self.sde.h);
        let nu = self.levy.build(self.sde.c)?;
        TcSdeSpec::new(coeffs, self.sde.x0, self.subordinator.build()?, nu)
    }

    pub fn candidate(&self) -> Result<LyapunovCandidate> {
        self.lyapunov.build()
    }

    pub fn stability_criteria(&self) -> StabilityCriteria {
        self.criteria.build(self.integrator.quadrature)
    }

    /// Normalized TOML with every key spelled out; parses back to `self`.
    pub fn to_normalized(&self) -> String {
        let mut doc = DocumentMut::new();
        let root = doc.as_table_mut();
        let mut exp = Table::new();
        exp["kind"] = str_item(self.kind.name());
        root.insert("experiment", Item::Table(exp));

        let mut sde = Table::new();
        sde["system"] = str_item(self.sde.system.name());
        sde["x0"] = f_item(self.sde.x0);
        sde["c"] = f_item(self.sde.c);
        for (name, a) in [("f", &self.sde.f), ("k", &self.sde.k), ("g", &self.sde.g)] {
            let mut t = Table::new();
            t["state"] = f_item(a.state);
            t["constant"] = f_item(a.constant);
            t["time"] = f_item(a.time);
            t["clock"] = f_item(a.clock);
            sde.insert(name, Item::Table(t));
        }
        let mut h = Table::new();
        h["xy"] = f_item(self.sde.h.xy);
        h["xy2"] = f_item(self.sde.h.xy2);
        h["x"] = f_item(self.sde.h.x);
        h["y"] = f_item(self.sde.h.y);
        sde.insert("h", Item::Table(h));
        root.insert("sde", Item::Table(sde));

        let s = &self.subordinator;
        let mut sub = Table::new();
        sub["family"] = str_item(&s.family);
        for (k, v) in [
            ("beta", s.beta),
            ("theta", s.theta),
            ("shape", s.shape),
            ("rate", s.rate),
            ("slope", s.slope),
            ("intensity", s.intensity),
        ] {
            sub[k] = f_item(v);
        }
        sub["jump_law"] = str_item(&s.jump_law);
        for (k, v) in [
            ("jump_size", s.jump_size),
            ("jump_rate", s.jump_rate),
            ("jump_lo", s.jump_lo),
            ("jump_hi", s.jump_hi),
        ] {
            sub[k] = f_item(v);
        }
        root.insert("subordinator", Item::Table(sub));

        let l = &self.levy;
        let mut levy = Table::new();
        levy["kind"] = str_item(&l.kind);
        for (k, v) in [
            ("lo", l.lo),
            ("hi", l.hi),
            ("height", l.height),
            ("exponent", l.exponent),
            ("scale", l.scale),
            ("cutoff", l.cutoff),
        ] {
            levy[k] = f_item(v);
        }
        root.insert("levy", Item::Table(levy));

        let mut ly = Table::new();
        ly["candidate"] = str_item(&self.lyapunov.candidate);
        ly["alpha"] = f_item(self.lyapunov.alpha);
        ly["scale"] = f_item(self.lyapunov.scale);
        ly["exclusion_radius"] = f_item(self.lyapunov.exclusion_radius);
        root.insert("lyapunov", Item::Table(ly));

        let c = &self.criteria;
        let mut cr = Table::new();
        cr["theorem"] = str_item(c.theorem.name());
        for (k, v) in [
            ("h", c.h),
            ("p", c.p),
            ("alpha1", c.alpha1),
            ("alpha2", c.alpha2),
            ("alpha3", c.alpha3),
            ("gamma1", c.gamma1),
            ("gamma1_power", c.gamma1_power),
            ("gamma2", c.gamma2),
            ("gamma2_power", c.gamma2_power),
        ] {
            cr[k] = f_item(v);
        }
        cr["radii"] = arr_item(&c.radii);
        cr["radial_ladder"] = arr_item(&c.radial_ladder);
        cr["radial_level"] = f_item(c.radial_level);
        cr["t1"] = arr_item(&c.t1);
        cr["t2"] = arr_item(&c.t2);
        cr["x_min"] = f_item(c.x_min);
        cr["x_max"] = f_item(c.x_max);
        cr["x_points"] = int_item(c.x_points as i64);
        cr["scatter"] = int_item(c.scatter as i64);
        cr["tau_pass"] = f_item(c.tau_pass);
        root.insert("criteria", Item::Table(cr));

        let m = &self.mc;
        let mut mc = Table::new();
        mc["paths"] = int_item(m.paths as i64);
        mc["times"] = arr_item(&m.times);
        mc["confidence"] = f_item(m.confidence);
        mc["seed"] = match i64::try_from(m.seed) {
            Ok(v) => int_item(v),
            Err(_) => str_item(&m.seed.to_string()),
        };
        for (k, v) in [
            ("p", m.p),
            ("slack", m.slack),
            ("bound_factor", m.bound_factor),
            ("bound_rate", m.bound_rate),
            ("radius", m.radius),
            ("stay_horizon", m.stay_horizon),
            ("stay_min", m.stay_min),
        ] {
            mc[k] = f_item(v);
        }
        mc["duality_steps"] = arr_item(&m.duality_steps);
        mc["duality_threshold"] = f_item(m.duality_threshold);
        root.insert("mc", Item::Table(mc));

        let ic = &self.integrator;
        let mut it = Table::new();
        for (k, v) in [
            ("dt", ic.dt),
            ("horizon", ic.horizon),
            ("op_step", ic.op_step),
            ("cutoff", ic.cutoff),
            ("blowup", ic.blowup),
        ] {
            it[k] = f_item(v);
        }
        it["max_op_steps"] = int_item(ic.max_op_steps as i64);
        it["jump_adapted"] = Item::Value(Value::from(ic.jump_adapted));
        root.insert("integrator", Item::Table(it));

        let mut out = Table::new();
        out["dir"] = str_item(&self.output.dir.to_string_lossy());
        out["svg"] = Item::Value(Value::from(self.output.svg));
        root.insert("output", Item::Table(out));

        doc.to_string()
    }

    /// Flattened `section.key=value` lines of the normalized form.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let text = self.to_normalized();
        let doc = text.parse::<DocumentMut>().expect("normalized output parses");
        let mut out = Vec::new();
        for leaf in flatten(doc.as_table(), "") {
            if let Some(v) = leaf.value {
                out.push((leaf.key, v.to_string().trim().to_string()));
            }
        }
        out
    }
}

fn f_item(v: f64) -> Item {
    Item::Value(Value::from(v))
}

fn int_item(v: i64) -> Item {
    Item::Value(Value::from(v))
}

fn str_item(v: &str) -> Item {
    Item::Value(Value::from(v))
}

fn arr_item(v: &[f64]) -> Item {
    let mut a = Array::new();
    for x in v {
        a.push(*x);
    }
    Item::Value(Value::Array(a))
}

/// One problem found while reading a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

/// Every problem in a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors {
    pub source: String,
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} problem(s) in {}:", self.issues.len(), self.source)?;
        for i in &self.issues {
            writeln!(f, "  {i}")?;
        }
        Ok(())
    }
}

impl From<ConfigErrors> for Error {
    fn from(e: ConfigErrors) -> Self {
        Error::Configuration(e.to_string().trim_end().to_string())
    }
}

struct Leaf<'a> {
    key: String,
    /// `None` for arrays of tables, which the format does not support
    value: Option<&'a Value>,
    span: Option<std::ops::Range<usize>>,
}

fn flatten<'a>(table: &'a Table, prefix: &str) -> Vec<Leaf<'a>> {
    let mut out = Vec::new();
    for (k, item) in table.iter() {
        let key = join(prefix, k);
        match item {
            Item::Table(t) => out.extend(flatten(t, &key)),
            Item::Value(v) => flatten_value(v, key, &mut out),
            Item::ArrayOfTables(a) => out.push(Leaf {
                key,
                value: None,
                span: a.span(),
            }),
            Item::None => {}
        }
    }
    out
}

fn flatten_value<'a>(v: &'a Value, key: String, out: &mut Vec<Leaf<'a>>) {
    match v {
        Value::InlineTable(t) => {
            for (k, iv) in t.iter() {
                flatten_value(iv, join(&key, k), out);
            }
        }
        _ => out.push(Leaf {
            key,
            value: Some(v),
            span: v.span(),
        }),
    }
}

fn join(prefix: &str, k: &str) -> String {
    if prefix.is_empty() {
        k.to_string()
    } else {
        format!("{prefix}.{k}")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

enum Apply {
    Unknown,
    Invalid(String),
}

type Applied = std::result::Result<(), Apply>;

fn as_f64(v: &Value) -> std::result::Result<f64, Apply> {
    match v {
        Value::Float(f) => Ok(*f.value()),
        Value::Integer(i) => Ok(*i.value() as f64),
        other => Err(Apply::Invalid(format!(
            "expected a number, found {}",
            other.type_name()
        ))),
    }
}

fn as_finite(v: &Value) -> std::result::Result<f64, Apply> {
    let x = as_f64(v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Apply::Invalid(format!("expected a finite number, found {x}")))
    }
}

fn as_positive(v: &Value) -> std::result::Result<f64, Apply> {
    let x = as_finite(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(Apply::Invalid(format!("must be positive, found {x}")))
    }
}

fn as_nonneg(v: &Value) -> std::result::Result<f64, Apply> {
    let x = as_finite(v)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(Apply::Invalid(format!("must be nonnegative, found {x}")))
    }
}

fn as_usize(v: &Value, min: usize) -> std::result::Result<usize, Apply> {
    match v {
        Value::Integer(i) if *i.value() >= min as i64 => Ok(*i.value() as usize),
        Value::Integer(i) => Err(Apply::Invalid(format!("must be at least {min}, found {}", i.value()))),
        other => Err(Apply::Invalid(format!(
            "expected an integer, found {}",
            other.type_name()
        ))),
    }
}

/// Seeds above `i64::MAX` are written as decimal strings.
fn as_seed(v: &Value) -> std::result::Result<u64, Apply> {
    match v {
        Value::String(s) => s
            .value()
            .parse()
            .map_err(|_| Apply::Invalid(format!("expected an unsigned 64-bit seed, found {:?}", s.value()))),
        other => Ok(as_usize(other, 0)? as u64),
    }
}

fn as_bool(v: &Value) -> std::result::Result<bool, Apply> {
    v.as_bool()
        .ok_or_else(|| Apply::Invalid(format!("expected a boolean, found {}", v.type_name())))
}

fn as_str(v: &Value) -> std::result::Result<&str, Apply> {
    v.as_str()
        .ok_or_else(|| Apply::Invalid(format!("expected a string, found {}", v.type_name())))
}

fn one_of(v: &Value, allowed: &[&str]) -> std::result::Result<String, Apply> {
    let s = as_str(v)?;
    if allowed.contains(&s) {
        Ok(s.to_string())
    } else {
        Err(Apply::Invalid(format!("{s:?} is not one of {}", allowed.join(", "))))
    }
}

fn as_list(v: &Value, increasing: bool) -> std::result::Result<Vec<f64>, Apply> {
    let arr = v
        .as_array()
        .ok_or_else(|| Apply::Invalid(format!("expected an array of numbers, found {}", v.type_name())))?;
    let xs = arr.iter().map(as_f64).collect::<std::result::Result<Vec<_>, _>>()?;
    if xs.is_empty() {
        return Err(Apply::Invalid("array must not be empty".into()));
    }
    if increasing && xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Apply::Invalid("values must be strictly increasing".into()));
    }
    Ok(xs)
}

fn set_affine(a: &mut Affine, field: &str, v: &Value) -> Applied {
    let x = as_finite(v)?;
    match field {
        "state" => a.state = x,
        "constant" => a.constant = x,
        "time" => a.time = x,
        "clock" => a.clock = x,
        _ => return Err(Apply::Unknown),
    }
    Ok(())
}

fn apply(cfg: &mut ExperimentConfig, key: &str, v: &Value) -> Applied {
    let (section, field) = key.split_once('.').unwrap_or((key, ""));
    match section {
        "experiment" => match field {
            "kind" => Ok(()),
            _ => Err(Apply::Unknown),
        },
        "sde" => {
            if let Some((coef, sub)) = field.split_once('.') {
                return match coef {
                    "f" => set_affine(&mut cfg.sde.f, sub, v),
                    "k" => set_affine(&mut cfg.sde.k, sub, v),
                    "g" => set_affine(&mut cfg.sde.g, sub, v),
                    "h" => {
                        let x = as_finite(v)?;
                        match sub {
                            "xy" => cfg.sde.h.xy = x,
                            "xy2" => cfg.sde.h.xy2 = x,
                            "x" => cfg.sde.h.x = x,
                            "y" => cfg.sde.h.y = x,
                            _ => return Err(Apply::Unknown),
                        }
                        Ok(())
                    }
                    _ => Err(Apply::Unknown),
                };
            }
            match field {
                "system" => Ok(()),
                "x0" => {
                    cfg.sde.x0 = as_finite(v)?;
                    Ok(())
                }
                "c" => {
                    cfg.sde.c = as_positive(v)?;
                    Ok(())
                }
                _ => Err(Apply::Unknown),
            }
        }
        "subordinator" => {
            let s = &mut cfg.subordinator;
            match field {
                "family" => {
                    s.family = one_of(
                        v,
                        &[
                            "stable",
                            "tempered-stable",
                            "gamma",
                            "compound-poisson",
                            "deterministic",
                        ],
                    )?
                }
                "beta" => {
                    let b = as_finite(v)?;
                    if !(b > 0.0 && b < 1.0) {
                        return Err(Apply::Invalid(format!("must lie in (0, 1), found {b}")));
                    }
                    s.beta = b;
                }
                "theta" => s.theta = as_positive(v)?,
                "shape" => s.shape = as_positive(v)?,
                "rate" => s.rate = as_positive(v)?,
                "slope" => s.slope = as_positive(v)?,
                "intensity" => s.intensity = as_positive(v)?,
                "jump_law" => s.jump_law = one_of(v, &["fixed", "exponential", "uniform"])?,
                "jump_size" => s.jump_size = as_positive(v)?,
                "jump_rate" => s.jump_rate = as_positive(v)?,
                "jump_lo" => s.jump_lo = as_nonneg(v)?,
                "jump_hi" => s.jump_hi = as_positive(v)?,
                _ => return Err(Apply::Unknown),
            }
            Ok(())
        }
        "levy" => {
            let l = &mut cfg.levy;
            match field {
                "kind" => l.kind = one_of(v, &["uniform", "power-law"])?,
                "lo" => l.lo = as_finite(v)?,
                "hi" => l.hi = as_finite(v)?,
                "height" => l.height = as_positive(v)?,
                "exponent" => l.exponent = as_finite(v)?,
                "scale" => l.scale = as_positive(v)?,
                "cutoff" => l.cutoff = as_positive(v)?,
                _ => return Err(Apply::Unknown),
            }
            Ok(())
        }
        "lyapunov" => {
            let c = &mut cfg.lyapunov;
            match field {
                "candidate" => c.candidate = one_of(v, &["abs-power", "abs", "square", "bounded-square"])?,
                "alpha" => c.alpha = as_positive(v)?,
                "scale" => c.scale = as_positive(v)?,
                "exclusion_radius" => c.exclusion_radius = as_nonneg(v)?,
                _ => return Err(Apply::Unknown),
            }
            Ok(())
        }
        "criteria" => {
            let c = &mut cfg.criteria;
            match field {
                "theorem" => {
                    c.theorem = match one_of(v, &["stochastic", "asymptotic", "global", "pth-moment"])?.as_str() {
                        "stochastic" => Theorem::Stochastic,
                        "asymptotic" => Theorem::Asymptotic,
                        "global" => Theorem::Global,
                        _ => Theorem::PthMoment,
                    }
                }
                "h" => {
                    let h = as_f64(v)?;
                    if !(h > 0.0) {
                        return Err(Apply::Invalid(format!("must be positive, found {h}")));
                    }
                    c.h = h;
                }
                "p" => c.p = as_positive(v)?,
                "alpha1" => c.alpha1 = as_finite(v)?,
                "alpha2" => c.alpha2 = as_finite(v)?,
                "alpha3" => c.alpha3 = as_finite(v)?,
                "gamma1" => c.gamma1 = as_nonneg(v)?,
                "gamma1_power" => c.gamma1_power = as_finite(v)?,
                "gamma2" => c.gamma2 = as_nonneg(v)?,
                "gamma2_power" => c.gamma2_power = as_finite(v)?,
                "radii" => c.radii = as_list(v, true)?,
                "radial_ladder" => c.radial_ladder = as_list(v, true)?,
                "radial_level" => c.radial_level = as_finite(v)?,
                "t1" => c.t1 = as_list(v, true)?,
                "t2" => c.t2 = as_list(v, true)?,
                "x_min" => c.x_min = as_finite(v)?,
                "x_max" => c.x_max = as_finite(v)?,
                "x_points" => c.x_points = as_usize(v, 1)?,
                "scatter" => c.scatter = as_usize(v, 0)?,
                "tau_pass" => c.tau_pass = as_nonneg(v)?,
                _ => return Err(Apply::Unknown),
            }
            Ok(())
        }
        "mc" => {
            let m = &mut cfg.mc;
            match field {
                "paths" => m.paths = as_usize(v, 2)?,
                "times" => {
                    let ts = as_list(v, true)?;
                    if ts[0] < 0.0 {
                        return Err(Apply::Invalid("times must be nonnegative".into()));
                    }
                    m.times = ts;
                }
                "confidence" => {
                    let c = as_finite(v)?;
                    if !(c > 0.0 && c < 1.0) {
                        return Err(Apply::Invalid(format!("must lie in (0, 1), found {c}")));
                    }
                    m.confidence = c;
                }
                "seed" => m.seed = as_seed(v)?,
                "p" => m.p = as_positive(v)?,
                "slack" => m.slack = as_nonneg(v)?,
                "bound_factor" => m.bound_factor = as_positive(v)?,
                "bound_rate" => m.bound_rate = as_finite(v)?,
                "radius" => m.radius = as_nonneg(v)?,
                "stay_horizon" => m.stay_horizon = as_positive(v)?,
                "stay_min" => {
                    let q = as_finite(v)?;
                    if !(q > 0.0 && q <= 1.0) {
                        return Err(Apply::Invalid(format!("must lie in (0, 1], found {q}")));
                    }
                    m.stay_min = q;
                }
                "duality_steps" => {
                    let xs = as_list(v, false)?;
                    if xs.iter().any(|x| !(*x > 0.0)) {
                        return Err(Apply::Invalid("steps must be positive".into()));
                    }
                    m.duality_steps = xs;
                }
                "duality_threshold" => m.duality_threshold = as_positive(v)?,
                _ => return Err(Apply::Unknown),
            }
            Ok(())
        }
        "integrator" => {
            let c = &mut cfg.integrator;
            match field {
                "dt" => c.dt = as_positive(v)?,
                "horizon" => c.horizon = as_positive(v)?,
                "op_step" => c.op_step = as_positive(v)?,
                "cutoff" => c.cutoff = as_positive(v)?,
                "blowup" => c.blowup = as_positive(v)?,
                "max_op_steps" => c.max_op_steps = as_usize(v, 16)?,
                "jump_adapted" => c.jump_adapted = as_bool(v)?,
                _ => return Err(Apply::Unknown),
            }
            Ok(())
        }
        "output" => {
            match field {
                "dir" => cfg.output.dir = PathBuf::from(as_str(v)?),
                "svg" => cfg.output.svg = as_bool(v)?,
                _ => return Err(Apply::Unknown),
            }
            Ok(())
        }
        _ => Err(Apply::Unknown),
    }
}

/// Parses configuration text; `source` names it in error messages.
pub fn parse_config_str(text: &str, source: &str) -> std::result::Result<ExperimentConfig, ConfigErrors> {
    parse_config_str_as(text, source, None)
}

/// Like [`parse_config_str`], with the experiment kind fixed by the caller.
/// A file that names a different kind is rejected.
pub fn parse_config_str_as(
    text: &str,
    source: &str,
    fixed: Option<ExperimentKind>,
) -> std::result::Result<ExperimentConfig, ConfigErrors> {
    let fail = |issues| ConfigErrors {
        source: source.to_string(),
        issues,
    };
    let doc = match toml_edit::Document::parse(text) {
        Ok(d) => d,
        Err(e) => {
            let line = e.span().map(|s| line_of(text, s.start));
            return Err(fail(vec![ConfigIssue {
                line,
                key: "<syntax>".into(),
                message: e.message().to_string(),
            }]));
        }
    };
    let leaves = flatten(doc.as_table(), "");
    let line = |l: &Leaf| l.span.as_ref().map(|s| line_of(text, s.start));
    let find = |key: &str| leaves.iter().find(|l| l.key == key);
    let mut issues = Vec::new();

    let kind = match find("experiment.kind") {
        None => fixed.unwrap_or(ExperimentKind::ReproduceExample2),
        Some(l) => match l.value.and_then(Value::as_str).and_then(ExperimentKind::parse) {
            Some(k) => k,
            None => {
                let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                issues.push(ConfigIssue {
                    line: line(l),
                    key: l.key.clone(),
                    message: format!("expected one of {}", names.join(", ")),
                });
                ExperimentKind::ReproduceExample2
            }
        },
    };
    let kind = match (fixed, find("experiment.kind")) {
        (Some(f), Some(l)) if f != kind => {
            issues.push(ConfigIssue {
                line: line(l),
                key: l.key.clone(),
                message: format!("file names {:?} but the command runs {:?}", kind.name(), f.name()),
            });
            f
        }
        (Some(f), _) => f,
        (None, _) => kind,
    };
    let mut cfg = ExperimentConfig::defaults(kind);
    if let Some(l) = find("sde.system") {
        match l.value.and_then(Value::as_str).and_then(SystemPreset::parse) {
            Some(p) => cfg.sde = SdeSection::preset(p, cfg.sde.x0),
            None => {
                let names: Vec<_> = SystemPreset::ALL.iter().map(|k| k.name()).collect();
                issues.push(ConfigIssue {
                    line: line(l),
                    key: l.key.clone(),
                    message: format!("expected one of {}", names.join(", ")),
                });
            }
        }
    }
    for l in &leaves {
        let outcome = match l.value {
            Some(v) => apply(&mut cfg, &l.key, v),
            None => Err(Apply::Invalid("arrays of tables are not supported".into())),
        };
        match outcome {
            Ok(()) => {}
            Err(Apply::Unknown) => issues.push(ConfigIssue {
                line: line(l),
                key: l.key.clone(),
                message: "unknown key".into(),
            }),
            Err(Apply::Invalid(m)) => issues.push(ConfigIssue {
                line: line(l),
                key: l.key.clone(),
                message: m,
            }),
        }
    }

    // cross-field consistency
    let at = |key: &str| find(key).and_then(line);
    let c = cfg.sde.c;
    if cfg.levy.lo < -c || cfg.levy.hi > c {
        let which = if cfg.levy.lo < -c { "levy.lo" } else { "levy.hi" };
        issues.push(ConfigIssue {
            line: at(which).or(at("sde.c")),
            key: format!("sde.c / {which}"),
            message: format!(
                "Lévy support ({}, {}) exceeds the jump bound sde.c = {c}",
                cfg.levy.lo, cfg.levy.hi
            ),
        });
    }
    if !(cfg.levy.lo < cfg.levy.hi) {
        issues.push(ConfigIssue {
            line: at("levy.lo"),
            key: "levy.lo / levy.hi".into(),
            message: format!("empty support ({}, {})", cfg.levy.lo, cfg.levy.hi),
        });
    }
    if !(cfg.criteria.x_min < cfg.criteria.x_max) && cfg.criteria.x_points > 1 {
        issues.push(ConfigIssue {
            line: at("criteria.x_min"),
            key: "criteria.x_min / criteria.x_max".into(),
            message: format!(
                "x_min {} must be below x_max {}",
                cfg.criteria.x_min, cfg.criteria.x_max
            ),
        });
    }
    if let Err(e) = cfg.subordinator.build() {
        issues.push(ConfigIssue {
            line: at("subordinator.family"),
            key: "subordinator".into(),
            message: e.to_string(),
        });
    }
    if issues.is_empty() {
        if let Err(e) = cfg.tc_spec() {
            issues.push(ConfigIssue {
                line: None,
                key: "sde / levy".into(),
                message: e.to_string(),
            });
        }
    }
    if issues.is_empty() {
        Ok(cfg)
    } else {
        issues.sort_by_key(|i| i.line.unwrap_or(usize::MAX));
        Err(fail(issues))
    }
}

/// Reads and parses a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config_as(path, None)
}

/// Reads a configuration file or a run manifest, optionally fixing the kind.
pub fn parse_config_as(path: &Path, fixed: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
    let text = crate::experiment::config_text_from_manifest(&text).unwrap_or(text);
    Ok(parse_config_str_as(&text, &path.display().to_string(), fixed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_example_two() {
        let cfg = parse_config_str("[experiment]\nkind = \"reproduce-example-2\"\n", "t").unwrap();
        assert_eq!(cfg, ExperimentConfig::defaults(ExperimentKind::ReproduceExample2));
        assert_eq!(cfg.sde.g.clock, 1.0);
        assert_eq!(cfg.mc.paths, 10_000);
        assert!(cfg.to_normalized().contains("kind = \"reproduce-example-2\""));
    }

    #[test]
    fn fixed_kind() {
        let cfg = parse_config_str_as("", "t", Some(ExperimentKind::CheckDuality)).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::CheckDuality);
        let err = parse_config_str_as(
            "[experiment]\nkind = \"simulate\"\n",
            "t",
            Some(ExperimentKind::CheckDuality),
        )
        .unwrap_err();
        assert_eq!(err.issues[0].line, Some(2));
    }

    #[test]
    fn empty_file_uses_defaults() {
        assert!(parse_config_str("", "t").is_ok());
    }

    #[test]
    fn support_outside_c_names_both_keys() {
        let text = "[sde]\nc = 1.0\n[levy]\nlo = -2.0\nhi = 2.0\n";
        let err = parse_config_str(text, "t").unwrap_err();
        assert_eq!(err.issues.len(), 1);
        let msg = err.issues[0].to_string();
        assert!(msg.contains("sde.c") && msg.contains("levy.lo"), "{msg}");
        assert_eq!(err.issues[0].line, Some(4));
    }

    #[test]
    fn collects_every_error_with_lines() {
        let text = "[mc]\npaths = 1\nbogus = 3\nconfidence = \"high\"\n[integrator]\ndt = -1.0\n";
        let err = parse_config_str(text, "t").unwrap_err();
        let lines: Vec<_> = err.issues.iter().map(|i| i.line).collect();
        assert_eq!(lines, vec![Some(2), Some(3), Some(4), Some(6)]);
        assert!(err.issues[1].message.contains("unknown"));
        assert!(err.issues[2].message.contains("expected a number"));
    }

    #[test]
    fn syntax_error_has_line() {
        let err = parse_config_str("[mc]\npaths = = 3\n", "t").unwrap_err();
        assert_eq!(err.issues[0].line, Some(2));
    }

    #[test]
    fn round_trip_is_identity() {
        for kind in ExperimentKind::ALL {
            let mut cfg = ExperimentConfig::defaults(kind);
            cfg.mc.seed = 77;
            cfg.integrator.cutoff = 1e-7;
            cfg.output.dir = PathBuf::from("some dir/with \"quotes\"");
            let text = cfg.to_normalized();
            let back = parse_config_str(&text, "normalized").unwrap();
            assert_eq!(back, cfg, "{text}");
            assert_eq!(back.to_normalized(), text);
        }
    }

    #[test]
    fn preset_then_override() {
        let text = "[sde]\nsystem = \"example-1\"\n[sde.k]\nstate = 0.5\n";
        let cfg = parse_config_str(text, "t").unwrap();
        assert_eq!(cfg.sde.k.state, 0.5);
        assert_eq!(cfg.sde.h.xy, 1.0);
        let inline = "[sde]\nsystem = \"custom\"\nf = { state = -2.0 }\n";
        let cfg = parse_config_str(inline, "t").unwrap();
        assert_eq!(cfg.sde.f.state, -2.0);
        assert_eq!(cfg.sde.h, AffineJump::default());
    }

    #[test]
    fn builds_runtime_objects() {
        let cfg = ExperimentConfig::defaults(ExperimentKind::ReproduceExample1);
        let spec = cfg.tc_spec().unwrap();
        assert_eq!(spec.x0, 0.01);
        assert_eq!(cfg.stability_criteria().theorem, Theorem::Global);
        assert!(cfg.candidate().unwrap().name.contains("0.5"));
        let kv = cfg.to_key_values();
        assert!(kv.iter().any(|(k, v)| k == "sde.h.xy" && v == "1.0"));
    }

    #[test]
    fn family_parameters_are_validated() {
        let err = parse_config_str("[subordinator]\nfamily = \"stable\"\nbeta = 1.5\n", "t").unwrap_err();
        assert_eq!(err.issues[0].key, "subordinator.beta");
        let err = parse_config_str("[subordinator]\nfamily = \"levy\"\n", "t").unwrap_err();
        assert_eq!(err.issues[0].line, Some(2));
    }
}
