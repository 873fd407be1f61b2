//! Euler–Maruyama integration of
//!
//! ```text
//! dX = f(t, E_t, X−) dt + k(t, E_t, X−) dE_t + g(t, E_t, X−) dB_{E_t}
//!      + ∫_{|y|<c} h(t, E_t, X−, y) Ñ(dE_t, dy)
//! ```
//!
//! directly on the t-grid, and for `f ≡ 0` through the dual equation on the
//! operational clock composed with `E_t`. Both integrators read the same
//! [`OperationalNoise`], so their outputs can be compared path by path.
//!
//! Clock convention: the grid inverse reports `E_0 = τ_{j_0}` (the first
//! operational grid point, see [`crate::paths::invert_path`]). Integration
//! starts at that operational index with `X = x0`; noise in `(0, τ_{j_0}]` is
//! never consumed.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::levy::{LevyMeasure, QuadratureConfig, SubordinatorSpec};
use crate::paths::{uniform_grid, OperationalNoise, SamplePath, SeedSpec, Substream, TimeChange};

pub type StateFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type JumpFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
pub type MarkFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Affine coefficient `x·state + constant + t1·time + t2·clock`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Affine {
    pub state: f64,
    pub constant: f64,
    pub time: f64,
    pub clock: f64,
}

impl Affine {
    pub fn eval(&self, t1: f64, t2: f64, x: f64) -> f64 {
        self.state * x + self.constant + self.time * t1 + self.clock * t2
    }

    pub fn linear(state: f64) -> Self {
        Self {
            state,
            ..Self::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

/// Jump coefficient `x·(xy·y + xy2·y² + x1) + y1·y`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AffineJump {
    pub xy: f64,
    pub xy2: f64,
    pub x: f64,
    pub y: f64,
}

impl AffineJump {
    pub fn state_factor(&self, y: f64) -> f64 {
        self.xy * y + self.xy2 * y * y + self.x
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        x * self.state_factor(y) + self.y * y
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

/// Structure hint for `h` that lets the compensator be precomputed.
#[derive(Clone)]
pub enum JumpForm {
    General,
    /// `h ≡ 0`; no marks are drawn.
    Zero,
    /// `h(t1, t2, x, y) = x·a(y) + b(y)`, independent of time.
    StateAffine {
        factor: MarkFn,
        offset: MarkFn,
    },
}

/// The four coefficient functions with an optional declared Lipschitz constant.
#[derive(Clone)]
pub struct CoefficientSet {
    pub f: StateFn,
    pub k: StateFn,
    pub g: StateFn,
    pub h: JumpFn,
    pub jump_form: JumpForm,
    pub lipschitz: Option<f64>,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("state_affine_h", &!matches!(self.jump_form, JumpForm::General))
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

fn zero3() -> StateFn {
    Arc::new(|_, _, _| 0.0)
}

impl CoefficientSet {
    pub fn new<F, K, G, H>(f: F, k: K, g: G, h: H) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        K: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            k: Arc::new(k),
            g: Arc::new(g),
            h: Arc::new(h),
            jump_form: JumpForm::General,
            lipschitz: None,
        }
    }

    /// All four coefficients identically zero.
    pub fn zero() -> Self {
        Self {
            f: zero3(),
            k: zero3(),
            g: zero3(),
            h: Arc::new(|_, _, _, _| 0.0),
            jump_form: JumpForm::Zero,
            lipschitz: None,
        }
    }

    pub fn affine(f: Affine, k: Affine, g: Affine, h: AffineJump) -> Self {
        Self {
            f: Arc::new(move |t1, t2, x| f.eval(t1, t2, x)),
            k: Arc::new(move |t1, t2, x| k.eval(t1, t2, x)),
            g: Arc::new(move |t1, t2, x| g.eval(t1, t2, x)),
            h: Arc::new(move |_, _, x, y| h.eval(x, y)),
            jump_form: if h.is_zero() {
                JumpForm::Zero
            } else {
                JumpForm::StateAffine {
                    factor: Arc::new(move |y| h.state_factor(y)),
                    offset: Arc::new(move |y| h.y * y),
                }
            },
            lipschitz: None,
        }
    }

    pub fn with_f<F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.f = Arc::new(f);
        self
    }

    pub fn with_k<F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static>(mut self, k: F) -> Self {
        self.k = Arc::new(k);
        self
    }

    pub fn with_g<F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static>(mut self, g: F) -> Self {
        self.g = Arc::new(g);
        self
    }

    /// Replaces `h` with a general jump coefficient (drops any affine hint).
    pub fn with_h<F: Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static>(mut self, h: F) -> Self {
        self.h = Arc::new(h);
        self.jump_form = JumpForm::General;
        self
    }

    pub fn with_lipschitz(mut self, k: f64) -> Self {
        self.lipschitz = Some(k);
        self
    }

    /// Example 1: `dX = −X dt + 0.25 X dE + X dB_E + ∫ yX Ñ(dE, dy)`.
    pub fn example_one() -> Self {
        Self::affine(
            Affine::linear(-1.0),
            Affine::linear(0.25),
            Affine::linear(1.0),
            AffineJump {
                xy: 1.0,
                ..AffineJump::default()
            },
        )
    }

    /// Example 2: `dX = −X dt + E_t dB_E + ∫ (X y² − X) Ñ(dE, dy)`.
    pub fn example_two() -> Self {
        Self::affine(
            Affine::linear(-1.0),
            Affine::default(),
            Affine {
                clock: 1.0,
                ..Affine::default()
            },
            AffineJump {
                xy2: 1.0,
                x: -1.0,
                ..AffineJump::default()
            },
        )
    }

    /// Example 2 with the dt-drift removed (the reduced form).
    pub fn example_two_reduced() -> Self {
        Self::example_two().with_f(|_, _, _| 0.0)
    }
}

/// Time-changed SDE: coefficients, jump bound, initial value and noise sources.
#[derive(Debug, Clone)]
pub struct TcSdeSpec {
    pub coefficients: CoefficientSet,
    pub c: f64,
    pub x0: f64,
    pub subordinator: SubordinatorSpec,
    pub nu: LevyMeasure,
}

impl TcSdeSpec {
    pub fn new(coefficients: CoefficientSet, x0: f64, subordinator: SubordinatorSpec, nu: LevyMeasure) -> Result<Self> {
        let spec = Self {
            coefficients,
            c: nu.c(),
            x0,
            subordinator,
            nu,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu.c() != self.c {
            return Err(Error::Configuration(format!(
                "Lévy measure bound {} differs from the equation's jump bound c = {}",
                self.nu.c(),
                self.c
            )));
        }
        if !self.x0.is_finite() {
            return Err(Error::Configuration(format!("x0 must be finite, got {}", self.x0)));
        }
        self.subordinator.validate()
    }

    pub fn with_x0(&self, x0: f64) -> Self {
        let mut s = self.clone();
        s.x0 = x0;
        s
    }
}

/// Step sizes and guards for the integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// t-grid step
    pub dt: f64,
    pub horizon: f64,
    /// operational grid step used for `D` and the coupled noise
    pub op_step: f64,
    /// small-jump cutoff ε applied to ν
    pub cutoff: f64,
    /// abort threshold for `|X|`
    pub blowup: f64,
    pub quadrature: QuadratureConfig,
    /// hard cap on operational grid points per path
    pub max_op_steps: usize,
    /// split each t-step at the instants its jumps are released
    pub jump_adapted: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 1.0,
            op_step: 1e-3,
            cutoff: 1e-9,
            blowup: 1e12,
            quadrature: QuadratureConfig::default(),
            max_op_steps: 1 << 26,
            jump_adapted: true,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.op_step > 0.0) {
            return Err(Error::Configuration(format!(
                "steps and horizon must be positive (dt {}, op_step {}, horizon {})",
                self.dt, self.op_step, self.horizon
            )));
        }
        if !(self.blowup > 0.0) {
            return Err(Error::Configuration(format!(
                "blow-up bound must be positive, got {}",
                self.blowup
            )));
        }
        if !(self.cutoff > 0.0) {
            return Err(Error::Configuration(format!(
                "small-jump cutoff must be positive, got {}",
                self.cutoff
            )));
        }
        self.quadrature.validate()
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_op_step(mut self, op_step: f64) -> Self {
        self.op_step = op_step;
        self
    }

    pub fn t_grid(&self) -> Result<Vec<f64>> {
        uniform_grid(self.dt, self.horizon)
    }
}

/// `∫_{ε≤|y|<c} h(t1, t2, x, y) ν(dy)`, cached for state-affine `h`.
#[derive(Clone)]
enum Compensator {
    Affine {
        factor: f64,
        offset: f64,
    },
    General {
        nu: LevyMeasure,
        h: JumpFn,
        q: QuadratureConfig,
    },
}

impl Compensator {
    fn build(coeffs: &CoefficientSet, nu: &LevyMeasure, q: &QuadratureConfig) -> Result<Self> {
        Ok(match &coeffs.jump_form {
            JumpForm::Zero => Compensator::Affine {
                factor: 0.0,
                offset: 0.0,
            },
            JumpForm::StateAffine { factor, offset } => Compensator::Affine {
                factor: nu.integrate_truncated(|y| factor(y), q)?.value,
                offset: nu.integrate_truncated(|y| offset(y), q)?.value,
            },
            JumpForm::General => Compensator::General {
                nu: nu.clone(),
                h: coeffs.h.clone(),
                q: *q,
            },
        })
    }

    fn eval(&self, t1: f64, t2: f64, x: f64) -> Result<f64> {
        match self {
            Compensator::Affine { factor, offset } => Ok(x * factor + offset),
            Compensator::General { nu, h, q } => Ok(nu.integrate_truncated(|y| h(t1, t2, x, y), q)?.value),
        }
    }
}

/// Everything an integrator step consumed, for residual checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub clock: f64,
    pub x: f64,
    pub dt: f64,
    pub dclock: f64,
    pub dbrownian: f64,
    /// `(pre-jump state, h value)` for every jump applied in this step
    pub jumps: Vec<(f64, f64)>,
}

/// Output of a traced direct integration.
#[derive(Debug, Clone)]
pub struct DirectRun {
    pub path: SamplePath,
    pub clock: TimeChange,
    pub steps: Vec<StepRecord>,
}

fn finite(v: f64, what: &str, t: f64, x: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!("{what} is not finite at t = {t}, x = {x}")))
    }
}

struct Stepper<'a> {
    coeffs: &'a CoefficientSet,
    comp: Compensator,
    blowup: f64,
}

impl Stepper<'_> {
    /// One Euler step: drift, clock drift, diffusion, compensator, then the
    /// jumps in order, each on the state left by the previous one.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        t1: f64,
        t2: f64,
        x: f64,
        dt: f64,
        dclock: f64,
        db: f64,
        marks: &[f64],
        trace: Option<&mut Vec<(f64, f64)>>,
    ) -> Result<f64> {
        let c = self.coeffs;
        let fv = if dt != 0.0 {
            finite((c.f)(t1, t2, x), "f", t1, x)? * dt
        } else {
            0.0
        };
        let kv = finite((c.k)(t1, t2, x), "k", t1, x)?;
        let gv = finite((c.g)(t1, t2, x), "g", t1, x)?;
        let comp = if dclock != 0.0 {
            finite(self.comp.eval(t1, t2, x)?, "compensator", t1, x)?
        } else {
            0.0
        };
        let mut next = x + fv;
        next += kv * dclock;
        next += gv * db;
        next -= dclock * comp;
        match trace {
            Some(tr) => {
                for &y in marks {
                    let hv = finite((c.h)(t1, t2, next, y), "h", t1, next)?;
                    tr.push((next, hv));
                    next += hv;
                }
            }
            None => {
                for &y in marks {
                    next += finite((c.h)(t1, t2, next, y), "h", t1, next)?;
                }
            }
        }
        if !(next.abs() <= self.blowup) {
            return Err(Error::BlowUp {
                t: t1,
                value: next.abs(),
                bound: self.blowup,
            });
        }
        Ok(next)
    }
}

fn prepare(spec: &TcSdeSpec, cfg: &IntegratorConfig, seed: SeedSpec) -> Result<(OperationalNoise, LevyMeasure)> {
    spec.validate()?;
    cfg.validate()?;
    let nu = spec.nu.with_cutoff(cfg.cutoff)?;
    let sampler = match spec.coefficients.jump_form {
        JumpForm::Zero => None,
        _ => Some(nu.sampler(&cfg.quadrature)?),
    };
    let noise = OperationalNoise::simulate(
        &spec.subordinator,
        sampler.as_ref(),
        cfg.op_step,
        cfg.horizon,
        seed,
        cfg.max_op_steps,
    )?;
    Ok((noise, nu))
}

/// Direct time-changed Euler–Maruyama on the t-grid with a freshly simulated noise.
pub fn integrate_direct(spec: &TcSdeSpec, cfg: &IntegratorConfig, seed: SeedSpec) -> Result<SamplePath> {
    let (noise, nu) = prepare(spec, cfg, seed)?;
    Ok(integrate_direct_with(spec, cfg, &noise, &nu, false)?.path)
}

/// As [`integrate_direct`], also returning the clock.
pub fn integrate_direct_run(spec: &TcSdeSpec, cfg: &IntegratorConfig, seed: SeedSpec) -> Result<DirectRun> {
    let (noise, nu) = prepare(spec, cfg, seed)?;
    integrate_direct_with(spec, cfg, &noise, &nu, false)
}

/// As [`integrate_direct`], also returning the clock and every step's increments.
pub fn integrate_direct_traced(spec: &TcSdeSpec, cfg: &IntegratorConfig, seed: SeedSpec) -> Result<DirectRun> {
    let (noise, nu) = prepare(spec, cfg, seed)?;
    integrate_direct_with(spec, cfg, &noise, &nu, true)
}

/// Direct integration on a supplied operational noise. `nu` must be the
/// truncated measure the noise was drawn from.
pub fn integrate_direct_with(
    spec: &TcSdeSpec,
    cfg: &IntegratorConfig,
    noise: &OperationalNoise,
    nu: &LevyMeasure,
    trace: bool,
) -> Result<DirectRun> {
    let t_grid = cfg.t_grid()?;
    let clock = noise.time_change(&t_grid)?;
    let stepper = Stepper {
        coeffs: &spec.coefficients,
        comp: Compensator::build(&spec.coefficients, nu, &cfg.quadrature)?,
        blowup: cfg.blowup,
    };
    let mut values = Vec::with_capacity(t_grid.len());
    let mut steps = Vec::new();
    let mut x = spec.x0;
    values.push(x);
    let d_values = noise.subordinator.values();
    for n in 0..t_grid.len() - 1 {
        let (t, t_next) = (t_grid[n], t_grid[n + 1]);
        let (j0, j1) = (clock.indices[n], clock.indices[n + 1]);
        if !cfg.jump_adapted {
            let marks = noise.marks_between(j0, j1);
            let seg = Segment {
                t,
                clock: clock.value(n),
                dt: t_next - t,
                dclock: clock.increment(n),
                db: noise.brownian_between(j0, j1),
            };
            x = run_segment(&stepper, seg, x, marks, trace.then_some(&mut steps))?;
            values.push(x);
            continue;
        }
        // split the step at the t-instants where cells carrying jumps are released
        let mut from = j0;
        let mut t_from = t;
        for cell in j0 + 1..=j1 {
            let marks = noise.marks_in_cell(cell);
            if marks.is_empty() {
                continue;
            }
            // E_t reaches τ_cell once t passes D(τ_{cell-1})
            let t_jump = d_values[cell - 1].clamp(t_from, t_next);
            let seg = Segment {
                t: t_from,
                clock: noise.tau(from),
                dt: t_jump - t_from,
                dclock: (cell - from) as f64 * noise.dtau,
                db: noise.brownian_between(from, cell),
            };
            x = run_segment(&stepper, seg, x, marks, trace.then_some(&mut steps))?;
            from = cell;
            t_from = t_jump;
        }
        if from < j1 || t_from < t_next {
            let seg = Segment {
                t: t_from,
                clock: noise.tau(from),
                dt: t_next - t_from,
                dclock: (j1 - from) as f64 * noise.dtau,
                db: noise.brownian_between(from, j1),
            };
            x = run_segment(&stepper, seg, x, &[], trace.then_some(&mut steps))?;
        }
        values.push(x);
    }
    Ok(DirectRun {
        path: SamplePath::new(t_grid, values)?,
        clock,
        steps,
    })
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    t: f64,
    clock: f64,
    dt: f64,
    dclock: f64,
    db: f64,
}

fn run_segment(
    stepper: &Stepper<'_>,
    seg: Segment,
    x: f64,
    marks: &[f64],
    steps: Option<&mut Vec<StepRecord>>,
) -> Result<f64> {
    match steps {
        Some(steps) => {
            let mut jumps = Vec::with_capacity(marks.len());
            let next = stepper.step(seg.t, seg.clock, x, seg.dt, seg.dclock, seg.db, marks, Some(&mut jumps))?;
            steps.push(StepRecord {
                t: seg.t,
                clock: seg.clock,
                x,
                dt: seg.dt,
                dclock: seg.dclock,
                dbrownian: seg.db,
                jumps,
            });
            Ok(next)
        }
        None => stepper.step(seg.t, seg.clock, x, seg.dt, seg.dclock, seg.db, marks, None),
    }
}

/// Classical Euler–Maruyama for `dY = k(τ, Y−)dτ + g(τ, Y−)dB_τ + ∫ h(τ, Y−, y) Ñ(dτ, dy)`
/// on the operational grid, from index `start` (where `Y = x0`) through `end`.
///
/// Coefficients are called as `k(τ, τ, y)`. The returned vector holds `Y(τ_j)` for
/// `j = start..=end`.
pub fn integrate_operational(
    spec: &TcSdeSpec,
    cfg: &IntegratorConfig,
    noise: &OperationalNoise,
    nu: &LevyMeasure,
    start: usize,
    end: usize,
) -> Result<Vec<f64>> {
    let stepper = Stepper {
        coeffs: &spec.coefficients,
        comp: Compensator::build(&spec.coefficients, nu, &cfg.quadrature)?,
        blowup: cfg.blowup,
    };
    let mut y = spec.x0;
    let mut out = Vec::with_capacity(end + 1 - start);
    out.push(y);
    for j in start..end {
        let tau = noise.tau(j);
        let dtau = noise.dtau;
        y = stepper.step(
            tau,
            tau,
            y,
            0.0,
            dtau,
            noise.brownian_increment(j + 1),
            noise.marks_in_cell(j + 1),
            None,
        )?;
        out.push(y);
    }
    Ok(out)
}

/// Probe points used for the `f ≡ 0` and `t1`-independence preconditions.
const PROBE_STATES: [f64; 7] = [-3.0, -1.0, -0.25, 0.0, 0.5, 1.0, 2.5];
const PROBE_TIMES: [f64; 4] = [0.0, 0.3, 1.0, 4.0];

fn check_reduced(coeffs: &CoefficientSet) -> Result<()> {
    for &t1 in &PROBE_TIMES {
        for &t2 in &PROBE_TIMES {
            for &x in &PROBE_STATES {
                let fv = (coeffs.f)(t1, t2, x);
                if fv != 0.0 {
                    return Err(Error::Precondition(format!(
                        "duality needs f = 0, but f({t1}, {t2}, {x}) = {fv}"
                    )));
                }
                for (name, func) in [("k", &coeffs.k), ("g", &coeffs.g)] {
                    if func(t1, t2, x) != func(0.0, t2, x) {
                        return Err(Error::Precondition(format!(
                            "duality needs {name} independent of t, but it varies at ({t1}, {t2}, {x})"
                        )));
                    }
                }
                for y in [-0.5, 0.5] {
                    if (coeffs.h)(t1, t2, x, y) != (coeffs.h)(0.0, t2, x, y) {
                        return Err(Error::Precondition(format!(
                            "duality needs h independent of t, but it varies at ({t1}, {t2}, {x}, {y})"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Duality route: integrate `Y` on the operational clock and return `t ↦ Y(E_t)`.
pub fn integrate_duality(spec: &TcSdeSpec, cfg: &IntegratorConfig, seed: SeedSpec) -> Result<SamplePath> {
    check_reduced(&spec.coefficients)?;
    let (noise, nu) = prepare(spec, cfg, seed)?;
    integrate_duality_with(spec, cfg, &noise, &nu)
}

pub fn integrate_duality_with(
    spec: &TcSdeSpec,
    cfg: &IntegratorConfig,
    noise: &OperationalNoise,
    nu: &LevyMeasure,
) -> Result<SamplePath> {
    check_reduced(&spec.coefficients)?;
    let t_grid = cfg.t_grid()?;
    let clock = noise.time_change(&t_grid)?;
    let start = clock.indices[0];
    let end = *clock.indices.last().expect("nonempty grid");
    let y = integrate_operational(spec, cfg, noise, nu, start, end)?;
    let values = clock.indices.iter().map(|&j| y[j - start]).collect();
    SamplePath::new(t_grid, values)
}

/// Direct and duality paths on one shared noise realization.
pub fn coupled_pair(spec: &TcSdeSpec, cfg: &IntegratorConfig, seed: SeedSpec) -> Result<(SamplePath, SamplePath)> {
    check_reduced(&spec.coefficients)?;
    let (noise, nu) = prepare(spec, cfg, seed)?;
    let direct = integrate_direct_with(spec, cfg, &noise, &nu, false)?.path;
    let dual = integrate_duality_with(spec, cfg, &noise, &nu)?;
    Ok((direct, dual))
}

/// Result of [`lipschitz_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    pub samples: usize,
    pub max_quotient: f64,
    /// `(t1, t2, x, y)` attaining the maximum
    pub argmax: (f64, f64, f64, f64),
    pub declared: Option<f64>,
    pub exceeds_declared: bool,
    /// max quotient at each gap of the shrinking-gap ladder
    pub gap_ladder: Vec<(f64, f64)>,
    pub unbounded: bool,
}

/// Range of states and times the probe samples from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRange {
    pub x_min: f64,
    pub x_max: f64,
    pub t_max: f64,
}

impl Default for ProbeRange {
    fn default() -> Self {
        Self {
            x_min: -2.0,
            x_max: 2.0,
            t_max: 5.0,
        }
    }
}

fn lipschitz_quotient(
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    q: &QuadratureConfig,
    t1: f64,
    t2: f64,
    x: f64,
    y: f64,
) -> f64 {
    let sq = |a: f64, b: f64| (a - b) * (a - b);
    let mut num = sq((coeffs.f)(t1, t2, x), (coeffs.f)(t1, t2, y))
        + sq((coeffs.k)(t1, t2, x), (coeffs.k)(t1, t2, y))
        + sq((coeffs.g)(t1, t2, x), (coeffs.g)(t1, t2, y));
    num += match nu.integrate(|z| sq((coeffs.h)(t1, t2, x, z), (coeffs.h)(t1, t2, y, z)), q) {
        Ok(e) => e.value,
        Err(_) => f64::INFINITY,
    };
    num / sq(x, y)
}

/// Samples the Lipschitz quotient of the coefficients and flags growth
/// across shrinking gaps.
pub fn lipschitz_probe(
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    samples: usize,
    range: ProbeRange,
    q: &QuadratureConfig,
    seed: SeedSpec,
) -> Result<LipschitzReport> {
    if samples < 1 {
        return Err(Error::Domain("lipschitz probe needs at least one sample".into()));
    }
    let mut rng = seed.rng(Substream::Auxiliary);
    let width = range.x_max - range.x_min;
    let mut best = (f64::NEG_INFINITY, (0.0, 0.0, 0.0, 0.0));
    let consider = |qv: f64, at: (f64, f64, f64, f64), best: &mut (f64, (f64, f64, f64, f64))| {
        if qv > best.0 || qv.is_nan() {
            *best = (if qv.is_nan() { f64::INFINITY } else { qv }, at);
        }
    };
    for _ in 0..samples {
        let t1 = rng.random::<f64>() * range.t_max;
        let t2 = rng.random::<f64>() * range.t_max;
        let x = range.x_min + width * rng.random::<f64>();
        let mut y = range.x_min + width * rng.random::<f64>();
        if y == x {
            y = x + 1e-3 * width;
        }
        let qv = lipschitz_quotient(coeffs, nu, q, t1, t2, x, y);
        consider(qv, (t1, t2, x, y), &mut best);
    }
    let mut bases = vec![
        0.0f64.clamp(range.x_min, range.x_max),
        range.x_min,
        0.5 * (range.x_min + range.x_max),
    ];
    bases.extend((0..8).map(|_| range.x_min + width * rng.random::<f64>()));
    let mut gap_ladder = Vec::new();
    for k in 1..=8 {
        let gap = width * 10f64.powi(-k);
        let mut level = 0.0f64;
        for &b in &bases {
            let t1 = rng.random::<f64>() * range.t_max;
            let t2 = rng.random::<f64>() * range.t_max;
            let y = if b + gap <= range.x_max { b + gap } else { b - gap };
            let qv = lipschitz_quotient(coeffs, nu, q, t1, t2, b, y);
            consider(qv, (t1, t2, b, y), &mut best);
            level = level.max(qv);
        }
        gap_ladder.push((gap, level));
    }
    let first = gap_ladder.first().map(|p| p.1).unwrap_or(0.0);
    let last = gap_ladder.last().map(|p| p.1).unwrap_or(0.0);
    let rising = gap_ladder[gap_ladder.len() / 2..].windows(2).all(|w| w[1].1 >= w[0].1);
    let unbounded = !last.is_finite() || (rising && last > 100.0 * first.max(1e-300) && last > 1.0);
    let declared = coeffs.lipschitz;
    Ok(LipschitzReport {
        samples,
        max_quotient: best.0,
        argmax: best.1,
        declared,
        exceeds_declared: declared.is_some_and(|k| best.0 > k * (1.0 + 1e-9)),
        gap_ladder,
        unbounded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform() -> LevyMeasure {
        LevyMeasure::uniform(-1.0, 1.0, 1.0, 1.0, 1e-9).unwrap()
    }

    fn det() -> SubordinatorSpec {
        SubordinatorSpec::Deterministic { slope: 1.0 }
    }

    #[test]
    fn deterministic_ode_tracks_exponential() {
        let coeffs = CoefficientSet::zero().with_f(|_, _, x| -x);
        let spec = TcSdeSpec::new(coeffs, 1.0, SubordinatorSpec::Stable { beta: 0.5 }, uniform()).unwrap();
        let cfg = IntegratorConfig::default().with_dt(1e-3).with_horizon(2.0);
        let p = integrate_direct(&spec, &cfg, SeedSpec::new(1, 0)).unwrap();
        let err = p
            .grid()
            .iter()
            .zip(p.values())
            .map(|(t, x)| (x - (-t).exp()).abs())
            .fold(0.0, f64::max);
        // Euler global error is about t e^{-t} dt / 2 <= dt / (2e)
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn single_jump_maps_state_to_x_y_squared() {
        // atom at y = 0.5 with mass 2: compensator is x (0.25 - 1) * 2 = -1.5 x
        let nu = LevyMeasure::new(1.0, 1e-9).unwrap().with_atom(0.5, 2.0).unwrap();
        let coeffs = CoefficientSet::affine(
            Affine::default(),
            Affine::default(),
            Affine::default(),
            AffineJump {
                xy2: 1.0,
                x: -1.0,
                ..AffineJump::default()
            },
        );
        let spec = TcSdeSpec::new(coeffs, 1.0, det(), nu.clone()).unwrap();
        let cfg = IntegratorConfig::default()
            .with_dt(0.5)
            .with_op_step(0.5)
            .with_horizon(20.0);
        let run = integrate_direct_traced(&spec, &cfg, SeedSpec::new(2, 0)).unwrap();
        let step = run
            .steps
            .iter()
            .find(|s| s.jumps.len() == 1)
            .expect("some step has one jump");
        let drifted = step.x + step.dclock * 1.5 * step.x;
        assert_eq!(step.jumps[0].0, drifted);
        let n = run.steps.iter().position(|s| std::ptr::eq(s, step)).unwrap();
        let after = run.path.values()[n + 1];
        assert!((after - drifted * 0.25).abs() <= 1e-15 * drifted.abs());
    }

    #[test]
    fn zero_solution_is_preserved() {
        let spec = TcSdeSpec::new(
            CoefficientSet::example_one(),
            0.0,
            SubordinatorSpec::Stable { beta: 0.5 },
            uniform(),
        )
        .unwrap();
        let cfg = IntegratorConfig::default().with_dt(1e-2).with_horizon(3.0);
        let p = integrate_direct(&spec, &cfg, SeedSpec::new(3, 1)).unwrap();
        assert!(p.values().iter().all(|&x| x == 0.0));
        let reduced = TcSdeSpec::new(
            CoefficientSet::example_one().with_f(|_, _, _| 0.0),
            0.0,
            SubordinatorSpec::Stable { beta: 0.5 },
            uniform(),
        )
        .unwrap();
        let p = integrate_duality(&reduced, &cfg, SeedSpec::new(3, 1)).unwrap();
        assert!(p.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn duality_rejects_dt_drift() {
        let spec = TcSdeSpec::new(CoefficientSet::example_two(), 1.0, det(), uniform()).unwrap();
        let err = integrate_duality(&spec, &IntegratorConfig::default(), SeedSpec::new(0, 0)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn deterministic_clock_collapses_to_classical_em() {
        let spec = TcSdeSpec::new(CoefficientSet::example_two_reduced(), 1.0, det(), uniform()).unwrap();
        let cfg = IntegratorConfig::default()
            .with_dt(1e-3)
            .with_op_step(1e-3)
            .with_horizon(1.0);
        let (noise, nu) = prepare(&spec, &cfg, SeedSpec::new(8, 8)).unwrap();
        let direct = integrate_direct_with(&spec, &cfg, &noise, &nu, false).unwrap();
        let start = direct.clock.indices[0];
        assert_eq!(start, 1);
        let classical = integrate_operational(&spec, &cfg, &noise, &nu, start, start + direct.path.len() - 1).unwrap();
        assert_eq!(direct.path.values(), &classical[..]);
    }

    #[test]
    fn k_drift_only_duality_is_exact_under_identity_clock() {
        let coeffs = CoefficientSet::zero().with_k(|_, _, x| -x);
        let spec = TcSdeSpec::new(coeffs, 1.0, det(), uniform()).unwrap();
        let cfg = IntegratorConfig::default()
            .with_dt(1e-2)
            .with_op_step(1e-2)
            .with_horizon(1.0);
        let (a, b) = coupled_pair(&spec, &cfg, SeedSpec::new(1, 1)).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn clock_consistency() {
        let coeffs = CoefficientSet::zero().with_f(|_, _, _| 1.0).with_k(|_, _, _| 1.0);
        let spec = TcSdeSpec::new(coeffs, 0.5, SubordinatorSpec::Stable { beta: 0.6 }, uniform()).unwrap();
        let cfg = IntegratorConfig::default().with_dt(1e-2).with_horizon(2.0);
        let run = integrate_direct_traced(&spec, &cfg, SeedSpec::new(6, 2)).unwrap();
        let n = run.path.len() - 1;
        let expect = run.path.horizon() + run.clock.value(n) - run.clock.value(0);
        assert!((run.path.last_value() - 0.5 - expect).abs() < 1e-12);
    }

    #[test]
    fn blowup_is_reported() {
        let coeffs = CoefficientSet::zero().with_f(|_, _, x| 50.0 * x);
        let spec = TcSdeSpec::new(coeffs, 1.0, det(), uniform()).unwrap();
        let cfg = IntegratorConfig {
            blowup: 1e6,
            ..IntegratorConfig::default()
        };
        match integrate_direct(&spec, &cfg, SeedSpec::new(0, 0)).unwrap_err() {
            Error::BlowUp { t, .. } => assert!(t > 0.0 && t < 1.0),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn non_finite_coefficient_is_evaluation_error() {
        let coeffs = CoefficientSet::zero().with_f(|_, _, x| (x - 2.0).ln());
        let spec = TcSdeSpec::new(coeffs, 1.0, det(), uniform()).unwrap();
        let err = integrate_direct(&spec, &IntegratorConfig::default(), SeedSpec::new(0, 0)).unwrap_err();
        assert!(matches!(err, Error::Evaluation(_)));
    }

    #[test]
    fn mismatched_jump_bound_rejected() {
        let mut spec = TcSdeSpec::new(CoefficientSet::zero(), 1.0, det(), uniform()).unwrap();
        spec.c = 2.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn lipschitz_linear_constant() {
        let coeffs = CoefficientSet::new(|_, _, x| -x, |_, _, x| 0.25 * x, |_, _, x| x, |_, _, x, y| x * y);
        let q = QuadratureConfig::default();
        let r = lipschitz_probe(&coeffs, &uniform(), 200, ProbeRange::default(), &q, SeedSpec::new(1, 0)).unwrap();
        let expect = 1.0 + 0.0625 + 1.0 + 2.0 / 3.0;
        assert!((r.max_quotient - expect).abs() < 1e-6, "{}", r.max_quotient);
        assert!(!r.unbounded);
        let r = lipschitz_probe(
            &coeffs.clone().with_lipschitz(2.0),
            &uniform(),
            50,
            ProbeRange::default(),
            &q,
            SeedSpec::new(1, 0),
        )
        .unwrap();
        assert!(r.exceeds_declared);
    }

    #[test]
    fn lipschitz_constant_coefficients() {
        let coeffs = CoefficientSet::new(|_, _, _| 1.0, |_, _, _| 2.0, |_, _, _| 3.0, |_, _, _, y| y);
        let q = QuadratureConfig::default();
        let r = lipschitz_probe(&coeffs, &uniform(), 100, ProbeRange::default(), &q, SeedSpec::new(2, 0)).unwrap();
        assert_eq!(r.max_quotient, 0.0);
        assert!(!r.unbounded);
    }

    #[test]
    fn lipschitz_sqrt_is_flagged() {
        let coeffs = CoefficientSet::zero().with_f(|_, _, x: f64| x.abs().sqrt());
        let q = QuadratureConfig::default();
        let r = lipschitz_probe(&coeffs, &uniform(), 100, ProbeRange::default(), &q, SeedSpec::new(3, 0)).unwrap();
        assert!(r.unbounded, "{:?}", r.gap_ladder);
    }
}
