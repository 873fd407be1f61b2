use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::quadrature::{integrate, integrate_toward_zero, Estimate, QuadratureConfig};
use crate::error::{Error, Result};

pub type Density = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Point mass of a Lévy measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Jump intensity on `{0 < |y| < c}`: an absolutely continuous part on a
/// support interval plus finitely many atoms.
///
/// `cutoff` is the small-jump threshold ε. Simulation only produces jumps with
/// `|y| >= ε`; compensators are computed on the same truncated set.
#[derive(Clone)]
pub struct LevyMeasure {
    density: Option<Density>,
    support: (f64, f64),
    atoms: Vec<Atom>,
    c: f64,
    cutoff: f64,
    label: String,
}

impl fmt::Debug for LevyMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyMeasure")
            .field("label", &self.label)
            .field("support", &self.support)
            .field("atoms", &self.atoms)
            .field("c", &self.c)
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

impl LevyMeasure {
    /// Empty measure with maximum jump size `c` and small-jump cutoff `cutoff`.
    pub fn new(c: f64, cutoff: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Configuration(format!(
                "maximum jump size c must be positive, got {c}"
            )));
        }
        if !(cutoff > 0.0 && cutoff < c) {
            return Err(Error::Configuration(format!(
                "small-jump cutoff must satisfy 0 < cutoff < c = {c}, got {cutoff}"
            )));
        }
        Ok(Self {
            density: None,
            support: (0.0, 0.0),
            atoms: Vec::new(),
            c,
            cutoff,
            label: "empty".into(),
        })
    }

    /// Attaches a density supported on `(lo, hi) ⊂ (-c, c)`.
    pub fn with_density<F>(mut self, lo: f64, hi: f64, density: F, label: impl Into<String>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lo < hi) {
            return Err(Error::Configuration(format!("density support ({lo}, {hi}) is empty")));
        }
        if lo < -self.c || hi > self.c {
            return Err(Error::Configuration(format!(
                "density support ({lo}, {hi}) exceeds the maximum jump size c = {}",
                self.c
            )));
        }
        self.density = Some(Arc::new(density));
        self.support = (lo, hi);
        self.label = label.into();
        Ok(self)
    }

    pub fn with_atom(mut self, location: f64, mass: f64) -> Result<Self> {
        if !(location != 0.0 && location.abs() < self.c) {
            return Err(Error::Configuration(format!(
                "atom at {location} must lie strictly inside 0 < |y| < {}",
                self.c
            )));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Configuration(format!("atom mass must be positive, got {mass}")));
        }
        self.atoms.push(Atom { location, mass });
        Ok(self)
    }

    /// Constant density `height` on `(lo, hi)`.
    pub fn uniform(lo: f64, hi: f64, height: f64, c: f64, cutoff: f64) -> Result<Self> {
        if !(height > 0.0) {
            return Err(Error::Configuration(format!(
                "uniform height must be positive, got {height}"
            )));
        }
        Self::new(c, cutoff)?.with_density(lo, hi, move |_| height, format!("uniform({lo}, {hi}; {height})"))
    }

    /// Density `scale · |y|^{-exponent}` on `(lo, hi)`.
    pub fn power_law(exponent: f64, lo: f64, hi: f64, scale: f64, c: f64, cutoff: f64) -> Result<Self> {
        Self::new(c, cutoff)?.with_density(
            lo,
            hi,
            move |y: f64| scale * y.abs().powf(-exponent),
            format!("power({exponent}; {lo}, {hi}; {scale})"),
        )
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        self.density.as_ref().map(|_| self.support)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Returns a copy with a different small-jump cutoff.
    pub fn with_cutoff(&self, cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff < self.c) {
            return Err(Error::Configuration(format!(
                "small-jump cutoff must satisfy 0 < cutoff < c = {}, got {cutoff}",
                self.c
            )));
        }
        let mut out = self.clone();
        out.cutoff = cutoff;
        Ok(out)
    }

    pub fn density_at(&self, y: f64) -> f64 {
        match &self.density {
            Some(d) if y > self.support.0 && y < self.support.1 && y != 0.0 => d(y),
            _ => 0.0,
        }
    }

    /// Density part of `∫ f dν` over `{floor <= |y| < c}`; `floor = 0` means
    /// the full punctured support with dyadic refinement toward the origin.
    fn density_integral<F: Fn(f64) -> f64>(&self, f: &F, floor: f64, q: &QuadratureConfig) -> Result<Estimate> {
        let Some(d) = &self.density else {
            return Ok(Estimate::default());
        };
        let (lo, hi) = self.support;
        let mut total = Estimate::default();
        // positive side on |y| in (max(lo,0), hi)
        if hi > 0.0 {
            let inner = lo.max(0.0);
            let g = |y: f64| f(y) * d(y);
            total = total + side_integral(&g, inner, hi, floor, q)?;
        }
        if lo < 0.0 {
            let inner = (-hi).max(0.0);
            let g = |u: f64| f(-u) * d(-u);
            total = total + side_integral(&g, inner, -lo, floor, q)?;
        }
        Ok(total)
    }

    fn atom_sum<F: Fn(f64) -> f64>(&self, f: &F, floor: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.location.abs() >= floor)
            .map(|a| a.mass * f(a.location))
            .sum()
    }

    /// `∫_{0<|y|<c} f(y) ν(dy)` with its error estimate.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, q: &QuadratureConfig) -> Result<Estimate> {
        self.integrate_above(f, 0.0, q)
    }

    /// `∫_{floor<=|y|<c} f(y) ν(dy)`.
    pub fn integrate_above<F: Fn(f64) -> f64>(&self, f: F, floor: f64, q: &QuadratureConfig) -> Result<Estimate> {
        let mut est = self.density_integral(&f, floor, q)?;
        est.value += self.atom_sum(&f, floor);
        if !est.value.is_finite() {
            return Err(Error::Evaluation(
                "jump integral evaluated to a non-finite value".into(),
            ));
        }
        Ok(est)
    }

    /// `∫_{ε<=|y|<c} f(y) ν(dy)` on the simulation support.
    pub fn integrate_truncated<F: Fn(f64) -> f64>(&self, f: F, q: &QuadratureConfig) -> Result<Estimate> {
        self.integrate_above(f, self.cutoff, q)
    }

    /// `ν({ε <= |y| < c})`, the jump rate seen by the simulator.
    pub fn truncated_mass(&self, q: &QuadratureConfig) -> Result<f64> {
        Ok(self.integrate_truncated(|_| 1.0, q)?.value)
    }

    /// `ν((a, b))` for an interval bounded away from the origin.
    pub fn mass_of_interval(&self, a: f64, b: f64, q: &QuadratureConfig) -> Result<f64> {
        if !(a < b) || (a <= 0.0 && b >= 0.0) {
            return Err(Error::Domain(format!(
                "interval ({a}, {b}) must be nonempty and exclude 0"
            )));
        }
        let mut mass = 0.0;
        if let Some(d) = &self.density {
            let lo = a.max(self.support.0);
            let hi = b.min(self.support.1);
            if lo < hi {
                mass += integrate(|y| d(y), lo, hi, q)?.value;
            }
        }
        mass += self
            .atoms
            .iter()
            .filter(|at| at.location > a && at.location < b)
            .map(|at| at.mass)
            .sum::<f64>();
        Ok(mass)
    }

    /// Tabulated sampler for marks from ν restricted to `{ε <= |y| < c}` and normalized.
    pub fn sampler(&self, q: &QuadratureConfig) -> Result<JumpSampler> {
        JumpSampler::build(self, q)
    }
}

fn side_integral<G: Fn(f64) -> f64>(
    g: &G,
    inner: f64,
    outer: f64,
    floor: f64,
    q: &QuadratureConfig,
) -> Result<Estimate> {
    if outer <= floor {
        return Ok(Estimate::default());
    }
    if inner > 0.0 {
        integrate(g, inner.max(floor), outer, q)
    } else {
        integrate_toward_zero(g, floor, outer, q)
    }
}

/// `∫_{0<|y|<c} integrand(y) ν(dy)`.
pub fn levy_integral<F: Fn(f64) -> f64>(nu: &LevyMeasure, integrand: F, q: &QuadratureConfig) -> Result<f64> {
    Ok(nu.integrate(integrand, q)?.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks finiteness of the truncated mass and of `∫ y² ν(dy)` by dyadic
/// (Cauchy) refinement toward the origin. Never errors; failures land in the report.
pub fn validate_levy_measure(nu: &LevyMeasure, q: &QuadratureConfig) -> ValidationReport {
    let mut checks = Vec::new();

    let atoms_ok = nu.atoms.iter().all(|a| a.location != 0.0 && a.location.abs() < nu.c);
    checks.push(ValidationCheck {
        name: "atoms_inside_support".into(),
        passed: atoms_ok,
        value: nu.atoms.len() as f64,
        detail: format!("{} atoms checked against 0 < |y| < {}", nu.atoms.len(), nu.c),
    });

    match nu.integrate_truncated(|_| 1.0, q) {
        Ok(m) => checks.push(ValidationCheck {
            name: "truncated_mass".into(),
            passed: m.value.is_finite(),
            value: m.value,
            detail: format!("nu(eps <= |y| < c) with eps = {}", nu.cutoff),
        }),
        Err(e) => checks.push(ValidationCheck {
            name: "truncated_mass".into(),
            passed: false,
            value: f64::NAN,
            detail: e.to_string(),
        }),
    }

    match nu.integrate(|y| y * y, q) {
        Ok(m) => checks.push(ValidationCheck {
            name: "second_moment".into(),
            passed: m.value.is_finite(),
            value: m.value,
            detail: "dyadic truncations of int y^2 nu(dy) form a Cauchy sequence".into(),
        }),
        Err(Error::Integrability { partial, detail }) => checks.push(ValidationCheck {
            name: "second_moment".into(),
            passed: false,
            value: partial,
            detail,
        }),
        Err(e) => checks.push(ValidationCheck {
            name: "second_moment".into(),
            passed: false,
            value: f64::NAN,
            detail: e.to_string(),
        }),
    }

    ValidationReport { checks }
}

#[derive(Debug, Clone)]
struct Cell {
    lo: f64,
    hi: f64,
    envelope: f64,
}

/// Draws jump marks from the normalized truncated measure.
///
/// Cells are chosen by exact (quadrature) mass; within a cell the mark is
/// drawn by rejection against a probed envelope of the density.
#[derive(Clone)]
pub struct JumpSampler {
    density: Option<Density>,
    cells: Vec<Cell>,
    /// cumulative masses: cells first, then atoms
    cumulative: Vec<f64>,
    atoms: Vec<Atom>,
    total: f64,
}

impl fmt::Debug for JumpSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpSampler")
            .field("cells", &self.cells.len())
            .field("atoms", &self.atoms)
            .field("total", &self.total)
            .finish()
    }
}

const CELLS_PER_SIDE: usize = 256;
const CELLS_PER_DECADE: usize = 64;

impl JumpSampler {
    fn build(nu: &LevyMeasure, q: &QuadratureConfig) -> Result<Self> {
        let mut cells = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        if let Some(d) = &nu.density {
            let (lo, hi) = nu.support;
            let mut edges_all: Vec<(f64, f64)> = Vec::new();
            for (sign, inner, outer) in [(1.0, lo.max(0.0), hi), (-1.0, (-hi).max(0.0), -lo)] {
                if outer <= 0.0 {
                    continue;
                }
                let a = inner.max(nu.cutoff);
                if a >= outer {
                    continue;
                }
                let edges: Vec<f64> = if inner > 0.0 {
                    (0..=CELLS_PER_SIDE)
                        .map(|i| a + (outer - a) * i as f64 / CELLS_PER_SIDE as f64)
                        .collect()
                } else {
                    let decades = (outer / a).log10().max(1.0);
                    let n = ((decades * CELLS_PER_DECADE as f64).ceil() as usize).max(CELLS_PER_SIDE);
                    let ratio = (outer / a).ln() / n as f64;
                    (0..=n).map(|i| a * (ratio * i as f64).exp()).collect()
                };
                for w in edges.windows(2) {
                    let (u0, u1) = (w[0], w[1].min(outer));
                    if u1 <= u0 {
                        continue;
                    }
                    edges_all.push(if sign > 0.0 { (u0, u1) } else { (-u1, -u0) });
                }
            }
            for (a, b) in edges_all {
                let mass = integrate(|y| d(y), a, b, q)?.value;
                if !(mass > 0.0) {
                    continue;
                }
                let probes = (0..=16)
                    .map(|i| d(a + (b - a) * i as f64 / 16.0))
                    .filter(|v| v.is_finite());
                let peak = probes.fold(0.0f64, f64::max);
                acc += mass;
                cells.push(Cell {
                    lo: a,
                    hi: b,
                    envelope: 1.25 * peak.max(mass / (b - a)),
                });
                cumulative.push(acc);
            }
        }
        let atoms: Vec<Atom> = nu
            .atoms
            .iter()
            .copied()
            .filter(|a| a.location.abs() >= nu.cutoff)
            .collect();
        for a in &atoms {
            acc += a.mass;
            cumulative.push(acc);
        }
        Ok(Self {
            density: nu.density.clone(),
            cells,
            cumulative,
            atoms,
            total: acc,
        })
    }

    /// `ν({ε <= |y| < c})` as tabulated.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * self.total;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1);
        if idx >= self.cells.len() {
            return self.atoms[idx - self.cells.len()].location;
        }
        let cell = &self.cells[idx];
        let d = self.density.as_ref().expect("cells imply a density");
        for _ in 0..64 {
            let y = cell.lo + (cell.hi - cell.lo) * rng.random::<f64>();
            if rng.random::<f64>() * cell.envelope <= d(y) {
                return y;
            }
        }
        0.5 * (cell.lo + cell.hi)
    }
}
