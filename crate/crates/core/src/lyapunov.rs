//! Generators of the time-changed Itô formula and grid checkers for the
//! stability theorems.
//!
//! For `F(t1, t2, x)`:
//!
//! ```text
//! L1 F = F_t1 + F_x f
//! L2 F = F_t2 + F_x k + ½ g² F_xx + ∫_{|y|<c} [F(x + h) − F(x) − F_x h] ν(dy)
//! ```
//!
//! Theorem hypotheses quantify over all `(t1, t2, x)`; a grid check can only
//! refute them, so a passing certificate is worded as grid-supported.
//! Candidates that are not smooth at the origin (`|x|`, `|x|^α`) are checked
//! outside a ball of radius ρ.

use std::cell::Cell;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levy::{Estimate, LevyMeasure, QuadratureConfig};
use crate::paths::{SeedSpec, Substream};
use crate::sde::{CoefficientSet, DirectRun, StateFn};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `V` with its partial derivatives and a class-K minorant `μ`.
#[derive(Clone)]
pub struct LyapunovCandidate {
    pub name: String,
    pub v: StateFn,
    pub v_t1: StateFn,
    pub v_t2: StateFn,
    pub v_x: StateFn,
    pub v_xx: StateFn,
    pub mu: ScalarFn,
    pub exclusion_radius: f64,
}

impl fmt::Debug for LyapunovCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovCandidate")
            .field("name", &self.name)
            .field("exclusion_radius", &self.exclusion_radius)
            .finish_non_exhaustive()
    }
}

pub const DEFAULT_EXCLUSION_RADIUS: f64 = 1e-6;

fn zero() -> StateFn {
    Arc::new(|_, _, _| 0.0)
}

impl LyapunovCandidate {
    /// `V = scale·|x|^α` with `μ(r) = scale·r^α`.
    pub fn abs_power(alpha: f64, scale: f64) -> Self {
        Self {
            name: format!("{scale}*|x|^{alpha}"),
            v: Arc::new(move |_, _, x: f64| scale * x.abs().powf(alpha)),
            v_t1: zero(),
            v_t2: zero(),
            v_x: Arc::new(move |_, _, x: f64| scale * alpha * x.signum() * x.abs().powf(alpha - 1.0)),
            v_xx: Arc::new(move |_, _, x: f64| scale * alpha * (alpha - 1.0) * x.abs().powf(alpha - 2.0)),
            mu: Arc::new(move |r: f64| scale * r.max(0.0).powf(alpha)),
            exclusion_radius: if alpha >= 2.0 { 0.0 } else { DEFAULT_EXCLUSION_RADIUS },
        }
    }

    /// `V = scale·|x|`.
    pub fn abs(scale: f64) -> Self {
        let mut c = Self::abs_power(1.0, scale);
        c.name = format!("{scale}*|x|");
        c.v_xx = zero();
        c
    }

    /// `V = scale·x²`, smooth everywhere.
    pub fn square(scale: f64) -> Self {
        Self {
            name: format!("{scale}*x^2"),
            v: Arc::new(move |_, _, x| scale * x * x),
            v_t1: zero(),
            v_t2: zero(),
            v_x: Arc::new(move |_, _, x| 2.0 * scale * x),
            v_xx: Arc::new(move |_, _, _| 2.0 * scale),
            mu: Arc::new(move |r| scale * r * r),
            exclusion_radius: 0.0,
        }
    }

    /// `V = x²/(1 + x²)`, bounded.
    pub fn bounded_square() -> Self {
        Self {
            name: "x^2/(1+x^2)".into(),
            v: Arc::new(|_, _, x| x * x / (1.0 + x * x)),
            v_t1: zero(),
            v_t2: zero(),
            v_x: Arc::new(|_, _, x| 2.0 * x / (1.0 + x * x).powi(2)),
            v_xx: Arc::new(|_, _, x| (2.0 - 6.0 * x * x) / (1.0 + x * x).powi(3)),
            mu: Arc::new(|r| r * r / (1.0 + r * r)),
            exclusion_radius: 0.0,
        }
    }

    pub fn with_exclusion_radius(mut self, rho: f64) -> Self {
        self.exclusion_radius = rho;
        self
    }

    fn excluded(&self, x: f64) -> bool {
        self.exclusion_radius > 0.0 && x.abs() <= self.exclusion_radius
    }

    /// Grid and random-point checks of the candidate's own invariants.
    pub fn check_invariants(&self, t_probe: &[f64], samples: usize, seed: SeedSpec) -> CandidateReport {
        use rand::Rng;
        let mut issues = Vec::new();
        if (self.mu)(0.0) != 0.0 {
            issues.push(format!("mu(0) = {} is not 0", (self.mu)(0.0)));
        }
        let radii: Vec<f64> = (1..=200).map(|i| 1e-3 * 1.08f64.powi(i)).collect();
        if let Some(r) = radii.iter().find(|&&r| !((self.mu)(r) > 0.0)) {
            issues.push(format!("mu({r}) is not positive"));
        }
        if let Some(w) = radii.windows(2).find(|w| (self.mu)(w[1]) < (self.mu)(w[0])) {
            issues.push(format!("mu decreases between {} and {}", w[0], w[1]));
        }
        for &t1 in t_probe {
            for &t2 in t_probe {
                let v0 = (self.v)(t1, t2, 0.0);
                if v0 != 0.0 {
                    issues.push(format!("V({t1}, {t2}, 0) = {v0}"));
                }
            }
        }
        let mut rng = seed.rng(Substream::Auxiliary);
        let step: f64 = 1e-5;
        let mut worst = 0.0f64;
        let floor = (10.0 * step).max(self.exclusion_radius * 10.0).max(0.05);
        for _ in 0..samples {
            let t1 = 5.0 * rng.random::<f64>();
            let t2 = 5.0 * rng.random::<f64>();
            let mag = floor + (5.0 - floor) * rng.random::<f64>();
            let x = if rng.random::<bool>() { mag } else { -mag };
            let fd_x = ((self.v)(t1, t2, x + step) - (self.v)(t1, t2, x - step)) / (2.0 * step);
            let fd_xx = ((self.v_x)(t1, t2, x + step) - (self.v_x)(t1, t2, x - step)) / (2.0 * step);
            let fd_t1 = ((self.v)(t1 + step, t2, x) - (self.v)(t1 - step, t2, x)) / (2.0 * step);
            let fd_t2 = ((self.v)(t1, t2 + step, x) - (self.v)(t1, t2 - step, x)) / (2.0 * step);
            for (name, fd, exact) in [
                ("V_x", fd_x, (self.v_x)(t1, t2, x)),
                ("V_xx", fd_xx, (self.v_xx)(t1, t2, x)),
                ("V_t1", fd_t1, (self.v_t1)(t1, t2, x)),
                ("V_t2", fd_t2, (self.v_t2)(t1, t2, x)),
            ] {
                let rel = (fd - exact).abs() / exact.abs().max(1.0);
                worst = worst.max(rel);
                if !(rel < 1e-4) {
                    issues.push(format!(
                        "{name} at ({t1:.3}, {t2:.3}, {x:.4}): supplied {exact}, finite difference {fd}"
                    ));
                }
            }
        }
        CandidateReport {
            issues,
            worst_derivative_error: worst,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateReport {
    pub issues: Vec<String>,
    pub worst_derivative_error: f64,
}

impl CandidateReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

fn exclusion_error(vc: &LyapunovCandidate, x: f64) -> Error {
    Error::Domain(format!(
        "x = {x} lies inside the exclusion radius {} of {}",
        vc.exclusion_radius, vc.name
    ))
}

/// `L1 V = V_t1 + V_x f`.
pub fn eval_l1(vc: &LyapunovCandidate, coeffs: &CoefficientSet, t1: f64, t2: f64, x: f64) -> Result<f64> {
    if vc.excluded(x) {
        return Err(exclusion_error(vc, x));
    }
    Ok((vc.v_t1)(t1, t2, x) + (vc.v_x)(t1, t2, x) * (coeffs.f)(t1, t2, x))
}

/// `L2 V` with the quadrature error estimate of its jump part.
pub fn eval_l2_estimate(
    vc: &LyapunovCandidate,
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    q: &QuadratureConfig,
    t1: f64,
    t2: f64,
    x: f64,
) -> Result<Estimate> {
    eval_l2_on(vc, coeffs, nu, q, t1, t2, x, false)
}

/// `L2 V = V_t2 + V_x k + ½ g² V_xx + ∫ [V(x+h) − V(x) − V_x h] ν(dy)`.
pub fn eval_l2(
    vc: &LyapunovCandidate,
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    q: &QuadratureConfig,
    t1: f64,
    t2: f64,
    x: f64,
) -> Result<f64> {
    Ok(eval_l2_estimate(vc, coeffs, nu, q, t1, t2, x)?.value)
}

#[allow(clippy::too_many_arguments)]
fn eval_l2_on(
    vc: &LyapunovCandidate,
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    q: &QuadratureConfig,
    t1: f64,
    t2: f64,
    x: f64,
    truncated: bool,
) -> Result<Estimate> {
    if vc.excluded(x) {
        return Err(exclusion_error(vc, x));
    }
    let vx = (vc.v_x)(t1, t2, x);
    let g = (coeffs.g)(t1, t2, x);
    let local = (vc.v_t2)(t1, t2, x) + vx * (coeffs.k)(t1, t2, x) + 0.5 * g * g * (vc.v_xx)(t1, t2, x);
    let v0 = (vc.v)(t1, t2, x);
    let bad = Cell::new((f64::INFINITY, f64::NEG_INFINITY));
    let integrand = |y: f64| {
        let h = (coeffs.h)(t1, t2, x, y);
        let val = (vc.v)(t1, t2, x + h) - v0 - vx * h;
        if val.is_finite() {
            val
        } else {
            let (lo, hi) = bad.get();
            bad.set((lo.min(y), hi.max(y)));
            0.0
        }
    };
    let jump = if truncated {
        nu.integrate_truncated(integrand, q)?
    } else {
        nu.integrate(integrand, q)?
    };
    let (lo, hi) = bad.get();
    if lo <= hi {
        return Err(Error::Domain(format!(
            "V(x + h) is not evaluable for y in [{lo}, {hi}] at x = {x} ({})",
            vc.name
        )));
    }
    if !local.is_finite() {
        return Err(Error::Evaluation(format!(
            "local part of L2 V is not finite at x = {x}"
        )));
    }
    Ok(Estimate {
        value: local + jump.value,
        abs_error: jump.abs_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    Stochastic,
    Asymptotic,
    Global,
    PthMoment,
}

impl Theorem {
    pub fn name(&self) -> &'static str {
        match self {
            Theorem::Stochastic => "stochastic",
            Theorem::Asymptotic => "asymptotic",
            Theorem::Global => "global",
            Theorem::PthMoment => "pth-moment",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Theorem::Stochastic => "stochastically stable (stable in probability)",
            Theorem::Asymptotic => "stochastically asymptotically stable",
            Theorem::Global => "globally stochastically asymptotically stable",
            Theorem::PthMoment => "pth moment exponentially stable",
        }
    }
}

/// Tensor grid over `(t1, t2, x)` plus optional low-discrepancy scatter points.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    pub x: Vec<f64>,
    pub scatter: usize,
}

impl GridSpec {
    pub fn new(t1: Vec<f64>, t2: Vec<f64>, x: Vec<f64>) -> Self {
        Self { t1, t2, x, scatter: 0 }
    }

    /// `n` evenly spaced states on `[lo, hi]`.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n <= 1 {
            return vec![lo];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn with_scatter(mut self, n: usize) -> Self {
        self.scatter = n;
        self
    }

    /// Grid points in deterministic order: the tensor product, then scatter.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let mut pts = Vec::with_capacity(self.t1.len() * self.t2.len() * self.x.len() + self.scatter);
        for &a in &self.t1 {
            for &b in &self.t2 {
                for &x in &self.x {
                    pts.push((a, b, x));
                }
            }
        }
        if self.scatter > 0 {
            let span = |v: &[f64]| {
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            };
            let (a0, a1) = span(&self.t1);
            let (b0, b1) = span(&self.t2);
            let (x0, x1) = span(&self.x);
            // additive recurrence with the plastic-number generalization of the golden ratio
            let g = 1.220_744_084_605_759_5f64;
            let alpha = [1.0 / g, 1.0 / (g * g), 1.0 / (g * g * g)];
            for i in 1..=self.scatter {
                let u: Vec<f64> = alpha.iter().map(|a| (0.5 + a * i as f64).fract()).collect();
                pts.push((a0 + (a1 - a0) * u[0], b0 + (b1 - b0) * u[1], x0 + (x1 - x0) * u[2]));
            }
        }
        pts
    }

    fn validate(&self) -> Result<()> {
        if self.t1.is_empty() || self.t2.is_empty() || self.x.is_empty() {
            return Err(Error::Malformed("every grid axis needs at least one point".into()));
        }
        let all = self.t1.iter().chain(&self.t2).chain(&self.x);
        if let Some(v) = all.clone().find(|v| !v.is_finite()) {
            return Err(Error::Malformed(format!("grid value {v} is not finite")));
        }
        if let Some(v) = self.t1.iter().chain(&self.t2).find(|&&v| v < 0.0) {
            return Err(Error::Malformed(format!("time grid value {v} is negative")));
        }
        Ok(())
    }
}

/// Hypotheses to check and their constants.
#[derive(Clone)]
pub struct StabilityCriteria {
    pub theorem: Theorem,
    /// domain bound `h` of `S_h = {|x| < h}`; ignored for the global and pth-moment checks
    pub h: f64,
    pub p: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub gamma1: Option<ScalarFn>,
    pub gamma2: Option<ScalarFn>,
    /// inner radii α of the annuli `S_h − S̄_α`
    pub annulus_radii: Vec<f64>,
    /// radii for the radial-unboundedness probe
    pub radial_ladder: Vec<f64>,
    /// level `inf V` must exceed at the largest ladder radius
    pub radial_level: f64,
    pub grid: GridSpec,
    /// relative fence for sign checks
    pub tau_pass: f64,
    pub quadrature: QuadratureConfig,
}

impl fmt::Debug for StabilityCriteria {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StabilityCriteria")
            .field("theorem", &self.theorem)
            .field("h", &self.h)
            .field("p", &self.p)
            .field("alphas", &(self.alpha1, self.alpha2, self.alpha3))
            .field("annulus_radii", &self.annulus_radii)
            .field("radial_ladder", &self.radial_ladder)
            .field("grid_points", &self.grid.points().len())
            .finish_non_exhaustive()
    }
}

impl StabilityCriteria {
    pub fn new(theorem: Theorem, grid: GridSpec) -> Self {
        Self {
            theorem,
            h: f64::INFINITY,
            p: 1.0,
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 1.0,
            gamma1: None,
            gamma2: None,
            annulus_radii: Vec::new(),
            radial_ladder: vec![10.0, 1e3, 1e6],
            radial_level: 100.0,
            grid,
            tau_pass: 1e-9,
            quadrature: QuadratureConfig::default(),
        }
    }

    pub fn with_domain(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_moment(mut self, p: f64, alpha1: f64, alpha2: f64, alpha3: f64) -> Self {
        self.p = p;
        self.alpha1 = alpha1;
        self.alpha2 = alpha2;
        self.alpha3 = alpha3;
        self
    }

    pub fn with_gammas<A, B>(mut self, gamma1: A, gamma2: B, radii: Vec<f64>) -> Self
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.gamma1 = Some(Arc::new(gamma1));
        self.gamma2 = Some(Arc::new(gamma2));
        self.annulus_radii = radii;
        self
    }

    pub fn with_radial(mut self, ladder: Vec<f64>, level: f64) -> Self {
        self.radial_ladder = ladder;
        self.radial_level = level;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

impl Verdict {
    pub fn word(&self) -> &'static str {
        match self {
            Verdict::Pass => "YES",
            Verdict::Fail => "NO",
            Verdict::Indeterminate => "INDETERMINATE",
        }
    }

    fn combine(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Indeterminate, _) | (_, Verdict::Indeterminate) => Verdict::Indeterminate,
            _ => Verdict::Pass,
        }
    }
}

/// A grid point where a condition failed or could not be decided.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub condition: String,
    pub t1: f64,
    pub t2: f64,
    pub x: f64,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub name: String,
    pub verdict: Verdict,
    pub points: usize,
    /// largest observed `value − threshold`
    pub worst_margin: f64,
}

/// `E|X(t)|^p ≤ factor·|x0|^p·e^{−rate·t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentBound {
    pub p: f64,
    pub factor: f64,
    pub rate: f64,
}

impl MomentBound {
    pub fn at(&self, x0: f64, t: f64) -> f64 {
        self.factor * x0.abs().powf(self.p) * (-self.rate * t).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub theorem: Theorem,
    pub verdict: Verdict,
    pub conditions: Vec<ConditionResult>,
    pub witnesses: Vec<Witness>,
    pub indeterminate: Vec<Witness>,
    pub predicted_bound: Option<MomentBound>,
    pub points_checked: usize,
    pub candidate: String,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Plain-text rendering; the first line is the verdict word.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.verdict.word());
        let _ = writeln!(s, "theorem: {} ({})", self.theorem.name(), self.theorem.description());
        let _ = writeln!(s, "candidate: {}", self.candidate);
        let _ = writeln!(s, "grid points checked: {}", self.points_checked);
        let wording = match self.verdict {
            Verdict::Pass => "all hypotheses hold on the grid (grid-supported, not a proof)",
            Verdict::Fail => "hypotheses refuted at the witnesses below",
            Verdict::Indeterminate => "some conditions are within quadrature noise of their thresholds",
        };
        let _ = writeln!(s, "conclusion: {wording}");
        for c in &self.conditions {
            let _ = writeln!(
                s,
                "condition {}: {} over {} points, worst margin {:.6e}",
                c.name,
                c.verdict.word(),
                c.points,
                c.worst_margin
            );
        }
        if let Some(b) = &self.predicted_bound {
            let _ = writeln!(
                s,
                "bound: E|X(t)|^{} <= {} |x0|^{} exp(-{} t)",
                b.p, b.factor, b.p, b.rate
            );
        }
        for (label, list) in [("witness", &self.witnesses), ("indeterminate", &self.indeterminate)] {
            for w in list.iter().take(20) {
                let _ = writeln!(
                    s,
                    "{label}: {} at (t1={}, t2={}, x={}) value {:.6e} threshold {:.6e}",
                    w.condition, w.t1, w.t2, w.x, w.value, w.threshold
                );
            }
        }
        s
    }
}

/// Outcome of one `value <= threshold` comparison.
fn fence(value: f64, err: f64, threshold: f64, tau: f64) -> Verdict {
    if value + err <= threshold + tau {
        Verdict::Pass
    } else if value - err > threshold + tau {
        Verdict::Fail
    } else {
        Verdict::Indeterminate
    }
}

struct Collector {
    conditions: Vec<ConditionResult>,
    witnesses: Vec<Witness>,
    indeterminate: Vec<Witness>,
}

impl Collector {
    fn new() -> Self {
        Self {
            conditions: Vec::new(),
            witnesses: Vec::new(),
            indeterminate: Vec::new(),
        }
    }

    /// Records a batch of `(point, value, err, threshold, tau)` comparisons for one condition.
    fn record(&mut self, name: &str, checks: Vec<((f64, f64, f64), f64, f64, f64, f64)>) {
        let mut verdict = Verdict::Pass;
        let mut worst = f64::NEG_INFINITY;
        let points = checks.len();
        for ((t1, t2, x), value, err, threshold, tau) in checks {
            let v = fence(value, err, threshold, tau);
            worst = worst.max(value - threshold);
            let w = Witness {
                condition: name.to_string(),
                t1,
                t2,
                x,
                value,
                threshold,
            };
            match v {
                Verdict::Fail => self.witnesses.push(w),
                Verdict::Indeterminate => self.indeterminate.push(w),
                Verdict::Pass => {}
            }
            verdict = verdict.combine(v);
        }
        self.conditions.push(ConditionResult {
            name: name.to_string(),
            verdict,
            points,
            worst_margin: worst,
        });
    }

    fn finish(self, theorem: Theorem, points: usize, candidate: &str, bound: Option<MomentBound>) -> Certificate {
        let verdict = self
            .conditions
            .iter()
            .fold(Verdict::Pass, |acc, c| acc.combine(c.verdict));
        Certificate {
            theorem,
            verdict,
            conditions: self.conditions,
            witnesses: self.witnesses,
            indeterminate: self.indeterminate,
            predicted_bound: if verdict == Verdict::Pass { bound } else { None },
            points_checked: points,
            candidate: candidate.to_string(),
        }
    }
}

struct PointEval {
    pt: (f64, f64, f64),
    v: f64,
    l1: f64,
    l2: Estimate,
}

fn evaluate_points(
    vc: &LyapunovCandidate,
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    q: &QuadratureConfig,
    pts: &[(f64, f64, f64)],
) -> Result<Vec<PointEval>> {
    pts.par_iter()
        .map(|&(t1, t2, x)| {
            Ok(PointEval {
                pt: (t1, t2, x),
                v: (vc.v)(t1, t2, x),
                l1: eval_l1(vc, coeffs, t1, t2, x)?,
                l2: eval_l2_estimate(vc, coeffs, nu, q, t1, t2, x)?,
            })
        })
        .collect()
}

fn origin_checks(vc: &LyapunovCandidate, grid: &GridSpec) -> Vec<((f64, f64, f64), f64, f64, f64, f64)> {
    let mut out = Vec::new();
    for &t1 in &grid.t1 {
        for &t2 in &grid.t2 {
            let v0 = (vc.v)(t1, t2, 0.0);
            // equality: check |V(t1,t2,0)| <= 0
            out.push(((t1, t2, 0.0), v0.abs(), 0.0, 0.0, 0.0));
        }
    }
    out
}

fn tau(crit: &StabilityCriteria, v: f64) -> f64 {
    crit.tau_pass * (1.0 + v.abs())
}

fn common_preamble(
    vc: &LyapunovCandidate,
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    crit: &StabilityCriteria,
    bounded_domain: bool,
) -> Result<(Vec<(f64, f64, f64)>, Vec<PointEval>)> {
    crit.grid.validate()?;
    crit.quadrature.validate()?;
    if bounded_domain {
        if !(crit.h >= 2.0 * nu.c()) {
            return Err(Error::Precondition(format!(
                "domain bound h = {} must be at least 2c = {}",
                crit.h,
                2.0 * nu.c()
            )));
        }
        if let Some(x) = crit.grid.x.iter().find(|x| !(x.abs() < crit.h)) {
            return Err(Error::Malformed(format!(
                "grid state {x} lies outside S_h with h = {}",
                crit.h
            )));
        }
    }
    let pts: Vec<_> = crit
        .grid
        .points()
        .into_iter()
        .filter(|&(_, _, x)| !vc.excluded(x))
        .collect();
    if pts.is_empty() {
        return Err(Error::Malformed(
            "no grid point lies outside the exclusion radius".into(),
        ));
    }
    let evals = evaluate_points(vc, coeffs, nu, &crit.quadrature, &pts)?;
    Ok((pts, evals))
}

fn record_base(col: &mut Collector, vc: &LyapunovCandidate, crit: &StabilityCriteria, evals: &[PointEval]) {
    col.record("V(t1,t2,0)=0", origin_checks(vc, &crit.grid));
    col.record(
        "mu(|x|)<=V",
        evals
            .iter()
            .map(|e| (e.pt, (vc.mu)(e.pt.2.abs()), 0.0, e.v, tau(crit, e.v)))
            .collect(),
    );
}

fn record_signs(col: &mut Collector, crit: &StabilityCriteria, evals: &[PointEval]) {
    col.record(
        "L1V<=0",
        evals.iter().map(|e| (e.pt, e.l1, 0.0, 0.0, tau(crit, e.v))).collect(),
    );
    col.record(
        "L2V<=0",
        evals
            .iter()
            .map(|e| (e.pt, e.l2.value, e.l2.abs_error, 0.0, tau(crit, e.v)))
            .collect(),
    );
}

fn record_annuli(col: &mut Collector, crit: &StabilityCriteria, evals: &[PointEval]) -> Result<()> {
    let (Some(g1), Some(g2)) = (&crit.gamma1, &crit.gamma2) else {
        return Err(Error::Criteria("annulus bounds gamma1 and gamma2 are required".into()));
    };
    if crit.annulus_radii.is_empty() {
        return Err(Error::Criteria("at least one annulus radius alpha is required".into()));
    }
    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    for &a in &crit.annulus_radii {
        if !(a > 0.0 && a < crit.h) {
            return Err(Error::Criteria(format!(
                "annulus radius {a} must lie in (0, h = {})",
                crit.h
            )));
        }
        let (b1, b2) = (g1(a), g2(a));
        if !(b1 >= 0.0 && b2 >= 0.0) {
            return Err(Error::Criteria(format!(
                "gamma1({a}) = {b1}, gamma2({a}) = {b2} must be nonnegative"
            )));
        }
        if b1 == 0.0 && b2 == 0.0 {
            return Err(Error::Criteria(format!("gamma1 and gamma2 both vanish at alpha = {a}")));
        }
        for e in evals.iter().filter(|e| e.pt.2.abs() > a) {
            l1.push((e.pt, e.l1, 0.0, -b1, tau(crit, e.v)));
            l2.push((e.pt, e.l2.value, e.l2.abs_error, -b2, tau(crit, e.v)));
        }
    }
    col.record("L1V<=-gamma1(alpha) on annuli", l1);
    col.record("L2V<=-gamma2(alpha) on annuli", l2);
    Ok(())
}

/// Hypotheses of the stability-in-probability theorem on `S_h`, `h ≥ 2c`.
pub fn check_stochastic_stability(
    vc: &LyapunovCandidate,
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    crit: &StabilityCriteria,
) -> Result<Certificate> {
    let (pts, evals) = common_preamble(vc, coeffs, nu, crit, true)?;
    let mut col = Collector::new();
    record_base(&mut col, vc, crit, &evals);
    record_signs(&mut col, crit, &evals);
    Ok(col.finish(Theorem::Stochastic, pts.len(), &vc.name, None))
}

/// Adds the annulus conditions `L1V ≤ −γ1(α)`, `L2V ≤ −γ2(α)` on `S_h − S̄_α`.
pub fn check_asymptotic_stability(
    vc: &LyapunovCandidate,
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    crit: &StabilityCriteria,
) -> Result<Certificate> {
    let (pts, evals) = common_preamble(vc, coeffs, nu, crit, true)?;
    let mut col = Collector::new();
    record_base(&mut col, vc, crit, &evals);
    record_signs(&mut col, crit, &evals);
    record_annuli(&mut col, crit, &evals)?;
    Ok(col.finish(Theorem::Asymptotic, pts.len(), &vc.name, None))
}

/// Asymptotic conditions over all of ℝ plus the radial-unboundedness probe
/// `inf_{t1,t2} V(t1, t2, x) → ∞` on a growing-radius ladder.
pub fn check_global_stability(
    vc: &LyapunovCandidate,
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    crit: &StabilityCriteria,
) -> Result<Certificate> {
    if crit.radial_ladder.is_empty() {
        return Err(Error::Precondition("global check needs a radial probe ladder".into()));
    }
    let mut unbounded = crit.clone();
    unbounded.h = f64::INFINITY;
    let (pts, evals) = common_preamble(vc, coeffs, nu, &unbounded, false)?;
    let mut col = Collector::new();
    record_base(&mut col, vc, &unbounded, &evals);
    record_signs(&mut col, &unbounded, &evals);
    record_annuli(&mut col, &unbounded, &evals)?;

    // inf over the time grid at ±r must grow along the ladder and clear the level at the top
    let mut radial = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let top = crit.radial_ladder.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ladder = crit.radial_ladder.clone();
    ladder.sort_by(f64::total_cmp);
    for &r in &ladder {
        let mut inf = f64::INFINITY;
        let mut at = (0.0, 0.0, r);
        for &t1 in &crit.grid.t1 {
            for &t2 in &crit.grid.t2 {
                for x in [r, -r] {
                    let v = (vc.v)(t1, t2, x);
                    if v < inf {
                        inf = v;
                        at = (t1, t2, x);
                    }
                }
            }
        }
        // growth: prev < inf, encoded as prev - inf <= 0 with a strict margin
        if prev.is_finite() {
            radial.push((at, prev - inf, 0.0, -f64::EPSILON * inf.abs(), 0.0));
        }
        if r == top {
            radial.push((at, crit.radial_level - inf, 0.0, 0.0, 0.0));
        }
        prev = inf;
    }
    col.record("inf V -> infinity on radial ladder", radial);
    Ok(col.finish(Theorem::Global, pts.len(), &vc.name, None))
}

/// `α1|x|^p ≤ V ≤ α2|x|^p`, `L2V ≤ 0`, `L1V ≤ −α3 V`; on success the
/// certificate carries `E|X(t)|^p ≤ (α2/α1)|x0|^p e^{−α3 t}`.
pub fn check_pth_moment(
    vc: &LyapunovCandidate,
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    crit: &StabilityCriteria,
) -> Result<Certificate> {
    for (name, v) in [
        ("p", crit.p),
        ("alpha1", crit.alpha1),
        ("alpha2", crit.alpha2),
        ("alpha3", crit.alpha3),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Criteria(format!("{name} must be positive, got {v}")));
        }
    }
    let (pts, evals) = common_preamble(vc, coeffs, nu, crit, false)?;
    let mut col = Collector::new();
    col.record("V(t1,t2,0)=0", origin_checks(vc, &crit.grid));
    col.record(
        "alpha1|x|^p<=V",
        evals
            .iter()
            .map(|e| (e.pt, crit.alpha1 * e.pt.2.abs().powf(crit.p), 0.0, e.v, tau(crit, e.v)))
            .collect(),
    );
    col.record(
        "V<=alpha2|x|^p",
        evals
            .iter()
            .map(|e| (e.pt, e.v, 0.0, crit.alpha2 * e.pt.2.abs().powf(crit.p), tau(crit, e.v)))
            .collect(),
    );
    col.record(
        "L2V<=0",
        evals
            .iter()
            .map(|e| (e.pt, e.l2.value, e.l2.abs_error, 0.0, tau(crit, e.v)))
            .collect(),
    );
    col.record(
        "L1V<=-alpha3 V",
        evals
            .iter()
            .map(|e| (e.pt, e.l1, 0.0, -crit.alpha3 * e.v, tau(crit, e.v)))
            .collect(),
    );
    let bound = MomentBound {
        p: crit.p,
        factor: crit.alpha2 / crit.alpha1,
        rate: crit.alpha3,
    };
    Ok(col.finish(Theorem::PthMoment, pts.len(), &vc.name, Some(bound)))
}

/// Dispatches on `crit.theorem`.
pub fn check(
    vc: &LyapunovCandidate,
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    crit: &StabilityCriteria,
) -> Result<Certificate> {
    match crit.theorem {
        Theorem::Stochastic => check_stochastic_stability(vc, coeffs, nu, crit),
        Theorem::Asymptotic => check_asymptotic_stability(vc, coeffs, nu, crit),
        Theorem::Global => check_global_stability(vc, coeffs, nu, crit),
        Theorem::PthMoment => check_pth_moment(vc, coeffs, nu, crit),
    }
}

/// Terms of the time-changed Itô identity accumulated along one traced path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ItoBalance {
    pub lhs: f64,
    pub dt_integral: f64,
    pub clock_integral: f64,
    pub jump_integral: f64,
    pub brownian_integral: f64,
}

impl ItoBalance {
    pub fn residual(&self) -> f64 {
        self.lhs - (self.dt_integral + self.clock_integral + self.jump_integral + self.brownian_integral)
    }
}

/// Evaluates both sides of
///
/// ```text
/// F(t, E_t, X(t)) − F(0, E_0, x0) = ∫ L1F ds + ∫ L2F dE + ∫∫ [F(X− + h) − F(X−)] Ñ(dE, dy) + ∫ F_x g dB_E
/// ```
///
/// on a traced run. The stochastic integrals use the run's own increments and
/// jumps; `nu` must be the truncated measure the run was simulated with so the
/// compensators match.
pub fn ito_balance(
    f: &LyapunovCandidate,
    coeffs: &CoefficientSet,
    nu: &LevyMeasure,
    q: &QuadratureConfig,
    run: &DirectRun,
) -> Result<ItoBalance> {
    let n = run.path.len() - 1;
    let start = run
        .steps
        .first()
        .map(|s| (s.t, s.clock, s.x))
        .unwrap_or((0.0, 0.0, run.path.values()[0]));
    let t_end = run.path.horizon();
    let e_end = run.clock.value(n);
    let mut bal = ItoBalance {
        lhs: (f.v)(t_end, e_end, run.path.last_value()) - (f.v)(start.0, start.1, start.2),
        ..ItoBalance::default()
    };
    for s in &run.steps {
        let (t1, t2, x) = (s.t, s.clock, s.x);
        if s.dt != 0.0 {
            bal.dt_integral += eval_l1(f, coeffs, t1, t2, x)? * s.dt;
        }
        if s.dclock != 0.0 {
            bal.clock_integral += eval_l2_on(f, coeffs, nu, q, t1, t2, x, true)?.value * s.dclock;
            let f0 = (f.v)(t1, t2, x);
            let compensator = nu
                .integrate_truncated(|y| (f.v)(t1, t2, x + (coeffs.h)(t1, t2, x, y)) - f0, q)?
                .value;
            bal.jump_integral -= compensator * s.dclock;
            bal.brownian_integral += (f.v_x)(t1, t2, x) * (coeffs.g)(t1, t2, x) * s.dbrownian;
        }
        for &(pre, h) in &s.jumps {
            bal.jump_integral += (f.v)(t1, t2, pre + h) - (f.v)(t1, t2, pre);
        }
    }
    Ok(bal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{Affine, AffineJump};

    fn uniform() -> LevyMeasure {
        LevyMeasure::uniform(-1.0, 1.0, 1.0, 1.0, 1e-9).unwrap()
    }

    fn q() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn l1_examples() {
        let f = CoefficientSet::zero().with_f(|_, _, x| -x);
        let v = LyapunovCandidate::abs_power(0.5, 1.0);
        assert!((eval_l1(&v, &f, 0.0, 0.0, 4.0).unwrap() + 1.0).abs() < 1e-15);
        let v = LyapunovCandidate::abs(1.0);
        assert_eq!(eval_l1(&v, &f, 0.0, 0.0, 3.0).unwrap(), -3.0);
        assert_eq!(eval_l1(&v, &CoefficientSet::zero(), 1.0, 2.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn exclusion_radius_is_a_domain_error() {
        let v = LyapunovCandidate::abs_power(0.5, 1.0);
        let err = eval_l1(&v, &CoefficientSet::example_one(), 0.0, 0.0, 1e-7).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn l2_example_two_vanishes() {
        let v = LyapunovCandidate::abs(1.0);
        for x in [-2.0, -0.3, 0.7, 5.0] {
            let l2 = eval_l2(&v, &CoefficientSet::example_two(), &uniform(), &q(), 0.5, 0.9, x).unwrap();
            assert!(l2.abs() < 1e-14, "{l2}");
        }
    }

    #[test]
    fn l2_example_one_at_one() {
        let oracle = (2.0 / 3.0) * 2f64.powf(1.5) - 2.0;
        let v = LyapunovCandidate::abs_power(0.5, 1.0);
        let l2 = eval_l2(&v, &CoefficientSet::example_one(), &uniform(), &q(), 0.0, 0.0, 1.0).unwrap();
        assert!((l2 - oracle).abs() < 1e-9, "{l2} vs {oracle}");
        assert!((l2 + 0.1144).abs() < 1e-3);
    }

    #[test]
    fn l2_pure_diffusion() {
        let coeffs = CoefficientSet::zero().with_g(|_, _, _| 1.0);
        let v = LyapunovCandidate::square(1.0);
        assert_eq!(eval_l2(&v, &coeffs, &uniform(), &q(), 0.0, 0.0, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn l2_reports_unevaluable_jump_targets() {
        let log_v = LyapunovCandidate {
            v: Arc::new(|_, _, x: f64| if x > 0.0 { x.ln() } else { f64::NAN }),
            ..LyapunovCandidate::square(1.0)
        };
        let coeffs = CoefficientSet::zero().with_h(|_, _, _, y| y);
        let err = eval_l2(&log_v, &coeffs, &uniform(), &q(), 0.0, 0.0, 0.5).unwrap_err();
        match err {
            Error::Domain(msg) => assert!(msg.contains("y in")),
            e => panic!("{e:?}"),
        }
    }

    fn grid(lo: f64, hi: f64) -> GridSpec {
        GridSpec::new(vec![0.0, 1.0, 5.0], vec![0.0, 0.7, 3.0], GridSpec::linspace(lo, hi, 41))
    }

    #[test]
    fn stochastic_stability_example_one() {
        let v = LyapunovCandidate::abs_power(0.5, 1.0);
        let crit = StabilityCriteria::new(Theorem::Stochastic, grid(-1.9, 1.9)).with_domain(2.0);
        let cert = check_stochastic_stability(&v, &CoefficientSet::example_one(), &uniform(), &crit).unwrap();
        assert_eq!(cert.verdict, Verdict::Pass, "{}", cert.render());
        assert!(cert.render().starts_with("YES\n"));
    }

    #[test]
    fn sign_flip_fails_with_witness() {
        let v = LyapunovCandidate::abs_power(0.5, 1.0);
        let coeffs = CoefficientSet::example_one().with_f(|_, _, x| x);
        let crit = StabilityCriteria::new(Theorem::Stochastic, grid(-1.9, 1.9)).with_domain(2.0);
        let cert = check_stochastic_stability(&v, &coeffs, &uniform(), &crit).unwrap();
        assert_eq!(cert.verdict, Verdict::Fail);
        assert!(cert.witnesses.iter().any(|w| w.condition == "L1V<=0" && w.value > 0.0));
        assert!(cert.render().starts_with("NO\n"));
    }

    #[test]
    fn small_domain_is_a_precondition_error() {
        let v = LyapunovCandidate::abs_power(0.5, 1.0);
        let crit = StabilityCriteria::new(Theorem::Stochastic, grid(-0.9, 0.9)).with_domain(1.0);
        let err = check_stochastic_stability(&v, &CoefficientSet::example_one(), &uniform(), &crit).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        let crit = StabilityCriteria::new(Theorem::Stochastic, grid(-3.0, 3.0)).with_domain(2.0);
        let err = check_stochastic_stability(&v, &CoefficientSet::example_one(), &uniform(), &crit).unwrap_err();
        assert!(matches!(err, Error::Malformed(_)));
    }

    fn example_one_asymptotic(theorem: Theorem, lo: f64, hi: f64) -> StabilityCriteria {
        StabilityCriteria::new(theorem, grid(lo, hi))
            .with_domain(2.0)
            .with_gammas(|a: f64| 0.5 * a.sqrt(), |a: f64| 0.1 * a.sqrt(), vec![0.05, 0.5, 1.0])
    }

    #[test]
    fn asymptotic_example_one() {
        let v = LyapunovCandidate::abs_power(0.5, 1.0);
        let crit = example_one_asymptotic(Theorem::Asymptotic, -1.9, 1.9);
        let cert = check_asymptotic_stability(&v, &CoefficientSet::example_one(), &uniform(), &crit).unwrap();
        assert_eq!(cert.verdict, Verdict::Pass, "{}", cert.render());
    }

    #[test]
    fn vanishing_gammas_are_a_criteria_error() {
        let v = LyapunovCandidate::abs_power(0.5, 1.0);
        let crit = StabilityCriteria::new(Theorem::Asymptotic, grid(-1.9, 1.9))
            .with_domain(2.0)
            .with_gammas(|_| 0.0, |_| 0.0, vec![0.5]);
        let err = check_asymptotic_stability(&v, &CoefficientSet::example_one(), &uniform(), &crit).unwrap_err();
        assert!(matches!(err, Error::Criteria(_)));
    }

    #[test]
    fn inert_system_fails_asymptotic() {
        let v = LyapunovCandidate::abs_power(0.5, 1.0);
        let crit = example_one_asymptotic(Theorem::Asymptotic, -1.9, 1.9);
        let cert = check_asymptotic_stability(&v, &CoefficientSet::zero(), &uniform(), &crit).unwrap();
        assert_eq!(cert.verdict, Verdict::Fail);
    }

    #[test]
    fn global_example_one_and_radial_probe() {
        let coeffs = CoefficientSet::example_one();
        let crit = example_one_asymptotic(Theorem::Global, -50.0, 50.0);
        let v = LyapunovCandidate::abs_power(0.5, 1.0);
        let cert = check_global_stability(&v, &coeffs, &uniform(), &crit).unwrap();
        assert_eq!(cert.verdict, Verdict::Pass, "{}", cert.render());

        let bounded = LyapunovCandidate::bounded_square();
        let cert = check_global_stability(&bounded, &coeffs, &uniform(), &crit).unwrap();
        let radial = cert.conditions.iter().find(|c| c.name.starts_with("inf V")).unwrap();
        assert_eq!(radial.verdict, Verdict::Fail);
    }

    #[test]
    fn pth_moment_example_two() {
        let coeffs = CoefficientSet::example_two();
        let g = grid(-5.0, 5.0);
        let crit = StabilityCriteria::new(Theorem::PthMoment, g.clone()).with_moment(1.0, 1.0, 1.0, 1.0);
        let cert = check_pth_moment(&LyapunovCandidate::abs(1.0), &coeffs, &uniform(), &crit).unwrap();
        assert_eq!(cert.verdict, Verdict::Pass, "{}", cert.render());
        let b = cert.predicted_bound.unwrap();
        assert_eq!((b.factor, b.rate, b.p), (1.0, 1.0, 1.0));
        assert!((b.at(2.0, 1.0) - 2.0 * (-1.0f64).exp()).abs() < 1e-15);

        let crit2 = StabilityCriteria::new(Theorem::PthMoment, g.clone()).with_moment(1.0, 1.0, 1.0, 2.0);
        let cert = check_pth_moment(&LyapunovCandidate::abs(1.0), &coeffs, &uniform(), &crit2).unwrap();
        assert_eq!(cert.verdict, Verdict::Fail);
        assert!(cert.witnesses.iter().any(|w| w.condition == "L1V<=-alpha3 V"));
        assert!(cert.predicted_bound.is_none());

        let crit3 = StabilityCriteria::new(Theorem::PthMoment, g.clone()).with_moment(1.0, 1.0, 2.0, 1.0);
        let cert = check_pth_moment(&LyapunovCandidate::abs(2.0), &coeffs, &uniform(), &crit3).unwrap();
        assert_eq!(cert.verdict, Verdict::Pass, "{}", cert.render());
        assert_eq!(cert.predicted_bound.unwrap().factor, 2.0);

        let bad = StabilityCriteria::new(Theorem::PthMoment, g).with_moment(1.0, 0.0, 1.0, 1.0);
        assert!(matches!(
            check_pth_moment(&LyapunovCandidate::abs(1.0), &coeffs, &uniform(), &bad),
            Err(Error::Criteria(_))
        ));
    }

    #[test]
    fn builtin_candidates_are_consistent() {
        let t = [0.0, 1.0, 3.0];
        for vc in [
            LyapunovCandidate::abs_power(0.5, 1.0),
            LyapunovCandidate::abs(1.0),
            LyapunovCandidate::square(1.0),
            LyapunovCandidate::bounded_square(),
            LyapunovCandidate::abs_power(1.5, 2.0),
        ] {
            let rep = vc.check_invariants(&t, 100, SeedSpec::new(1, 0));
            assert!(rep.passed(), "{}: {:?}", vc.name, rep.issues);
        }
    }

    #[test]
    fn wrong_derivative_is_caught() {
        let mut vc = LyapunovCandidate::square(1.0);
        vc.v_xx = Arc::new(|_, _, _| 3.0);
        let rep = vc.check_invariants(&[0.0], 20, SeedSpec::new(2, 0));
        assert!(!rep.passed());
    }

    #[test]
    fn scatter_points_stay_in_range() {
        let g = GridSpec::new(vec![0.0, 2.0], vec![1.0, 3.0], vec![-1.0, 1.0]).with_scatter(50);
        let pts = g.points();
        assert_eq!(pts.len(), 8 + 50);
        assert!(pts[8..]
            .iter()
            .all(|&(a, b, x)| (0.0..=2.0).contains(&a) && (1.0..=3.0).contains(&b) && (-1.0..=1.0).contains(&x)));
    }

    #[test]
    fn affine_coefficients_feed_operators() {
        // V = x², dX = a x dE + b x dB_E: L2 V = 2 a x² + b² x²
        let coeffs = CoefficientSet::affine(
            Affine::default(),
            Affine::linear(-0.5),
            Affine::linear(0.3),
            AffineJump::default(),
        );
        let l2 = eval_l2(
            &LyapunovCandidate::square(1.0),
            &coeffs,
            &uniform(),
            &q(),
            0.0,
            0.0,
            2.0,
        )
        .unwrap();
        assert!((l2 - (2.0 * -0.5 * 4.0 + 0.09 * 4.0)).abs() < 1e-12);
    }
}
