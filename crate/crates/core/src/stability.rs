//! Monte Carlo estimators for stay probabilities, moment decay, the
//! compensated time-changed counting martingale and inverse-subordinator
//! statistics.
//!
//! Path `i` always uses `SeedSpec::new(master, i)`, and per-path results are
//! merged in index order with pairwise summation, so every estimate is a
//! deterministic function of its inputs regardless of the worker count.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::levy::{LevyMeasure, QuadratureConfig, SubordinatorSpec};
use crate::lyapunov::{ito_balance, LyapunovCandidate};
use crate::paths::{inverse_indices, simulate_subordinator_until, OperationalNoise, SeedSpec};
use crate::sde::{coupled_pair, integrate_direct, integrate_direct_traced, IntegratorConfig, TcSdeSpec};

pub const THREADS_ENV: &str = "TCSDE_THREADS";

/// Worker count from `TCSDE_THREADS`; unset or `0` means all cores.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Configuration(format!("{THREADS_ENV} must be a nonnegative integer, got {s:?}"))),
    }
}

fn with_pool<T: Send>(job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| Error::Configuration(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Runs `job(i, seed_i)` for `i in 0..n` in parallel and returns results in index order.
pub(crate) fn per_path<T: Send>(
    n: usize,
    master: u64,
    job: impl Fn(usize, SeedSpec) -> T + Sync + Send,
) -> Result<Vec<T>> {
    with_pool(|| {
        (0..n)
            .into_par_iter()
            .map(|i| job(i, SeedSpec::new(master, i as u64)))
            .collect()
    })
}

/// Pairwise sum; the reduction tree depends only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().fold(0.0, |a, b| a + b)
    } else {
        let (l, r) = xs.split_at(xs.len() / 2);
        pairwise_sum(l) + pairwise_sum(r)
    }
}

/// Monte Carlo settings.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub paths: usize,
    pub report_times: Vec<f64>,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 1000,
            report_times: vec![0.5, 1.0, 2.0],
            confidence: 0.99,
            seed: 0,
        }
    }
}

impl McConfig {
    pub fn new(paths: usize, report_times: Vec<f64>, seed: u64) -> Self {
        Self {
            paths,
            report_times,
            seed,
            ..Self::default()
        }
    }

    pub fn with_confidence(mut self, level: f64) -> Self {
        self.confidence = level;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(Error::Configuration(format!(
                "need at least 2 paths, got {}",
                self.paths
            )));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Configuration(format!(
                "confidence must lie in (0,1), got {}",
                self.confidence
            )));
        }
        if let Some(t) = self.report_times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::Configuration(format!(
                "report time {t} must be finite and nonnegative"
            )));
        }
        if let Some(w) = self.report_times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Configuration(format!(
                "report times must increase, got {} then {}",
                w[0], w[1]
            )));
        }
        Ok(())
    }

    /// Two-sided normal quantile for the configured level.
    pub fn z(&self) -> f64 {
        Normal::standard().inverse_cdf(0.5 + 0.5 * self.confidence)
    }
}

/// Sample mean with a CLT interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
    pub half_width: f64,
    /// median of 16 contiguous block means, when `n ≥ 32`
    pub median_of_means: Option<f64>,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64], z: f64) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                std_dev: f64::NAN,
                std_error: f64::NAN,
                half_width: f64::NAN,
                median_of_means: None,
            };
        }
        // shifting by the first sample keeps constant data exact
        let shift = xs[0];
        let centered: Vec<f64> = xs.iter().map(|x| x - shift).collect();
        let mean = shift + pairwise_sum(&centered) / n as f64;
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&sq) / (n - 1) as f64 } else { 0.0 };
        let std_dev = var.sqrt();
        let std_error = std_dev / (n as f64).sqrt();
        let median_of_means = (n >= 32).then(|| {
            let blocks = 16;
            let mut means: Vec<f64> = (0..blocks)
                .map(|b| {
                    let part = &xs[b * n / blocks..(b + 1) * n / blocks];
                    pairwise_sum(part) / part.len() as f64
                })
                .collect();
            means.sort_by(f64::total_cmp);
            0.5 * (means[blocks / 2 - 1] + means[blocks / 2])
        });
        Self {
            n,
            mean,
            std_dev,
            std_error,
            half_width: z * std_error,
            median_of_means,
        }
    }

    pub fn ci(&self) -> (f64, f64) {
        (self.mean - self.half_width, self.mean + self.half_width)
    }

    /// `|mean − target| ≤ k·SE`.
    pub fn within_se(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// One reported time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeEstimate {
    pub t: f64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub bound: Option<f64>,
    pub pass: Option<bool>,
    pub median_of_means: Option<f64>,
}

impl TimeEstimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }
}

/// `C e^{−λt}` fitted to positive estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub c: f64,
    pub lambda: f64,
    /// largest `|fit/estimate − 1|`
    pub max_rel_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub kind: String,
    pub rows: Vec<TimeEstimate>,
    pub fit: Option<DecayFit>,
    pub paths: usize,
    pub blowups: usize,
    pub valid: bool,
    pub metadata: Vec<(String, String)>,
}

impl StabilityReport {
    /// Compares every row to `bound(t)·(1 + half-width + slack)`.
    pub fn apply_bound(&mut self, bound: impl Fn(f64) -> f64, slack: f64) {
        for r in &mut self.rows {
            let b = bound(r.t);
            r.bound = Some(b);
            r.pass = Some(r.estimate <= b * (1.0 + r.half_width() + slack));
        }
    }

    /// All rows with a bound pass and the estimate is valid.
    pub fn passed(&self) -> bool {
        self.valid && self.rows.iter().all(|r| r.pass.unwrap_or(true))
    }

    /// Moment-table CSV: `t,estimate,ci_lo,ci_hi,bound,pass`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,estimate,ci_lo,ci_hi,bound,pass\n");
        for r in &self.rows {
            let bound = r.bound.map(|b| format!("{b:.12e}")).unwrap_or_default();
            let pass = r.pass.map(|p| p.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{},{}\n",
                r.t, r.estimate, r.ci_lo, r.ci_hi, bound, pass
            ));
        }
        s
    }

    pub fn fit_decay(&mut self) -> Result<DecayFit> {
        let ts: Vec<f64> = self.rows.iter().map(|r| r.t).collect();
        let ys: Vec<f64> = self.rows.iter().map(|r| r.estimate).collect();
        let fit = fit_exponential_decay(&ts, &ys)?;
        self.fit = Some(fit);
        Ok(fit)
    }
}

fn metadata(mc: &McConfig, integ: Option<&IntegratorConfig>) -> Vec<(String, String)> {
    let mut m = vec![
        ("paths".to_string(), mc.paths.to_string()),
        ("seed".to_string(), mc.seed.to_string()),
        ("confidence".to_string(), mc.confidence.to_string()),
    ];
    if let Some(c) = integ {
        m.push(("dt".into(), c.dt.to_string()));
        m.push(("op_step".into(), c.op_step.to_string()));
        m.push(("horizon".into(), c.horizon.to_string()));
        m.push(("cutoff".into(), c.cutoff.to_string()));
    }
    m
}

/// Per-path outcome of a direct integration: `Some(values at requested times)`
/// or `None` on blow-up. Other errors propagate, first path first.
fn sample_states(
    spec: &TcSdeSpec,
    integ: &IntegratorConfig,
    mc: &McConfig,
    reduce: impl Fn(&[f64], &[f64]) -> Vec<f64> + Sync + Send,
) -> Result<Vec<Option<Vec<f64>>>> {
    let outcomes = per_path(mc.paths, mc.seed, |_, seed| match integrate_direct(spec, integ, seed) {
        Ok(path) => Ok(Some(reduce(path.grid(), path.values()))),
        Err(Error::BlowUp { .. }) => Ok(None),
        Err(e) => Err(e),
    })?;
    outcomes.into_iter().collect()
}

/// Grid index of report time `t`; report times must lie on the t-grid.
fn grid_index(grid: &[f64], t: f64) -> usize {
    let i = grid.partition_point(|&g| g < t - 1e-9 * (1.0 + t.abs()));
    i.min(grid.len() - 1)
}

/// Fraction of paths with `sup_{s ≤ t} |X(s)| < r` at each report time up to `horizon`
/// (and at `horizon` itself), with Wilson intervals. Blow-ups count as exits.
pub fn estimate_stay_probability(
    spec: &TcSdeSpec,
    integ: &IntegratorConfig,
    mc: &McConfig,
    r: f64,
    horizon: f64,
) -> Result<StabilityReport> {
    mc.validate()?;
    if !(r > spec.x0.abs()) {
        return Err(Error::Domain(format!(
            "radius r = {r} must exceed |x0| = {}",
            spec.x0.abs()
        )));
    }
    let integ = integ.with_horizon(horizon);
    let mut times: Vec<f64> = mc.report_times.iter().copied().filter(|&t| t < horizon).collect();
    times.push(horizon);
    let sups = sample_states(spec, &integ, mc, |grid, values| {
        let mut out = Vec::with_capacity(times.len());
        let mut sup = 0.0f64;
        let mut i = 0;
        for &t in &times {
            let end = grid_index(grid, t);
            while i <= end {
                sup = sup.max(values[i].abs());
                i += 1;
            }
            out.push(sup);
        }
        out
    })?;
    let z = mc.z();
    let blowups = sups.iter().filter(|s| s.is_none()).count();
    let rows = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let stay = sups.iter().filter(|s| matches!(s, Some(v) if v[k] < r)).count();
            let (lo, hi) = wilson_interval(stay, mc.paths, z);
            TimeEstimate {
                t,
                estimate: stay as f64 / mc.paths as f64,
                ci_lo: lo,
                ci_hi: hi,
                bound: None,
                pass: None,
                median_of_means: None,
            }
        })
        .collect();
    let mut meta = metadata(mc, Some(&integ));
    meta.push(("radius".into(), r.to_string()));
    Ok(StabilityReport {
        kind: "stay-probability".into(),
        rows,
        fit: None,
        paths: mc.paths,
        blowups,
        valid: true,
        metadata: meta,
    })
}

/// `E|X(t)|^p` at each report time with CLT intervals. Blow-up paths are
/// excluded from the means; more than 1% of them marks the report invalid.
pub fn estimate_moment(spec: &TcSdeSpec, integ: &IntegratorConfig, mc: &McConfig, p: f64) -> Result<StabilityReport> {
    mc.validate()?;
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Domain(format!("moment order must be positive, got {p}")));
    }
    let times = mc.report_times.clone();
    let horizon = times.last().copied().unwrap_or(0.0).max(integ.dt);
    let integ = integ.with_horizon(horizon);
    let states = sample_states(spec, &integ, mc, |grid, values| {
        times.iter().map(|&t| values[grid_index(grid, t)]).collect()
    })?;
    let z = mc.z();
    let good: Vec<&Vec<f64>> = states.iter().flatten().collect();
    let blowups = mc.paths - good.len();
    let rows = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let xs: Vec<f64> = good.iter().map(|v| v[k].abs().powf(p)).collect();
            let m = MeanEstimate::from_samples(&xs, z);
            let (lo, hi) = m.ci();
            TimeEstimate {
                t,
                estimate: m.mean,
                ci_lo: lo,
                ci_hi: hi,
                bound: None,
                pass: None,
                median_of_means: m.median_of_means,
            }
        })
        .collect();
    let mut meta = metadata(mc, Some(&integ));
    meta.push(("p".into(), p.to_string()));
    Ok(StabilityReport {
        kind: "moment".into(),
        rows,
        fit: None,
        paths: mc.paths,
        blowups,
        valid: blowups * 100 <= mc.paths && !good.is_empty(),
        metadata: meta,
    })
}

/// Least squares of `ln y = ln C − λ t`.
pub fn fit_exponential_decay(times: &[f64], estimates: &[f64]) -> Result<DecayFit> {
    if times.len() != estimates.len() || times.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 paired points, got {} times and {} estimates",
            times.len(),
            estimates.len()
        )));
    }
    if let Some(y) = estimates.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
        return Err(Error::Fit(format!("estimates must be positive, got {y}")));
    }
    let n = times.len() as f64;
    let ly: Vec<f64> = estimates.iter().map(|y| y.ln()).collect();
    let tm = times.iter().sum::<f64>() / n;
    let lm = ly.iter().sum::<f64>() / n;
    let sxx: f64 = times.iter().map(|t| (t - tm) * (t - tm)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("report times must not all coincide".into()));
    }
    let sxy: f64 = times.iter().zip(&ly).map(|(t, l)| (t - tm) * (l - lm)).sum();
    let slope = sxy / sxx;
    let lambda = if slope == 0.0 { 0.0 } else { -slope };
    let c = (lm - slope * tm).exp();
    let max_rel_residual = times
        .iter()
        .zip(estimates)
        .map(|(t, y)| (c * (-lambda * t).exp() / y - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(DecayFit {
        c,
        lambda,
        max_rel_residual,
    })
}

/// `E_t` samples at each report time from independent subordinator paths.
pub fn sample_inverse_subordinator(
    sub: &SubordinatorSpec,
    op_step: f64,
    mc: &McConfig,
    max_op_steps: usize,
) -> Result<Vec<Vec<f64>>> {
    mc.validate()?;
    let t_max = mc.report_times.last().copied().unwrap_or(0.0);
    let rows = per_path(mc.paths, mc.seed, |_, seed| -> Result<Vec<f64>> {
        let d = simulate_subordinator_until(sub, op_step, t_max, seed, max_op_steps)?;
        let idx = inverse_indices(&d, &mc.report_times)?;
        Ok(idx.iter().map(|&j| d.grid()[j]).collect())
    })?;
    rows.into_iter().collect()
}

/// `E[e^{−λ E_t}]` at each report time, with a flag for nonincrease within CI slack.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceEtReport {
    pub lambda: f64,
    pub rows: Vec<TimeEstimate>,
    pub nonincreasing: bool,
    /// consecutive estimates separated by more than both half-widths
    pub strictly_decreasing: bool,
}

pub fn estimate_laplace_et(
    sub: &SubordinatorSpec,
    op_step: f64,
    mc: &McConfig,
    lambda: f64,
    max_op_steps: usize,
) -> Result<LaplaceEtReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let samples = sample_inverse_subordinator(sub, op_step, mc, max_op_steps)?;
    let z = mc.z();
    let rows: Vec<TimeEstimate> = mc
        .report_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let xs: Vec<f64> = samples.iter().map(|s| (-lambda * s[k]).exp()).collect();
            let m = MeanEstimate::from_samples(&xs, z);
            let (lo, hi) = m.ci();
            TimeEstimate {
                t,
                estimate: m.mean,
                ci_lo: lo,
                ci_hi: hi,
                bound: None,
                pass: None,
                median_of_means: m.median_of_means,
            }
        })
        .collect();
    let nonincreasing = rows
        .windows(2)
        .all(|w| w[1].estimate <= w[0].estimate + w[0].half_width() + w[1].half_width());
    let strictly_decreasing = rows.windows(2).all(|w| w[1].ci_hi < w[0].ci_lo);
    Ok(LaplaceEtReport {
        lambda,
        rows,
        nonincreasing,
        strictly_decreasing,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub t: f64,
    pub set: (f64, f64),
    pub nu_a: f64,
    /// `N(E_t, A) − ν(A) E_t`
    pub compensated: MeanEstimate,
    /// `N(E_t, A)` without compensator
    pub raw: MeanEstimate,
    pub passed: bool,
    pub raw_passed: bool,
    pub degenerate: bool,
}

/// MC check that `Ñ(E_t, A)` has mean zero, for `A = (a, b)` bounded away from 0.
///
/// Jumps are counted on operational cells `(E_0, E_t]`, so the clock origin
/// convention of the grid inverse contributes nothing and `t = 0` gives exactly 0.
pub fn martingale_check(
    nu: &LevyMeasure,
    sub: &SubordinatorSpec,
    set: (f64, f64),
    mc: &McConfig,
    op_step: f64,
    t: f64,
    q: &QuadratureConfig,
) -> Result<MartingaleReport> {
    mc.validate()?;
    let (a, b) = set;
    if !(a < b) {
        return Err(Error::Domain(format!("set ({a}, {b}) is empty")));
    }
    let eps = nu.cutoff();
    let away = (a >= eps && b <= nu.c()) || (b <= -eps && a >= -nu.c());
    if !away {
        return Err(Error::Domain(format!(
            "set ({a}, {b}) must lie inside {{{eps} <= |y| < {}}}",
            nu.c()
        )));
    }
    let nu_a = nu.mass_of_interval(a, b, q)?;
    let sampler = nu.sampler(q)?;
    let grid = [0.0, t];
    let pairs = per_path(mc.paths, mc.seed, |_, seed| -> Result<(f64, f64)> {
        let noise = OperationalNoise::simulate(sub, Some(&sampler), op_step, t, seed, usize::MAX >> 8)?;
        let clock = noise.time_change(if t > 0.0 { &grid[..] } else { &grid[..1] })?;
        let (j0, jt) = (clock.indices[0], *clock.indices.last().unwrap());
        let count = noise.marks_between(j0, jt).iter().filter(|&&y| y > a && y < b).count() as f64;
        let de = (jt - j0) as f64 * op_step;
        Ok((count - nu_a * de, count))
    })?;
    let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_>>()?;
    let z = mc.z();
    let compensated = MeanEstimate::from_samples(&pairs.iter().map(|p| p.0).collect::<Vec<_>>(), z);
    let raw = MeanEstimate::from_samples(&pairs.iter().map(|p| p.1).collect::<Vec<_>>(), z);
    let degenerate = nu_a == 0.0;
    Ok(MartingaleReport {
        t,
        set,
        nu_a,
        passed: degenerate || compensated.within_se(0.0, 3.0),
        raw_passed: degenerate || raw.within_se(0.0, 3.0),
        compensated,
        raw,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanEtBoundReport {
    pub t: f64,
    pub estimate: MeanEstimate,
    /// `min_x e^{xt}/φ(x)` over the supplied grid
    pub bound: f64,
    pub argmin: f64,
    pub passed: bool,
}

/// Checks `E[E_t] ≤ min_x e^{xt}/φ(x)`, allowing the CI half-width as slack.
pub fn mean_et_bound_check(
    sub: &SubordinatorSpec,
    op_step: f64,
    mc: &McConfig,
    t: f64,
    xs: &[f64],
    max_op_steps: usize,
) -> Result<MeanEtBoundReport> {
    if xs.is_empty() {
        return Err(Error::Domain("x-grid is empty".into()));
    }
    let mut bound = f64::INFINITY;
    let mut argmin = f64::NAN;
    for &x in xs {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("x-grid values must be positive, got {x}")));
        }
        let b = (x * t).exp() / sub.laplace_exponent(x)?;
        if b < bound {
            bound = b;
            argmin = x;
        }
    }
    let local = McConfig {
        report_times: vec![t],
        ..mc.clone()
    };
    let samples = sample_inverse_subordinator(sub, op_step, &local, max_op_steps)?;
    let values: Vec<f64> = samples.iter().map(|s| s[0]).collect();
    let estimate = MeanEstimate::from_samples(&values, mc.z());
    Ok(MeanEtBoundReport {
        t,
        passed: estimate.mean <= bound + estimate.half_width,
        estimate,
        bound,
        argmin,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceIdentityReport {
    pub family: String,
    pub lambda: f64,
    pub t: f64,
    pub estimate: MeanEstimate,
    pub exact: f64,
    pub passed: bool,
}

/// Mean of `e^{−λ D(t)}` against `e^{−t φ(λ)}`; passes within 3 SE.
pub fn laplace_identity_check(
    sub: &SubordinatorSpec,
    dtau: f64,
    mc: &McConfig,
    t: f64,
    lambda: f64,
) -> Result<LaplaceIdentityReport> {
    mc.validate()?;
    let exact = (-t * sub.laplace_exponent(lambda)?).exp();
    let values = per_path(mc.paths, mc.seed, |_, seed| -> Result<f64> {
        let d = crate::paths::simulate_subordinator(sub, dtau, t, seed)?;
        Ok((-lambda * d.last_value()).exp())
    })?;
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    let estimate = MeanEstimate::from_samples(&values, mc.z());
    Ok(LaplaceIdentityReport {
        family: sub.name().into(),
        lambda,
        t,
        passed: estimate.within_se(exact, 3.0),
        estimate,
        exact,
    })
}

/// Mean over paths of `max_t |X_direct(t) − Y(E_t)|` at one step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEstimate {
    pub dt: f64,
    pub gap: MeanEstimate,
}

/// Coupled direct/duality gaps for each step in `steps`; every step size reuses
/// the same per-path noise.
pub fn duality_gaps(
    spec: &TcSdeSpec,
    integ: &IntegratorConfig,
    mc: &McConfig,
    steps: &[f64],
) -> Result<Vec<GapEstimate>> {
    mc.validate()?;
    let z = mc.z();
    steps
        .iter()
        .map(|&dt| {
            let cfg = integ.with_dt(dt);
            let gaps = per_path(mc.paths, mc.seed, |_, seed| -> Result<f64> {
                let (direct, dual) = coupled_pair(spec, &cfg, seed)?;
                Ok(direct
                    .values()
                    .iter()
                    .zip(dual.values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max))
            })?;
            let gaps: Vec<f64> = gaps.into_iter().collect::<Result<_>>()?;
            Ok(GapEstimate {
                dt,
                gap: MeanEstimate::from_samples(&gaps, z),
            })
        })
        .collect()
}

/// `|residual|` of the time-changed Itô identity for `F` on each of `mc.paths` traced runs.
pub fn ito_residuals(
    spec: &TcSdeSpec,
    integ: &IntegratorConfig,
    f: &LyapunovCandidate,
    mc: &McConfig,
) -> Result<Vec<f64>> {
    mc.validate()?;
    let nu = spec.nu.with_cutoff(integ.cutoff)?;
    let out = per_path(mc.paths, mc.seed, |_, seed| -> Result<f64> {
        let run = integrate_direct_traced(spec, integ, seed)?;
        Ok(ito_balance(f, &spec.coefficients, &nu, &integ.quadrature, &run)?
            .residual()
            .abs())
    })?;
    out.into_iter().collect()
}

/// Median of a sample; `NaN` when empty.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
