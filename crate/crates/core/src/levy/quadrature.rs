//! Adaptive Gauss–Kronrod quadrature with dyadic refinement toward the origin.
//!
//! Jump integrals against a Lévy measure are usually singular at `y = 0`: the
//! density may blow up there while the integrand vanishes like `y²`. Splitting
//! `(0, b)` into dyadic shells `[b 2^{-(k+1)}, b 2^{-k}]` and summing until the
//! shell contributions fall below tolerance handles both regular and
//! integrable-singular cases, and a non-decaying shell sequence is reported as
//! an integrability failure instead of a silently wrong number.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and refinement budget shared by every jump integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Bisection budget for a single finite interval.
    pub max_subdivisions: usize,
    /// Number of dyadic shells tried toward `y = 0` before giving up.
    pub max_dyadic_levels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_subdivisions: 200,
            max_dyadic_levels: 400,
        }
    }
}

impl QuadratureConfig {
    pub fn new(rel_tol: f64, abs_tol: f64, max_subdivisions: usize, max_dyadic_levels: usize) -> Result<Self> {
        let cfg = Self {
            rel_tol,
            abs_tol,
            max_subdivisions,
            max_dyadic_levels,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Configuration(format!(
                "quadrature tolerances must be positive (rel {}, abs {})",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.max_subdivisions < 1 || self.max_dyadic_levels < 1 {
            return Err(Error::Configuration(
                "quadrature subdivision budgets must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Acceptable absolute error for an integral of magnitude `value`.
    pub fn tolerance(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Integral value with its accumulated error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate {
            value: self.value + rhs.value,
            abs_error: self.abs_error + rhs.abs_error,
        }
    }
}

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = kronrod * half;
    let res_abs = abs_sum * half.abs();
    let res_asc = asc * half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (result, err)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive GK15 on a finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("integration bounds must be finite: [{a}, {b}]")));
    }
    if a == b {
        return Ok(Estimate::default());
    }
    let (value, err) = gauss_kronrod_15(&f, a, b);
    if !value.is_finite() {
        return Err(Error::Evaluation(format!("non-finite integrand on [{a}, {b}]")));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, err });
    let mut total = value;
    let mut total_err = err;
    let mut splits = 0;
    while total_err > cfg.tolerance(total) {
        if splits >= cfg.max_subdivisions {
            return Err(Error::Integrability {
                partial: total,
                detail: format!(
                    "adaptive bisection on [{a}, {b}] exhausted {} subdivisions with error {total_err:.3e}",
                    cfg.max_subdivisions
                ),
            });
        }
        let worst = heap.pop().expect("heap holds at least one piece");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // interval exhausted at machine precision; keep it and stop refining
            heap.push(worst);
            break;
        }
        let (v1, e1) = gauss_kronrod_15(&f, worst.a, mid);
        let (v2, e2) = gauss_kronrod_15(&f, mid, worst.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::Evaluation(format!(
                "non-finite integrand on [{}, {}]",
                worst.a, worst.b
            )));
        }
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            err: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            err: e2,
        });
        splits += 1;
    }
    // resum to shed accumulated cancellation from the running updates
    let (value, abs_error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.err));
    Ok(Estimate { value, abs_error })
}

/// Integrates `f` over `(floor, b)` with `b > 0`, splitting into dyadic shells
/// toward zero.
///
/// With `floor > 0` the shell sequence stops at `floor` and the result is the
/// truncated integral. With `floor == 0` shells are added until the
/// geometric tail estimate drops below tolerance; a shell sequence that does
/// not decay is an [`Error::Integrability`] carrying the partial sum.
pub fn integrate_toward_zero<F: Fn(f64) -> f64>(f: F, floor: f64, b: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    if !(b > 0.0) || floor < 0.0 {
        return Err(Error::Domain(format!(
            "dyadic refinement needs 0 <= floor < b, got floor {floor}, b {b}"
        )));
    }
    if floor >= b {
        return Ok(Estimate::default());
    }
    let mut sum = Estimate::default();
    let mut upper = b;
    let mut prev_mag: Option<f64> = None;
    let mut settled = 0usize;
    for _ in 0..cfg.max_dyadic_levels {
        let lower = 0.5 * upper;
        if floor > 0.0 && lower <= floor {
            let last = integrate(&f, floor, upper, cfg)?;
            return Ok(sum + last);
        }
        let shell = integrate(&f, lower, upper, cfg)?;
        sum = sum + shell;
        let mag = shell.value.abs();
        if floor == 0.0 {
            let decaying = match prev_mag {
                Some(p) if mag == 0.0 && p == 0.0 => {
                    settled += 1;
                    settled >= 2
                }
                Some(p) if p > 0.0 => {
                    let ratio = mag / p;
                    if ratio < 0.97 {
                        let tail = mag * ratio / (1.0 - ratio);
                        if tail <= 0.5 * cfg.tolerance(sum.value) {
                            settled += 1;
                        } else {
                            settled = 0;
                        }
                    } else {
                        settled = 0;
                    }
                    settled >= 2
                }
                _ => false,
            };
            if decaying {
                let tail = match prev_mag {
                    Some(p) if p > 0.0 && mag < p => mag * (mag / p) / (1.0 - mag / p),
                    _ => 0.0,
                };
                sum.abs_error += tail;
                return Ok(sum);
            }
        }
        prev_mag = Some(mag);
        upper = lower;
        if upper < f64::MIN_POSITIVE {
            break;
        }
    }
    Err(Error::Integrability {
        partial: sum.value,
        detail: format!(
            "dyadic shells toward 0 did not decay within {} levels",
            cfg.max_dyadic_levels
        ),
    })
}

/// Integrates `f` over `(a, ∞)` through the map `x = a + u / (1 - u)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    let mapped = |u: f64| {
        let one_minus = 1.0 - u;
        let x = a + u / one_minus;
        let v = f(x) / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(mapped, 0.0, 1.0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let cfg = QuadratureConfig::default();
        let r = integrate(|x| x * x, -1.0, 1.0, &cfg).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let cfg = QuadratureConfig::default();
        // ∫_0^1 x^{-1/2} dx = 2
        let r = integrate_toward_zero(|x: f64| x.powf(-0.5), 0.0, 1.0, &cfg).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn log_divergence_is_detected() {
        let cfg = QuadratureConfig::default();
        let err = integrate_toward_zero(|x: f64| 1.0 / x, 0.0, 1.0, &cfg).unwrap_err();
        match err {
            Error::Integrability { partial, .. } => assert!(partial > 100.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn floor_truncates() {
        let cfg = QuadratureConfig::default();
        // ∫_{0.01}^1 1/x dx = ln 100
        let r = integrate_toward_zero(|x: f64| 1.0 / x, 0.01, 1.0, &cfg).unwrap();
        assert!((r.value - 100f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn semi_infinite_exponential() {
        let cfg = QuadratureConfig::default();
        let r = integrate_to_infinity(|x: f64| (-x).exp(), 0.0, &cfg).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(QuadratureConfig::new(0.0, 1e-9, 10, 10).is_err());
        assert!(QuadratureConfig::new(1e-9, 1e-9, 0, 10).is_err());
    }
}
