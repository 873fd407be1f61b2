use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson};
use statrs::function::gamma::gamma;

use super::quadrature::{integrate_to_infinity, integrate_toward_zero, Estimate, QuadratureConfig};
use crate::error::{Error, Result};

/// Law of the jump sizes of a compound Poisson subordinator (positive support).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpLaw {
    Fixed(f64),
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl JumpLaw {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            JumpLaw::Fixed(v) => v > 0.0 && v.is_finite(),
            JumpLaw::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            JumpLaw::Uniform { lo, hi } => lo >= 0.0 && hi > lo && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Configuration(format!(
                "jump law {self:?} needs positive support"
            )))
        }
    }

    /// `E[e^{-λJ}]`.
    pub fn laplace_transform(&self, lambda: f64) -> f64 {
        match *self {
            JumpLaw::Fixed(v) => (-lambda * v).exp(),
            JumpLaw::Exponential { rate } => rate / (rate + lambda),
            JumpLaw::Uniform { lo, hi } => {
                if lambda == 0.0 {
                    1.0
                } else {
                    ((-lambda * lo).exp() - (-lambda * hi).exp()) / (lambda * (hi - lo))
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpLaw::Fixed(v) => v,
            JumpLaw::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            JumpLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

/// Subordinator families with closed-form Laplace exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubordinatorSpec {
    /// `φ(λ) = λ^β`.
    Stable { beta: f64 },
    /// `φ(λ) = (λ + θ)^β − θ^β`.
    TemperedStable { beta: f64, theta: f64 },
    /// `φ(λ) = a ln(1 + λ/b)`.
    Gamma { shape: f64, rate: f64 },
    /// `φ(λ) = r (1 − E e^{−λJ})`.
    CompoundPoisson { rate: f64, jumps: JumpLaw },
    /// `φ(λ) = mλ`, i.e. `D(τ) = mτ`.
    Deterministic { slope: f64 },
}

impl SubordinatorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Configuration(msg));
        match *self {
            SubordinatorSpec::Stable { beta } if !(beta > 0.0 && beta < 1.0) => {
                bad(format!("stable index must lie in (0,1), got {beta}"))
            }
            SubordinatorSpec::TemperedStable { beta, theta } if !(beta > 0.0 && beta < 1.0 && theta > 0.0) => bad(
                format!("tempered stable needs beta in (0,1) and theta > 0, got ({beta}, {theta})"),
            ),
            SubordinatorSpec::Gamma { shape, rate } if !(shape > 0.0 && rate > 0.0) => bad(format!(
                "gamma subordinator needs positive shape and rate, got ({shape}, {rate})"
            )),
            SubordinatorSpec::CompoundPoisson { rate, jumps } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return bad(format!("compound Poisson rate must be positive, got {rate}"));
                }
                jumps.validate()
            }
            SubordinatorSpec::Deterministic { slope } if !(slope > 0.0 && slope.is_finite()) => {
                bad(format!("deterministic slope must be positive, got {slope}"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SubordinatorSpec::Stable { .. } => "stable",
            SubordinatorSpec::TemperedStable { .. } => "tempered-stable",
            SubordinatorSpec::Gamma { .. } => "gamma",
            SubordinatorSpec::CompoundPoisson { .. } => "compound-poisson",
            SubordinatorSpec::Deterministic { .. } => "deterministic",
        }
    }

    /// Closed-form Laplace exponent.
    pub fn laplace_exponent(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!(
                "Laplace exponent needs lambda >= 0, got {lambda}"
            )));
        }
        self.validate()?;
        Ok(match *self {
            SubordinatorSpec::Stable { beta } => lambda.powf(beta),
            SubordinatorSpec::TemperedStable { beta, theta } => (lambda + theta).powf(beta) - theta.powf(beta),
            SubordinatorSpec::Gamma { shape, rate } => shape * (lambda / rate).ln_1p(),
            SubordinatorSpec::CompoundPoisson { rate, jumps } => rate * (1.0 - jumps.laplace_transform(lambda)),
            SubordinatorSpec::Deterministic { slope } => slope * lambda,
        })
    }

    /// Lévy density on `(0, ∞)`, when the family has one.
    pub fn levy_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            SubordinatorSpec::Stable { beta } => beta / gamma(1.0 - beta) * x.powf(-1.0 - beta),
            SubordinatorSpec::TemperedStable { beta, theta } => {
                beta / gamma(1.0 - beta) * x.powf(-1.0 - beta) * (-theta * x).exp()
            }
            SubordinatorSpec::Gamma { shape, rate } => shape * (-rate * x).exp() / x,
            SubordinatorSpec::CompoundPoisson { rate, jumps } => match jumps {
                JumpLaw::Fixed(_) => 0.0,
                JumpLaw::Exponential { rate: mu } => rate * mu * (-mu * x).exp(),
                JumpLaw::Uniform { lo, hi } => {
                    if x > lo && x < hi {
                        rate / (hi - lo)
                    } else {
                        0.0
                    }
                }
            },
            SubordinatorSpec::Deterministic { .. } => 0.0,
        }
    }

    /// `φ(λ)` from the defining integral `∫(1−e^{−λx}) ν(dx)` plus drift.
    ///
    /// Only used to cross-check [`Self::laplace_exponent`].
    pub fn laplace_exponent_by_quadrature(&self, lambda: f64, q: &QuadratureConfig) -> Result<Estimate> {
        self.validate()?;
        if lambda < 0.0 {
            return Err(Error::Domain(format!(
                "Laplace exponent needs lambda >= 0, got {lambda}"
            )));
        }
        let integrand = |x: f64| -(-lambda * x).exp_m1() * self.levy_density(x);
        match *self {
            SubordinatorSpec::Deterministic { slope } => Ok(Estimate {
                value: slope * lambda,
                abs_error: 0.0,
            }),
            SubordinatorSpec::CompoundPoisson {
                rate,
                jumps: JumpLaw::Fixed(v),
            } => Ok(Estimate {
                value: rate * -(-lambda * v).exp_m1(),
                abs_error: 0.0,
            }),
            SubordinatorSpec::CompoundPoisson {
                jumps: JumpLaw::Uniform { lo, hi },
                ..
            } => super::quadrature::integrate(integrand, lo, hi, q),
            _ => {
                let near = integrate_toward_zero(integrand, 0.0, 1.0, q)?;
                let far = integrate_to_infinity(integrand, 1.0, q)?;
                Ok(near + far)
            }
        }
    }

    /// `E[D(τ)]` when finite.
    pub fn mean_rate(&self) -> Option<f64> {
        match *self {
            SubordinatorSpec::Stable { .. } => None,
            SubordinatorSpec::TemperedStable { beta, theta } => Some(beta * theta.powf(beta - 1.0)),
            SubordinatorSpec::Gamma { shape, rate } => Some(shape / rate),
            SubordinatorSpec::CompoundPoisson { rate, jumps } => Some(
                rate * match jumps {
                    JumpLaw::Fixed(v) => v,
                    JumpLaw::Exponential { rate } => 1.0 / rate,
                    JumpLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
                },
            ),
            SubordinatorSpec::Deterministic { slope } => Some(slope),
        }
    }

    /// One increment `D(τ + dτ) − D(τ)`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dtau: f64, rng: &mut R) -> f64 {
        match *self {
            SubordinatorSpec::Stable { beta } => dtau.powf(1.0 / beta) * sample_positive_stable(beta, rng),
            SubordinatorSpec::TemperedStable { beta, theta } => {
                let scale = dtau.powf(1.0 / beta);
                loop {
                    let s = scale * sample_positive_stable(beta, rng);
                    if rng.random::<f64>() <= (-theta * s).exp() {
                        return s;
                    }
                }
            }
            SubordinatorSpec::Gamma { shape, rate } => Gamma::new(shape * dtau, 1.0 / rate)
                .expect("validated gamma parameters")
                .sample(rng),
            SubordinatorSpec::CompoundPoisson { rate, jumps } => {
                let mean = rate * dtau;
                let n = if mean > 0.0 {
                    Poisson::new(mean).expect("positive Poisson mean").sample(rng) as u64
                } else {
                    0
                };
                (0..n).map(|_| jumps.sample(rng)).sum()
            }
            SubordinatorSpec::Deterministic { slope } => slope * dtau,
        }
    }
}

/// One-sided stable variate with `E e^{−λS} = e^{−λ^β}` by Kanter's representation.
pub fn sample_positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let u = rng.random::<f64>().clamp(1e-300, 1.0 - 1e-16) * PI;
    let w: f64 = loop {
        let e: f64 = Exp1.sample(rng);
        if e > 0.0 {
            break e;
        }
    };
    let a = (beta * u).sin() / u.sin().powf(1.0 / beta);
    let b = (((1.0 - beta) * u).sin() / w).powf((1.0 - beta) / beta);
    a * b
}

/// Free-function form of [`SubordinatorSpec::laplace_exponent`].
pub fn laplace_exponent(spec: &SubordinatorSpec, lambda: f64) -> Result<f64> {
    spec.laplace_exponent(lambda)
}
