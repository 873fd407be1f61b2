//! Lévy measures, subordinator families and the jump-integral quadrature.

mod measure;
pub mod quadrature;
mod subordinator;

pub use measure::{
    levy_integral, validate_levy_measure, Atom, Density, JumpSampler, LevyMeasure, ValidationCheck, ValidationReport,
};
pub use quadrature::{Estimate, QuadratureConfig};
pub use subordinator::{laplace_exponent, sample_positive_stable, JumpLaw, SubordinatorSpec};
