//! Two sanity checks on the noise and the integrator: the compensated jump
//! count on the time-changed clock has mean zero, and the pathwise Ito
//! identity for F = x^2 balances up to discretization error.
//!
//! cargo run --release --example martingale_ito

use tcsde::levy::{LevyMeasure, QuadratureConfig, SubordinatorSpec};
use tcsde::lyapunov::LyapunovCandidate;
use tcsde::sde::{CoefficientSet, IntegratorConfig, TcSdeSpec};
use tcsde::stability::{ito_residuals, martingale_check, median, McConfig};

fn main() -> tcsde::Result<()> {
    let nu = LevyMeasure::uniform(-1.0, 1.0, 1.0, 1.0, 1e-9)?;
    let sub = SubordinatorSpec::Stable { beta: 0.5 };
    let q = QuadratureConfig::default();

    let mc = McConfig::new(10_000, vec![1.0], 21);
    let m = martingale_check(&nu, &sub, (0.5, 1.0), &mc, 1e-3, 1.0, &q)?;
    println!(
        "compensated: {:+.4} (SE {:.4}) zero within 3 SE: {}",
        m.compensated.mean, m.compensated.std_error, m.passed
    );
    println!(
        "raw count:   {:+.4} (SE {:.4}) zero within 3 SE: {}",
        m.raw.mean, m.raw.std_error, m.raw_passed
    );

    let spec = TcSdeSpec::new(CoefficientSet::example_one(), 1.0, sub, nu)?;
    let f = LyapunovCandidate::square(1.0);
    let mc = McConfig::new(100, vec![1.0], 22);
    for dt in [8e-3, 4e-3, 2e-3, 1e-3] {
        let cfg = IntegratorConfig::default().with_dt(dt).with_op_step(1e-4);
        let r = ito_residuals(&spec, &cfg, &f, &mc)?;
        println!("dt={dt:<6} median |residual| {:.5}", median(&r));
    }
    Ok(())
}
