//! Couple the direct scheme with the classical solution run on the
//! operational clock, X(t) = Y(E_t), and watch the gap shrink with dt.
//!
//! cargo run --release --example duality

use tcsde::levy::{LevyMeasure, SubordinatorSpec};
use tcsde::paths::SeedSpec;
use tcsde::sde::{coupled_pair, CoefficientSet, IntegratorConfig, TcSdeSpec};
use tcsde::stability::{duality_gaps, McConfig};

fn main() -> tcsde::Result<()> {
    let nu = LevyMeasure::uniform(-1.0, 1.0, 1.0, 1.0, 1e-9)?;
    let spec = TcSdeSpec::new(
        CoefficientSet::example_two_reduced(),
        1.0,
        SubordinatorSpec::Stable { beta: 0.5 },
        nu,
    )?;
    let cfg = IntegratorConfig::default().with_op_step(1e-4);

    let (direct, dual) = coupled_pair(&spec, &cfg.with_dt(1e-2), SeedSpec::new(5, 0))?;
    for ((t, a), b) in direct.grid().iter().zip(direct.values()).zip(dual.values()).step_by(25) {
        println!("t={t:.2}  direct={a:+.5}  Y(E_t)={b:+.5}");
    }

    let mc = McConfig::new(100, vec![1.0], 5);
    for g in duality_gaps(&spec, &cfg, &mc, &[8e-3, 4e-3, 2e-3, 1e-3])? {
        println!(
            "dt={:<6} mean max gap {:.4} +- {:.4}",
            g.dt, g.gap.mean, g.gap.half_width
        );
    }
    Ok(())
}
