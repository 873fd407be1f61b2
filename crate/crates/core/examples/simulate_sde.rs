//! Integrate a time-changed jump SDE with the direct scheme and print a few
//! steps of the trace.
//!
//! cargo run --release --example simulate_sde

use tcsde::levy::{LevyMeasure, SubordinatorSpec};
use tcsde::paths::SeedSpec;
use tcsde::sde::{integrate_direct_traced, CoefficientSet, IntegratorConfig, TcSdeSpec};

fn main() -> tcsde::Result<()> {
    // dX = -X dt + 0.25 X dE + X dB_E + int y X N~(dE, dy)
    let nu = LevyMeasure::uniform(-1.0, 1.0, 1.0, 1.0, 1e-9)?;
    let spec = TcSdeSpec::new(
        CoefficientSet::example_one(),
        0.5,
        SubordinatorSpec::Stable { beta: 0.7 },
        nu,
    )?;
    let cfg = IntegratorConfig::default().with_dt(1e-2).with_horizon(2.0);
    let run = integrate_direct_traced(&spec, &cfg, SeedSpec::new(3, 0))?;

    let jumps: usize = run.steps.iter().map(|s| s.jumps.len()).sum();
    println!(
        "{} t-steps, {} segments, {} jumps",
        run.path.len() - 1,
        run.steps.len(),
        jumps
    );
    println!("{:>6} {:>9} {:>11}", "t", "E_t", "X(t)");
    for (n, (t, x)) in run.path.grid().iter().zip(run.path.values()).enumerate().step_by(20) {
        println!("{t:>6.2} {:>9.4} {x:>11.6}", run.clock.value(n));
    }
    Ok(())
}
