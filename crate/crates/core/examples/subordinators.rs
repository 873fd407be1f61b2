//! Sample subordinator paths for every built-in family and compare the
//! empirical Laplace transform of D(1) with exp(-phi(1)).
//!
//! cargo run --release --example subordinators

use tcsde::levy::{JumpLaw, SubordinatorSpec};
use tcsde::paths::{simulate_subordinator, SeedSpec};
use tcsde::stability::{laplace_identity_check, McConfig};

fn main() -> tcsde::Result<()> {
    let families = [
        SubordinatorSpec::Stable { beta: 0.5 },
        SubordinatorSpec::TemperedStable { beta: 0.6, theta: 2.0 },
        SubordinatorSpec::Gamma { shape: 1.5, rate: 2.0 },
        SubordinatorSpec::CompoundPoisson {
            rate: 3.0,
            jumps: JumpLaw::Uniform { lo: 0.1, hi: 0.5 },
        },
        SubordinatorSpec::Deterministic { slope: 1.0 },
    ];
    let mc = McConfig::new(5_000, vec![1.0], 42);
    println!(
        "{:<16} {:>10} {:>10} {:>10} {:>8}",
        "family", "D(1)", "mean", "exact", "3 SE"
    );
    for sub in &families {
        let one = simulate_subordinator(sub, 1e-2, 1.0, SeedSpec::new(42, 0))?;
        let rep = laplace_identity_check(sub, 1e-2, &mc, 1.0, 1.0)?;
        println!(
            "{:<16} {:>10.4} {:>10.4} {:>10.4} {:>8}",
            rep.family,
            one.last_value(),
            rep.estimate.mean,
            rep.exact,
            if rep.passed { "ok" } else { "outside" }
        );
    }
    Ok(())
}
