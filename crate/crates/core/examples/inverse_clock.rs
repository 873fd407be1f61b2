//! Invert a stable subordinator to get the clock E_t, run Brownian motion on
//! it, and estimate E[E_t] and E[exp(-E_t)].
//!
//! cargo run --release --example inverse_clock

use tcsde::levy::SubordinatorSpec;
use tcsde::paths::{invert_path, simulate_subordinator_until, simulate_tc_brownian, uniform_grid, SeedSpec};
use tcsde::stability::{estimate_laplace_et, sample_inverse_subordinator, McConfig, MeanEstimate};

fn main() -> tcsde::Result<()> {
    let sub = SubordinatorSpec::Stable { beta: 0.5 };
    let seed = SeedSpec::new(7, 0);
    let d = simulate_subordinator_until(&sub, 1e-4, 2.0, seed, 1 << 24)?;
    let t_grid = uniform_grid(0.25, 2.0)?;
    let e = invert_path(&d, &t_grid)?;
    let b = simulate_tc_brownian(&e, seed)?;
    println!("{:>6} {:>10} {:>10}", "t", "E_t", "B(E_t)");
    for ((t, e), b) in t_grid.iter().zip(e.values()).zip(b.values()) {
        println!("{t:>6.2} {e:>10.5} {b:>10.5}");
    }

    let mc = McConfig::new(10_000, vec![1.0], 7);
    let e1: Vec<f64> = sample_inverse_subordinator(&sub, 1e-4, &mc, 1 << 24)?
        .into_iter()
        .map(|row| row[0])
        .collect();
    let m = MeanEstimate::from_samples(&e1, mc.z());
    println!(
        "\nE[E_1] = {:.4} +- {:.4}  (1/Gamma(1.5) = 1.1284)",
        m.mean, m.half_width
    );

    let mc = McConfig::new(4_000, vec![0.5, 1.0, 2.0, 4.0], 8);
    let rep = estimate_laplace_et(&sub, 1e-3, &mc, 1.0, 1 << 24)?;
    for r in &rep.rows {
        println!(
            "E[exp(-E_{})] = {:.4} [{:.4}, {:.4}]",
            r.t, r.estimate, r.ci_lo, r.ci_hi
        );
    }
    println!("nonincreasing: {}", rep.nonincreasing);
    Ok(())
}
