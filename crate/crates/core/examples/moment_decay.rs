//! Monte Carlo estimate of E|X(t)|, a fitted exponential decay and a stay
//! probability, with an SVG of the moment curve.
//!
//! cargo run --release --example moment_decay [out.svg]

use tcsde::levy::{LevyMeasure, SubordinatorSpec};
use tcsde::plot::{render_svg, Plot, Series};
use tcsde::sde::{CoefficientSet, IntegratorConfig, TcSdeSpec};
use tcsde::stability::{estimate_moment, estimate_stay_probability, McConfig};

fn main() -> tcsde::Result<()> {
    let nu = LevyMeasure::uniform(-1.0, 1.0, 1.0, 1.0, 1e-9)?;
    let sub = SubordinatorSpec::Stable { beta: 0.5 };
    let spec = TcSdeSpec::new(CoefficientSet::example_one(), 1.0, sub, nu)?;
    let cfg = IntegratorConfig::default().with_dt(1e-2).with_horizon(4.0);
    let mc = McConfig::new(4_000, vec![0.5, 1.0, 2.0, 3.0, 4.0], 11);

    let mut rep = estimate_moment(&spec, &cfg, &mc, 1.0)?;
    let fit = rep.fit_decay()?;
    print!("{}", rep.to_csv());
    println!(
        "fit: C={:.4} lambda={:.4} (max rel residual {:.3})",
        fit.c, fit.lambda, fit.max_rel_residual
    );

    let stay = estimate_stay_probability(
        &spec.with_x0(0.01),
        &cfg,
        &McConfig::new(2_000, vec![4.0], 12),
        0.5,
        4.0,
    )?;
    let last = stay.rows.last().unwrap();
    println!(
        "P(sup |X| < 0.5 on [0,4]) from 0.01: {:.4} [{:.4}, {:.4}]",
        last.estimate, last.ci_lo, last.ci_hi
    );

    if let Some(path) = std::env::args().nth(1) {
        let pts = rep.rows.iter().map(|r| (r.t, r.estimate)).collect();
        let fitted = rep
            .rows
            .iter()
            .map(|r| (r.t, fit.c * (-fit.lambda * r.t).exp()))
            .collect();
        let band = rep.rows.iter().map(|r| (r.t, r.ci_lo, r.ci_hi)).collect();
        let plot = Plot::new("E|X(t)|", "t", "estimate")
            .with_series(Series::line("estimate", pts).with_markers())
            .with_series(Series::line("fit", fitted).dashed())
            .with_band(band);
        std::fs::write(&path, render_svg(&plot))?;
        println!("wrote {path}");
    }
    Ok(())
}
