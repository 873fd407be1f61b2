//! Grid-check Lyapunov conditions and print the certificates.
//!
//! cargo run --release --example lyapunov_certificate

use tcsde::levy::{LevyMeasure, QuadratureConfig};
use tcsde::lyapunov::{check, eval_l1, eval_l2, GridSpec, LyapunovCandidate, StabilityCriteria, Theorem};
use tcsde::sde::CoefficientSet;

fn main() -> tcsde::Result<()> {
    let nu = LevyMeasure::uniform(-1.0, 1.0, 1.0, 1.0, 1e-9)?;
    let q = QuadratureConfig::default();

    let coeffs = CoefficientSet::example_one();
    let vc = LyapunovCandidate::abs_power(0.5, 1.0);
    for x in [0.5, 1.0, 4.0] {
        let l1 = eval_l1(&vc, &coeffs, 0.0, 0.0, x)?;
        let l2 = eval_l2(&vc, &coeffs, &nu, &q, 0.0, 0.0, x)?;
        println!("V=|x|^0.5  x={x}: L1V={l1:+.5} L2V={l2:+.5}");
    }
    let grid = GridSpec::new(vec![0.0, 1.0], vec![0.0, 1.0], GridSpec::linspace(-20.0, 20.0, 81)).with_scatter(32);
    let crit = StabilityCriteria::new(Theorem::Global, grid)
        .with_domain(2.0)
        .with_gammas(|a| 0.5 * a.sqrt(), |a| 0.1 * a.sqrt(), vec![0.05, 0.5, 1.0]);
    println!("\n{}", check(&vc, &coeffs, &nu, &crit)?.render());

    let coeffs = CoefficientSet::example_two();
    let vc = LyapunovCandidate::abs(1.0);
    let grid = GridSpec::new(vec![0.0, 2.0], vec![0.0, 1.5], GridSpec::linspace(-5.0, 5.0, 41));
    let crit = StabilityCriteria::new(Theorem::PthMoment, grid).with_moment(1.0, 1.0, 1.0, 1.0);
    println!("{}", check(&vc, &coeffs, &nu, &crit)?.render());

    let unstable = CoefficientSet::example_two().with_f(|_, _, x| 0.5 * x);
    let grid = GridSpec::new(vec![0.0], vec![0.0], GridSpec::linspace(-2.0, 2.0, 9));
    let crit = StabilityCriteria::new(Theorem::PthMoment, grid).with_moment(1.0, 1.0, 1.0, 1.0);
    println!("{}", check(&vc, &unstable, &nu, &crit)?.render());
    Ok(())
}
