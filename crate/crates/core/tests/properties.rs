use proptest::prelude::*;

use tcsde::config::{parse_config_str, ExperimentConfig, ExperimentKind};
use tcsde::levy::{JumpLaw, SubordinatorSpec};
use tcsde::paths::{inverse_indices, simulate_subordinator_until, SeedSpec};
use tcsde::plot::nice_ticks;
use tcsde::stability::{wilson_interval, MeanEstimate};

fn family() -> impl Strategy<Value = SubordinatorSpec> {
    prop_oneof![
        (0.1..0.95f64).prop_map(|beta| SubordinatorSpec::Stable { beta }),
        (0.1..0.95f64, 0.1..5.0f64).prop_map(|(beta, theta)| SubordinatorSpec::TemperedStable { beta, theta }),
        (0.2..5.0f64, 0.2..5.0f64).prop_map(|(shape, rate)| SubordinatorSpec::Gamma { shape, rate }),
        (0.5..5.0f64, 0.2..3.0f64).prop_map(|(rate, r)| SubordinatorSpec::CompoundPoisson {
            rate,
            jumps: JumpLaw::Exponential { rate: r }
        }),
        (0.2..5.0f64).prop_map(|slope| SubordinatorSpec::Deterministic { slope }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inverse_clock_is_monotone_and_passes_t(sub in family(), seed in any::<u64>()) {
        let t_grid: Vec<f64> = (0..=50).map(|n| n as f64 * 0.02).collect();
        let d = simulate_subordinator_until(&sub, 1e-2, 1.0, SeedSpec::new(seed, 0), 1 << 22).unwrap();
        prop_assert!(d.values().windows(2).all(|w| w[0] <= w[1]));
        let idx = inverse_indices(&d, &t_grid).unwrap();
        prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        for (&j, &t) in idx.iter().zip(&t_grid) {
            prop_assert!(d.values()[j] > t);
            prop_assert!(j == 0 || d.values()[j - 1] <= t);
        }
    }

    #[test]
    fn laplace_exponent_is_increasing_and_vanishes_at_zero(sub in family(), a in 0.01..10.0f64, b in 0.01..10.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert_eq!(sub.laplace_exponent(0.0).unwrap(), 0.0);
        prop_assert!(sub.laplace_exponent(lo).unwrap() <= sub.laplace_exponent(hi).unwrap());
    }

    #[test]
    fn constant_samples_have_exact_mean(c in -1e6..1e6f64, n in 1usize..500) {
        let m = MeanEstimate::from_samples(&vec![c; n], 2.576);
        prop_assert_eq!(m.mean, c);
        prop_assert_eq!(m.std_error, 0.0);
    }

    #[test]
    fn wilson_interval_brackets_the_proportion(n in 1usize..5000, frac in 0.0..=1.0f64) {
        let k = ((n as f64) * frac).round() as usize;
        let (lo, hi) = wilson_interval(k, n, 2.576);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }

    #[test]
    fn config_round_trips(paths in 1usize..100_000, seed in any::<u64>(), dt in 1e-4..1e-1f64, x0 in -10.0..10.0f64) {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::EstimateStability);
        cfg.mc.paths = paths;
        cfg.mc.seed = seed;
        cfg.integrator.dt = dt;
        cfg.sde.x0 = x0;
        let back = parse_config_str(&cfg.to_normalized(), "round-trip").unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn ticks_stay_in_range(lo in -1e3..1e3f64, width in 1e-3..1e4f64) {
        let hi = lo + width;
        let ticks = nice_ticks(lo, hi, 6);
        prop_assert!(!ticks.is_empty() && ticks.len() <= 13);
        prop_assert!(ticks.iter().all(|t| *t >= lo - 1e-9 * width && *t <= hi + 1e-9 * width));
    }
}
