use endqt::decoherence::{
    ensemble_decoherence_times, entangle_step, estimate_decoherence_time, fit_gaussian_decay, reduced_state_analytic,
    z_factor_equal_weight, z_factor_general, CouplingDistribution, CouplingKind, DecoherenceTimeConvention,
    DecoherenceTrace, SpinBathConfig, TimeGrid,
};
use endqt::exec::Execution;
use endqt::quantum::StateVector;
use endqt::rng;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decoherence_factor_is_bounded(g in 1usize..40, seed in any::<u64>(), t in 0.0f64..20.0) {
        let cfg = SpinBathConfig::random(g, &mut rng::seeded(seed));
        let z = z_factor_general(&cfg, t);
        prop_assert!(z.norm() <= 1.0 + 1e-12);
        prop_assert!((z_factor_general(&cfg, 0.0).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_weights_give_a_real_cosine_product(g in 1usize..30, seed in any::<u64>(), t in 0.0f64..10.0) {
        let couplings = CouplingDistribution::uniform(0.0, 1.0, seed).sample(g).unwrap();
        let direct: f64 = couplings.iter().map(|x| (2.0 * x * t).cos()).product();
        prop_assert!((z_factor_equal_weight(&couplings, t) - direct).abs() < 1e-12);
        let cfg = SpinBathConfig::equal_weight(couplings).unwrap();
        let z = z_factor_general(&cfg, t);
        prop_assert!(z.im.abs() < 1e-12 && (z.re - direct).abs() < 1e-12);
    }

    #[test]
    fn exact_evolution_matches_analytic_reduced_state(g in 1usize..=8, seed in any::<u64>(), t in 0.0f64..5.0) {
        let mut r = rng::seeded(seed);
        let cfg = SpinBathConfig::random(g, &mut r);
        let (a, b) = cfg.target_amps();
        let target = StateVector::qubit(a, b).unwrap();
        let (_, exact) = entangle_step(&target, &cfg, t).unwrap();
        let analytic = reduced_state_analytic(&cfg, t);
        prop_assert!((exact.matrix() - analytic.matrix()).iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn looser_threshold_never_delays_decoherence(g in 8usize..40, seed in any::<u64>()) {
        let couplings = CouplingDistribution::uniform(0.0, 1.0, seed).sample(g).unwrap();
        let trace = DecoherenceTrace::for_equal_weight(&couplings, &TimeGrid::default()).unwrap();
        let strict = estimate_decoherence_time(&trace, 0.05, 5.0);
        let loose = estimate_decoherence_time(&trace, 0.2, 5.0);
        if let Some(s) = strict {
            prop_assert!(loose.is_some_and(|l| l <= s));
        }
    }

    #[test]
    fn gaussian_fit_recovers_a_synthetic_rate(gamma in 0.5f64..5.0) {
        let grid = TimeGrid { step: 0.005, t_max: 3.0 };
        let trace = DecoherenceTrace::from_fn(&grid, |t| endqt::quantum::c((-(gamma * t).powi(2)).exp(), 0.0)).unwrap();
        let fit = fit_gaussian_decay(&trace).unwrap();
        prop_assert!((fit.gamma - gamma).abs() < 1e-9 * gamma.max(1.0));
    }
}

#[test]
fn ensembles_do_not_depend_on_execution_mode() {
    let kind = CouplingKind::Uniform { lo: 0.0, hi: 1.0 };
    let seeds: Vec<u64> = (0..16).collect();
    let grid = TimeGrid::default();
    let conv = DecoherenceTimeConvention::default();
    let a = ensemble_decoherence_times(20, &kind, &seeds, &grid, &conv, Execution::Sequential).unwrap();
    let b = ensemble_decoherence_times(20, &kind, &seeds, &grid, &conv, Execution::Auto).unwrap();
    assert_eq!(a, b);
}
