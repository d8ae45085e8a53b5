use endqt::quantum::{
    born_probabilities, hermitian_eigenvalues, partial_trace, partial_trace_pure, tensor_product, von_neumann_entropy,
    DensityOperator, Observable, StateVector,
};
use endqt::rng;
use proptest::prelude::*;

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(2usize..=3, 1..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partial_trace_keeps_trace_and_positivity(dims in dims_strategy(), seed in any::<u64>(), mask in any::<u8>()) {
        let mut r = rng::seeded(seed);
        let rho = DensityOperator::random(dims.clone(), 1 + (seed % 3) as usize, &mut r);
        let keep: Vec<usize> = (0..dims.len()).filter(|i| mask & (1 << i) != 0).collect();
        prop_assume!(!keep.is_empty());
        let red = partial_trace(&rho, &keep).unwrap();
        let expected: usize = keep.iter().map(|&i| dims[i]).product();
        prop_assert_eq!(red.dim(), expected);
        prop_assert!((red.matrix().trace().re - 1.0).abs() < 1e-12);
        prop_assert!(hermitian_eigenvalues(red.matrix()).iter().all(|&e| e > -1e-12));
    }

    #[test]
    fn pure_and_mixed_partial_traces_agree(dims in dims_strategy(), seed in any::<u64>()) {
        let psi = StateVector::random(dims.clone(), &mut rng::seeded(seed));
        let keep = [dims.len() - 1];
        let a = partial_trace_pure(&psi, &keep).unwrap();
        let b = partial_trace(&psi.to_density(), &keep).unwrap();
        prop_assert!((a.matrix() - b.matrix()).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn entropy_is_bounded_by_log_dimension(dims in dims_strategy(), seed in any::<u64>()) {
        let rho = DensityOperator::random(dims, 4, &mut rng::seeded(seed));
        let s = von_neumann_entropy(&rho);
        prop_assert!(s >= -1e-12);
        prop_assert!(s <= (rho.dim() as f64).ln() + 1e-10);
    }

    #[test]
    fn bipartite_pure_entropies_match(d1 in 2usize..=4, d2 in 2usize..=4, seed in any::<u64>()) {
        let psi = StateVector::random(vec![d1, d2], &mut rng::seeded(seed));
        let sa = von_neumann_entropy(&partial_trace_pure(&psi, &[0]).unwrap());
        let sb = von_neumann_entropy(&partial_trace_pure(&psi, &[1]).unwrap());
        prop_assert!((sa - sb).abs() < 1e-9);
    }

    #[test]
    fn product_states_trace_back_to_factors(seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let a = DensityOperator::random(vec![2], 2, &mut r);
        let b = DensityOperator::random(vec![3], 2, &mut r);
        let ab = tensor_product(&a, &b);
        prop_assert_eq!(ab.dims(), &[2, 3][..]);
        let back = partial_trace(&ab, &[0]).unwrap();
        prop_assert!((back.matrix() - a.matrix()).iter().all(|z| z.norm() < 1e-12));
        let s = von_neumann_entropy(&ab);
        prop_assert!((s - von_neumann_entropy(&a) - von_neumann_entropy(&b)).abs() < 1e-9);
    }

    #[test]
    fn born_rule_is_normalized(theta in -3.2f64..3.2, seed in any::<u64>()) {
        let rho = DensityOperator::random(vec![2], 2, &mut rng::seeded(seed));
        let probs = born_probabilities(&rho, &Observable::along_xz(theta)).unwrap();
        let total: f64 = probs.iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(probs.iter().all(|(_, p)| *p >= 0.0));
    }
}
