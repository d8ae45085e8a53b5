use endqt::causal_classical::{
    bell_factorization, crccp_screening_set, d_separated_idx, markov_check, ClassicalDag, JointTable,
};
use endqt::rng;
use proptest::prelude::*;
use rand::Rng;

/// Random DAG on `n` binary nodes; edges only go from lower to higher index.
fn random_dag() -> impl Strategy<Value = ClassicalDag> {
    (2usize..=6, any::<u32>()).prop_map(|(n, bits)| {
        let names: Vec<String> = (0..n).map(|i| format!("X{i}")).collect();
        let mut edges = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                if bits & (1 << (k % 32)) != 0 {
                    edges.push((names[i].clone(), names[j].clone()));
                }
                k += 1;
            }
        }
        ClassicalDag::new(names.into_iter().map(|s| (s, 2)).collect(), edges).unwrap()
    })
}

/// Three disjoint node sets (x, y non-empty) drawn from a labelling.
fn split(n: usize, labels: &[u8]) -> Option<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let (mut x, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &l) in labels.iter().take(n).enumerate() {
        match l % 4 {
            0 => x.push(i),
            1 => y.push(i),
            2 => z.push(i),
            _ => {}
        }
    }
    (!x.is_empty() && !y.is_empty()).then_some((x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn d_separation_implies_independence(dag in random_dag(), labels in prop::collection::vec(any::<u8>(), 6), seed in any::<u64>()) {
        let Some((x, y, z)) = split(dag.len(), &labels) else { return Ok(()); };
        let table = dag.random_markov_table(&mut rng::seeded(seed));
        let sep = d_separated_idx(&dag, &x, &y, &z).unwrap();
        let dev = table.independence_deviation(&x, &y, &z);
        if sep {
            prop_assert!(dev <= 1e-10, "d-separated but deviation {dev}");
        } else {
            // generic parameters are faithful
            prop_assert!(dev > 1e-12, "d-connected but deviation {dev}");
        }
    }

    #[test]
    fn constructive_tables_are_markov(dag in random_dag(), seed in any::<u64>()) {
        let table = dag.random_markov_table(&mut rng::seeded(seed));
        let report = markov_check(&dag, &table).unwrap();
        prop_assert!(report.holds && report.factorizes && report.local_markov, "{report:?}");
    }

    #[test]
    fn dag_and_table_round_trip_through_json(dag in random_dag(), seed in any::<u64>()) {
        let table = dag.random_markov_table(&mut rng::seeded(seed));
        let back: ClassicalDag = serde_json::from_str(&serde_json::to_string(&dag).unwrap()).unwrap();
        prop_assert_eq!(&back, &dag);
        let t2: JointTable = serde_json::from_str(&serde_json::to_string(&table).unwrap()).unwrap();
        prop_assert_eq!(t2, table);
    }

    #[test]
    fn local_models_respect_the_chsh_bound(lambdas in 1usize..6, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let mut prior: Vec<f64> = (0..lambdas).map(|_| r.random::<f64>() + 1e-6).collect();
        let s: f64 = prior.iter().sum();
        prior.iter_mut().for_each(|p| *p /= s);
        let mut cond = || -> Vec<Vec<Vec<f64>>> {
            (0..lambdas)
                .map(|_| (0..2).map(|_| { let p: f64 = r.random(); vec![p, 1.0 - p] }).collect())
                .collect()
        };
        let (pa, pb) = (cond(), cond());
        let b = bell_factorization(&prior, &pa, &pb).unwrap();
        prop_assert!(b.chsh().unwrap().abs() <= 2.0 + 1e-12);
        prop_assert!(b.signaling() < 1e-12);
    }

    #[test]
    fn forks_are_screened_by_their_common_cause(seed in any::<u64>()) {
        let fork = ClassicalDag::new(vec![("A", 2), ("B", 2), ("C", 2)], vec![("C", "A"), ("C", "B")]).unwrap();
        let table = fork.random_markov_table(&mut rng::seeded(seed));
        prop_assume!(table.independence_deviation(&[0], &[1], &[]) > 1e-9);
        prop_assert_eq!(crccp_screening_set(&fork, &table, "A", "B").unwrap(), Some(vec!["C".to_string()]));
    }

    #[test]
    fn direct_causes_need_no_screening(seed in any::<u64>()) {
        let chain = ClassicalDag::new(vec![("A", 2), ("B", 2), ("C", 3)], vec![("A", "B"), ("B", "C")]).unwrap();
        let table = chain.random_markov_table(&mut rng::seeded(seed));
        prop_assert_eq!(crccp_screening_set(&chain, &table, "A", "C").unwrap(), None);
    }
}

#[test]
fn five_node_example_regression() {
    let dag = ClassicalDag::new(
        vec![("A", 2), ("B", 2), ("C", 2), ("D", 2), ("E", 2)],
        vec![("A", "B"), ("A", "C"), ("B", "D"), ("C", "D"), ("C", "E")],
    )
    .unwrap();
    let idx = |names: &[&str]| dag.resolve(names).unwrap();
    let holds = [
        (idx(&["B"]), idx(&["C", "E"]), idx(&["A"])),
        (idx(&["C"]), idx(&["B"]), idx(&["A"])),
        (idx(&["D"]), idx(&["A", "E"]), idx(&["B", "C"])),
        (idx(&["E"]), idx(&["A", "B", "D"]), idx(&["C"])),
    ];
    for (x, y, z) in &holds {
        assert!(d_separated_idx(&dag, x, y, z).unwrap());
    }
    // conditioning on the collider D opens B — C even given A
    assert!(!d_separated_idx(&dag, &idx(&["B"]), &idx(&["C"]), &idx(&["A", "D"])).unwrap());
    assert!(!d_separated_idx(&dag, &idx(&["D"]), &idx(&["E"]), &[]).unwrap());
    for seed in 0..10 {
        let t = dag.random_markov_table(&mut rng::seeded(seed));
        for (x, y, z) in &holds {
            assert!(t.conditionally_independent(x, y, z, 1e-10));
        }
    }
}
