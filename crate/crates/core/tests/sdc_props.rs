use endqt::exec::Execution;
use endqt::sdc::{
    build_graph, count_events, dissolve_at, event_counts, layer_size, simulate_chain, simulate_chain_with,
    validate_cdc, CdcViolation, ChainConfig,
};
use proptest::prelude::*;

fn small_chain() -> impl Strategy<Value = ChainConfig> {
    (2usize..=4, 1u64..=3, 1usize..=4, any::<u64>()).prop_map(|(layers, last, g, seed)| {
        let mut cfg = ChainConfig::new(layers, last, g, seed).with_delta(0.25);
        cfg.trace_samples = 2;
        cfg
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_form_counts_match_the_graph(cfg in small_chain()) {
        let graph = build_graph(&cfg).unwrap();
        let counts = event_counts(&cfg).unwrap();
        prop_assert_eq!(graph.nodes.len() as u64, counts.systems);
        prop_assert_eq!(graph.edges.len() as u64, counts.edges);
        prop_assert_eq!(count_events(&cfg).unwrap(), counts.systems);
        let total: u64 = (0..cfg.num_layers).map(|i| layer_size(&cfg, i).unwrap()).sum();
        prop_assert_eq!(total, counts.systems);
    }

    #[test]
    fn built_chains_satisfy_the_structural_rules(cfg in small_chain()) {
        let graph = build_graph(&cfg).unwrap();
        prop_assert!(validate_cdc(&graph).is_empty());
    }

    #[test]
    fn dropping_a_parent_is_detected(cfg in small_chain()) {
        let mut graph = build_graph(&cfg).unwrap();
        prop_assume!(cfg.group_size >= 1 && !graph.edges.is_empty());
        graph.edges.pop();
        let v = validate_cdc(&graph);
        prop_assert!(v.iter().any(|x| matches!(x, CdcViolation::IncompleteGroup { .. })), "{:?}", v);
    }

    #[test]
    fn event_times_follow_layers(cfg in small_chain()) {
        let run = simulate_chain(&cfg).unwrap();
        prop_assert_eq!(run.events.len() as u64, run.counts.edges);
        for w in run.events.windows(2) {
            prop_assert!(w[0].layer <= w[1].layer);
            if w[0].layer < w[1].layer {
                prop_assert!(w[0].time < w[1].time);
            }
        }
        for e in &run.events {
            prop_assert!(e.target_value == 1.0 || e.target_value == -1.0);
            prop_assert!(e.env_value == 1.0 || e.env_value == -1.0);
        }
    }

    #[test]
    fn runs_are_reproducible_and_mode_independent(cfg in small_chain()) {
        let a = simulate_chain_with(&cfg, Execution::Sequential).unwrap();
        let b = simulate_chain_with(&cfg, Execution::Auto).unwrap();
        prop_assert_eq!(&a.events, &b.events);
        prop_assert_eq!(&a.steps, &b.steps);
        let mut ea = Vec::new();
        let mut eb = Vec::new();
        a.write_events_csv(&mut ea).unwrap();
        simulate_chain(&cfg).unwrap().write_events_csv(&mut eb).unwrap();
        prop_assert_eq!(ea, eb);
    }

    #[test]
    fn dissolution_truncates_the_run(cfg in small_chain(), k in 0usize..=3) {
        prop_assume!(k < cfg.num_layers);
        let full = simulate_chain(&cfg).unwrap();
        let run = simulate_chain(&cfg.clone().with_dissolution(k)).unwrap();
        // the last recorded interactions run from layer k into layer k + 1
        let steps = (k + 1).min(cfg.num_layers - 1);
        prop_assert_eq!(run.steps.len(), steps);
        prop_assert!(run.events.iter().all(|e| e.layer <= k + 1));
        prop_assert_eq!(&run.events[..], &full.events[..run.events.len()]);
        if k + 2 >= cfg.num_layers {
            prop_assert_eq!(run.events.len(), full.events.len());
        } else {
            prop_assert!(run.events.len() < full.events.len());
        }
    }
}

#[test]
fn invalid_configs_name_their_field() {
    let cases = [
        (ChainConfig::new(0, 5, 30, 1), "num_layers"),
        (ChainConfig::new(4, 0, 30, 1), "last_layer_count"),
        (ChainConfig::new(4, 5, 0, 1), "group_size"),
        (ChainConfig::new(4, 5, 30, 1).with_delta(-1.0), "step_duration"),
        (ChainConfig::new(60, 5, 30, 1), "group_size"),
    ];
    for (cfg, field) in cases {
        match cfg.validate() {
            Err(endqt::Error::Config { field: f, .. }) => assert_eq!(f, field),
            other => panic!("expected config error on {field}, got {other:?}"),
        }
    }
}

#[test]
fn dissolving_the_reference_chain_keeps_edges_below_the_cut() {
    let cfg = ChainConfig::new(4, 5, 30, 11).with_delta(0.6);
    let graph = build_graph(&cfg).unwrap();
    let below = graph.edges.iter().filter(|&&(_, t)| graph.nodes[t].layer <= 2).count();
    assert_eq!(below, 135_000 + 4_500);
    let run = dissolve_at(&cfg, 1).unwrap();
    assert_eq!(run.events.len(), below);
    assert_eq!(dissolve_at(&cfg, 3).unwrap().events.len() as u64, run.counts.edges);
}
