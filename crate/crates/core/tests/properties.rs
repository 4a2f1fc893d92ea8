//! Property tests over the public surface.

use jante_core::continuous::{
    check_metric_bounds, drift_closed_form, drift_full_form, lyapunov_h, lyapunov_h_expanded,
    LocalWindow,
};
use jante_core::discrete::{check_f_decrease, construct_absorbing_path, lyapunov_f};
use jante_core::process::{
    iid_configuration, max_nonconformity, replay, run, stream_rng, Configuration, DiscreteDist,
    DistributionSpec, StopRule, UpdateMode,
};
use jante_core::Topology;
use proptest::prelude::*;

fn arb_edges(n: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    let all: Vec<(usize, usize)> =
        (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    proptest::sample::subsequence(all.clone(), 1..=all.len())
}

proptest! {
    #[test]
    fn edge_list_text_round_trips(n in 2usize..9, edges in (2usize..9).prop_flat_map(arb_edges)) {
        // only connected graphs construct; those must round-trip exactly
        if let Ok(topo) = Topology::from_edge_list(n, &edges) {
            let text = topo.to_edge_list_text();
            let back = Topology::from_edge_list_text(&text).unwrap();
            prop_assert_eq!(back, topo);
        }
    }

    #[test]
    fn degree_sum_is_twice_edge_count(n in 3usize..40) {
        let topo = Topology::cycle(n).unwrap();
        let degrees: usize = (0..n).map(|v| topo.degree(v).unwrap()).sum();
        prop_assert_eq!(degrees, 2 * topo.edges().len());
    }

    #[test]
    fn replay_reproduces_every_trajectory(seed in any::<u64>(), n in 3usize..10, m in 1i64..8) {
        let topo = Topology::cycle(n).unwrap();
        let spec = DistributionSpec::discrete((1..=m).collect(), vec![1.0 / m as f64; m as usize]).unwrap();
        let dist = DiscreteDist::from_spec(&spec).unwrap();
        let mut rng = stream_rng(seed, 0);
        let init = iid_configuration(&dist, n, &mut rng);
        let tr = run(init, &topo, &dist, &spec, &mut rng, UpdateMode::Frozen,
                     StopRule::MaxSteps(200), seed).unwrap();
        let replayed = replay(&tr, &topo).unwrap();
        prop_assert_eq!(replayed, tr.final_config.clone());
        // every record's replaced node attains the recorded maximum
        for rec in &tr.records {
            if let Some(node) = rec.replaced_node() {
                prop_assert!(rec.argmax_before.contains(&node));
            }
        }
    }

    #[test]
    fn identical_seeds_give_identical_runs(seed in any::<u64>()) {
        let topo = Topology::cycle(6).unwrap();
        let spec = DistributionSpec::discrete_uniform(5).unwrap();
        let dist = DiscreteDist::from_spec(&spec).unwrap();
        let make = || {
            let mut rng = stream_rng(seed, 1);
            let init = iid_configuration(&dist, 6, &mut rng);
            run(init, &topo, &dist, &spec, &mut rng, UpdateMode::Raw,
                StopRule::MaxSteps(100), seed).unwrap()
        };
        prop_assert_eq!(make(), make());
    }

    #[test]
    fn floor_midpoint_never_raises_f(values in proptest::collection::vec(-20i64..20, 3..12)) {
        let n = values.len();
        let topo = Topology::cycle(n).unwrap();
        let cfg = Configuration::new(values);
        for i in 0..n {
            let descent = check_f_decrease(&cfg, &topo, i).unwrap();
            prop_assert!(descent.holds_weak());
            prop_assert!(descent.holds_strict());
        }
    }

    #[test]
    fn absorbing_paths_terminate_with_descent(values in proptest::collection::vec(1i64..8, 4..10)) {
        let n = values.len();
        let topo = Topology::cycle(n).unwrap();
        let cfg = Configuration::new(values);
        let f0 = lyapunov_f(&cfg, &topo).unwrap();
        let path = construct_absorbing_path(&cfg, &topo).unwrap();
        prop_assert!(path.window_descent_holds(n));
        prop_assert!(path.len() <= (f0.max(1) as u64) * (n as u64 - 2).max(1));
    }

    #[test]
    fn h_forms_agree(values in proptest::collection::vec(0.0f64..1.0, 5..13)) {
        let n = values.len();
        let topo = Topology::cycle(n).unwrap();
        let cfg = Configuration::new(values);
        let h1 = lyapunov_h(&cfg, &topo).unwrap();
        let h2 = lyapunov_h_expanded(&cfg, &topo).unwrap();
        prop_assert!((h1 - h2).abs() <= 1e-12);
        prop_assert!(h1 >= 0.0);
    }

    #[test]
    fn metric_bounds_hold_everywhere(values in proptest::collection::vec(0.0f64..1.0, 5..13)) {
        let n = values.len();
        let topo = Topology::cycle(n).unwrap();
        let cfg = Configuration::new(values);
        prop_assert!(check_metric_bounds(&cfg, &topo).unwrap().holds());
    }

    #[test]
    fn drift_forms_agree_and_are_nonpositive(raw in [0.0f64..1.0, 0.0..1.0, 0.0..1.0, 0.0..1.0, 0.0..1.0]) {
        let w = LocalWindow::oriented(raw);
        if w.is_feasible() {
            let reduced = drift_closed_form(&w).unwrap();
            let full = drift_full_form(&w).unwrap();
            prop_assert!((reduced - full).abs() <= 1e-12);
            prop_assert!(reduced <= 1e-12);
        }
    }

    #[test]
    fn constant_configurations_are_fixed_points(v in 0i64..10, n in 3usize..10) {
        let topo = Topology::cycle(n).unwrap();
        let cfg = Configuration::new(vec![v; n]);
        let (d, argmax) = max_nonconformity(&cfg, &topo);
        prop_assert_eq!(d, 0.0);
        prop_assert_eq!(argmax.len(), n);
        prop_assert!(cfg.is_constant());
    }
}
