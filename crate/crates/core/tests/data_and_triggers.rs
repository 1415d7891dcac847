use std::collections::BTreeSet;

use fedgnn_core::backdoor::{
    backdoor_dataset, compose_global_trigger, generate_trigger, inject_trigger, poison_test_set, TriggerGraph,
};
use fedgnn_core::graph::{
    count_triangles, generate_triangles_dataset, noniid_label_split, parse_tu_dataset, train_test_split,
    write_tu_dataset, Graph, TRIANGLE_CLASSES,
};
use fedgnn_core::seed;
use proptest::prelude::*;
use rand::Rng;

fn er_graph(n: usize, p: f64, label: usize, seed: u64) -> Graph {
    let mut rng = seed::rng(seed);
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|_| rng.random_bool(p))
        .collect();
    Graph::with_degree_features(n, edges, label).unwrap()
}

fn brute_force_triangles(g: &Graph) -> usize {
    let n = g.n_nodes();
    let mut count = 0;
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                if g.has_edge(a, b) && g.has_edge(b, c) && g.has_edge(a, c) {
                    count += 1;
                }
            }
        }
    }
    count
}

#[test]
fn triangle_count_matches_brute_force() {
    for i in 0..50 {
        let g = er_graph(5 + i % 25, 0.05 + 0.015 * i as f64, 0, i as u64);
        assert_eq!(count_triangles(&g), brute_force_triangles(&g), "graph {i}");
    }
}

#[test]
fn synthetic_labels_are_triangle_counts() {
    let ds = generate_triangles_dataset(200, (10, 20), 4).unwrap();
    assert_eq!(ds.len(), 200);
    assert_eq!(ds.class_counts(), vec![20; TRIANGLE_CLASSES]);
    for g in ds.graphs() {
        assert_eq!(brute_force_triangles(g), g.label() + 1);
        assert!((10..=20).contains(&g.n_nodes()));
    }
    assert_eq!(ds, generate_triangles_dataset(200, (10, 20), 4).unwrap());
}

#[test]
fn tu_round_trip_is_exact() {
    let ds = generate_triangles_dataset(60, (8, 14), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_tu_dataset(&ds, dir.path(), "RT").unwrap();
    assert_eq!(parse_tu_dataset(dir.path()).unwrap(), ds);
}

#[test]
fn tu_parse_error_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("X_A.txt"), "1, 2\n2, 9\n").unwrap();
    std::fs::write(p.join("X_graph_indicator.txt"), "1\n1\n").unwrap();
    std::fs::write(p.join("X_graph_labels.txt"), "0\n").unwrap();
    let err = parse_tu_dataset(p).unwrap_err();
    assert_eq!(err.kind(), "parse");
    assert!(err.to_string().contains("X_A.txt:2"), "{err}");
}

#[test]
fn noniid_split_concentrates_each_label_on_its_home_client() {
    let n = 20_000;
    let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
    let train: Vec<usize> = (0..n).collect();
    let (k, q) = (5, 0.5);
    let part = noniid_label_split(&train, &labels, k, q, 3).unwrap();
    let mut seen: Vec<usize> = part.parts().concat();
    seen.sort_unstable();
    assert_eq!(seen, train);
    let per_label = n / 10;
    for l in 0..10 {
        for c in 0..k {
            let got = part.parts()[c].iter().filter(|&&i| labels[i] == l).count() as f64 / per_label as f64;
            let want = if c == l % k { q } else { (1.0 - q) / (k - 1) as f64 };
            let sd = (want * (1.0 - want) / per_label as f64).sqrt();
            assert!((got - want).abs() < 5.0 * sd, "label {l} client {c}: {got} vs {want}");
        }
    }
}

#[test]
fn split_is_a_seeded_partition() {
    let ds = generate_triangles_dataset(100, (8, 12), 0).unwrap();
    let (train, test) = train_test_split(&ds, 0.8, 5).unwrap();
    assert_eq!((train.len(), test.len()), (80, 20));
    let all: BTreeSet<usize> = train.iter().chain(&test).copied().collect();
    assert_eq!(all.len(), 100);
    assert_eq!(train_test_split(&ds, 0.8, 5).unwrap().0, train);
}

fn trigger_strategy() -> impl Strategy<Value = TriggerGraph> {
    (2usize..8, 0.0f64..=1.0, any::<u64>())
        .prop_map(|(s, rho, seed)| generate_trigger(s, rho, &mut seed::rng(seed)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn injection_plants_the_trigger_and_nothing_else(
        n in 1usize..30,
        p in 0.0f64..0.9,
        t in trigger_strategy(),
        s in any::<u64>(),
    ) {
        let g = er_graph(n, p, 2, s);
        let res = inject_trigger(&g, &t, &mut seed::rng(s ^ 9));
        if n < t.n_nodes() {
            prop_assert_eq!(res.unwrap_err().kind(), "injection");
            return Ok(());
        }
        let inj = res.unwrap();
        let h = &inj.graph;
        prop_assert_eq!(h.n_nodes(), n);
        prop_assert_eq!(h.label(), g.label());
        prop_assert_eq!(h.features(), g.features());
        let distinct: BTreeSet<usize> = inj.nodes.iter().copied().collect();
        prop_assert_eq!(distinct.len(), t.n_nodes());
        let mut slot = vec![None; n];
        for (i, &v) in inj.nodes.iter().enumerate() {
            slot[v] = Some(i);
        }
        for u in 0..n {
            for v in u + 1..n {
                let want = match (slot[u], slot[v]) {
                    (Some(a), Some(b)) => t.edges().contains(&(a.min(b), a.max(b))),
                    _ => g.has_edge(u, v),
                };
                prop_assert_eq!(h.has_edge(u, v), want, "pair ({}, {})", u, v);
            }
        }
    }

    #[test]
    fn backdoor_dataset_poisons_floor_rn_eligible_graphs(
        sizes in prop::collection::vec((3usize..15, 0usize..4), 1..40),
        r in 0.01f64..0.99,
        s in any::<u64>(),
    ) {
        let t = generate_trigger(4, 0.8, &mut seed::rng(s)).unwrap();
        let graphs: Vec<Graph> = sizes
            .iter()
            .enumerate()
            .map(|(i, &(n, l))| er_graph(n, 0.3, l, s.wrapping_add(i as u64)))
            .collect();
        let local: Vec<&Graph> = graphs.iter().collect();
        let target = 0;
        let eligible = graphs.iter().filter(|g| g.label() != target && g.n_nodes() >= 4).count();
        let wanted = (r * graphs.len() as f64).floor() as usize;
        match backdoor_dataset(&local, &t, r, target, 7, s) {
            Err(e) => {
                prop_assert_eq!(e.kind(), "poisoning");
                prop_assert!(wanted > 0 && eligible == 0);
            }
            Ok(view) => {
                prop_assert_eq!(view.poisoned.len(), wanted.min(eligible));
                prop_assert_eq!(view.graphs.len(), graphs.len());
                for (i, g) in view.graphs.iter().enumerate() {
                    if view.poisoned.contains(&i) {
                        prop_assert_eq!(g.label(), target);
                        prop_assert!(graphs[i].label() != target);
                        prop_assert_eq!(g.n_nodes(), graphs[i].n_nodes());
                    } else {
                        prop_assert_eq!(g.as_ref(), &graphs[i]);
                    }
                }
            }
        }
    }

    #[test]
    fn global_trigger_is_the_disjoint_union(ts in prop::collection::vec(trigger_strategy(), 1..5)) {
        let global = compose_global_trigger(&ts).unwrap();
        prop_assert_eq!(global.n_nodes(), ts.iter().map(TriggerGraph::n_nodes).sum::<usize>());
        prop_assert_eq!(global.n_edges(), ts.iter().map(TriggerGraph::n_edges).sum::<usize>());
        let mut offset = 0;
        for t in &ts {
            for &(u, v) in t.edges() {
                prop_assert!(global.edges().contains(&(u + offset, v + offset)));
            }
            offset += t.n_nodes();
        }
    }
}

#[test]
fn eval_set_skips_target_and_small_graphs() {
    let graphs: Vec<Graph> = (0..30).map(|i| er_graph(3 + i % 8, 0.4, i % 3, i as u64)).collect();
    let refs: Vec<&Graph> = graphs.iter().collect();
    let t = generate_trigger(5, 0.8, &mut seed::rng(1)).unwrap();
    let eval = poison_test_set(&refs, &t, 1, 9).unwrap();
    let want = graphs.iter().filter(|g| g.label() != 1 && g.n_nodes() >= 5).count();
    assert_eq!(eval.len(), want);
    assert!(eval.original_labels().iter().all(|&l| l != 1));
    let big = generate_trigger(20, 0.8, &mut seed::rng(1)).unwrap();
    assert_eq!(poison_test_set(&refs, &big, 1, 9).unwrap_err().kind(), "evaluation");
}
