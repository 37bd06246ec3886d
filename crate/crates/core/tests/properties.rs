use std::collections::HashSet;

use nalgebra::DMatrix;
use proptest::prelude::*;

use mlfair::attributes::{divergence, AttributeMatrix};
use mlfair::coarsen::{coarsen_hierarchy, load_hierarchy, save_hierarchy};
use mlfair::config::PipelineConfig;
use mlfair::downstream::lp_split;
use mlfair::embed::{read_embedding, write_embedding, Embedding};
use mlfair::graph::{read_edge_list, write_edge_list};
use mlfair::metrics::{delta_dp, GroupedPredictions};
use mlfair::refine::{build_fair_edge_mask, graph_inputs, RefinementModel};
use mlfair::Graph;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n, 0.1f64..5.0), 0..4 * n)
            .prop_map(move |edges| Graph::from_edges(n, edges).unwrap())
    })
}

fn attributed(max_n: usize) -> impl Strategy<Value = (Graph, AttributeMatrix)> {
    graph_strategy(max_n).prop_flat_map(|g| {
        let n = g.node_count();
        prop::collection::vec(0..3usize, n).prop_map(move |codes| {
            let s = AttributeMatrix::from_codes("a", &codes, 3).unwrap();
            (g.clone(), s)
        })
    })
}

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len).prop_filter("non-zero mass", |v| v.iter().sum::<f64>() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coarsening_bounds_and_degree((g, s) in attributed(60), levels in 0usize..5, lambda_c in 0.0f64..=1.0) {
        let total = g.total_degree();
        let h = coarsen_hierarchy(g, s, levels, lambda_c).unwrap();
        for w in h.levels.windows(2) {
            let (f, c) = (&w[0].graph, &w[1].graph);
            prop_assert!(2 * c.node_count() >= f.node_count());
            prop_assert!(c.node_count() <= f.node_count());
            prop_assert!(c.edge_count() <= f.edge_count());
        }
        for lv in &h.levels {
            prop_assert!((lv.graph.total_degree() - total).abs() <= 1e-9 * total.max(1.0));
            // attribute mass is conserved: one unit per original node
            let mass: f64 = lv.attributes.column_sums().iter().sum();
            prop_assert!((mass - h.levels[0].graph.node_count() as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn propagation_is_symmetric_with_bounded_spectrum(g in graph_strategy(30)) {
        let p = g.normalized_adjacency(true).unwrap();
        prop_assert!(p.is_symmetric(1e-12));
        let eig = p.to_dense().symmetric_eigen();
        for &l in eig.eigenvalues.iter() {
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&l), "eigenvalue {}", l);
        }
    }

    #[test]
    fn edge_list_round_trip(g in graph_strategy(40)) {
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let back = read_edge_list(buf.as_slice()).unwrap();
        prop_assert_eq!(back.node_count(), g.node_count());
        let mut a: Vec<_> = g.edges().map(|(u, v, w)| (g.name(u).to_string(), g.name(v).to_string(), w.to_bits())).collect();
        let mut b: Vec<_> = back.edges().map(|(u, v, w)| (back.name(u).to_string(), back.name(v).to_string(), w.to_bits())).collect();
        let canon = |x: &mut Vec<(String, String, u64)>| {
            for e in x.iter_mut() {
                if e.0 > e.1 { std::mem::swap(&mut e.0, &mut e.1); }
            }
            x.sort();
        };
        canon(&mut a);
        canon(&mut b);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn embedding_text_round_trip_is_bitwise(rows in 1usize..12, dim in 1usize..6, seed in any::<u64>()) {
        let mut state = seed | 1;
        let m = DMatrix::from_fn(rows, dim, |_, _| {
            state ^= state << 13; state ^= state >> 7; state ^= state << 17;
            f64::from_bits(state >> 2) * if state & 1 == 0 { 1.0 } else { -1.0 }
        });
        let e = Embedding::new(m);
        let names: Vec<String> = (0..rows).map(|i| format!("v{i}")).collect();
        let mut buf = Vec::new();
        write_embedding(&e, &names, &mut buf).unwrap();
        let (back_names, back) = read_embedding(buf.as_slice()).unwrap();
        prop_assert_eq!(back_names, names);
        for (a, b) in back.matrix.iter().zip(e.matrix.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn divergence_range(a in distribution(4), b in distribution(4)) {
        let phi = divergence(&a, &b).unwrap();
        prop_assert!((0.0..1.0).contains(&phi));
        prop_assert!(divergence(&a, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn delta_dp_is_bounded_and_permutation_invariant(
        rows in prop::collection::vec((0usize..2, 0usize..3), 6..80),
        shift in 0usize..80,
    ) {
        let mut y_hat: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let mut group: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let gp = GroupedPredictions { y_hat: y_hat.clone(), y: None, group: group.clone(), advantaged: vec![1] };
        let dp = delta_dp(&gp).unwrap();
        // population std of values in [0, 1] is at most 1/2
        prop_assert!((0.0..=0.5).contains(&dp));
        let k = shift % y_hat.len();
        y_hat.rotate_left(k);
        group.rotate_left(k);
        let rotated = delta_dp(&GroupedPredictions { y_hat, y: None, group, advantaged: vec![1] }).unwrap();
        prop_assert!((rotated - dp).abs() < 1e-15);
    }

    #[test]
    fn refined_rows_are_bounded((g, s) in attributed(25), dim in 1usize..6, seed in any::<u64>()) {
        let inputs = graph_inputs(&g, &s).unwrap();
        let h0 = DMatrix::from_fn(g.node_count(), dim, |i, j| ((i * 7 + j * 3) as f64).sin());
        let model = RefinementModel::glorot(2, dim, s.width(), seed);
        let out = model.forward(&inputs, &h0).unwrap();
        prop_assert!(out.last().iter().all(|x| x.abs() <= 1.0));
        let mask = build_fair_edge_mask(&g, &s, 0.0).unwrap();
        let (l, _) = model.gradients(&inputs, &h0, &mask, 0.5).unwrap();
        prop_assert!((-1.0..=0.0).contains(&l.fairness));
        prop_assert!(l.utility >= 0.0);
    }

    #[test]
    fn config_text_is_idempotent(
        levels in 0usize..8,
        lambda_c in 0.0f64..=1.0,
        lambda_r in 0.0f64..=1.0,
        dim in 1usize..512,
        seed in any::<u64>(),
        deepwalk in any::<bool>(),
    ) {
        let mut cfg = PipelineConfig::default();
        cfg.levels = levels;
        cfg.lambda_c = lambda_c;
        cfg.refine.lambda_r = lambda_r;
        cfg.embedder.dim = dim;
        cfg.seed = seed;
        cfg.set("embedder", if deepwalk { "deepwalk" } else { "spectral" }).unwrap();
        let text = cfg.to_text();
        let back = PipelineConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_text(), text);
    }
}

#[test]
fn hierarchy_files_round_trip() {
    let edges: Vec<(usize, usize, f64)> = (0..40).flat_map(|u| [(u, (u + 1) % 40, 1.0), (u, (u * 7 + 3) % 40, 0.5)]).collect();
    let g = Graph::from_edges(40, edges).unwrap();
    let codes: Vec<usize> = (0..40).map(|u| u % 3).collect();
    let s = AttributeMatrix::from_codes("a", &codes, 3).unwrap();
    let h = coarsen_hierarchy(g, s, 3, 0.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_hierarchy(&h, dir.path()).unwrap();
    let back = load_hierarchy(dir.path(), 0.5).unwrap();
    assert_eq!(back.depth(), h.depth());
    for (a, b) in back.levels.iter().zip(&h.levels) {
        assert_eq!(a.graph.node_count(), b.graph.node_count());
        assert_eq!(a.graph.edge_count(), b.graph.edge_count());
        assert!((a.graph.total_degree() - b.graph.total_degree()).abs() < 1e-12);
        assert_eq!(a.attributes, b.attributes);
    }
    assert_eq!(back.merges, h.merges);
}

/// Held-out edges must not reach the training graph, and no sampled
/// negative may be a real edge.
#[test]
fn link_split_does_not_leak() {
    let mut edges = Vec::new();
    for u in 0..120usize {
        for k in [1, 5, 17] {
            edges.push((u, (u + k) % 120, 1.0));
        }
    }
    edges.push((3, 3, 1.0));
    let g = Graph::from_edges(120, edges).unwrap();
    for seed in 0..5 {
        let split = lp_split(&g, 0.1, seed).unwrap();
        assert_eq!(split.test_pos.len(), g.edge_count() / 10);
        assert_eq!(split.test_neg.len(), split.test_pos.len());
        assert_eq!(split.train_neg.len(), split.train_pos.len());
        for &(u, v) in &split.test_pos {
            assert!(g.weight(u, v) > 0.0);
            assert_eq!(split.train_graph.weight(u, v), 0.0, "held-out edge ({u}, {v}) leaked");
        }
        let train: HashSet<(usize, usize)> = split.train_pos.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        assert!(split.test_pos.iter().all(|&(u, v)| !train.contains(&(u.min(v), u.max(v)))));
        for &(u, v) in split.test_neg.iter().chain(&split.train_neg) {
            assert!(u != v && g.weight(u, v) == 0.0);
        }
        assert_eq!(split.train_graph.self_loop(3), g.self_loop(3));
        assert_eq!(split.train_graph.edge_count() + split.test_pos.len(), g.edge_count());
    }
}
