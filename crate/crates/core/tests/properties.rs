mod support;

use std::collections::{BTreeMap, BTreeSet};

use lgl_core::graph::{build_task_sequence, load_dataset, save_dataset, FeatureEncoding, History, TemporalGraph};
use lgl_core::metrics::{drift_magnitude, forward_transfer, mcc, open_macro_f1, symmetric_divergence, OpenLabel};
use lgl_core::models::{sgc_precompute, ModelKind, ModelSpec, ModelState};
use lgl_core::openworld::argmax;
use lgl_core::synth::{generate, SynthConfig};
use lgl_core::tdiff::{k_hop_time_diffs, percentile};
use proptest::prelude::*;
use support::{brute_force_time_diffs, dense_sgc, random_graph};

fn permuted(g: &TemporalGraph, perm: &[usize]) -> TemporalGraph {
    // perm[old] = new
    let n = g.num_vertices();
    let d = g.feature_dim();
    let mut times = vec![0; n];
    let mut labels = vec![None; n];
    let mut features = vec![0f32; n * d];
    for (old, &new) in perm.iter().enumerate() {
        times[new] = g.time(old);
        labels[new] = g.label(old);
        features[new * d..(new + 1) * d].copy_from_slice(g.feature_row(old));
    }
    let edges: Vec<_> = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
    TemporalGraph::new(times, labels, features, d, g.num_classes(), edges)
        .unwrap()
        .0
}

fn distribution(raw: &[f64]) -> BTreeMap<usize, f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().enumerate().map(|(i, x)| (i, x / total)).collect()
}

fn plain_macro_f1(y: &[u32], p: &[u32]) -> f64 {
    let classes: BTreeSet<u32> = y.iter().chain(p).copied().collect();
    let scores: Vec<f64> = classes
        .iter()
        .map(|&c| {
            let tp = y.iter().zip(p).filter(|(a, b)| **a == c && **b == c).count() as f64;
            let pred = p.iter().filter(|&&b| b == c).count() as f64;
            let truth = y.iter().filter(|&&a| a == c).count() as f64;
            let prec = if pred > 0.0 { tp / pred } else { 0.0 };
            let rec = if truth > 0.0 { tp / truth } else { 0.0 };
            if prec + rec > 0.0 {
                2.0 * prec * rec / (prec + rec)
            } else {
                0.0
            }
        })
        .collect();
    scores.iter().sum::<f64>() / scores.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn time_diffs_match_all_pairs_oracle(seed in any::<u64>(), n in 1usize..30, p in 0.0f64..0.3, k in 1usize..4) {
        let g = random_graph(seed, n, 6, p, 2, 2);
        let fast = k_hop_time_diffs(&g, k).unwrap();
        prop_assert_eq!(fast.counts, brute_force_time_diffs(&g, k));
    }

    #[test]
    fn percentiles_are_monotone(seed in any::<u64>(), a in 1.0f64..100.0, b in 1.0f64..100.0) {
        let g = random_graph(seed, 20, 8, 0.3, 2, 2);
        let h = k_hop_time_diffs(&g, 2).unwrap();
        prop_assume!(!h.is_empty());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(percentile(&h, lo).unwrap() <= percentile(&h, hi).unwrap());
    }

    #[test]
    fn logits_are_permutation_equivariant(seed in any::<u64>(), n in 2usize..12, kind in 0usize..3) {
        let kind = [ModelKind::Mlp, ModelKind::Sgc, ModelKind::Sage][kind];
        let g = random_graph(seed, n, 3, 0.4, 3, 2);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left((seed % n as u64) as usize);
        perm.swap(0, n - 1);
        let h = permuted(&g, &perm);
        let model = ModelState::new(ModelSpec::new(kind), 3, 2, seed);
        let a = model.forward(&g, &model.prepare_input(&g), None).unwrap().logits;
        let b = model.forward(&h, &model.prepare_input(&h), None).unwrap().logits;
        for old in 0..n {
            for c in 0..2 {
                prop_assert!((a[[old, c]] - b[[perm[old], c]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sgc_matches_dense_oracle(seed in any::<u64>(), n in 1usize..15, k in 0usize..4) {
        let g = random_graph(seed, n, 2, 0.3, 3, 2);
        let x = g.feature_matrix();
        let fast = sgc_precompute(&g, &x, k);
        let slow = dense_sgc(&g, &x, k);
        for (a, b) in fast.iter().zip(slow.iter()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn expansion_preserves_old_argmax(seed in any::<u64>(), extra in 0usize..4, kind in 0usize..3) {
        let kind = [ModelKind::Mlp, ModelKind::Sgc, ModelKind::Sage][kind];
        let g = random_graph(seed, 8, 3, 0.3, 3, 3);
        let model = ModelState::new(ModelSpec::new(kind), 3, 3, seed);
        let grown = model.expand_output_layer(extra, seed.wrapping_add(1));
        let x = model.prepare_input(&g);
        let a = model.forward(&g, &x, None).unwrap().logits;
        let b = grown.forward(&g, &x, None).unwrap().logits;
        prop_assert_eq!(b.ncols(), 3 + extra);
        for v in 0..8 {
            prop_assert_eq!(
                argmax(a.row(v).iter().copied()),
                argmax(b.row(v).iter().take(3).copied())
            );
        }
    }

    #[test]
    fn task_windows_respect_time(seed in any::<u64>(), c in proptest::option::of(1u64..4)) {
        let g = random_graph(seed, 40, 7, 0.1, 2, 3);
        let history = c.map_or(History::Full, History::Limited);
        let Ok(tasks) = build_task_sequence(&g, history) else { return Ok(()) };
        let mut tested = BTreeSet::new();
        for task in &tasks {
            let lo = history.window_start(task.t);
            for (i, &v) in task.window.iter().enumerate() {
                prop_assert!(g.time(v) >= lo && g.time(v) <= task.t);
                if task.train_mask[i] {
                    prop_assert!(g.time(v) < task.t && g.label(v).is_some());
                }
                prop_assert_eq!(task.test_mask[i], g.time(v) == task.t);
                if task.test_mask[i] {
                    prop_assert!(tested.insert(v));
                }
            }
        }
        let first = tasks[0].t;
        let expected: BTreeSet<usize> = (0..g.num_vertices()).filter(|&v| g.time(v) >= first).collect();
        prop_assert_eq!(tested, expected);
    }

    #[test]
    fn dataset_round_trip(seed in any::<u64>(), n in 0usize..20, binary in any::<bool>()) {
        let g = random_graph(seed, n, 4, 0.3, 3, 2);
        let dir = tempfile::tempdir().unwrap();
        let enc = if binary { FeatureEncoding::Binary } else { FeatureEncoding::Csv };
        save_dataset(&g, dir.path(), enc).unwrap();
        prop_assert_eq!(load_dataset(dir.path()).unwrap().graph, g);
    }

    #[test]
    fn synthetic_graphs_are_valid(seed in any::<u64>(), skew in 0.0f64..2.0, late in 1i64..6) {
        let cfg = SynthConfig {
            num_timestamps: 6,
            vertices_per_timestamp: 15,
            num_initial_classes: 2,
            new_class_schedule: [(late, 1)].into_iter().collect(),
            class_skew: skew,
            feature_dim: 4,
            seed,
            ..SynthConfig::default()
        };
        let g = generate(&cfg).unwrap();
        prop_assert_eq!(g.num_vertices(), 90);
        prop_assert!(g.labels().iter().all(|l| matches!(l, Some(c) if (*c as usize) < 3)));
        prop_assert!(g.edges().iter().all(|&(u, v)| u < v));
        let first = (0..90).find(|&v| g.label(v) == Some(2)).unwrap();
        prop_assert_eq!(g.time(first), late);
    }

    #[test]
    fn total_variation_triangle(
        a in proptest::collection::vec(0.01f64..1.0, 4),
        b in proptest::collection::vec(0.01f64..1.0, 4),
        c in proptest::collection::vec(0.01f64..1.0, 4),
    ) {
        let (p, q, r) = (distribution(&a), distribution(&b), distribution(&c));
        let pr = drift_magnitude(&p, &r).unwrap();
        let via = drift_magnitude(&p, &q).unwrap() + drift_magnitude(&q, &r).unwrap();
        prop_assert!(pr <= via + 1e-12);
        prop_assert!((0.0..=1.0).contains(&pr));
    }

    #[test]
    fn mcc_swap_invariance(tp in 0u64..500, tn in 0u64..500, fp in 0u64..500, fn_ in 0u64..500) {
        let m = mcc(tp, tn, fp, fn_);
        prop_assert_eq!(m, mcc(tn, tp, fn_, fp));
        prop_assert!((-1.0..=1.0).contains(&m));
    }

    #[test]
    fn fwt_antisymmetry(a in proptest::collection::vec(0.0f64..1.0, 2..12), shift in -0.5f64..0.5) {
        let b: Vec<f64> = a.iter().map(|x| x + shift).collect();
        prop_assert_eq!(forward_transfer(&a, &b).unwrap(), -forward_transfer(&b, &a).unwrap());
    }

    #[test]
    fn open_f1_reduces_to_macro_f1(pairs in proptest::collection::vec((0u32..4, 0u32..4), 1..40)) {
        let known: BTreeSet<u32> = (0..4).collect();
        let y: Vec<u32> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<u32> = pairs.iter().map(|p| p.1).collect();
        let yo: Vec<OpenLabel> = y.iter().map(|&c| OpenLabel::Class(c)).collect();
        let po: Vec<OpenLabel> = p.iter().map(|&c| OpenLabel::Class(c)).collect();
        let open = open_macro_f1(&yo, &po, &known).unwrap();
        prop_assert!((open - plain_macro_f1(&y, &p)).abs() < 1e-12);
    }

    #[test]
    fn divergence_symmetric_and_non_negative(
        a in proptest::collection::vec(0.01f64..1.0, 5),
        b in proptest::collection::vec(0.01f64..1.0, 5),
    ) {
        let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<_>>() };
        let (p, q) = (norm(&a), norm(&b));
        let d = symmetric_divergence(&p, &q, None).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!((d - symmetric_divergence(&q, &p, None).unwrap()).abs() < 1e-15);
    }
}
