//! Independent oracles and fixtures shared by integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use lgl_core::graph::TemporalGraph;
use lgl_core::models::{output_loss, LossMode, ModelKind, ModelSpec, ModelState};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random labeled graph with `n` vertices, times in `0..num_times` and
/// independent edges of probability `p`.
pub fn random_graph(seed: u64, n: usize, num_times: i64, p: f64, feature_dim: usize, classes: usize) -> TemporalGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times: Vec<i64> = (0..n).map(|_| rng.random_range(0..num_times)).collect();
    let labels = (0..n).map(|_| Some(rng.random_range(0..classes as u32))).collect();
    let features = (0..n * feature_dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    TemporalGraph::new(times, labels, features, feature_dim, classes, edges)
        .unwrap()
        .0
}

/// All-pairs hop distances by Floyd-Warshall.
pub fn hop_distances(g: &TemporalGraph) -> Vec<Vec<usize>> {
    let n = g.num_vertices();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = 0;
    }
    for &(u, v) in g.edges() {
        d[u][v] = 1;
        d[v][u] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Differences `time(u) - time(v)` over ordered pairs `u != v` joined by a
/// path of at most `k` edges with `time(v) <= time(u)`.
pub fn brute_force_time_diffs(g: &TemporalGraph, k: usize) -> BTreeMap<u64, u64> {
    let d = hop_distances(g);
    let mut out = BTreeMap::new();
    for (u, row) in d.iter().enumerate() {
        for (v, &hops) in row.iter().enumerate() {
            if u != v && hops <= k && g.time(v) <= g.time(u) {
                *out.entry((g.time(u) - g.time(v)) as u64).or_insert(0) += 1;
            }
        }
    }
    out
}

/// Dense `(D+I)^-1/2 (A+I) (D+I)^-1/2` raised to `k`, applied to `x`.
pub fn dense_sgc(g: &TemporalGraph, x: &Array2<f64>, k: usize) -> Array2<f64> {
    let n = g.num_vertices();
    let mut a = Array2::<f64>::eye(n);
    for &(u, v) in g.edges() {
        a[[u, v]] = 1.0;
        a[[v, u]] = 1.0;
    }
    let deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    let s = Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (deg[i] * deg[j]).sqrt());
    let mut out = x.clone();
    for _ in 0..k {
        out = s.dot(&out);
    }
    out
}

/// Outcome of one finite-difference sweep over every parameter.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    /// Entries whose perturbation flips a rectifier, where the loss is not
    /// differentiable and the central difference is not a valid reference.
    pub kinks: usize,
    pub max_rel_err: f64,
}

pub const FD_STEP: f64 = 1e-3;
pub const FD_REL_TOL: f64 = 1e-4;
const REL_FLOOR: f64 = 1e-7;

fn rectifier_pattern(model: &ModelState, g: &TemporalGraph, x: &Array2<f64>) -> Option<Vec<bool>> {
    let pass = model.forward(g, x, None).unwrap();
    pass.hidden_pre_activations()
        .map(|p| p.iter().map(|&z| z > 0.0).collect())
}

/// Compares analytic gradients against central differences on a random
/// 5 to 10 vertex instance.
pub fn gradient_check(kind: ModelKind, mode: LossMode, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1FF);
    let n = rng.random_range(5..=10);
    let classes = 3;
    let g = random_graph(seed, n, 3, 0.4, 4, classes);
    let model = ModelState::new(ModelSpec::new(kind), 4, classes, seed);
    let x = model.prepare_input(&g);
    let targets: Vec<Option<usize>> = g.labels().iter().map(|l| l.map(|c| c as usize)).collect();
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.7).collect();
    mask[0] = true;
    let weights: Option<Vec<f64>> =
        (mode == LossMode::WeightedBinary).then(|| (0..classes).map(|_| rng.random_range(0.5..3.0)).collect());

    let loss = |m: &ModelState| {
        let logits = m.forward(&g, &x, None).unwrap().logits;
        output_loss(&logits, &targets, &mask, mode, weights.as_deref())
            .unwrap()
            .0
    };
    let pass = model.forward(&g, &x, None).unwrap();
    let (_, d_logits) = output_loss(&pass.logits, &targets, &mask, mode, weights.as_deref()).unwrap();
    let grads = model.backward(&g, &pass, &d_logits);
    let base_pattern = rectifier_pattern(&model, &g, &x);

    let mut out = GradCheck::default();
    for (li, layer) in model.layers.iter().enumerate() {
        let entries = layer.weight.len() + layer.bias.len();
        for e in 0..entries {
            let perturbed = |delta: f64| {
                let mut m = model.clone();
                let l = &mut m.layers[li];
                if e < l.weight.len() {
                    let c = l.weight.ncols();
                    l.weight[[e / c, e % c]] += delta;
                } else {
                    l.bias[e - l.weight.len()] += delta;
                }
                m
            };
            let (plus, minus) = (perturbed(FD_STEP), perturbed(-FD_STEP));
            if base_pattern.is_some()
                && (rectifier_pattern(&plus, &g, &x) != base_pattern
                    || rectifier_pattern(&minus, &g, &x) != base_pattern)
            {
                out.kinks += 1;
                continue;
            }
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            let g_layer = &grads[li];
            let analytic = if e < g_layer.weight.len() {
                let c = g_layer.weight.ncols();
                g_layer.weight[[e / c, e % c]]
            } else {
                g_layer.bias[e - g_layer.weight.len()]
            };
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
            out.max_rel_err = out.max_rel_err.max(rel);
            out.checked += 1;
        }
    }
    out
}
