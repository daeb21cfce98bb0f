//! Small dense graph models with hand-written backpropagation.
//!
//! Three architectures share one parameter layout (a list of affine layers,
//! weights stored `input x output`):
//!
//! * `Mlp`: `relu(X W0 + b0) W1 + b1`, graph-agnostic.
//! * `Sgc`: `X W + b` on features already propagated by [`sgc_precompute`].
//! * `Sage`: two mean-aggregation layers, each applying an affine map to the
//!   concatenation `[h_i, mean_{j in N(i)} h_j]`; rectifier after the first.
//!
//! Dropout (inverted scaling) is applied to the hidden activations only.

mod adam;
mod checkpoint;
mod loss;
mod propagate;
mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TemporalGraph;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{loss_and_grad, output_loss, sigmoid, LossMode};
pub use propagate::{neighbor_mean, neighbor_mean_backward, sgc_precompute};
pub use train::{train, TrainConfig, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Mlp,
    Sgc,
    Sage,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Sgc => "sgc",
            ModelKind::Sage => "sage",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mlp" => Ok(ModelKind::Mlp),
            "sgc" => Ok(ModelKind::Sgc),
            "sage" | "graphsage" => Ok(ModelKind::Sage),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Hyperparameters that fix a model's shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden_dim: usize,
    pub sgc_k: usize,
    pub dropout: f64,
}

impl ModelSpec {
    /// Defaults: 64 hidden units for the MLP, 32 for GraphSAGE, K = 2 for
    /// SGC, dropout 0.5.
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            hidden_dim: match kind {
                ModelKind::Mlp => 64,
                ModelKind::Sage => 32,
                ModelKind::Sgc => 0,
            },
            sgc_k: 2,
            dropout: 0.5,
        }
    }
}

/// One affine map, `weight` is `input x output`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|x| x.is_finite())
    }
}

/// Parameters plus the hyperparameters needed to run them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub spec: ModelSpec,
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    pub seed: u64,
}

/// Gradients share the model's layer layout.
pub type Gradients = Vec<Layer>;

/// Uniform Glorot initialization in `[-sqrt(6/(fan_in+fan_out)), +...]`.
pub fn glorot_init(fan_in: usize, fan_out: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    glorot_with(&mut rng, fan_in, fan_out, fan_in + fan_out)
}

fn glorot_with(rng: &mut impl Rng, rows: usize, cols: usize, fan_sum: usize) -> Array2<f64> {
    let bound = if fan_sum == 0 {
        0.0
    } else {
        (6.0 / fan_sum as f64).sqrt()
    };
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..=1.0) * bound)
}

impl ModelState {
    /// Freshly initialized model: Glorot weights, zero biases.
    pub fn new(spec: ModelSpec, input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |fan_in: usize, fan_out: usize| Layer {
            weight: glorot_with(&mut rng, fan_in, fan_out, fan_in + fan_out),
            bias: Array1::zeros(fan_out),
        };
        let h = spec.hidden_dim;
        let layers = match spec.kind {
            ModelKind::Mlp => vec![layer(input_dim, h), layer(h, output_dim)],
            ModelKind::Sgc => vec![layer(input_dim, output_dim)],
            ModelKind::Sage => vec![layer(2 * input_dim, h), layer(2 * h, output_dim)],
        };
        ModelState {
            spec,
            input_dim,
            layers,
            seed,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.bias.len())
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.layers.iter().map(Layer::zeros_like).collect()
    }

    /// Model input for `g`: raw features, or `S^K X` for SGC.
    pub fn prepare_input(&self, g: &TemporalGraph) -> Array2<f64> {
        let x = g.feature_matrix();
        match self.spec.kind {
            ModelKind::Sgc => sgc_precompute(g, &x, self.spec.sgc_k),
            _ => x,
        }
    }

    /// Appends `extra` output units. Existing parameters are kept bit-exactly;
    /// new weight columns are Glorot-initialized and new biases are zero.
    pub fn expand_output_layer(&self, extra: usize, seed: u64) -> ModelState {
        let mut out = self.clone();
        if extra == 0 {
            return out;
        }
        let last = out.layers.last_mut().expect("models have at least one layer");
        let (fan_in, old) = last.weight.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fresh = glorot_with(&mut rng, fan_in, extra, fan_in + old + extra);
        last.weight = concatenate(Axis(1), &[last.weight.view(), fresh.view()])
            .expect("row counts agree")
            .as_standard_layout()
            .into_owned();
        last.bias = concatenate(Axis(0), &[last.bias.view(), Array1::zeros(extra).view()]).expect("1-d concat");
        out
    }

    /// Logits for every vertex of `g`. `dropout` supplies the generator for
    /// training-mode dropout; `None` runs in evaluation mode.
    pub fn forward(&self, g: &TemporalGraph, x: &Array2<f64>, dropout: Option<&mut ChaCha8Rng>) -> Result<ForwardPass> {
        if x.nrows() != g.num_vertices() {
            return Err(Error::Contract(format!(
                "input has {} rows but the graph has {} vertices",
                x.nrows(),
                g.num_vertices()
            )));
        }
        if x.ncols() != self.input_dim {
            return Err(Error::Contract(format!(
                "input has {} columns but the model expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        let rate = self.spec.dropout;
        let adj = g.adjacency();
        let pass = match self.spec.kind {
            ModelKind::Sgc => {
                let l = &self.layers[0];
                ForwardPass {
                    logits: affine(x.view(), l),
                    cache: Cache::Sgc { input: x.clone() },
                }
            }
            ModelKind::Mlp => {
                let pre = affine(x.view(), &self.layers[0]);
                let (hidden, mask) = relu_dropout(&pre, rate, dropout);
                let logits = affine(hidden.view(), &self.layers[1]);
                ForwardPass {
                    logits,
                    cache: Cache::Mlp {
                        input: x.clone(),
                        pre,
                        mask,
                        hidden,
                    },
                }
            }
            ModelKind::Sage => {
                let a0 = concat_mean(adj, x.view());
                let pre = affine(a0.view(), &self.layers[0]);
                let (hidden, mask) = relu_dropout(&pre, rate, dropout);
                let a1 = concat_mean(adj, hidden.view());
                let logits = affine(a1.view(), &self.layers[1]);
                ForwardPass {
                    logits,
                    cache: Cache::Sage { a0, pre, mask, a1 },
                }
            }
        };
        Ok(pass)
    }

    /// Backpropagates `d_logits` through the cached forward pass.
    pub fn backward(&self, g: &TemporalGraph, pass: &ForwardPass, d_logits: &Array2<f64>) -> Gradients {
        let adj = g.adjacency();
        match &pass.cache {
            Cache::Sgc { input } => vec![affine_grad(input.view(), d_logits)],
            Cache::Mlp {
                input,
                pre,
                mask,
                hidden,
            } => {
                let out = affine_grad(hidden.view(), d_logits);
                let d_hidden = d_logits.dot(&self.layers[1].weight.t());
                let d_pre = relu_dropout_backward(d_hidden, pre, mask.as_ref());
                vec![affine_grad(input.view(), &d_pre), out]
            }
            Cache::Sage { a0, pre, mask, a1 } => {
                let out = affine_grad(a1.view(), d_logits);
                let d_a1 = d_logits.dot(&self.layers[1].weight.t());
                let h = pre.ncols();
                let d_self = d_a1.slice(s![.., ..h]);
                let d_mean = d_a1.slice(s![.., h..]);
                let d_hidden = &d_self + &neighbor_mean_backward(adj, d_mean);
                let d_pre = relu_dropout_backward(d_hidden, pre, mask.as_ref());
                vec![affine_grad(a0.view(), &d_pre), out]
            }
        }
    }
}

/// Logits plus the intermediates needed by [`ModelState::backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Array2<f64>,
    cache: Cache,
}

impl ForwardPass {
    /// Hidden-layer inputs to the rectifier; `None` for SGC.
    pub fn hidden_pre_activations(&self) -> Option<&Array2<f64>> {
        match &self.cache {
            Cache::Sgc { .. } => None,
            Cache::Mlp { pre, .. } | Cache::Sage { pre, .. } => Some(pre),
        }
    }
}

#[derive(Debug, Clone)]
enum Cache {
    Sgc {
        input: Array2<f64>,
    },
    Mlp {
        input: Array2<f64>,
        pre: Array2<f64>,
        mask: Option<Array2<f64>>,
        hidden: Array2<f64>,
    },
    Sage {
        a0: Array2<f64>,
        pre: Array2<f64>,
        mask: Option<Array2<f64>>,
        a1: Array2<f64>,
    },
}

fn affine(x: ArrayView2<'_, f64>, l: &Layer) -> Array2<f64> {
    x.dot(&l.weight) + &l.bias
}

fn affine_grad(x: ArrayView2<'_, f64>, d_out: &Array2<f64>) -> Layer {
    Layer {
        weight: x.t().dot(d_out),
        bias: d_out.sum_axis(Axis(0)),
    }
}

fn concat_mean(adj: &crate::graph::Csr, h: ArrayView2<'_, f64>) -> Array2<f64> {
    let mean = neighbor_mean(adj, h);
    concatenate(Axis(1), &[h, mean.view()]).expect("row counts agree")
}

fn relu_dropout(pre: &Array2<f64>, rate: f64, rng: Option<&mut ChaCha8Rng>) -> (Array2<f64>, Option<Array2<f64>>) {
    let mut hidden = pre.mapv(|z| z.max(0.0));
    let mask =
        match rng {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 - rate;
                let mask = Array2::from_shape_simple_fn(pre.raw_dim(), || {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                hidden *= &mask;
                Some(mask)
            }
            _ => None,
        };
    (hidden, mask)
}

fn relu_dropout_backward(mut d: Array2<f64>, pre: &Array2<f64>, mask: Option<&Array2<f64>>) -> Array2<f64> {
    if let Some(mask) = mask {
        d *= mask;
    }
    ndarray::Zip::from(&mut d).and(pre).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_vertex_graph() -> TemporalGraph {
        TemporalGraph::new(vec![0, 0], vec![None, None], vec![1.0, -2.0], 1, 1, vec![(0, 1)])
            .unwrap()
            .0
    }

    #[test]
    fn glorot_is_deterministic_and_bounded() {
        assert_eq!(glorot_init(3, 3, 11), glorot_init(3, 3, 11));
        assert_ne!(glorot_init(3, 3, 11), glorot_init(3, 3, 12));
        let w = glorot_init(600, 600, 5);
        let bound = (6.0f64 / 1200.0).sqrt();
        assert!(w.iter().all(|x| x.abs() <= bound && x.abs() <= 0.1));
    }

    #[test]
    fn glorot_mean_near_zero() {
        let w = glorot_init(100, 100, 3);
        // 10^4 draws, uniform on [-b, b]: the sample mean has sd b / sqrt(3e4)
        assert!(w.mean().unwrap().abs() < 0.01);
    }

    #[test]
    fn layer_shapes_compose() {
        let m = ModelState::new(ModelSpec::new(ModelKind::Sage), 5, 3, 0);
        assert_eq!(m.layers[0].weight.dim(), (10, 32));
        assert_eq!(m.layers[1].weight.dim(), (64, 3));
        let m = ModelState::new(ModelSpec::new(ModelKind::Mlp), 5, 3, 0);
        assert_eq!(m.layers[0].weight.dim(), (5, 64));
        assert_eq!(m.layers[1].weight.dim(), (64, 3));
        let m = ModelState::new(ModelSpec::new(ModelKind::Sgc), 5, 3, 0);
        assert_eq!(m.layers.len(), 1);
        assert_eq!(m.output_dim(), 3);
    }

    #[test]
    fn zero_parameters_give_zero_logits() {
        let g = two_vertex_graph();
        for kind in [ModelKind::Mlp, ModelKind::Sgc, ModelKind::Sage] {
            let mut m = ModelState::new(ModelSpec::new(kind), 1, 2, 0);
            for l in &mut m.layers {
                l.weight.fill(0.0);
                l.bias.fill(0.0);
            }
            let x = m.prepare_input(&g);
            let out = m.forward(&g, &x, None).unwrap();
            assert!(out.logits.iter().all(|&z| z == 0.0));
        }
    }

    #[test]
    fn sage_hand_unrolled() {
        // 1-d features, hidden width 1, one output; weights set by hand
        let g = two_vertex_graph();
        let mut spec = ModelSpec::new(ModelKind::Sage);
        spec.hidden_dim = 1;
        let mut m = ModelState::new(spec, 1, 1, 0);
        m.layers[0].weight = ndarray::array![[2.0], [0.5]];
        m.layers[0].bias = ndarray::array![0.1];
        m.layers[1].weight = ndarray::array![[1.5], [-1.0]];
        m.layers[1].bias = ndarray::array![0.2];
        let x = g.feature_matrix();
        let logits = m.forward(&g, &x, None).unwrap().logits;
        // layer 1: u = relu(2*1 + 0.5*(-2) + 0.1) = 1.1, v = relu(2*(-2) + 0.5*1 + 0.1) = 0
        // layer 2: u = 1.5*1.1 - 1*0 + 0.2 = 1.85, v = 1.5*0 - 1*1.1 + 0.2 = -0.9
        assert!((logits[[0, 0]] - 1.85).abs() < 1e-12);
        assert!((logits[[1, 0]] + 0.9).abs() < 1e-12);
    }

    #[test]
    fn sage_isolated_vertex_ignores_mean_half() {
        let g = TemporalGraph::new(vec![0], vec![None], vec![0.7, -0.3], 2, 1, vec![])
            .unwrap()
            .0;
        let m = ModelState::new(ModelSpec::new(ModelKind::Sage), 2, 3, 4);
        let mut altered = m.clone();
        // zero the neighbor-mean half of both layers' weights
        altered.layers[0].weight.slice_mut(s![2.., ..]).fill(0.0);
        altered.layers[1].weight.slice_mut(s![32.., ..]).fill(0.0);
        let x = g.feature_matrix();
        assert_eq!(
            m.forward(&g, &x, None).unwrap().logits,
            altered.forward(&g, &x, None).unwrap().logits
        );
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let g = two_vertex_graph();
        let m = ModelState::new(ModelSpec::new(ModelKind::Mlp), 3, 2, 0);
        let x = g.feature_matrix();
        assert!(matches!(m.forward(&g, &x, None), Err(Error::Contract(_))));
    }

    #[test]
    fn expansion_preserves_old_outputs() {
        let g = two_vertex_graph();
        for kind in [ModelKind::Mlp, ModelKind::Sgc, ModelKind::Sage] {
            let m = ModelState::new(ModelSpec::new(kind), 1, 3, 9);
            assert_eq!(m.expand_output_layer(0, 1), m);
            let grown = m.expand_output_layer(2, 1);
            assert_eq!(grown.output_dim(), 5);
            let (old, new) = (m.layers.last().unwrap(), grown.layers.last().unwrap());
            assert_eq!(new.weight.slice(s![.., ..3]), old.weight);
            assert_eq!(new.bias.slice(s![..3]), old.bias);
            assert!(new.bias.slice(s![3..]).iter().all(|&b| b == 0.0));
            for (a, b) in m.layers.iter().zip(&grown.layers).take(m.layers.len() - 1) {
                assert_eq!(a, b);
            }
            let x = m.prepare_input(&g);
            let before = m.forward(&g, &x, None).unwrap().logits;
            let after = grown.forward(&g, &x, None).unwrap().logits;
            assert_eq!(after.slice(s![.., ..3]), before);
        }
    }

    #[test]
    fn dropout_only_in_training_mode() {
        let g = two_vertex_graph();
        let m = ModelState::new(ModelSpec::new(ModelKind::Mlp), 1, 2, 0);
        let x = g.feature_matrix();
        let a = m.forward(&g, &x, None).unwrap().logits;
        let b = m.forward(&g, &x, None).unwrap().logits;
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = m.forward(&g, &x, Some(&mut rng)).unwrap().logits;
        assert_ne!(a, c);
    }
}
