use ndarray::{Array, Dimension, Zip};

use super::{Gradients, Layer, ModelState};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<Layer>,
    second: Vec<Layer>,
    step: u32,
}

impl AdamState {
    /// Zero moments shaped like `model`.
    pub fn new(model: &ModelState) -> Self {
        AdamState {
            first: model.zero_gradients(),
            second: model.zero_gradients(),
            step: 0,
        }
    }

    pub fn step(&self) -> u32 {
        self.step
    }
}

struct StepSize {
    lr: f64,
    weight_decay: f64,
    bias_fix1: f64,
    bias_fix2: f64,
}

fn update<D: Dimension>(
    param: &mut Array<f64, D>,
    grad: &Array<f64, D>,
    m: &mut Array<f64, D>,
    v: &mut Array<f64, D>,
    step: &StepSize,
) {
    Zip::from(param).and(grad).and(m).and(v).for_each(|p, &g, m, v| {
        let g = g + step.weight_decay * *p;
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / step.bias_fix1;
        let v_hat = *v / step.bias_fix2;
        *p -= step.lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    });
}

/// One Adam update with the weight-decay term `wd * param` added to the
/// gradient.
pub fn adam_step(
    model: &mut ModelState,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    let shapes_match = grads.len() == model.layers.len()
        && state.first.len() == model.layers.len()
        && model.layers.iter().zip(grads).zip(&state.first).all(|((p, g), m)| {
            p.weight.dim() == g.weight.dim()
                && p.bias.dim() == g.bias.dim()
                && p.weight.dim() == m.weight.dim()
                && p.bias.dim() == m.bias.dim()
        });
    if !shapes_match {
        return Err(Error::Contract(
            "gradient or optimizer shapes differ from the model".into(),
        ));
    }
    state.step += 1;
    let step = StepSize {
        lr,
        weight_decay,
        bias_fix1: 1.0 - ADAM_BETA1.powi(state.step as i32),
        bias_fix2: 1.0 - ADAM_BETA2.powi(state.step as i32),
    };
    for (i, layer) in model.layers.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.first[i], &mut state.second[i], &grads[i]);
        update(&mut layer.weight, &g.weight, &mut m.weight, &mut v.weight, &step);
        update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, &step);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelKind, ModelSpec};
    use ndarray::{array, Array1, Array2};

    fn scalar_model(value: f64) -> ModelState {
        let mut m = ModelState::new(ModelSpec::new(ModelKind::Sgc), 1, 1, 0);
        m.layers[0].weight = array![[value]];
        m.layers[0].bias = array![0.0];
        m
    }

    fn grads(w: f64) -> Gradients {
        vec![Layer {
            weight: array![[w]],
            bias: array![0.0],
        }]
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut m = ModelState::new(ModelSpec::new(ModelKind::Mlp), 3, 2, 1);
        let before = m.clone();
        let mut st = AdamState::new(&m);
        let zero = m.zero_gradients();
        for _ in 0..5 {
            adam_step(&mut m, &zero, &mut st, 0.1, 0.0).unwrap();
        }
        assert_eq!(m, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut m = scalar_model(0.0);
        let mut st = AdamState::new(&m);
        adam_step(&mut m, &grads(1.0), &mut st, 0.1, 0.0).unwrap();
        // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((m.layers[0].weight[[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn elementwise_independence() {
        let mut joint = ModelState::new(ModelSpec::new(ModelKind::Sgc), 2, 1, 0);
        joint.layers[0].weight = array![[0.5], [-0.25]];
        joint.layers[0].bias = Array1::zeros(1);
        let g = vec![Layer {
            weight: array![[0.3], [-2.0]],
            bias: array![0.0],
        }];
        let mut st = AdamState::new(&joint);
        let mut a = scalar_model(0.5);
        let mut b = scalar_model(-0.25);
        let (mut sa, mut sb) = (AdamState::new(&a), AdamState::new(&b));
        for _ in 0..3 {
            adam_step(&mut joint, &g, &mut st, 0.05, 0.01).unwrap();
            adam_step(&mut a, &grads(0.3), &mut sa, 0.05, 0.01).unwrap();
            adam_step(&mut b, &grads(-2.0), &mut sb, 0.05, 0.01).unwrap();
        }
        assert_eq!(joint.layers[0].weight[[0, 0]], a.layers[0].weight[[0, 0]]);
        assert_eq!(joint.layers[0].weight[[1, 0]], b.layers[0].weight[[0, 0]]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut m = scalar_model(0.0);
        let mut st = AdamState::new(&m);
        let bad = vec![Layer {
            weight: Array2::zeros((2, 1)),
            bias: array![0.0],
        }];
        assert!(adam_step(&mut m, &bad, &mut st, 0.1, 0.0).is_err());
    }
}
