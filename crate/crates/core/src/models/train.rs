use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, loss_and_grad, AdamState, LossMode, ModelState};
use crate::error::{Error, Result};
use crate::graph::TemporalGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Full-batch update steps.
    pub epochs: usize,
    pub loss_mode: LossMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
            loss_mode: LossMode::Categorical,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rates considered when tuning.
    pub const LEARNING_RATE_GRID: [f64; 6] = [0.1, 0.05, 0.01, 0.005, 0.001, 0.0005];

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Full-batch trainer holding one Adam state across epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: ModelState,
    opt: AdamState,
    rng: ChaCha8Rng,
    cfg: TrainConfig,
}

impl Trainer {
    pub fn new(model: ModelState, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Trainer {
            opt: AdamState::new(&model),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            model,
            cfg: *cfg,
        })
    }

    /// One Adam step; returns the loss before the update.
    pub fn epoch(
        &mut self,
        g: &TemporalGraph,
        x: &Array2<f64>,
        targets: &[Option<usize>],
        mask: &[bool],
        class_weights: Option<&[f64]>,
    ) -> Result<f64> {
        let pass = self.model.forward(g, x, Some(&mut self.rng))?;
        let (loss, grads) = loss_and_grad(&self.model, g, &pass, targets, mask, self.cfg.loss_mode, class_weights)?;
        adam_step(
            &mut self.model,
            &grads,
            &mut self.opt,
            self.cfg.learning_rate,
            self.cfg.weight_decay,
        )?;
        if !self.model.is_finite() {
            return Err(Error::NonFinite("trained parameters"));
        }
        Ok(loss)
    }

    pub fn model(&self) -> &ModelState {
        &self.model
    }

    pub fn into_model(self) -> ModelState {
        self.model
    }
}

/// Runs `cfg.epochs` full-batch Adam steps from a fresh optimizer state and
/// returns the final parameters. Dropout draws come from `cfg.seed`.
pub fn train(
    model: &ModelState,
    g: &TemporalGraph,
    x: &Array2<f64>,
    targets: &[Option<usize>],
    mask: &[bool],
    cfg: &TrainConfig,
    class_weights: Option<&[f64]>,
) -> Result<ModelState> {
    let mut trainer = Trainer::new(model.clone(), cfg)?;
    for _ in 0..cfg.epochs {
        trainer.epoch(g, x, targets, mask, class_weights)?;
    }
    Ok(trainer.into_model())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelKind, ModelSpec};
    use rand_distr::{Distribution, Normal};

    /// Two Gaussian blobs in the plane, 10 vertices each, no edges.
    fn blobs() -> (TemporalGraph, Vec<Option<usize>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for v in 0..20 {
            let c = v % 2;
            let center = if c == 0 { [-1.0, -1.0] } else { [1.0, 1.0] };
            for d in center {
                features.push((d + noise.sample(&mut rng)) as f32);
            }
            labels.push(Some(c as u32));
        }
        let g = TemporalGraph::new(vec![0; 20], labels.clone(), features, 2, 2, vec![])
            .unwrap()
            .0;
        (g, labels.iter().map(|l| l.map(|c| c as usize)).collect())
    }

    #[test]
    fn separable_toy_reaches_full_training_accuracy() {
        let (g, targets) = blobs();
        let mask = vec![true; 20];
        let model = ModelState::new(ModelSpec::new(ModelKind::Mlp), 2, 2, 7);
        let x = model.prepare_input(&g);
        let trained = train(&model, &g, &x, &targets, &mask, &TrainConfig::default(), None).unwrap();
        let logits = trained.forward(&g, &x, None).unwrap().logits;
        let correct = logits
            .rows()
            .into_iter()
            .zip(&targets)
            .filter(|(row, t)| {
                let pred = if row[0] >= row[1] { 0 } else { 1 };
                Some(pred) == **t
            })
            .count();
        assert_eq!(correct, 20);
    }

    #[test]
    fn training_is_deterministic_and_moves_parameters() {
        let (g, targets) = blobs();
        let mask = vec![true; 20];
        let model = ModelState::new(ModelSpec::new(ModelKind::Sage), 2, 2, 3);
        let x = model.prepare_input(&g);
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let a = train(&model, &g, &x, &targets, &mask, &cfg, None).unwrap();
        let b = train(&model, &g, &x, &targets, &mask, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, model);
    }

    #[test]
    fn zero_epochs_rejected() {
        let (g, targets) = blobs();
        let model = ModelState::new(ModelSpec::new(ModelKind::Mlp), 2, 2, 0);
        let x = model.prepare_input(&g);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(&model, &g, &x, &targets, &[true; 20], &cfg, None).is_err());
    }
}
