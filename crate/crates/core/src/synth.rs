//! Seeded generator of small evolving graphs with skewed, emerging classes.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ClassId, TemporalGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_timestamps: usize,
    pub vertices_per_timestamp: usize,
    pub num_initial_classes: usize,
    /// Timestamp -> number of classes first introduced there.
    pub new_class_schedule: BTreeMap<i64, usize>,
    /// Zipf exponent over classes ranked by id.
    pub class_skew: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub intra_class_edge_prob: f64,
    pub inter_class_edge_prob: f64,
    /// Past timestamps a new vertex may link into, besides its own.
    pub window_back: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_timestamps: 14,
            vertices_per_timestamp: 60,
            num_initial_classes: 4,
            new_class_schedule: BTreeMap::new(),
            class_skew: 1.0,
            feature_dim: 16,
            feature_noise: 1.0,
            intra_class_edge_prob: 0.05,
            inter_class_edge_prob: 0.005,
            window_back: 3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn total_classes(&self) -> usize {
        self.num_initial_classes + self.new_class_schedule.values().sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_timestamps == 0 || self.vertices_per_timestamp == 0 {
            return fail("num_timestamps and vertices_per_timestamp must be positive".into());
        }
        if self.num_initial_classes == 0 {
            return fail("num_initial_classes must be positive".into());
        }
        for (&t, &count) in &self.new_class_schedule {
            if t == 0 {
                return fail("new_class_schedule introduces classes at timestamp 0; use num_initial_classes".into());
            }
            if t < 0 || t >= self.num_timestamps as i64 {
                return fail(format!(
                    "new_class_schedule timestamp {t} is outside 1..{}",
                    self.num_timestamps
                ));
            }
            if count > self.vertices_per_timestamp {
                return fail(format!(
                    "{count} classes introduced at {t} exceed vertices_per_timestamp"
                ));
            }
        }
        if self.feature_dim < self.total_classes() {
            return fail(format!(
                "feature_dim {} is smaller than the {} classes",
                self.feature_dim,
                self.total_classes()
            ));
        }
        if !(self.class_skew >= 0.0 && self.class_skew.is_finite()) {
            return fail("class_skew must be a finite non-negative number".into());
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return fail("feature_noise must be a finite non-negative number".into());
        }
        let (pi, po) = (self.intra_class_edge_prob, self.inter_class_edge_prob);
        if !((0.0..=1.0).contains(&pi) && (0.0..=1.0).contains(&po)) {
            return fail("edge probabilities must lie in [0, 1]".into());
        }
        if pi < po {
            return fail("intra_class_edge_prob must be at least inter_class_edge_prob".into());
        }
        Ok(())
    }
}

/// Builds the graph described by `cfg`; identical configs give identical
/// graphs.
pub fn generate(cfg: &SynthConfig) -> Result<TemporalGraph> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = cfg.total_classes();
    let centers = rand::seq::index::sample(&mut rng, cfg.feature_dim, total).into_vec();
    let noise = Normal::new(0.0, cfg.feature_noise).map_err(|e| Error::Config(e.to_string()))?;

    let n = cfg.num_timestamps * cfg.vertices_per_timestamp;
    let mut times = Vec::with_capacity(n);
    let mut labels: Vec<ClassId> = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n * cfg.feature_dim);
    let mut edges = Vec::new();
    let mut available = cfg.num_initial_classes;

    for ts in 0..cfg.num_timestamps as i64 {
        let introduced = cfg.new_class_schedule.get(&ts).copied().unwrap_or(0);
        let first_new = available;
        available += introduced;
        let weights: Vec<f64> = (1..=available).map(|r| (r as f64).powf(-cfg.class_skew)).collect();
        let pick = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
        let lo = (ts - cfg.window_back as i64).max(0);
        let window_begin = times.partition_point(|&s: &i64| s < lo);

        for i in 0..cfg.vertices_per_timestamp {
            let class = if i < introduced {
                first_new + i
            } else {
                pick.sample(&mut rng)
            };
            let v = times.len();
            for d in 0..cfg.feature_dim {
                let base = if d == centers[class] { 1.0 } else { 0.0 };
                features.push((base + noise.sample(&mut rng)) as f32);
            }
            for (u, &lu) in labels.iter().enumerate().skip(window_begin) {
                let p = if lu as usize == class {
                    cfg.intra_class_edge_prob
                } else {
                    cfg.inter_class_edge_prob
                };
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
            times.push(ts);
            labels.push(class as ClassId);
        }
    }
    let labels = labels.into_iter().map(Some).collect();
    let (g, _) = TemporalGraph::new(times, labels, features, cfg.feature_dim, total, edges)?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unskewed_two_classes_balance() {
        let cfg = SynthConfig {
            num_timestamps: 10,
            vertices_per_timestamp: 1000,
            num_initial_classes: 2,
            class_skew: 0.0,
            feature_dim: 2,
            intra_class_edge_prob: 0.0,
            inter_class_edge_prob: 0.0,
            ..SynthConfig::default()
        };
        let g = generate(&cfg).unwrap();
        let zeros = g.labels().iter().filter(|l| **l == Some(0)).count() as f64;
        let share = zeros / g.num_vertices() as f64;
        assert!((share - 0.5).abs() < 0.05 * 0.5, "share {share}");
    }

    #[test]
    fn skew_orders_class_frequencies() {
        let cfg = SynthConfig {
            num_timestamps: 20,
            vertices_per_timestamp: 500,
            class_skew: 1.0,
            intra_class_edge_prob: 0.0,
            inter_class_edge_prob: 0.0,
            ..SynthConfig::default()
        };
        let g = generate(&cfg).unwrap();
        let count = |c: ClassId| g.labels().iter().filter(|l| **l == Some(c)).count() as f64;
        let ratio = count(0) / count(1);
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn schedule_controls_first_appearance() {
        let cfg = SynthConfig {
            num_timestamps: 8,
            vertices_per_timestamp: 20,
            num_initial_classes: 3,
            new_class_schedule: [(5, 1)].into_iter().collect(),
            ..SynthConfig::default()
        };
        let g = generate(&cfg).unwrap();
        let first = (0..g.num_vertices()).find(|&v| g.label(v) == Some(3)).unwrap();
        assert_eq!(g.time(first), 5);
        assert_eq!(g.num_classes(), 4);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            num_timestamps: 6,
            vertices_per_timestamp: 30,
            seed: 9,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn edges_stay_inside_window() {
        let cfg = SynthConfig {
            num_timestamps: 10,
            vertices_per_timestamp: 20,
            intra_class_edge_prob: 0.3,
            inter_class_edge_prob: 0.1,
            window_back: 2,
            ..SynthConfig::default()
        };
        let g = generate(&cfg).unwrap();
        assert!(g.num_edges() > 0);
        for &(u, v) in g.edges() {
            assert!((g.time(u) - g.time(v)).abs() <= 2);
        }
    }

    #[test]
    fn config_errors() {
        let zero = SynthConfig {
            new_class_schedule: [(0, 1)].into_iter().collect(),
            ..SynthConfig::default()
        };
        assert!(matches!(generate(&zero), Err(Error::Config(_))));
        let probs = SynthConfig {
            intra_class_edge_prob: 0.01,
            inter_class_edge_prob: 0.02,
            ..SynthConfig::default()
        };
        assert!(generate(&probs).is_err());
    }
}
