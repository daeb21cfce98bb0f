//! Unseen-class detection on sigmoid outputs (DOC and the class-weighted
//! gDOC variant).
//!
//! A vertex is rejected as "unseen" when the sigmoid output of every
//! (trained) class falls below that class's threshold; otherwise it gets
//! the argmax of the raw logits. Thresholds are either the global minimum
//! `tau_min` or, with risk reduction, `max(tau_min, 1 - alpha * SD_i)` where
//! `SD_i` is the spread of class `i`'s training outputs mirrored around 1.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::LossMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorVariant {
    /// Plain binary cross-entropy.
    Doc,
    /// Class-weighted binary cross-entropy.
    Gdoc,
}

impl fmt::Display for DetectorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorVariant::Doc => "doc",
            DetectorVariant::Gdoc => "gdoc",
        })
    }
}

impl FromStr for DetectorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "doc" => Ok(DetectorVariant::Doc),
            "gdoc" => Ok(DetectorVariant::Gdoc),
            other => Err(Error::Config(format!("unknown detector {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub variant: DetectorVariant,
    pub tau_min: f64,
    pub alpha: f64,
    pub use_risk_reduction: bool,
    /// Whether output columns without training instances in the current
    /// task take part in the rejection test.
    pub include_untrained_columns: bool,
}

impl DetectorConfig {
    /// DOC defaults: `tau_min = 0.5`, `alpha = 3`, risk reduction off.
    pub fn doc() -> Self {
        DetectorConfig {
            variant: DetectorVariant::Doc,
            tau_min: 0.5,
            alpha: 3.0,
            use_risk_reduction: false,
            include_untrained_columns: false,
        }
    }

    /// gDOC defaults: `tau_min = 0.75`, risk reduction off.
    pub fn gdoc() -> Self {
        DetectorConfig {
            variant: DetectorVariant::Gdoc,
            tau_min: 0.75,
            ..Self::doc()
        }
    }

    pub fn for_variant(variant: DetectorVariant) -> Self {
        match variant {
            DetectorVariant::Doc => Self::doc(),
            DetectorVariant::Gdoc => Self::gdoc(),
        }
    }

    pub fn loss_mode(&self) -> LossMode {
        match self.variant {
            DetectorVariant::Doc => LossMode::Binary,
            DetectorVariant::Gdoc => LossMode::WeightedBinary,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min >= 0.0 && self.tau_min <= 1.0) {
            return Err(Error::Config(format!(
                "tau_min must lie in [0, 1], got {}",
                self.tau_min
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Per-class rejection thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau: Vec<f64>,
    /// Columns that had at least one training instance when fitted.
    pub trained: Vec<bool>,
    /// Mirrored standard deviation per column; `None` when risk reduction
    /// is off or the column had no instances.
    #[serde(default)]
    pub spread: Vec<Option<f64>>,
}

impl Thresholds {
    /// Every column at `tau`, all considered trained.
    pub fn uniform(tau: f64, columns: usize) -> Self {
        Thresholds {
            tau: vec![tau; columns],
            trained: vec![true; columns],
            spread: vec![None; columns],
        }
    }
}

/// Outcome for one vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpenPrediction {
    Class(usize),
    Unseen,
}

fn supervised_counts(targets: &[Option<usize>], mask: &[bool], num_classes: usize) -> Result<(usize, Vec<usize>)> {
    let mut counts = vec![0usize; num_classes];
    let mut n = 0;
    for (t, &m) in targets.iter().zip(mask) {
        if !m {
            continue;
        }
        match t {
            Some(c) if *c < num_classes => {
                counts[*c] += 1;
                n += 1;
            }
            Some(c) => {
                return Err(Error::Contract(format!(
                    "class {c} outside the {num_classes} output columns"
                )))
            }
            None => return Err(Error::Contract("masked row without a label".into())),
        }
    }
    Ok((n, counts))
}

/// `(n - n_i) / n_i` per class over the masked rows; classes without
/// instances get weight 1.
pub fn class_weights(targets: &[Option<usize>], mask: &[bool], num_classes: usize) -> Result<Vec<f64>> {
    let (n, counts) = supervised_counts(targets, mask, num_classes)?;
    if n == 0 {
        return Err(Error::Empty("training mask"));
    }
    Ok(counts
        .iter()
        .map(|&pos| if pos == 0 { 1.0 } else { (n - pos) as f64 / pos as f64 })
        .collect())
}

/// Standard deviation about the fixed mean 1 of the outputs together with
/// their mirror points `2 - y`, population divisor.
pub fn mirrored_sd(outputs: &[f64]) -> f64 {
    if outputs.is_empty() {
        return 0.0;
    }
    let mirrored = outputs.iter().flat_map(|&y| [y, 1.0 + (1.0 - y)]);
    let sum_sq: f64 = mirrored.map(|x| (x - 1.0) * (x - 1.0)).sum();
    (sum_sq / (2 * outputs.len()) as f64).sqrt()
}

/// Fits per-class thresholds from training outputs in `[0, 1]` (one column
/// per class).
pub fn fit_thresholds(
    outputs: &Array2<f64>,
    targets: &[Option<usize>],
    mask: &[bool],
    cfg: &DetectorConfig,
) -> Result<Thresholds> {
    cfg.validate()?;
    let cols = outputs.ncols();
    let (_, counts) = supervised_counts(targets, mask, cols)?;
    let trained: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
    if !cfg.use_risk_reduction {
        return Ok(Thresholds {
            tau: vec![cfg.tau_min; cols],
            trained,
            spread: vec![None; cols],
        });
    }
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); cols];
    for (r, (t, &m)) in targets.iter().zip(mask).enumerate() {
        if let (true, Some(c)) = (m, t) {
            per_class[*c].push(outputs[[r, *c]]);
        }
    }
    let spread: Vec<Option<f64>> = per_class
        .iter()
        .map(|ys| (!ys.is_empty()).then(|| mirrored_sd(ys)))
        .collect();
    let tau = spread
        .iter()
        .map(|sd| sd.map_or(cfg.tau_min, |sd| cfg.tau_min.max(1.0 - cfg.alpha * sd)))
        .collect();
    Ok(Thresholds { tau, trained, spread })
}

/// Accept/reject decision per row of `logits`.
pub fn predict_open(
    logits: &Array2<f64>,
    thresholds: &Thresholds,
    include_untrained_columns: bool,
) -> Result<Vec<OpenPrediction>> {
    let cols = logits.ncols();
    if thresholds.tau.len() != cols || thresholds.trained.len() != cols {
        return Err(Error::Contract(format!(
            "{} thresholds for {cols} logit columns",
            thresholds.tau.len()
        )));
    }
    Ok(logits
        .rows()
        .into_iter()
        .map(|row| {
            let accepted = (0..cols).any(|i| {
                (include_untrained_columns || thresholds.trained[i])
                    && crate::models::sigmoid(row[i]) >= thresholds.tau[i]
            });
            if accepted {
                OpenPrediction::Class(argmax(row.iter().copied()))
            } else {
                OpenPrediction::Unseen
            }
        })
        .collect())
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn logits(rows: &[&[f64]]) -> Array2<f64> {
        let cols = rows[0].len();
        Array2::from_shape_fn((rows.len(), cols), |(r, c)| logit(rows[r][c]))
    }

    #[test]
    fn weights_from_counts() {
        let t = [Some(0), Some(0), Some(0), Some(1)];
        let w = class_weights(&t, &[true; 4], 2).unwrap();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[1], 3.0);
        let balanced = class_weights(&[Some(0), Some(1)], &[true; 2], 2).unwrap();
        assert_eq!(balanced, vec![1.0, 1.0]);
        let absent = class_weights(&[Some(0), Some(1)], &[true; 2], 3).unwrap();
        assert_eq!(absent[2], 1.0);
        assert!(matches!(class_weights(&[Some(0)], &[false], 1), Err(Error::Empty(_))));
    }

    #[test]
    fn alpha_zero_gives_unit_thresholds() {
        let out = array![[0.9, 0.2], [0.1, 0.7]];
        let cfg = DetectorConfig {
            alpha: 0.0,
            use_risk_reduction: true,
            ..DetectorConfig::doc()
        };
        let th = fit_thresholds(&out, &[Some(0), Some(1)], &[true, true], &cfg).unwrap();
        assert_eq!(th.tau, vec![1.0, 1.0]);
    }

    #[test]
    fn risk_reduction_example() {
        // oracle (40-digit arithmetic): 1 - 3 * sqrt(0.10 / 6)
        const EXPECTED: f64 = 0.612_701_665_379_258_3;
        let out = array![[0.8], [0.9], [1.0]];
        let cfg = DetectorConfig {
            alpha: 3.0,
            tau_min: 0.5,
            use_risk_reduction: true,
            ..DetectorConfig::doc()
        };
        let th = fit_thresholds(&out, &[Some(0); 3], &[true; 3], &cfg).unwrap();
        assert!((th.tau[0] - EXPECTED).abs() < 1e-12, "{}", th.tau[0]);
        assert!((mirrored_sd(&[0.8, 0.9, 1.0]) - (0.10f64 / 6.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bypass_uses_tau_min() {
        let out = array![[0.8, 0.1], [0.3, 0.9]];
        let cfg = DetectorConfig::gdoc();
        let th = fit_thresholds(&out, &[Some(0), Some(1)], &[true, true], &cfg).unwrap();
        assert_eq!(th.tau, vec![0.75, 0.75]);
    }

    #[test]
    fn class_without_instances_gets_tau_min() {
        let out = array![[0.99, 0.5, 0.5]];
        let cfg = DetectorConfig {
            use_risk_reduction: true,
            alpha: 1.0,
            ..DetectorConfig::gdoc()
        };
        let th = fit_thresholds(&out, &[Some(0)], &[true], &cfg).unwrap();
        assert_eq!(th.tau[1], 0.75);
        assert_eq!(th.trained, vec![true, false, false]);
    }

    #[test]
    fn prediction_rule() {
        let th = Thresholds::uniform(0.75, 2);
        let out = predict_open(&logits(&[&[0.6, 0.4], &[0.8, 0.1], &[0.8, 0.9]]), &th, false).unwrap();
        assert_eq!(
            out,
            vec![
                OpenPrediction::Unseen,
                OpenPrediction::Class(0),
                OpenPrediction::Class(1)
            ]
        );
    }

    #[test]
    fn untrained_columns_excluded_unless_requested() {
        let th = Thresholds {
            tau: vec![0.75, 0.75],
            trained: vec![true, false],
            spread: vec![None, None],
        };
        let z = logits(&[&[0.2, 0.95]]);
        assert_eq!(predict_open(&z, &th, false).unwrap(), vec![OpenPrediction::Unseen]);
        assert_eq!(predict_open(&z, &th, true).unwrap(), vec![OpenPrediction::Class(1)]);
    }

    #[test]
    fn extreme_thresholds() {
        let z = logits(&[&[0.01, 0.3], &[0.99, 0.5]]);
        let none = predict_open(&z, &Thresholds::uniform(0.0, 2), false).unwrap();
        assert!(none.iter().all(|p| *p != OpenPrediction::Unseen));
        let all = predict_open(&z, &Thresholds::uniform(1.0, 2), false).unwrap();
        assert!(all.iter().all(|p| *p == OpenPrediction::Unseen));
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax([1.0, 3.0, 3.0].into_iter()), 1);
        assert_eq!(argmax([0.0, 0.0].into_iter()), 0);
    }
}
