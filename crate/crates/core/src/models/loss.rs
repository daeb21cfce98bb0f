use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ForwardPass, Gradients, ModelState};
use crate::error::{Error, Result};
use crate::graph::TemporalGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossMode {
    /// Softmax cross-entropy, averaged over supervised rows.
    Categorical,
    /// Element-wise sigmoid cross-entropy against one-hot targets, averaged
    /// over supervised rows and output columns.
    Binary,
    /// [`LossMode::Binary`] with every term of column `i` scaled by a
    /// per-class weight.
    WeightedBinary,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Categorical => "categorical",
            LossMode::Binary => "binary",
            LossMode::WeightedBinary => "weighted-binary",
        })
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "categorical" | "categorical-cross-entropy" => Ok(LossMode::Categorical),
            "binary" | "binary-cross-entropy" => Ok(LossMode::Binary),
            "weighted-binary" | "weighted-binary-cross-entropy" => Ok(LossMode::WeightedBinary),
            other => Err(Error::Config(format!("unknown loss mode {other:?}"))),
        }
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss value and its gradient with respect to the logits.
///
/// `targets[r]` is the output column of row `r`; rows outside `mask` are
/// ignored and may carry `None`.
pub fn output_loss(
    logits: &Array2<f64>,
    targets: &[Option<usize>],
    mask: &[bool],
    mode: LossMode,
    class_weights: Option<&[f64]>,
) -> Result<(f64, Array2<f64>)> {
    let (rows, cols) = logits.dim();
    if targets.len() != rows || mask.len() != rows {
        return Err(Error::Contract(format!(
            "{} targets and {} mask entries for {rows} logit rows",
            targets.len(),
            mask.len()
        )));
    }
    match (mode, class_weights) {
        (LossMode::WeightedBinary, None) => return Err(Error::Contract("weighted loss requires class weights".into())),
        (LossMode::WeightedBinary, Some(w)) if w.len() != cols => {
            return Err(Error::Contract(format!(
                "{} class weights for {cols} output columns",
                w.len()
            )))
        }
        (LossMode::Categorical | LossMode::Binary, Some(_)) => {
            return Err(Error::Contract(format!("class weights given for {mode} loss")))
        }
        _ => {}
    }
    let supervised: Vec<(usize, usize)> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(r, _)| match targets[r] {
            Some(c) if c < cols => Ok((r, c)),
            Some(c) => Err(Error::Contract(format!(
                "row {r} targets column {c} but the model has {cols} outputs"
            ))),
            None => Err(Error::Contract(format!("supervised row {r} has no target"))),
        })
        .collect::<Result<_>>()?;
    if supervised.is_empty() {
        return Err(Error::Empty("training mask"));
    }
    if supervised
        .iter()
        .any(|&(r, _)| logits.row(r).iter().any(|z| !z.is_finite()))
    {
        return Err(Error::NonFinite("logits"));
    }

    let n = supervised.len() as f64;
    let mut grad = Array2::zeros((rows, cols));
    let mut loss = 0.0;
    match mode {
        LossMode::Categorical => {
            for &(r, y) in &supervised {
                let row = logits.row(r);
                let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
                let log_norm = max + sum.ln();
                loss += log_norm - row[y];
                for c in 0..cols {
                    let p = (row[c] - log_norm).exp();
                    grad[[r, c]] = (p - if c == y { 1.0 } else { 0.0 }) / n;
                }
            }
            loss /= n;
        }
        LossMode::Binary | LossMode::WeightedBinary => {
            let scale = n * cols as f64;
            for &(r, y) in &supervised {
                for c in 0..cols {
                    let z = logits[[r, c]];
                    let t = if c == y { 1.0 } else { 0.0 };
                    let w = class_weights.map_or(1.0, |w| w[c]);
                    loss += w * (softplus(z) - t * z);
                    grad[[r, c]] = w * (sigmoid(z) - t) / scale;
                }
            }
            loss /= scale;
        }
    }
    Ok((loss, grad))
}

/// Loss over the supervised rows of a forward pass and the gradients of
/// every model parameter.
pub fn loss_and_grad(
    model: &ModelState,
    g: &TemporalGraph,
    pass: &ForwardPass,
    targets: &[Option<usize>],
    mask: &[bool],
    mode: LossMode,
    class_weights: Option<&[f64]>,
) -> Result<(f64, Gradients)> {
    let (loss, d_logits) = output_loss(&pass.logits, targets, mask, mode, class_weights)?;
    Ok((loss, model.backward(g, pass, &d_logits)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::LN_2;

    #[test]
    fn binary_at_zero_is_ln2() {
        let logits = Array2::zeros((3, 4));
        let (loss, _) = output_loss(
            &logits,
            &[Some(0), Some(3), None],
            &[true, true, false],
            LossMode::Binary,
            None,
        )
        .unwrap();
        assert!((loss - LN_2).abs() < 1e-15);
    }

    #[test]
    fn binary_saturates_towards_zero() {
        let logits = array![[40.0, -40.0]];
        let (loss, _) = output_loss(&logits, &[Some(0)], &[true], LossMode::Binary, None).unwrap();
        assert!(loss < 1e-6);
    }

    #[test]
    fn categorical_uniform_is_ln2() {
        let logits = array![[0.0, 0.0]];
        let (loss, grad) = output_loss(&logits, &[Some(0)], &[true], LossMode::Categorical, None).unwrap();
        assert!((loss - LN_2).abs() < 1e-15);
        assert_eq!(grad, array![[-0.5, 0.5]]);
    }

    #[test]
    fn unit_weights_match_unweighted() {
        let logits = array![[0.3, -1.2, 2.0], [1.0, 0.0, -0.5]];
        let targets = [Some(2), Some(0)];
        let mask = [true, true];
        let plain = output_loss(&logits, &targets, &mask, LossMode::Binary, None).unwrap();
        let weighted = output_loss(
            &logits,
            &targets,
            &mask,
            LossMode::WeightedBinary,
            Some(&[1.0, 1.0, 1.0]),
        )
        .unwrap();
        assert_eq!(plain.0, weighted.0);
        assert_eq!(plain.1, weighted.1);
    }

    #[test]
    fn error_paths() {
        let logits = array![[0.0, 1.0]];
        assert!(matches!(
            output_loss(&logits, &[Some(0)], &[false], LossMode::Categorical, None),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            output_loss(&array![[f64::NAN, 1.0]], &[Some(0)], &[true], LossMode::Binary, None),
            Err(Error::NonFinite(_))
        ));
        assert!(output_loss(&logits, &[Some(0)], &[true], LossMode::WeightedBinary, None).is_err());
        assert!(output_loss(&logits, &[Some(0)], &[true], LossMode::Binary, Some(&[1.0, 1.0])).is_err());
        assert!(output_loss(&logits, &[Some(5)], &[true], LossMode::Binary, None).is_err());
    }
}
