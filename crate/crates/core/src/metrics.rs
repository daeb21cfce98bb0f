//! Evaluation measures and the per-task report.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ClassId;

/// A true or predicted label in the open-world setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OpenLabel {
    Class(ClassId),
    Unseen,
}

/// Unweighted mean of per-task accuracies.
pub fn avg_accuracy(per_task: &[f64]) -> Result<f64> {
    if per_task.is_empty() {
        return Err(Error::Empty("accuracy sequence"));
    }
    Ok(per_task.iter().sum::<f64>() / per_task.len() as f64)
}

/// Mean over tasks `2..=T` of the warm-minus-cold accuracy difference.
pub fn forward_transfer(warm: &[f64], cold: &[f64]) -> Result<f64> {
    if warm.len() != cold.len() {
        return Err(Error::Contract(format!(
            "warm run has {} tasks, cold run has {}",
            warm.len(),
            cold.len()
        )));
    }
    if warm.len() < 2 {
        return Err(Error::Contract("forward transfer needs at least 2 tasks".into()));
    }
    let diffs: f64 = warm[1..].iter().zip(&cold[1..]).map(|(w, c)| w - c).sum();
    Ok(diffs / (warm.len() - 1) as f64)
}

#[derive(Debug, Default, Clone, Copy)]
struct Confusion {
    tp: u64,
    fp: u64,
    fn_: u64,
}

impl Confusion {
    fn f1(self) -> f64 {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Maps true labels of classes outside `known` to [`OpenLabel::Unseen`].
pub fn open_truth(y: ClassId, known: &BTreeSet<ClassId>) -> OpenLabel {
    if known.contains(&y) {
        OpenLabel::Class(y)
    } else {
        OpenLabel::Unseen
    }
}

/// Macro-F1 over `known` plus the unseen class. True labels outside `known`
/// count as unseen; classes with neither true nor predicted instances are
/// left out of the average.
pub fn open_macro_f1(y_true: &[OpenLabel], y_pred: &[OpenLabel], known: &BTreeSet<ClassId>) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::Empty("label sequence"));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Contract(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut table: BTreeMap<OpenLabel, Confusion> = known
        .iter()
        .map(|&c| (OpenLabel::Class(c), Confusion::default()))
        .collect();
    table.insert(OpenLabel::Unseen, Confusion::default());
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let t = match t {
            OpenLabel::Class(c) => open_truth(c, known),
            OpenLabel::Unseen => OpenLabel::Unseen,
        };
        if t == p {
            table.get_mut(&t).expect("mapped into table").tp += 1;
        } else {
            table.get_mut(&t).expect("mapped into table").fn_ += 1;
            if let Some(entry) = table.get_mut(&p) {
                entry.fp += 1;
            }
        }
    }
    let scores: Vec<f64> = table
        .values()
        .filter(|c| c.tp + c.fp + c.fn_ > 0)
        .map(|c| c.f1())
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Matthews correlation; 0 whenever a marginal is empty.
pub fn mcc(tp: u64, tn: u64, fp: u64, fn_: u64) -> f64 {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den.sqrt()
    }
}

/// Empirical class distribution of a label sequence.
pub fn class_distribution(labels: impl IntoIterator<Item = ClassId>) -> BTreeMap<ClassId, f64> {
    let mut counts: BTreeMap<ClassId, u64> = BTreeMap::new();
    let mut n = 0u64;
    for c in labels {
        *counts.entry(c).or_insert(0) += 1;
        n += 1;
    }
    counts.into_iter().map(|(c, k)| (c, k as f64 / n as f64)).collect()
}

fn check_distribution<K>(p: &BTreeMap<K, f64>) -> Result<()> {
    if p.values().any(|&x| x.is_nan() || x < 0.0) {
        return Err(Error::Validation("negative or undefined probability".into()));
    }
    let sum: f64 = p.values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Total variation distance over the union of both supports.
pub fn drift_magnitude<K: Ord>(prev: &BTreeMap<K, f64>, curr: &BTreeMap<K, f64>) -> Result<f64> {
    check_distribution(prev)?;
    check_distribution(curr)?;
    let keys: BTreeSet<&K> = prev.keys().chain(curr.keys()).collect();
    let l1: f64 = keys
        .into_iter()
        .map(|k| (prev.get(k).copied().unwrap_or(0.0) - curr.get(k).copied().unwrap_or(0.0)).abs())
        .sum();
    Ok(0.5 * l1)
}

fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::Validation(
                "divergence undefined: zero mass where the other distribution is positive".into(),
            ));
        }
        total += a * (a / b).ln();
    }
    Ok(total)
}

/// Symmetrized Kullback-Leibler divergence `(KL(P||Q) + KL(Q||P)) / 2`,
/// natural log. This is not the midpoint-mixture Jensen-Shannon divergence.
/// `smoothing` adds a constant to every cell and renormalizes first.
pub fn symmetric_divergence(p: &[f64], q: &[f64], smoothing: Option<f64>) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Contract(format!(
            "distributions over {} and {} cells",
            p.len(),
            q.len()
        )));
    }
    if p.iter().chain(q).any(|&x| x.is_nan() || x < 0.0) {
        return Err(Error::Validation("negative or undefined probability".into()));
    }
    let prepare = |d: &[f64]| -> Vec<f64> {
        match smoothing {
            Some(eps) => {
                let total: f64 = d.iter().map(|x| x + eps).sum();
                d.iter().map(|x| (x + eps) / total).collect()
            }
            None => d.to_vec(),
        }
    };
    let (p, q) = (prepare(p), prepare(q));
    Ok(0.5 * kl(&p, &q)? + 0.5 * kl(&q, &p)?)
}

/// Smoothing constant used when the divergence is computed with smoothing.
pub const DIVERGENCE_SMOOTHING: f64 = 1e-12;

/// Normalized histogram of `values` over `bins` equal cells of `[lo, hi]`.
pub fn binned_distribution(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    if values.is_empty() || bins == 0 {
        return counts;
    }
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let i = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[i] += 1.0;
    }
    let n = values.len() as f64;
    counts.iter().map(|c| c / n).collect()
}

/// Mean and the half-width `1.96 * SEM` of a sample.
pub fn mean_ci95(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, 1.96 * (var / n).sqrt()))
}

/// Outcome of one evaluation task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub t: i64,
    pub accuracy: f64,
    /// Unseen-vs-known confusion counts, "unseen" is the positive class.
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub open_f1: f64,
    pub n_test: usize,
    pub output_dim: usize,
}

/// Aggregates derived from the task records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub avg_accuracy: f64,
    pub open_macro_f1: f64,
    pub mcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tasks: Vec<TaskRecord>,
    pub summary: Summary,
}

impl MetricsReport {
    /// Builds the report and its aggregates from task records.
    pub fn from_tasks(tasks: Vec<TaskRecord>) -> Result<Self> {
        let summary = Self::summarize(&tasks)?;
        Ok(MetricsReport { tasks, summary })
    }

    pub fn summarize(tasks: &[TaskRecord]) -> Result<Summary> {
        let acc: Vec<f64> = tasks.iter().map(|r| r.accuracy).collect();
        let f1: Vec<f64> = tasks.iter().map(|r| r.open_f1).collect();
        let (tp, tn, fp, fn_) = tasks
            .iter()
            .fold((0, 0, 0, 0), |a, r| (a.0 + r.tp, a.1 + r.tn, a.2 + r.fp, a.3 + r.fn_));
        Ok(Summary {
            avg_accuracy: avg_accuracy(&acc)?,
            open_macro_f1: avg_accuracy(&f1)?,
            mcc: mcc(tp, tn, fp, fn_),
        })
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.tasks.iter().map(|r| r.accuracy).collect()
    }

    /// One JSON object per task, then one summary object.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.tasks {
            out.push_str(&serde_json::to_string(r).expect("plain struct serializes"));
            out.push('\n');
        }
        let summary = serde_json::json!({ "summary": self.summary });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    /// Parses [`MetricsReport::to_json_lines`] output; the summary line is
    /// recomputed and must agree with the stored one.
    pub fn from_json_lines(text: &str) -> Result<Self> {
        let mut tasks = Vec::new();
        let mut stored: Option<Summary> = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
                file: "report".into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            let parse_err = |e: serde_json::Error| Error::Parse {
                file: "report".into(),
                line: i + 1,
                message: e.to_string(),
            };
            if let Some(s) = value.get("summary") {
                stored = Some(serde_json::from_value(s.clone()).map_err(parse_err)?);
            } else {
                tasks.push(serde_json::from_value(value).map_err(parse_err)?);
            }
        }
        let report = Self::from_tasks(tasks)?;
        if let Some(s) = stored {
            if s != report.summary {
                return Err(Error::Validation("stored summary differs from recomputation".into()));
            }
        }
        Ok(report)
    }

    /// CSV with one row per task, for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,accuracy,tp,tn,fp,fn,open_f1,n_test,output_dim\n");
        for r in &self.tasks {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.t, r.accuracy, r.tp, r.tn, r.fp, r.fn_, r.open_f1, r.n_test, r.output_dim
            ));
        }
        out
    }
}
