//! Incremental training over a task sequence.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_task_sequence, ClassId, History, Subgraph, TaskView, TemporalGraph, VertexId};
use crate::metrics::{open_macro_f1, open_truth, MetricsReport, OpenLabel, TaskRecord};
use crate::models::{sigmoid, train, Checkpoint, LossMode, ModelSpec, ModelState, TrainConfig, Trainer};
use crate::openworld::{
    argmax, class_weights, fit_thresholds, predict_open, DetectorConfig, OpenPrediction, Thresholds,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Restart {
    Warm,
    Cold,
}

impl fmt::Display for Restart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Restart::Warm => "warm",
            Restart::Cold => "cold",
        })
    }
}

impl FromStr for Restart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "warm" => Ok(Restart::Warm),
            "cold" => Ok(Restart::Cold),
            other => Err(Error::Config(format!("unknown restart mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// `seed` is ignored; per-task seeds derive from the run seed.
    pub train: TrainConfig,
    pub history: History,
    pub restart: Restart,
    pub label_rate: f64,
    /// Seed of the global label mask, shared by every run seed.
    pub label_seed: u64,
    pub detector: Option<DetectorConfig>,
    pub seeds: Vec<u64>,
    pub k_for_tdiff: usize,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec) -> Self {
        ExperimentConfig {
            model,
            train: TrainConfig::default(),
            history: History::Full,
            restart: Restart::Warm,
            label_rate: 1.0,
            label_seed: 0,
            detector: None,
            seeds: vec![0],
            k_for_tdiff: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.label_rate > 0.0 && self.label_rate <= 1.0) {
            return Err(Error::Config(format!(
                "label_rate must lie in (0, 1], got {}",
                self.label_rate
            )));
        }
        if self.history == History::Limited(0) {
            return Err(Error::Config("history_size must be at least 1".into()));
        }
        if self.k_for_tdiff == 0 {
            return Err(Error::Config("k_for_tdiff must be at least 1".into()));
        }
        if let Some(d) = &self.detector {
            d.validate()?;
        }
        self.train.validate()
    }

    /// Loss used for training: the detector's when one is configured.
    pub fn loss_mode(&self) -> LossMode {
        self.detector
            .as_ref()
            .map_or(self.train.loss_mode, DetectorConfig::loss_mode)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds for parameter initialization, output growth and dropout of task
/// `index` in a run seeded with `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskSeeds {
    pub init: u64,
    pub expand: u64,
    pub train: u64,
}

pub fn task_seeds(seed: u64, index: usize) -> TaskSeeds {
    let base = splitmix(seed ^ splitmix(index as u64));
    TaskSeeds {
        init: splitmix(base ^ 1),
        expand: splitmix(base ^ 2),
        train: splitmix(base ^ 3),
    }
}

/// Selects `round(rate * labeled)` labeled vertices uniformly without
/// replacement. The mask is indexed by vertex id.
pub fn label_rate_subsample(g: &TemporalGraph, rate: f64, seed: u64) -> Result<Vec<bool>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Config(format!("label rate must lie in (0, 1], got {rate}")));
    }
    let labeled: Vec<VertexId> = (0..g.num_vertices()).filter(|&v| g.label(v).is_some()).collect();
    let mut mask = vec![false; g.num_vertices()];
    if rate == 1.0 {
        for v in labeled {
            mask[v] = true;
        }
        return Ok(mask);
    }
    let take = (rate * labeled.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in rand::seq::index::sample(&mut rng, labeled.len(), take) {
        mask[labeled[i]] = true;
    }
    Ok(mask)
}

/// Result of a run over the whole task sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutcome {
    pub report: MetricsReport,
    /// Final parameters; `None` if no task had training labels.
    pub checkpoint: Option<Checkpoint>,
    /// Classes that entered training data during the run.
    pub known_classes: BTreeSet<ClassId>,
    /// Detector thresholds fitted for each task, aligned with the report.
    pub thresholds: Vec<Option<Thresholds>>,
}

/// Per-vertex outcome of one task, in the order of the test vertices.
#[derive(Debug, Clone, PartialEq)]
struct TaskPredictions {
    truth: Vec<OpenLabel>,
    predicted: Vec<OpenLabel>,
}

/// Runs incremental training over every task of `g` with run seed `seed`.
pub fn run_sequence(g: &TemporalGraph, cfg: &ExperimentConfig, seed: u64) -> Result<MetricsReport> {
    Ok(run_sequence_from(g, cfg, seed, None)?.report)
}

/// As [`run_sequence`], optionally continuing from a checkpoint whose output
/// columns are taken as already known.
pub fn run_sequence_from(
    g: &TemporalGraph,
    cfg: &ExperimentConfig,
    seed: u64,
    start: Option<Checkpoint>,
) -> Result<SequenceOutcome> {
    cfg.validate()?;
    let tasks = build_task_sequence(g, cfg.history)?;
    let label_mask = label_rate_subsample(g, cfg.label_rate, cfg.label_seed)?;
    let (mut model, mut columns) = match start {
        Some(c) => {
            if c.model.spec != cfg.model || c.model.input_dim != g.feature_dim() {
                return Err(Error::Validation(
                    "checkpoint architecture does not match the experiment".into(),
                ));
            }
            (Some(c.model), c.classes)
        }
        None => (None, Vec::new()),
    };
    let mut records = Vec::with_capacity(tasks.len());
    let mut thresholds = Vec::with_capacity(tasks.len());
    for (index, task) in tasks.iter().enumerate() {
        let (record, next, fitted) =
            run_task(g, cfg, task, index, seed, &label_mask, model, &mut columns).map_err(|e| e.at_task(task.t))?;
        model = next;
        records.push(record);
        thresholds.push(fitted);
    }
    let report = MetricsReport::from_tasks(records)?;
    let known_classes = columns.iter().copied().collect();
    let checkpoint = model.map(|model| Checkpoint {
        model,
        classes: columns,
    });
    Ok(SequenceOutcome {
        report,
        checkpoint,
        known_classes,
        thresholds,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_task(
    g: &TemporalGraph,
    cfg: &ExperimentConfig,
    task: &TaskView,
    index: usize,
    seed: u64,
    label_mask: &[bool],
    model: Option<ModelState>,
    columns: &mut Vec<ClassId>,
) -> Result<(TaskRecord, Option<ModelState>, Option<Thresholds>)> {
    let seeds = task_seeds(seed, index);
    let train_ids: Vec<VertexId> = task.window.iter().copied().filter(|&v| g.time(v) < task.t).collect();
    let train_sub = g.induced_subgraph(&train_ids);
    let supervised: Vec<ClassId> = train_ids
        .iter()
        .filter(|&&v| label_mask[v])
        .filter_map(|&v| g.label(v))
        .collect();

    let fresh: BTreeSet<ClassId> = supervised.iter().copied().filter(|c| !columns.contains(c)).collect();
    let had_model = model.is_some();
    columns.extend(fresh.iter().copied());

    let mut model = match (model, cfg.restart) {
        (Some(m), Restart::Warm) => Some(m.expand_output_layer(fresh.len(), seeds.expand)),
        _ if columns.is_empty() => None,
        _ => Some(ModelState::new(cfg.model, g.feature_dim(), columns.len(), seeds.init)),
    };
    debug_assert!(!had_model || model.is_some());

    let mut thresholds = None;
    if let (Some(m), false) = (model.as_mut(), supervised.is_empty()) {
        let targets = column_targets(&train_sub, columns);
        let mask: Vec<bool> = train_sub
            .original_ids
            .iter()
            .map(|&v| label_mask[v] && g.label(v).is_some())
            .collect();
        let weights = match cfg.loss_mode() {
            LossMode::WeightedBinary => Some(class_weights(&targets, &mask, columns.len())?),
            _ => None,
        };
        let x = m.prepare_input(&train_sub.graph);
        let tcfg = TrainConfig {
            loss_mode: cfg.loss_mode(),
            seed: seeds.train,
            ..cfg.train
        };
        *m = train(m, &train_sub.graph, &x, &targets, &mask, &tcfg, weights.as_deref())?;
        if let Some(d) = &cfg.detector {
            let outputs = m.forward(&train_sub.graph, &x, None)?.logits.mapv(sigmoid);
            thresholds = Some(fit_thresholds(&outputs, &targets, &mask, d)?);
        }
    }

    let window = g.induced_subgraph(&task.window);
    let test_local: Vec<VertexId> = (0..window.graph.num_vertices())
        .filter(|&i| task.test_mask[i] && window.graph.label(i).is_some())
        .collect();
    if test_local.is_empty() {
        return Err(Error::Empty("labeled test vertices"));
    }
    let known: BTreeSet<ClassId> = columns.iter().copied().collect();
    let truth: Vec<OpenLabel> = test_local
        .iter()
        .map(|&i| open_truth(window.graph.label(i).expect("filtered"), &known))
        .collect();
    let predicted: Vec<OpenLabel> = match &model {
        None => vec![OpenLabel::Unseen; test_local.len()],
        Some(m) => {
            let x = m.prepare_input(&window.graph);
            let logits = m.forward(&window.graph, &x, None)?.logits;
            let rows = logits.select(ndarray::Axis(0), &test_local);
            decide(&rows, cfg.detector.as_ref(), thresholds.as_ref(), columns)?
        }
    };
    let record = task_record(task.t, &TaskPredictions { truth, predicted }, &known, columns.len())?;
    Ok((record, model, thresholds))
}

fn column_targets(sub: &Subgraph, columns: &[ClassId]) -> Vec<Option<usize>> {
    (0..sub.graph.num_vertices())
        .map(|i| sub.graph.label(i).and_then(|c| columns.iter().position(|&k| k == c)))
        .collect()
}

fn decide(
    logits: &Array2<f64>,
    detector: Option<&DetectorConfig>,
    thresholds: Option<&Thresholds>,
    columns: &[ClassId],
) -> Result<Vec<OpenLabel>> {
    let to_label = |p: OpenPrediction| match p {
        OpenPrediction::Class(i) => OpenLabel::Class(columns[i]),
        OpenPrediction::Unseen => OpenLabel::Unseen,
    };
    match (detector, thresholds) {
        (Some(d), Some(th)) => Ok(predict_open(logits, th, d.include_untrained_columns)?
            .into_iter()
            .map(to_label)
            .collect()),
        _ => Ok(logits
            .rows()
            .into_iter()
            .map(|r| OpenLabel::Class(columns[argmax(r.iter().copied())]))
            .collect()),
    }
}

fn task_record(t: i64, p: &TaskPredictions, known: &BTreeSet<ClassId>, output_dim: usize) -> Result<TaskRecord> {
    let mut rec = TaskRecord {
        t,
        accuracy: 0.0,
        tp: 0,
        tn: 0,
        fp: 0,
        fn_: 0,
        open_f1: open_macro_f1(&p.truth, &p.predicted, known)?,
        n_test: p.truth.len(),
        output_dim,
    };
    let mut correct = 0usize;
    for (&y, &q) in p.truth.iter().zip(&p.predicted) {
        correct += usize::from(y == q);
        match (y == OpenLabel::Unseen, q == OpenLabel::Unseen) {
            (true, true) => rec.tp += 1,
            (false, true) => rec.fp += 1,
            (true, false) => rec.fn_ += 1,
            (false, false) => rec.tn += 1,
        }
    }
    rec.accuracy = correct as f64 / p.truth.len() as f64;
    Ok(rec)
}

/// Labeled-only training graph for the two-task experiment: the subgraph of
/// `g_full` induced by `train_vertices`, which must all carry labels.
pub fn two_task_split(g_full: &TemporalGraph, train_vertices: &[VertexId]) -> Result<Subgraph> {
    if let Some(&v) = train_vertices
        .iter()
        .find(|&&v| v >= g_full.num_vertices() || g_full.label(v).is_none())
    {
        return Err(Error::Validation(format!(
            "training vertex {v} is missing or unlabeled"
        )));
    }
    Ok(g_full.induced_subgraph(train_vertices))
}

/// Pre-trains on `g_train`, then inserts the remaining vertices of `g_full`
/// and keeps training on the same labels. Returns test accuracy before the
/// first and after every inference epoch.
pub fn two_task_experiment(
    g_train: &Subgraph,
    g_full: &TemporalGraph,
    cfg: &ExperimentConfig,
    seed: u64,
    pretrain_epochs: usize,
    inference_epochs: usize,
) -> Result<Vec<f64>> {
    g_train.validate_against(g_full)?;
    if g_train.graph.labels().iter().any(Option::is_none) {
        return Err(Error::Validation("training graph contains unlabeled vertices".into()));
    }
    let seeds = task_seeds(seed, 0);
    let columns: Vec<ClassId> = g_train.graph.present_classes().into_iter().collect();
    if columns.is_empty() {
        return Err(Error::Empty("training labels"));
    }
    let mode = cfg.loss_mode();
    let tcfg = TrainConfig {
        loss_mode: mode,
        seed: seeds.train,
        epochs: pretrain_epochs.max(1),
        ..cfg.train
    };
    let mut model = ModelState::new(cfg.model, g_full.feature_dim(), columns.len(), seeds.init);

    let train_targets = column_targets(g_train, &columns);
    let train_mask = vec![true; g_train.graph.num_vertices()];
    let weights = |targets: &[Option<usize>], mask: &[bool]| -> Result<Option<Vec<f64>>> {
        match mode {
            LossMode::WeightedBinary => Ok(Some(class_weights(targets, mask, columns.len())?)),
            _ => Ok(None),
        }
    };
    if pretrain_epochs > 0 {
        let x = model.prepare_input(&g_train.graph);
        let w = weights(&train_targets, &train_mask)?;
        model = train(
            &model,
            &g_train.graph,
            &x,
            &train_targets,
            &train_mask,
            &tcfg,
            w.as_deref(),
        )?;
    }

    let mut full_mask = vec![false; g_full.num_vertices()];
    for &v in &g_train.original_ids {
        full_mask[v] = true;
    }
    let full_targets: Vec<Option<usize>> = (0..g_full.num_vertices())
        .map(|v| {
            if full_mask[v] {
                g_full.label(v).and_then(|c| columns.iter().position(|&k| k == c))
            } else {
                None
            }
        })
        .collect();
    let test: Vec<VertexId> = (0..g_full.num_vertices())
        .filter(|&v| !full_mask[v] && g_full.label(v).is_some())
        .collect();
    if test.is_empty() {
        return Err(Error::Empty("test vertices"));
    }
    let x = model.prepare_input(g_full);
    let accuracy = |m: &ModelState| -> Result<f64> {
        let logits = m.forward(g_full, &x, None)?.logits;
        let correct = test
            .iter()
            .filter(|&&v| {
                let col = argmax(logits.row(v).iter().copied());
                g_full.label(v) == Some(columns[col])
            })
            .count();
        Ok(correct as f64 / test.len() as f64)
    };
    let w = weights(&full_targets, &full_mask)?;
    let mut trainer = Trainer::new(model, &tcfg)?;
    let mut trace = Vec::with_capacity(inference_epochs + 1);
    trace.push(accuracy(trainer.model())?);
    for _ in 0..inference_epochs {
        trainer.epoch(g_full, &x, &full_targets, &full_mask, w.as_deref())?;
        trace.push(accuracy(trainer.model())?);
    }
    Ok(trace)
}
