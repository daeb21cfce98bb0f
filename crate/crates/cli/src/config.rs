//! Flat `key = value` configuration documents.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique.
//! Run configurations carry `format_version = 1`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lgl_core::lifelong::{ExperimentConfig, Restart};
use lgl_core::models::{LossMode, ModelKind, ModelSpec};
use lgl_core::openworld::{DetectorConfig, DetectorVariant};
use lgl_core::synth::SynthConfig;

use crate::error::{CliError, Result};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Parsed key/value pairs that remember which keys were consumed.
#[derive(Debug)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}", i + 1), "expected key = value"))?;
            let key = k.trim().to_string();
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::config(key, "given more than once"));
            }
        }
        Ok(KeyValues {
            entries,
            used: Default::default(),
        })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::config(key, format!("{e} (value {v:?})")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| CliError::config(key, "required field is missing"))
    }

    /// Fails on any key that was never looked up.
    pub fn reject_unknown(&self) -> Result<()> {
        let used = self.used.borrow();
        match self.entries.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(CliError::config(k.clone(), "unknown field")),
            None => Ok(()),
        }
    }
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|e| CliError::config(key, format!("{e} (item {s:?})")))
        })
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Sequence,
    TwoTask,
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sequence" => Ok(RunMode::Sequence),
            "two-task" => Ok(RunMode::TwoTask),
            other => Err(format!("unknown mode {other:?}; expected sequence or two-task")),
        }
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Sequence => "sequence",
            RunMode::TwoTask => "two-task",
        })
    }
}

/// Settings of the inductive two-task experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTaskSpec {
    /// Labeled vertices with time at most this value form the training graph.
    pub train_until: i64,
    pub pretrain_epochs: usize,
    pub inference_epochs: usize,
}

/// Everything needed to execute `run`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: RunMode,
    pub dataset: PathBuf,
    pub experiment: ExperimentConfig,
    pub two_task: Option<TwoTaskSpec>,
    pub initial_checkpoint: Option<PathBuf>,
    pub save_checkpoints: bool,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Parses a run configuration; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let version: u32 = kv.require("format_version")?;
        if version != CONFIG_FORMAT_VERSION {
            return Err(CliError::config(
                "format_version",
                format!("unsupported version {version}"),
            ));
        }
        let mode = kv.get_or("mode", RunMode::Sequence)?;
        let dataset = resolve(base, &kv.require::<String>("dataset")?);

        let kind: ModelKind = kv.require("model")?;
        let mut spec = ModelSpec::new(kind);
        spec.hidden_dim = kv.get_or("hidden_dim", spec.hidden_dim)?;
        spec.sgc_k = kv.get_or("sgc_k", spec.sgc_k)?;
        spec.dropout = kv.get_or("dropout", spec.dropout)?;
        if !(0.0..1.0).contains(&spec.dropout) {
            return Err(CliError::config("dropout", "must lie in [0, 1)"));
        }
        if kind != ModelKind::Sgc && spec.hidden_dim == 0 {
            return Err(CliError::config("hidden_dim", "must be positive"));
        }

        let mut exp = ExperimentConfig::new(spec);
        exp.train.learning_rate = kv.get_or("learning_rate", exp.train.learning_rate)?;
        exp.train.weight_decay = kv.get_or("weight_decay", exp.train.weight_decay)?;
        exp.train.epochs = kv.get_or("epochs", exp.train.epochs)?;
        exp.train.loss_mode = kv.get_or::<LossMode>("loss", exp.train.loss_mode)?;
        exp.history = kv.get_or("history_size", exp.history)?;
        exp.restart = kv.get_or::<Restart>("restart", exp.restart)?;
        exp.label_rate = kv.get_or("label_rate", exp.label_rate)?;
        exp.label_seed = kv.get_or("label_seed", exp.label_seed)?;
        exp.k_for_tdiff = kv.get_or("k_for_tdiff", exp.k_for_tdiff)?;
        if let Some(raw) = kv.raw("seeds") {
            exp.seeds = parse_list("seeds", raw)?;
        }
        if exp.seeds.is_empty() {
            return Err(CliError::config("seeds", "at least one seed is required"));
        }

        let detector = kv.get_or("detector", "none".to_string())?;
        let mut det = match detector.as_str() {
            "none" => None,
            other => Some(DetectorConfig::for_variant(
                other
                    .parse::<DetectorVariant>()
                    .map_err(|e| CliError::config("detector", e.to_string()))?,
            )),
        };
        let tau_min = kv.get::<f64>("detector.tau_min")?;
        let alpha = kv.get::<f64>("detector.alpha")?;
        let risk = kv.get::<bool>("detector.risk_reduction")?;
        let untrained = kv.get::<bool>("detector.include_untrained")?;
        match det.as_mut() {
            Some(d) => {
                d.tau_min = tau_min.unwrap_or(d.tau_min);
                d.alpha = alpha.unwrap_or(d.alpha);
                d.use_risk_reduction = risk.unwrap_or(d.use_risk_reduction);
                d.include_untrained_columns = untrained.unwrap_or(d.include_untrained_columns);
            }
            None if tau_min.is_some() || alpha.is_some() || risk.is_some() || untrained.is_some() => {
                return Err(CliError::config(
                    "detector",
                    "detector settings given but detector = none",
                ));
            }
            None => {}
        }
        exp.detector = det;

        let two_task = match mode {
            RunMode::TwoTask => Some(TwoTaskSpec {
                train_until: kv.require("two_task.train_until")?,
                pretrain_epochs: kv.get_or("two_task.pretrain_epochs", 200)?,
                inference_epochs: kv.get_or("two_task.inference_epochs", 35)?,
            }),
            RunMode::Sequence => None,
        };
        let initial_checkpoint = kv.get::<String>("initial_checkpoint")?.map(|p| resolve(base, &p));
        let save_checkpoints = kv.get_or("save_checkpoints", false)?;
        kv.reject_unknown()?;

        exp.validate()
            .map_err(|e| CliError::config("experiment", e.to_string()))?;
        Ok(RunConfig {
            mode,
            dataset,
            experiment: exp,
            two_task,
            initial_checkpoint,
            save_checkpoints,
        })
    }

    /// Canonical text form: every field spelled out, sorted keys, so that
    /// parsing it back yields the same configuration.
    pub fn render(&self) -> String {
        let e = &self.experiment;
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("format_version", CONFIG_FORMAT_VERSION.to_string());
        kv.insert("mode", self.mode.to_string());
        kv.insert("dataset", self.dataset.display().to_string());
        kv.insert("model", e.model.kind.to_string());
        kv.insert("hidden_dim", e.model.hidden_dim.to_string());
        kv.insert("sgc_k", e.model.sgc_k.to_string());
        kv.insert("dropout", format!("{:?}", e.model.dropout));
        kv.insert("learning_rate", format!("{:?}", e.train.learning_rate));
        kv.insert("weight_decay", format!("{:?}", e.train.weight_decay));
        kv.insert("epochs", e.train.epochs.to_string());
        kv.insert("loss", e.train.loss_mode.to_string());
        kv.insert("history_size", e.history.to_string());
        kv.insert("restart", e.restart.to_string());
        kv.insert("label_rate", format!("{:?}", e.label_rate));
        kv.insert("label_seed", e.label_seed.to_string());
        kv.insert("k_for_tdiff", e.k_for_tdiff.to_string());
        kv.insert("seeds", join(&e.seeds));
        match &e.detector {
            None => {
                kv.insert("detector", "none".into());
            }
            Some(d) => {
                kv.insert("detector", d.variant.to_string());
                kv.insert("detector.tau_min", format!("{:?}", d.tau_min));
                kv.insert("detector.alpha", format!("{:?}", d.alpha));
                kv.insert("detector.risk_reduction", d.use_risk_reduction.to_string());
                kv.insert("detector.include_untrained", d.include_untrained_columns.to_string());
            }
        }
        if let Some(t) = &self.two_task {
            kv.insert("two_task.train_until", t.train_until.to_string());
            kv.insert("two_task.pretrain_epochs", t.pretrain_epochs.to_string());
            kv.insert("two_task.inference_epochs", t.inference_epochs.to_string());
        }
        if let Some(p) = &self.initial_checkpoint {
            kv.insert("initial_checkpoint", p.display().to_string());
        }
        kv.insert("save_checkpoints", self.save_checkpoints.to_string());
        kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Parses a generator configuration. Unlisted fields keep their defaults;
/// the schedule is written `timestamp:count, ...`.
pub fn parse_synth(text: &str) -> Result<SynthConfig> {
    let kv = KeyValues::parse(text)?;
    let d = SynthConfig::default();
    let mut schedule = BTreeMap::new();
    if let Some(raw) = kv.raw("new_class_schedule") {
        for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let bad = || CliError::config("new_class_schedule", format!("expected timestamp:count, got {item:?}"));
            let (t, c) = item.split_once(':').ok_or_else(bad)?;
            let t: i64 = t.trim().parse().map_err(|_| bad())?;
            let c: usize = c.trim().parse().map_err(|_| bad())?;
            if schedule.insert(t, c).is_some() {
                return Err(CliError::config(
                    "new_class_schedule",
                    format!("timestamp {t} listed twice"),
                ));
            }
        }
    }
    let cfg = SynthConfig {
        num_timestamps: kv.get_or("num_timestamps", d.num_timestamps)?,
        vertices_per_timestamp: kv.get_or("vertices_per_timestamp", d.vertices_per_timestamp)?,
        num_initial_classes: kv.get_or("num_initial_classes", d.num_initial_classes)?,
        new_class_schedule: schedule,
        class_skew: kv.get_or("class_skew", d.class_skew)?,
        feature_dim: kv.get_or("feature_dim", d.feature_dim)?,
        feature_noise: kv.get_or("feature_noise", d.feature_noise)?,
        intra_class_edge_prob: kv.get_or("intra_class_edge_prob", d.intra_class_edge_prob)?,
        inter_class_edge_prob: kv.get_or("inter_class_edge_prob", d.inter_class_edge_prob)?,
        window_back: kv.get_or("window_back", d.window_back)?,
        seed: kv.get_or("seed", d.seed)?,
    };
    kv.reject_unknown()?;
    cfg.validate().map_err(|e| CliError::config("synth", e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lgl_core::graph::History;

    const BASIC: &str = "format_version = 1\ndataset = data\nmodel = sage\nseeds = 0, 1\n";

    #[test]
    fn defaults_and_resolution() {
        let cfg = RunConfig::parse(BASIC, Path::new("/base")).unwrap();
        assert_eq!(cfg.dataset, PathBuf::from("/base/data"));
        assert_eq!(cfg.experiment.seeds, vec![0, 1]);
        assert_eq!(cfg.experiment.model.hidden_dim, 32);
        assert_eq!(cfg.experiment.history, History::Full);
        assert!(cfg.experiment.detector.is_none());
    }

    #[test]
    fn render_round_trips() {
        let text = format!("{BASIC}detector = gdoc\ndetector.alpha = 2\nhistory_size = 3\nrestart = cold\n");
        let cfg = RunConfig::parse(&text, Path::new("/b")).unwrap();
        let again = RunConfig::parse(&cfg.render(), Path::new("/elsewhere")).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.experiment.detector.unwrap().tau_min, 0.75);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = format!("{BASIC}label_rate = 0\n");
        let msg = RunConfig::parse(&bad, Path::new("/")).unwrap_err().to_string();
        assert!(msg.contains("experiment") && msg.contains("label_rate"), "{msg}");
        let bad = format!("{BASIC}detector.tau_min = x\ndetector = doc\n");
        let msg = RunConfig::parse(&bad, Path::new("/")).unwrap_err().to_string();
        assert!(msg.contains("detector.tau_min"), "{msg}");
        let bad = format!("{BASIC}colour = blue\n");
        assert!(RunConfig::parse(&bad, Path::new("/"))
            .unwrap_err()
            .to_string()
            .contains("colour"));
        let missing = "format_version = 1\nmodel = mlp\n";
        assert!(RunConfig::parse(missing, Path::new("/"))
            .unwrap_err()
            .to_string()
            .contains("dataset"));
    }

    #[test]
    fn synth_schedule() {
        let cfg = parse_synth("num_timestamps = 6\nnew_class_schedule = 2:1, 4:2\nfeature_dim = 8\n").unwrap();
        assert_eq!(cfg.new_class_schedule, [(2, 1), (4, 2)].into_iter().collect());
        assert!(parse_synth("new_class_schedule = 0:1\n").is_err());
        assert!(parse_synth("bogus = 1\n").is_err());
    }
}
