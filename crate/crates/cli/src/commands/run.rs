use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use lgl_core::graph::{load_dataset, TemporalGraph, VertexId};
use lgl_core::lifelong::{run_sequence_from, two_task_experiment, two_task_split};
use lgl_core::metrics::{mean_ci95, MetricsReport};
use lgl_core::models::{load_checkpoint, save_checkpoint, Checkpoint};
use lgl_core::openworld::{DetectorConfig, DetectorVariant};
use serde_json::{json, Map, Value};

use super::{write_file, Context};
use crate::config::{RunConfig, RunMode};
use crate::error::{CliError, Result};
use crate::manifest::{fingerprint_dir, fingerprint_text, RunManifest, SeedOutputs, MANIFEST_FILE};

/// Detector settings given on the command line.
#[derive(Debug, Clone, Default)]
pub struct DetectorOverrides {
    /// `Some(None)` disables the detector.
    pub detector: Option<Option<DetectorVariant>>,
    pub tau_min: Option<f64>,
    pub alpha: Option<f64>,
    pub risk_reduction: bool,
}

impl DetectorOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let exp = &mut cfg.experiment;
        if let Some(choice) = self.detector {
            exp.detector = choice.map(|v| match exp.detector {
                Some(d) if d.variant == v => d,
                _ => DetectorConfig::for_variant(v),
            });
        }
        let tuned = self.tau_min.is_some() || self.alpha.is_some() || self.risk_reduction;
        match exp.detector.as_mut() {
            Some(d) => {
                d.tau_min = self.tau_min.unwrap_or(d.tau_min);
                d.alpha = self.alpha.unwrap_or(d.alpha);
                d.use_risk_reduction |= self.risk_reduction;
                d.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            }
            None if tuned => {
                return Err(CliError::Usage(
                    "--tau-min, --alpha and --risk-reduction need a detector".into(),
                ))
            }
            None => {}
        }
        Ok(())
    }
}

/// How a run was requested.
pub enum RunSource<'a> {
    Config(&'a Path),
    Manifest(&'a Path),
}

enum SeedResult {
    Sequence {
        report: MetricsReport,
        checkpoint: Option<Checkpoint>,
    },
    TwoTask {
        trace: Vec<f64>,
    },
}

fn run_seed(cfg: &RunConfig, g: &TemporalGraph, start: Option<&Checkpoint>, seed: u64) -> Result<SeedResult> {
    match cfg.mode {
        RunMode::Sequence => {
            let out = run_sequence_from(g, &cfg.experiment, seed, start.cloned())?;
            Ok(SeedResult::Sequence {
                report: out.report,
                checkpoint: out.checkpoint,
            })
        }
        RunMode::TwoTask => {
            let spec = cfg.two_task.expect("two-task mode carries its settings");
            let train: Vec<VertexId> = (0..g.num_vertices())
                .filter(|&v| g.time(v) <= spec.train_until && g.label(v).is_some())
                .collect();
            let split = two_task_split(g, &train)?;
            let trace = two_task_experiment(
                &split,
                g,
                &cfg.experiment,
                seed,
                spec.pretrain_epochs,
                spec.inference_epochs,
            )?;
            Ok(SeedResult::TwoTask { trace })
        }
    }
}

/// Runs `f` over `items` on up to `jobs` threads; results keep input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

fn trace_lines(trace: &[f64]) -> String {
    let mut out = String::new();
    for (epoch, acc) in trace.iter().enumerate() {
        out.push_str(&json!({ "epoch": epoch, "accuracy": acc }).to_string());
        out.push('\n');
    }
    let (lo, hi) = trace.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
        (lo.min(a), hi.max(a))
    });
    let summary = json!({ "summary": {
        "initial_accuracy": trace[0],
        "final_accuracy": trace[trace.len() - 1],
        "range": hi - lo,
    }});
    out.push_str(&summary.to_string());
    out.push('\n');
    out
}

fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,accuracy\n");
    for (e, a) in trace.iter().enumerate() {
        out.push_str(&format!("{e},{a}\n"));
    }
    out
}

fn metric_entry(values: &[f64]) -> Value {
    let (mean, ci) = mean_ci95(values).unwrap_or((f64::NAN, f64::NAN));
    json!({ "mean": mean, "ci95": ci, "values": values })
}

/// Executes a run and writes reports, the summary and the manifest into
/// the output directory. Returns the manifest.
pub fn cmd_run(ctx: &Context, source: RunSource<'_>, overrides: &DetectorOverrides) -> Result<RunManifest> {
    let (cfg, expected) = match source {
        RunSource::Config(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let base = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            };
            let base = fs::canonicalize(&base).unwrap_or(base);
            let mut cfg = RunConfig::parse(&text, &base)?;
            overrides.apply(&mut cfg)?;
            (cfg, None)
        }
        RunSource::Manifest(path) => {
            let (manifest, _) = RunManifest::load(path)?;
            let mut cfg = RunConfig::parse(&manifest.config, Path::new("/"))?;
            overrides.apply(&mut cfg)?;
            (cfg, Some(manifest))
        }
    };
    let dataset_fingerprint = fingerprint_dir(&cfg.dataset)?;
    let start = match &cfg.initial_checkpoint {
        Some(p) => Some((load_checkpoint(p)?, fingerprint_dir(p)?)),
        None => None,
    };
    if let Some(m) = &expected {
        if m.dataset_fingerprint != dataset_fingerprint {
            return Err(CliError::Runtime(format!(
                "dataset {} changed since the manifest was written",
                cfg.dataset.display()
            )));
        }
        if m.checkpoint_fingerprint != start.as_ref().map(|s| s.1.clone()) {
            return Err(CliError::Runtime(
                "initial checkpoint changed since the manifest was written".into(),
            ));
        }
    }
    let g = load_dataset(&cfg.dataset)?.graph;
    let seeds = cfg.experiment.seeds.clone();
    ctx.say(format_args!(
        "running {} seed(s) of {} on {} vertices",
        seeds.len(),
        cfg.experiment.model.kind,
        g.num_vertices()
    ));
    let results = parallel_map(&seeds, ctx.jobs, |&seed| {
        let r = run_seed(&cfg, &g, start.as_ref().map(|s| &s.0), seed);
        if r.is_ok() {
            ctx.say(format_args!("seed {seed} finished"));
        }
        r
    });

    fs::create_dir_all(&ctx.output_dir).map_err(|e| CliError::io(&ctx.output_dir, e))?;
    let mut outputs = Vec::with_capacity(seeds.len());
    let mut metrics: Vec<(&str, Vec<f64>)> = match cfg.mode {
        RunMode::Sequence => vec![("avg_accuracy", vec![]), ("open_macro_f1", vec![]), ("mcc", vec![])],
        RunMode::TwoTask => vec![("initial_accuracy", vec![]), ("final_accuracy", vec![])],
    };
    for (&seed, result) in seeds.iter().zip(results) {
        let result = result.map_err(|e| match e {
            CliError::Core(inner) => CliError::Runtime(format!("seed {seed}: {inner}")),
            other => other,
        })?;
        let report_name = format!("seed-{seed}.jsonl");
        let csv_name = format!("seed-{seed}.csv");
        let mut checkpoint_name = None;
        match result {
            SeedResult::Sequence { report, checkpoint } => {
                write_file(&ctx.output_dir.join(&report_name), &report.to_json_lines())?;
                write_file(&ctx.output_dir.join(&csv_name), &report.to_csv())?;
                metrics[0].1.push(report.summary.avg_accuracy);
                metrics[1].1.push(report.summary.open_macro_f1);
                metrics[2].1.push(report.summary.mcc);
                if let (true, Some(c)) = (cfg.save_checkpoints, checkpoint) {
                    let name = format!("checkpoint-seed-{seed}");
                    save_checkpoint(&c, ctx.output_dir.join(&name))?;
                    checkpoint_name = Some(name);
                }
            }
            SeedResult::TwoTask { trace } => {
                write_file(&ctx.output_dir.join(&report_name), &trace_lines(&trace))?;
                write_file(&ctx.output_dir.join(&csv_name), &trace_csv(&trace))?;
                metrics[0].1.push(trace[0]);
                metrics[1].1.push(trace[trace.len() - 1]);
            }
        }
        outputs.push(SeedOutputs {
            seed,
            report: report_name,
            csv: csv_name,
            checkpoint: checkpoint_name,
        });
    }

    let config_text = cfg.render();
    let mut metric_map = Map::new();
    for (name, values) in &metrics {
        metric_map.insert((*name).to_string(), metric_entry(values));
    }
    let summary = json!({
        "mode": cfg.mode.to_string(),
        "config_fingerprint": fingerprint_text(&config_text),
        "seeds": seeds,
        "metrics": metric_map,
    });
    let summary_name = "summary.json".to_string();
    write_file(
        &ctx.output_dir.join(&summary_name),
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;
    for (name, values) in &metrics {
        if let Some((mean, ci)) = mean_ci95(values) {
            ctx.say(format_args!("{name}: {mean:.4} +/- {ci:.4}"));
        }
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config_text,
        dataset_fingerprint,
        checkpoint_fingerprint: start.map(|s| s.1),
        seeds: outputs,
        summary: summary_name,
    };
    write_file(&ctx.output_dir.join(MANIFEST_FILE), &manifest.to_json())?;
    Ok(manifest)
}

/// Paths of all files a manifest lists, relative to `dir`.
pub fn listed_files(manifest: &RunManifest, dir: &Path) -> Vec<PathBuf> {
    let mut files = vec![dir.join(&manifest.summary), dir.join(MANIFEST_FILE)];
    for s in &manifest.seeds {
        files.push(dir.join(&s.report));
        files.push(dir.join(&s.csv));
    }
    files
}
