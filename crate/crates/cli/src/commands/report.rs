use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lgl_core::graph::History;
use lgl_core::lifelong::Restart;
use lgl_core::metrics::{forward_transfer, mean_ci95, MetricsReport};

use crate::config::{RunConfig, RunMode};
use crate::error::{CliError, Result};
use crate::manifest::{fingerprint_text, RunManifest, MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportMode {
    AccuracyTable,
    Fwt,
    Open,
}

impl FromStr for ReportMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "accuracy-table" => Ok(ReportMode::AccuracyTable),
            "fwt" => Ok(ReportMode::Fwt),
            "open" => Ok(ReportMode::Open),
            other => Err(format!("unknown report mode {other:?}")),
        }
    }
}

/// One completed sequence run loaded from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub config: RunConfig,
    pub config_text: String,
    pub dataset_fingerprint: String,
    pub reports: BTreeMap<u64, MetricsReport>,
}

pub fn load_run(path: &Path) -> Result<LoadedRun> {
    let (manifest, dir) = RunManifest::load(path)?;
    let config = RunConfig::parse(&manifest.config, Path::new("/"))?;
    if config.mode != RunMode::Sequence {
        return Err(CliError::Runtime(format!(
            "{}: report modes apply to sequence runs only",
            path.display()
        )));
    }
    let mut reports = BTreeMap::new();
    for s in &manifest.seeds {
        let file = dir.join(&s.report);
        let text = fs::read_to_string(&file).map_err(|e| CliError::io(&file, e))?;
        let report =
            MetricsReport::from_json_lines(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", file.display())))?;
        reports.insert(s.seed, report);
    }
    Ok(LoadedRun {
        config,
        config_text: manifest.config,
        dataset_fingerprint: manifest.dataset_fingerprint,
        reports,
    })
}

fn history_key(h: History) -> (u8, u64) {
    match h {
        History::Limited(c) => (0, c),
        History::Full => (1, 0),
    }
}

fn detector_label(cfg: &RunConfig) -> String {
    cfg.experiment
        .detector
        .map_or_else(|| "none".to_string(), |d| d.variant.to_string())
}

/// Configuration text without the restart mode and seeds, used to pair
/// warm and cold runs.
fn pairing_key(text: &str) -> String {
    let kept: String = text
        .lines()
        .filter(|l| !l.starts_with("restart ") && !l.starts_with("seeds "))
        .map(|l| format!("{l}\n"))
        .collect();
    fingerprint_text(&kept)
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn stat(values: &[f64]) -> (String, String) {
    match mean_ci95(values) {
        Some((m, c)) => (num(m), num(c)),
        None => (String::new(), String::new()),
    }
}

fn summary_values(run: &LoadedRun, pick: impl Fn(&MetricsReport) -> f64) -> Vec<f64> {
    run.reports.values().map(pick).collect()
}

fn accuracy_table(runs: &[LoadedRun]) -> String {
    type Key = (String, String, String, (u8, u64), String);
    let mut grid: BTreeMap<Key, BTreeMap<&'static str, Vec<f64>>> = BTreeMap::new();
    for run in runs {
        let e = &run.config.experiment;
        let key = (
            e.model.kind.to_string(),
            format!("{:?}", e.label_rate),
            detector_label(&run.config),
            history_key(e.history),
            e.history.to_string(),
        );
        let restart = match e.restart {
            Restart::Warm => "warm",
            Restart::Cold => "cold",
        };
        grid.entry(key)
            .or_default()
            .entry(restart)
            .or_default()
            .extend(summary_values(run, |r| r.summary.avg_accuracy));
    }
    let mut out = String::from("model,label_rate,detector,history,warm,warm_ci95,cold,cold_ci95\n");
    for ((model, rate, det, _, history), cells) in &grid {
        let (w, wc) = cells.get("warm").map_or_else(Default::default, |v| stat(v));
        let (c, cc) = cells.get("cold").map_or_else(Default::default, |v| stat(v));
        let _ = writeln!(out, "{model},{rate},{det},{history},{w},{wc},{c},{cc}");
    }
    out
}

fn fwt_table(runs: &[LoadedRun]) -> Result<String> {
    let mut groups: BTreeMap<String, (Option<&LoadedRun>, Option<&LoadedRun>)> = BTreeMap::new();
    for run in runs {
        let slot = groups.entry(pairing_key(&run.config_text)).or_default();
        let target = match run.config.experiment.restart {
            Restart::Warm => &mut slot.0,
            Restart::Cold => &mut slot.1,
        };
        if target.is_some() {
            return Err(CliError::Runtime(
                "two runs share the same configuration and restart mode".into(),
            ));
        }
        *target = Some(run);
    }
    let mut rows = Vec::new();
    for (warm, cold) in groups.values() {
        let (Some(warm), Some(cold)) = (warm, cold) else {
            continue;
        };
        let mut values = Vec::new();
        for (seed, w) in &warm.reports {
            if let Some(c) = cold.reports.get(seed) {
                values.push(forward_transfer(&w.accuracies(), &c.accuracies())?);
            }
        }
        let e = &warm.config.experiment;
        let (m, ci) = stat(&values);
        rows.push((
            (
                e.model.kind.to_string(),
                format!("{:?}", e.label_rate),
                detector_label(&warm.config),
                history_key(e.history),
            ),
            format!(
                "{},{:?},{},{},{},{m},{ci}\n",
                e.model.kind,
                e.label_rate,
                detector_label(&warm.config),
                e.history,
                values.len()
            ),
        ));
    }
    if rows.is_empty() {
        return Err(CliError::Runtime(
            "no warm/cold run pairs with matching configurations".into(),
        ));
    }
    rows.sort();
    let mut out = String::from("model,label_rate,detector,history,n_seeds,fwt,fwt_ci95\n");
    out.extend(rows.into_iter().map(|(_, line)| line));
    Ok(out)
}

fn open_table(runs: &[LoadedRun]) -> String {
    let mut rows = Vec::new();
    for run in runs {
        let e = &run.config.experiment;
        let (tau, alpha, rr) = e.detector.map_or((String::new(), String::new(), String::new()), |d| {
            (
                format!("{:?}", d.tau_min),
                format!("{:?}", d.alpha),
                d.use_risk_reduction.to_string(),
            )
        });
        let (m, mc) = stat(&summary_values(run, |r| r.summary.mcc));
        let (f, fc) = stat(&summary_values(run, |r| r.summary.open_macro_f1));
        rows.push((
            (
                e.model.kind.to_string(),
                history_key(e.history),
                e.restart.to_string(),
                detector_label(&run.config),
                tau.clone(),
                alpha.clone(),
                rr.clone(),
            ),
            format!(
                "{},{},{},{},{tau},{alpha},{rr},{},{m},{mc},{f},{fc}\n",
                e.model.kind,
                e.history,
                e.restart,
                detector_label(&run.config),
                run.reports.len()
            ),
        ));
    }
    rows.sort();
    let mut out = String::from(
        "model,history,restart,detector,tau_min,alpha,risk_reduction,n_seeds,mcc,mcc_ci95,open_macro_f1,open_macro_f1_ci95\n",
    );
    out.extend(rows.into_iter().map(|(_, line)| line));
    out
}

/// Renders the requested table from completed runs.
pub fn cmd_report(paths: &[PathBuf], mode: ReportMode) -> Result<String> {
    if paths.is_empty() {
        return Err(CliError::Usage("report needs at least one run".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut runs = Vec::new();
    for p in paths {
        let file = if p.is_dir() { p.join(MANIFEST_FILE) } else { p.clone() };
        if seen.insert(fs::canonicalize(&file).unwrap_or(file)) {
            runs.push(load_run(p)?);
        }
    }
    if let Some(other) = runs
        .iter()
        .find(|r| r.dataset_fingerprint != runs[0].dataset_fingerprint)
    {
        return Err(CliError::Runtime(format!(
            "runs use different datasets ({} vs {})",
            &runs[0].dataset_fingerprint[..12],
            &other.dataset_fingerprint[..12]
        )));
    }
    match mode {
        ReportMode::AccuracyTable => Ok(accuracy_table(&runs)),
        ReportMode::Fwt => fwt_table(&runs),
        ReportMode::Open => Ok(open_table(&runs)),
    }
}
