use std::collections::BTreeMap;
use std::path::Path;

use lgl_core::graph::{load_dataset, TemporalGraph};
use lgl_core::metrics::{class_distribution, drift_magnitude};
use lgl_core::tdiff::{history_sizes_from, k_hop_time_diffs, percentile, TimeDiffHistogram};
use serde::{Deserialize, Serialize};

use super::{write_file, Context};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileValue {
    pub p: f64,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampStats {
    pub t: i64,
    pub vertices: usize,
    pub labeled: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub per_timestamp: Vec<TimestampStats>,
}

/// Total variation between the label distributions of two consecutive
/// timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub t_prev: i64,
    pub t: i64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub histogram: TimeDiffHistogram,
    pub percentiles: Vec<PercentileValue>,
    pub suggested_history_sizes: Vec<u64>,
    pub stats: GraphStats,
    pub drift: Vec<DriftRecord>,
}

pub fn analyze(g: &TemporalGraph, k: usize, percentiles: &[f64]) -> Result<AnalysisReport> {
    let histogram = k_hop_time_diffs(g, k)?;
    let (percentiles, suggested) = if histogram.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let values = percentiles
            .iter()
            .map(|&p| {
                Ok(PercentileValue {
                    p,
                    value: percentile(&histogram, p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        (values, history_sizes_from(&histogram, percentiles)?)
    };

    let mut by_time: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for v in 0..g.num_vertices() {
        by_time.entry(g.time(v)).or_default().push(v);
    }
    let labels_at = |vs: &[usize]| vs.iter().filter_map(|&v| g.label(v)).collect::<Vec<_>>();
    let per_timestamp = by_time
        .iter()
        .map(|(&t, vs)| {
            let labels = labels_at(vs);
            let classes = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
            TimestampStats {
                t,
                vertices: vs.len(),
                labeled: labels.len(),
                classes,
            }
        })
        .collect();
    let mut drift = Vec::new();
    let stamps: Vec<(&i64, &Vec<usize>)> = by_time.iter().collect();
    for pair in stamps.windows(2) {
        let (prev, curr) = (labels_at(pair[0].1), labels_at(pair[1].1));
        if prev.is_empty() || curr.is_empty() {
            continue;
        }
        let magnitude = drift_magnitude(&class_distribution(prev), &class_distribution(curr))?;
        drift.push(DriftRecord {
            t_prev: *pair[0].0,
            t: *pair[1].0,
            magnitude,
        });
    }
    Ok(AnalysisReport {
        histogram,
        percentiles,
        suggested_history_sizes: suggested,
        stats: GraphStats {
            num_vertices: g.num_vertices(),
            num_edges: g.num_edges(),
            feature_dim: g.feature_dim(),
            num_classes: g.num_classes(),
            per_timestamp,
        },
        drift,
    })
}

pub fn cmd_analyze(ctx: &Context, dataset: &Path, k: usize, percentiles: &[f64]) -> Result<AnalysisReport> {
    if k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    if let Some(p) = percentiles.iter().find(|&&p| !(p > 0.0 && p <= 100.0)) {
        return Err(CliError::Usage(format!("percentile {p} outside (0, 100]")));
    }
    let g = load_dataset(dataset)?.graph;
    let report = analyze(&g, k, percentiles)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&ctx.output_dir.join("tdiff.json"), &json)?;
    write_file(&ctx.output_dir.join("tdiff.csv"), &report.histogram.to_csv())?;
    ctx.say(format_args!(
        "{} vertices, {} edges, {} classes; delta-t_{k} has {} pairs",
        report.stats.num_vertices,
        report.stats.num_edges,
        report.stats.num_classes,
        report.histogram.total()
    ));
    for p in &report.percentiles {
        ctx.say(format_args!("  p{}: {}", p.p, p.value));
    }
    ctx.say(format_args!(
        "suggested history sizes: {:?}",
        report.suggested_history_sizes
    ));
    Ok(report)
}
