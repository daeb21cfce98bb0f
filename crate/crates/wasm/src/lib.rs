//! Browser bindings. Every export takes plain numbers or strings and returns
//! a JSON document; errors surface as thrown strings.

use lgl_core::graph::History;
use lgl_core::lifelong::{run_sequence, ExperimentConfig, Restart};
use lgl_core::metrics::forward_transfer;
use lgl_core::models::{ModelKind, ModelSpec};
use lgl_core::openworld::{fit_thresholds, mirrored_sd, predict_open, DetectorConfig, OpenPrediction};
use lgl_core::synth::{generate, SynthConfig};
use lgl_core::tdiff::{history_sizes_from, k_hop_time_diffs, percentile};
use ndarray::Array2;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

type Outcome = Result<Value, String>;

fn synth(
    num_timestamps: usize,
    vertices: usize,
    window_back: usize,
    seed: u64,
) -> Result<lgl_core::graph::TemporalGraph, String> {
    generate(&SynthConfig {
        num_timestamps,
        vertices_per_timestamp: vertices,
        new_class_schedule: [((num_timestamps / 2) as i64, 1)]
            .into_iter()
            .filter(|&(t, _)| t > 0)
            .collect(),
        window_back,
        seed,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())
}

/// Synthetic graph summary with its delta-t_k histogram and suggested
/// history sizes.
pub fn time_differences(num_timestamps: usize, vertices: usize, window_back: usize, k: usize, seed: u64) -> Outcome {
    let g = synth(num_timestamps, vertices, window_back, seed)?;
    let hist = k_hop_time_diffs(&g, k).map_err(|e| e.to_string())?;
    let ps = [25.0, 50.0, 75.0, 100.0];
    let (percentiles, suggested) = if hist.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let values = ps
            .iter()
            .map(|&p| percentile(&hist, p).map(|v| json!({ "p": p, "value": v })))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        (values, history_sizes_from(&hist, &ps).map_err(|e| e.to_string())?)
    };
    Ok(json!({
        "vertices": g.num_vertices(),
        "edges": g.num_edges(),
        "classes": g.num_classes(),
        "histogram": hist.counts.iter().map(|(d, c)| json!([d, c])).collect::<Vec<_>>(),
        "percentiles": percentiles,
        "suggested_history_sizes": suggested,
    }))
}

/// Per-task accuracy of warm and cold restarts on a small synthetic sequence.
pub fn warm_cold(history: u64, epochs: usize, seed: u64) -> Outcome {
    let g = synth(8, 40, 2, seed)?;
    let mut cfg = ExperimentConfig::new(ModelSpec::new(ModelKind::Sage));
    cfg.history = if history == 0 {
        History::Full
    } else {
        History::Limited(history)
    };
    cfg.train.epochs = epochs;
    let mut traces = Vec::new();
    for restart in [Restart::Warm, Restart::Cold] {
        cfg.restart = restart;
        traces.push(run_sequence(&g, &cfg, seed).map_err(|e| e.to_string())?);
    }
    let fwt = forward_transfer(&traces[0].accuracies(), &traces[1].accuracies()).ok();
    Ok(json!({
        "tasks": traces[0].tasks.iter().map(|t| t.t).collect::<Vec<_>>(),
        "warm": traces[0].accuracies(),
        "cold": traces[1].accuracies(),
        "fwt": fwt,
    }))
}

fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| format!("not a number: {x:?}")))
                .collect()
        })
        .collect()
}

fn matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err("every row needs the same number of columns".into());
    }
    if rows.iter().flatten().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err("sigmoid outputs must lie in [0, 1]".into());
    }
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).map_err(|e| e.to_string())
}

/// Fits per-class thresholds on training outputs and decides test rows.
///
/// `train` holds one line per vertex: its class index followed by its
/// sigmoid outputs. `test` holds sigmoid outputs only.
pub fn open_decisions(train: &str, test: &str, tau_min: f64, alpha: f64, risk_reduction: bool) -> Outcome {
    let rows = parse_rows(train)?;
    let mut targets = Vec::with_capacity(rows.len());
    let mut outputs = Vec::with_capacity(rows.len());
    for r in &rows {
        let (&c, rest) = r.split_first().ok_or("empty training row")?;
        if c < 0.0 || c.fract() != 0.0 {
            return Err(format!("class index must be a non-negative integer, got {c}"));
        }
        targets.push(Some(c as usize));
        outputs.push(rest.to_vec());
    }
    let outputs = matrix(&outputs)?;
    let cfg = DetectorConfig {
        tau_min,
        alpha,
        use_risk_reduction: risk_reduction,
        ..DetectorConfig::gdoc()
    };
    let mask = vec![true; targets.len()];
    let th = fit_thresholds(&outputs, &targets, &mask, &cfg).map_err(|e| e.to_string())?;
    let test = matrix(&parse_rows(test)?)?;
    if test.ncols() != outputs.ncols() {
        return Err("test rows and training rows differ in column count".into());
    }
    let logits = test.mapv(|p| {
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        (p / (1.0 - p)).ln()
    });
    let decisions = predict_open(&logits, &th, false).map_err(|e| e.to_string())?;
    let spread: Vec<Option<f64>> = (0..outputs.ncols())
        .map(|c| {
            let ys: Vec<f64> = targets
                .iter()
                .zip(outputs.rows())
                .filter(|(t, _)| **t == Some(c))
                .map(|(_, r)| r[c])
                .collect();
            (!ys.is_empty()).then(|| mirrored_sd(&ys))
        })
        .collect();
    Ok(json!({
        "tau": th.tau,
        "mirrored_sd": spread,
        "decisions": decisions
            .iter()
            .map(|d| match d {
                OpenPrediction::Class(c) => json!(c),
                OpenPrediction::Unseen => json!("unseen"),
            })
            .collect::<Vec<_>>(),
    }))
}

fn export(r: Outcome) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = timeDifferences)]
pub fn time_differences_js(
    num_timestamps: usize,
    vertices: usize,
    window_back: usize,
    k: usize,
    seed: u32,
) -> Result<String, JsValue> {
    export(time_differences(
        num_timestamps,
        vertices,
        window_back,
        k,
        u64::from(seed),
    ))
}

#[wasm_bindgen(js_name = warmCold)]
pub fn warm_cold_js(history: u32, epochs: usize, seed: u32) -> Result<String, JsValue> {
    export(warm_cold(u64::from(history), epochs, u64::from(seed)))
}

#[wasm_bindgen(js_name = openDecisions)]
pub fn open_decisions_js(
    train: &str,
    test: &str,
    tau_min: f64,
    alpha: f64,
    risk_reduction: bool,
) -> Result<String, JsValue> {
    export(open_decisions(train, test, tau_min, alpha, risk_reduction))
}
