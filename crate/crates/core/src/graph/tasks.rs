//! History trimming and task sequencing.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ClassId, Subgraph, TemporalGraph, VertexId};
use crate::error::{Error, Result};

/// How many past time units a task may look back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum History {
    Full,
    Limited(u64),
}

impl History {
    /// Inclusive lower time bound of the window ending at `t`.
    pub fn window_start(self, t: i64) -> i64 {
        match self {
            History::Full => i64::MIN,
            History::Limited(c) => t.saturating_sub(c.min(i64::MAX as u64) as i64),
        }
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            History::Full => f.write_str("full"),
            History::Limited(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for History {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(History::Full);
        }
        s.parse()
            .map(History::Limited)
            .map_err(|_| Error::Config(format!("history size must be a count or \"full\", got {s:?}")))
    }
}

/// Keeps the vertices with `t - c <= time <= t` (all with `time <= t` for
/// [`History::Full`]) and the edges among them. Returns an empty graph when
/// the window holds no vertex.
pub fn trim_history(g: &TemporalGraph, t: i64, history: History) -> Subgraph {
    let lo = history.window_start(t);
    let keep: Vec<VertexId> = (0..g.num_vertices())
        .filter(|&v| (lo..=t).contains(&g.time(v)))
        .collect();
    g.induced_subgraph(&keep)
}

/// One evaluation task: predict vertices of time `t` after training on the
/// retained older vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskView {
    pub t: i64,
    /// Retained vertex ids of the parent graph, ascending.
    pub window: Vec<VertexId>,
    /// Labeled retained vertices older than `t`.
    pub train_mask: Vec<bool>,
    /// Retained vertices with time exactly `t`.
    pub test_mask: Vec<bool>,
    /// Classes observed in the training data of this and all earlier tasks.
    pub known_classes: BTreeSet<ClassId>,
}

impl TaskView {
    pub fn train_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.window
            .iter()
            .zip(&self.train_mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
    }

    pub fn test_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.window
            .iter()
            .zip(&self.test_mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
    }
}

/// The timestamp at which cumulative vertex count first reaches a quarter
/// of the graph. Evaluation starts at the next timestamp.
pub fn first_task_time(g: &TemporalGraph) -> Result<i64> {
    let stamps = g.timestamps();
    if stamps.len() < 2 {
        return Err(Error::Sequencing(format!(
            "need at least 2 distinct timestamps, found {}",
            stamps.len()
        )));
    }
    let mut sorted: Vec<i64> = g.times().to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    for &s in &stamps {
        let cumulative = sorted.partition_point(|&x| x <= s);
        if 4 * cumulative >= n {
            return Ok(s);
        }
    }
    unreachable!("cumulative count reaches n at the last timestamp")
}

/// Splits `g` into one task per timestamp after [`first_task_time`].
pub fn build_task_sequence(g: &TemporalGraph, history: History) -> Result<Vec<TaskView>> {
    let start = first_task_time(g)?;
    let stamps: Vec<i64> = g.timestamps().into_iter().filter(|&s| s > start).collect();
    if stamps.is_empty() {
        return Err(Error::Sequencing(format!(
            "no timestamps remain after the warm-up period ending at {start}"
        )));
    }
    let mut known = BTreeSet::new();
    let mut tasks = Vec::with_capacity(stamps.len());
    for t in stamps {
        let lo = history.window_start(t);
        let window: Vec<VertexId> = (0..g.num_vertices())
            .filter(|&v| (lo..=t).contains(&g.time(v)))
            .collect();
        let train_mask: Vec<bool> = window.iter().map(|&v| g.time(v) < t && g.label(v).is_some()).collect();
        let test_mask: Vec<bool> = window.iter().map(|&v| g.time(v) == t).collect();
        known.extend(
            window
                .iter()
                .zip(&train_mask)
                .filter(|(_, &m)| m)
                .filter_map(|(&v, _)| g.label(v)),
        );
        tasks.push(TaskView {
            t,
            window,
            train_mask,
            test_mask,
            known_classes: known.clone(),
        });
    }
    Ok(tasks)
}
