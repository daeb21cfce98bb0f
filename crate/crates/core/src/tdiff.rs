//! k-hop neighborhood time differences.
//!
//! For every vertex `u` and every distinct vertex `v` reachable from `u`
//! within `1..=k` edges with `time(v) <= time(u)`, the difference
//! `time(u) - time(v)` is counted once. Pairs with equal timestamps are
//! therefore counted from both ends. Percentiles of the resulting
//! distribution serve as candidate history sizes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TemporalGraph;

/// Multiset of time differences, stored as value -> multiplicity.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TimeDiffHistogram {
    pub k: usize,
    pub counts: BTreeMap<u64, u64>,
}

impl TimeDiffHistogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn max_difference(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    fn add(&mut self, diff: u64) {
        *self.counts.entry(diff).or_insert(0) += 1;
    }

    /// Merges another histogram of the same hop bound.
    pub fn merge(&mut self, other: &TimeDiffHistogram) {
        for (&d, &c) in &other.counts {
            *self.counts.entry(d).or_insert(0) += c;
        }
    }

    /// `difference,count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("difference,count\n");
        for (d, c) in &self.counts {
            out.push_str(&format!("{d},{c}\n"));
        }
        out
    }
}

/// Computes the time-difference distribution with one bounded BFS per vertex.
pub fn k_hop_time_diffs(g: &TemporalGraph, k: usize) -> Result<TimeDiffHistogram> {
    if k == 0 {
        return Err(Error::Config("hop bound k must be at least 1".into()));
    }
    let n = g.num_vertices();
    let mut hist = TimeDiffHistogram {
        k,
        counts: BTreeMap::new(),
    };
    // visited[v] == u + 1 marks v as reached from source u
    let mut visited = vec![0usize; n];
    let mut frontier = Vec::new();
    let mut next = Vec::new();
    for u in 0..n {
        let stamp = u + 1;
        visited[u] = stamp;
        frontier.clear();
        frontier.push(u);
        let tu = g.time(u);
        for _ in 0..k {
            next.clear();
            for &x in &frontier {
                for &y in g.neighbors(x) {
                    if visited[y] != stamp {
                        visited[y] = stamp;
                        next.push(y);
                        let ty = g.time(y);
                        if ty <= tu {
                            hist.add(tu.abs_diff(ty));
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            std::mem::swap(&mut frontier, &mut next);
        }
    }
    Ok(hist)
}

/// Nearest-rank percentile: the smallest difference whose cumulative count
/// reaches `ceil(p / 100 * total)`.
pub fn percentile(h: &TimeDiffHistogram, p: f64) -> Result<u64> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::Config(format!("percentile must lie in (0, 100], got {p}")));
    }
    let total = h.total();
    if total == 0 {
        return Err(Error::Empty("time-difference histogram"));
    }
    let rank = ((p / 100.0) * total as f64).ceil().max(1.0) as u64;
    let mut cumulative = 0;
    for (&d, &c) in &h.counts {
        cumulative += c;
        if cumulative >= rank {
            return Ok(d);
        }
    }
    Ok(*h.counts.keys().next_back().expect("non-empty"))
}

/// History sizes from the requested percentiles of the k-hop distribution,
/// floored at 1 and de-duplicated in request order.
pub fn suggest_history_sizes(g: &TemporalGraph, k: usize, percentiles: &[f64]) -> Result<Vec<u64>> {
    let hist = k_hop_time_diffs(g, k)?;
    history_sizes_from(&hist, percentiles)
}

/// Same as [`suggest_history_sizes`] on a precomputed histogram.
pub fn history_sizes_from(hist: &TimeDiffHistogram, percentiles: &[f64]) -> Result<Vec<u64>> {
    let mut out: Vec<u64> = Vec::with_capacity(percentiles.len());
    for &p in percentiles {
        let c = percentile(hist, p)?.max(1);
        if !out.contains(&c) {
            out.push(c);
        }
    }
    Ok(out)
}
