//! Temporal graph storage.
//!
//! A [`TemporalGraph`] is an immutable snapshot: vertices carry a feature row,
//! an optional class label and an integer timestamp. Edges are undirected and
//! stored once (`u < v`); neighbor iteration goes through a compressed sparse
//! row index built at construction time.

mod io;
mod tasks;

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use io::{load_dataset, save_dataset, FeatureEncoding, LoadReport};
pub use tasks::{build_task_sequence, first_task_time, trim_history, History, TaskView};

pub type VertexId = usize;
pub type ClassId = u32;

/// Compressed sparse row adjacency of a symmetric graph.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<VertexId>,
}

impl Csr {
    /// Builds the symmetric index from canonical undirected edges.
    fn from_undirected(num_vertices: usize, edges: &[(VertexId, VertexId)]) -> Self {
        let mut degree = vec![0usize; num_vertices];
        for &(u, v) in edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_vertices + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..num_vertices].to_vec();
        let mut targets = vec![0; offsets[num_vertices]];
        for &(u, v) in edges {
            targets[cursor[u]] = v;
            cursor[u] += 1;
            targets[cursor[v]] = u;
            cursor[v] += 1;
        }
        for v in 0..num_vertices {
            targets[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        Csr { offsets, targets }
    }

    #[inline]
    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: VertexId) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }
}

/// Counts of input irregularities repaired while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub self_loops_dropped: usize,
    pub duplicate_edges_dropped: usize,
}

/// An evolving graph flattened into one snapshot with per-vertex timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalGraph {
    feature_dim: usize,
    num_classes: usize,
    times: Vec<i64>,
    labels: Vec<Option<ClassId>>,
    features: Vec<f32>,
    edges: Vec<(VertexId, VertexId)>,
    adjacency: Csr,
}

impl TemporalGraph {
    /// Validates the inputs and builds the graph. Edge direction is ignored,
    /// duplicates are merged and self-loops dropped (both reported in
    /// [`BuildStats`]).
    pub fn new(
        times: Vec<i64>,
        labels: Vec<Option<ClassId>>,
        features: Vec<f32>,
        feature_dim: usize,
        num_classes: usize,
        edges: impl IntoIterator<Item = (VertexId, VertexId)>,
    ) -> Result<(Self, BuildStats)> {
        let n = times.len();
        if labels.len() != n {
            return Err(Error::Validation(format!(
                "labels has {} entries but there are {n} vertices",
                labels.len()
            )));
        }
        if features.len() != n * feature_dim {
            return Err(Error::Validation(format!(
                "features has {} values, expected {n} rows x {feature_dim} columns = {}",
                features.len(),
                n * feature_dim
            )));
        }
        if let Some(i) = features.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature in row {} column {}",
                i / feature_dim.max(1),
                i % feature_dim.max(1)
            )));
        }
        for (v, label) in labels.iter().enumerate() {
            if let Some(c) = label {
                if *c as usize >= num_classes {
                    return Err(Error::Validation(format!(
                        "vertex {v} has class {c} but num_classes is {num_classes}"
                    )));
                }
            }
        }

        let mut stats = BuildStats::default();
        let mut canonical = Vec::new();
        let mut raw = 0usize;
        for (u, v) in edges {
            let bad = if u >= n {
                Some(u)
            } else if v >= n {
                Some(v)
            } else {
                None
            };
            if let Some(bad) = bad {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) references vertex {bad} but num_vertices is {n}"
                )));
            }
            if u == v {
                stats.self_loops_dropped += 1;
                continue;
            }
            raw += 1;
            canonical.push((u.min(v), u.max(v)));
        }
        canonical.sort_unstable();
        canonical.dedup();
        stats.duplicate_edges_dropped = raw - canonical.len();

        let adjacency = Csr::from_undirected(n, &canonical);
        Ok((
            TemporalGraph {
                feature_dim,
                num_classes,
                times,
                labels,
                features,
                edges: canonical,
                adjacency,
            },
            stats,
        ))
    }

    /// A graph with no vertices.
    pub fn empty(feature_dim: usize, num_classes: usize) -> Self {
        TemporalGraph {
            feature_dim,
            num_classes,
            times: Vec::new(),
            labels: Vec::new(),
            features: Vec::new(),
            edges: Vec::new(),
            adjacency: Csr::from_undirected(0, &[]),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.times.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Undirected edges, each stored once with `u < v`, sorted.
    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn adjacency(&self) -> &Csr {
        &self.adjacency
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        self.adjacency.neighbors(v)
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn time(&self, v: VertexId) -> i64 {
        self.times[v]
    }

    pub fn labels(&self) -> &[Option<ClassId>] {
        &self.labels
    }

    pub fn label(&self, v: VertexId) -> Option<ClassId> {
        self.labels[v]
    }

    pub fn feature_row(&self, v: VertexId) -> &[f32] {
        &self.features[v * self.feature_dim..(v + 1) * self.feature_dim]
    }

    /// Raw row-major feature storage.
    pub fn features_raw(&self) -> &[f32] {
        &self.features
    }

    /// Features widened to `f64` for model computations.
    pub fn feature_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.num_vertices(), self.feature_dim), |(i, j)| {
            self.features[i * self.feature_dim + j] as f64
        })
    }

    /// Sorted distinct timestamps.
    pub fn timestamps(&self) -> Vec<i64> {
        let set: BTreeSet<i64> = self.times.iter().copied().collect();
        set.into_iter().collect()
    }

    /// Induced subgraph on `keep` (original ids, any order; output order
    /// follows ascending original id). Edges survive only when both
    /// endpoints are kept.
    pub fn induced_subgraph(&self, keep: &[VertexId]) -> Subgraph {
        let mut ids: Vec<VertexId> = keep.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mut new_id = vec![usize::MAX; self.num_vertices()];
        for (i, &v) in ids.iter().enumerate() {
            new_id[v] = i;
        }
        let mut features = Vec::with_capacity(ids.len() * self.feature_dim);
        for &v in &ids {
            features.extend_from_slice(self.feature_row(v));
        }
        let edges: Vec<(VertexId, VertexId)> = self
            .edges
            .iter()
            .filter(|&&(u, v)| new_id[u] != usize::MAX && new_id[v] != usize::MAX)
            .map(|&(u, v)| (new_id[u], new_id[v]))
            .collect();
        let adjacency = Csr::from_undirected(ids.len(), &edges);
        let graph = TemporalGraph {
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
            times: ids.iter().map(|&v| self.times[v]).collect(),
            labels: ids.iter().map(|&v| self.labels[v]).collect(),
            features,
            edges,
            adjacency,
        };
        Subgraph {
            graph,
            original_ids: ids,
        }
    }

    /// Same graph with replaced timestamps.
    pub fn with_times(&self, times: Vec<i64>) -> Result<Self> {
        if times.len() != self.num_vertices() {
            return Err(Error::Validation(format!(
                "{} timestamps for {} vertices",
                times.len(),
                self.num_vertices()
            )));
        }
        Ok(TemporalGraph { times, ..self.clone() })
    }

    /// Classes that occur among the labeled vertices, ascending.
    pub fn present_classes(&self) -> BTreeSet<ClassId> {
        self.labels.iter().flatten().copied().collect()
    }
}

/// A re-indexed subgraph together with the mapping back to parent ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub graph: TemporalGraph,
    /// `original_ids[new] = old`, strictly ascending.
    pub original_ids: Vec<VertexId>,
}

impl Subgraph {
    /// Position of a parent vertex in this subgraph, if it survived.
    pub fn local_id(&self, original: VertexId) -> Option<VertexId> {
        self.original_ids.binary_search(&original).ok()
    }

    /// Checks that this is an induced subgraph of `parent` with identical
    /// vertex attributes.
    pub fn validate_against(&self, parent: &TemporalGraph) -> Result<()> {
        let g = &self.graph;
        if g.feature_dim != parent.feature_dim {
            return Err(Error::Validation(format!(
                "feature width {} differs from parent width {}",
                g.feature_dim, parent.feature_dim
            )));
        }
        if self.original_ids.len() != g.num_vertices() {
            return Err(Error::Validation("id mapping length differs from vertex count".into()));
        }
        for (i, &v) in self.original_ids.iter().enumerate() {
            if v >= parent.num_vertices() {
                return Err(Error::Validation(format!(
                    "subgraph vertex {i} maps to missing parent vertex {v}"
                )));
            }
            if i > 0 && self.original_ids[i - 1] >= v {
                return Err(Error::Validation("id mapping not strictly ascending".into()));
            }
            if g.times[i] != parent.times[v]
                || g.labels[i] != parent.labels[v]
                || g.feature_row(i) != parent.feature_row(v)
            {
                return Err(Error::Validation(format!(
                    "attributes of subgraph vertex {i} differ from parent vertex {v}"
                )));
            }
        }
        for &(u, v) in &g.edges {
            let (pu, pv) = (self.original_ids[u], self.original_ids[v]);
            if parent.neighbors(pu).binary_search(&pv).is_err() {
                return Err(Error::Validation(format!(
                    "subgraph edge ({pu}, {pv}) is absent from the parent"
                )));
            }
        }
        Ok(())
    }
}
