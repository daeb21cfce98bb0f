//! Line-oriented dataset directory format.
//!
//! ```text
//! manifest.txt   key=value lines: format_version=1, num_vertices, feature_dim, num_classes
//! edges.txt      "src dst" per line, 0-based, direction ignored
//! times.txt      one integer timestamp per vertex
//! labels.txt     one integer class per vertex, -1 = unlabeled
//! features.csv   comma-separated rows, or
//! features.bin   row-major little-endian f32, num_vertices * feature_dim values
//! ```
//!
//! Each text file may also be named without the `.txt` extension.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{BuildStats, ClassId, TemporalGraph, VertexId};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// How feature rows are written by [`save_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureEncoding {
    Csv,
    Binary,
}

/// Result of loading a dataset directory.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub graph: TemporalGraph,
    pub stats: BuildStats,
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    let with_ext = dir.join(format!("{stem}.txt"));
    if with_ext.is_file() {
        return Ok(with_ext);
    }
    let bare = dir.join(stem);
    if bare.is_file() {
        return Ok(bare);
    }
    Err(Error::MissingFile(with_ext))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Non-empty lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_manifest(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = read_text(path)?;
    let name = file_name(path);
    let mut map = BTreeMap::new();
    for (line, l) in content_lines(&text) {
        if l.starts_with('#') {
            continue;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| Error::Parse {
            file: name.clone(),
            line,
            message: format!("expected key=value, got {l:?}"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn manifest_usize(map: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Validation(format!("manifest is missing required key {key}")))?;
    raw.parse()
        .map_err(|_| Error::Validation(format!("manifest key {key} is not a count: {raw:?}")))
}

fn parse_column<T: std::str::FromStr>(path: &Path, expected: usize, what: &str) -> Result<Vec<T>> {
    let text = read_text(path)?;
    let name = file_name(path);
    let mut out = Vec::with_capacity(expected);
    for (line, l) in content_lines(&text) {
        let value = l.parse::<T>().map_err(|_| Error::Parse {
            file: name.clone(),
            line,
            message: format!("expected {what}, got {l:?}"),
        })?;
        out.push(value);
    }
    if out.len() != expected {
        return Err(Error::Validation(format!(
            "{name} has {} entries but num_vertices is {expected}",
            out.len()
        )));
    }
    Ok(out)
}

fn parse_edges(path: &Path) -> Result<Vec<(VertexId, VertexId)>> {
    let text = read_text(path)?;
    let name = file_name(path);
    let mut edges = Vec::new();
    for (line, l) in content_lines(&text) {
        let mut parts = l.split_whitespace();
        let mut next = || -> Result<VertexId> {
            let tok = parts.next().ok_or_else(|| Error::Parse {
                file: name.clone(),
                line,
                message: "expected two vertex ids".into(),
            })?;
            tok.parse().map_err(|_| Error::Parse {
                file: name.clone(),
                line,
                message: format!("invalid vertex id {tok:?}"),
            })
        };
        let (u, v) = (next()?, next()?);
        if parts.next().is_some() {
            return Err(Error::Parse {
                file: name.clone(),
                line,
                message: "expected exactly two vertex ids".into(),
            });
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn parse_features(dir: &Path, n: usize, dim: usize) -> Result<Vec<f32>> {
    let csv = dir.join("features.csv");
    let bin = dir.join("features.bin");
    if csv.is_file() {
        let text = read_text(&csv)?;
        let mut out = Vec::with_capacity(n * dim);
        let mut rows = 0;
        for (line, l) in content_lines(&text) {
            let before = out.len();
            for tok in l.split(',') {
                let x: f32 = tok.trim().parse().map_err(|_| Error::Parse {
                    file: "features.csv".into(),
                    line,
                    message: format!("invalid real {tok:?}"),
                })?;
                out.push(x);
            }
            if out.len() - before != dim {
                return Err(Error::Validation(format!(
                    "features.csv line {line} has {} values but feature_dim is {dim}",
                    out.len() - before
                )));
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::Validation(format!(
                "features.csv has {rows} rows but num_vertices is {n}"
            )));
        }
        Ok(out)
    } else if bin.is_file() {
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        if bytes.len() != n * dim * 4 {
            return Err(Error::Validation(format!(
                "features.bin has {} bytes, expected {n} x {dim} x 4 = {}",
                bytes.len(),
                n * dim * 4
            )));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    } else {
        Err(Error::MissingFile(csv))
    }
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<LoadReport> {
    let dir = dir.as_ref();
    let manifest = parse_manifest(&locate(dir, "manifest")?)?;
    let version = manifest_usize(&manifest, "format_version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Validation(format!("unsupported format_version {version}")));
    }
    let n = manifest_usize(&manifest, "num_vertices")?;
    let dim = manifest_usize(&manifest, "feature_dim")?;
    let num_classes = manifest_usize(&manifest, "num_classes")?;

    let edges = parse_edges(&locate(dir, "edges")?)?;
    let times: Vec<i64> = parse_column(&locate(dir, "times")?, n, "integer timestamp")?;
    let raw_labels: Vec<i64> = parse_column(&locate(dir, "labels")?, n, "integer label")?;
    let labels = raw_labels
        .iter()
        .enumerate()
        .map(|(v, &c)| match c {
            -1 => Ok(None),
            c if c >= 0 && c <= ClassId::MAX as i64 => Ok(Some(c as ClassId)),
            c => Err(Error::Validation(format!("vertex {v} has invalid label {c}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let features = parse_features(dir, n, dim)?;

    let (graph, stats) = TemporalGraph::new(times, labels, features, dim, num_classes, edges)?;
    Ok(LoadReport { graph, stats })
}

/// Writes `g` in the directory format, creating `dir` if needed.
pub fn save_dataset(g: &TemporalGraph, dir: impl AsRef<Path>, encoding: FeatureEncoding) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, contents: &[u8]| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(path, e))
    };

    write(
        "manifest.txt",
        format!(
            "format_version={FORMAT_VERSION}\nnum_vertices={}\nfeature_dim={}\nnum_classes={}\n",
            g.num_vertices(),
            g.feature_dim(),
            g.num_classes()
        )
        .as_bytes(),
    )?;

    let mut edges = String::new();
    for &(u, v) in g.edges() {
        edges.push_str(&format!("{u} {v}\n"));
    }
    write("edges.txt", edges.as_bytes())?;

    let times: String = g.times().iter().map(|t| format!("{t}\n")).collect();
    write("times.txt", times.as_bytes())?;

    let labels: String = g
        .labels()
        .iter()
        .map(|l| match l {
            Some(c) => format!("{c}\n"),
            None => "-1\n".to_string(),
        })
        .collect();
    write("labels.txt", labels.as_bytes())?;

    match encoding {
        FeatureEncoding::Csv => {
            let mut out = String::new();
            for v in 0..g.num_vertices() {
                let row: Vec<String> = g.feature_row(v).iter().map(|x| format!("{x:?}")).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            write("features.csv", out.as_bytes())
        }
        FeatureEncoding::Binary => {
            let bytes: Vec<u8> = g.features_raw().iter().flat_map(|x| x.to_le_bytes()).collect();
            write("features.bin", &bytes)
        }
    }
}
