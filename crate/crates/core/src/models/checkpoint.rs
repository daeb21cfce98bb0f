//! Model checkpoints: a `key=value` manifest (`checkpoint.txt`) and one
//! binary blob (`params.bin`) holding, for each layer in order, the weight
//! matrix (row-major, `input x output`) followed by the bias vector, every
//! value a little-endian `f64`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Layer, ModelKind, ModelSpec, ModelState};
use crate::error::{Error, Result};
use crate::graph::ClassId;

const MANIFEST: &str = "checkpoint.txt";
const PARAMS: &str = "params.bin";

/// A model together with the class id of each output column.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelState,
    pub classes: Vec<ClassId>,
}

pub fn save_checkpoint(ckpt: &Checkpoint, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let m = &ckpt.model;
    if ckpt.classes.len() != m.output_dim() {
        return Err(Error::Contract(format!(
            "{} class ids for {} output columns",
            ckpt.classes.len(),
            m.output_dim()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let classes: Vec<String> = ckpt.classes.iter().map(|c| c.to_string()).collect();
    let manifest = format!(
        "format_version=1\nkind={}\ninput_dim={}\nhidden_dim={}\noutput_dim={}\nsgc_k={}\ndropout={:?}\nseed={}\ndtype=f64\nclasses={}\n",
        m.spec.kind,
        m.input_dim,
        m.spec.hidden_dim,
        m.output_dim(),
        m.spec.sgc_k,
        m.spec.dropout,
        m.seed,
        classes.join(",")
    );
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(path, e))?;

    let mut bytes = Vec::with_capacity(m.num_parameters() * 8);
    for layer in &m.layers {
        for x in layer.weight.iter().chain(layer.bias.iter()) {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    let path = dir.join(PARAMS);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn field<T: std::str::FromStr>(map: &BTreeMap<&str, &str>, key: &str) -> Result<T> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Validation(format!("checkpoint manifest lacks {key}")))?;
    raw.parse()
        .map_err(|_| Error::Validation(format!("checkpoint field {key} has invalid value {raw:?}")))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let map: BTreeMap<&str, &str> = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect();
    if field::<u32>(&map, "format_version")? != 1 {
        return Err(Error::Validation("unsupported checkpoint format_version".into()));
    }
    if map.get("dtype") != Some(&"f64") {
        return Err(Error::Validation("checkpoint dtype must be f64".into()));
    }
    let kind: ModelKind = field(&map, "kind")?;
    let spec = ModelSpec {
        kind,
        hidden_dim: field(&map, "hidden_dim")?,
        sgc_k: field(&map, "sgc_k")?,
        dropout: field(&map, "dropout")?,
    };
    let input_dim: usize = field(&map, "input_dim")?;
    let output_dim: usize = field(&map, "output_dim")?;
    let seed: u64 = field(&map, "seed")?;
    let classes: Vec<ClassId> = match map.get("classes") {
        Some(s) if !s.is_empty() => s
            .split(',')
            .map(|c| {
                c.trim()
                    .parse()
                    .map_err(|_| Error::Validation(format!("invalid class id {c:?}")))
            })
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };
    if classes.len() != output_dim {
        return Err(Error::Validation(format!(
            "checkpoint lists {} classes for output_dim {output_dim}",
            classes.len()
        )));
    }

    let mut model = ModelState::new(spec, input_dim, output_dim, seed);
    let path = dir.join(PARAMS);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != model.num_parameters() * 8 {
        return Err(Error::Validation(format!(
            "params.bin holds {} bytes, expected {}",
            bytes.len(),
            model.num_parameters() * 8
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for layer in &mut model.layers {
        let (r, c) = layer.weight.dim();
        let weight = Array2::from_shape_fn((r, c), |_| values.next().expect("length checked"));
        let bias = Array1::from_shape_fn(c, |_| values.next().expect("length checked"));
        *layer = Layer { weight, bias };
    }
    Ok(Checkpoint { model, classes })
}
