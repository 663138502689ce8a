//! JSON checkpoint format.
//!
//! ```text
//! {
//!   "attention_mode": "learned" | "constant" | "positional",
//!   "combine": "concat" | "sum",
//!   "dims": { "edge_dim", "embed_dim", "ffn_dim", "head_dim", "heads",
//!             "layers", "node_dim", "time_dim" },
//!   "format": "tgat-checkpoint",
//!   "metadata": { "<key>": "<value>", ... },
//!   "params": { "<name>": { "data": [f64...], "shape": [rows, cols] }, ... },
//!   "positional": null | { "kind": "fixed" | "learnable", "max_positions": n },
//!   "version": 1
//! }
//! ```
//!
//! Keys are written in sorted order and floats round-trip exactly, so equal
//! models produce byte-identical files. Parameter names are those of
//! [`TgatModel::params`]: `layer{l}.head{h}.w_q|w_k|w_v`, `layer{l}.w0|b0|w1|b1`,
//! `time.omega`, and `position.table` for a learnable positional table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttentionMode, Combine, ModelDims, ModelInit, TgatModel};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::time_encoding::PositionalKind;

pub const CHECKPOINT_FORMAT: &str = "tgat-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamBlob {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PositionalSpec {
    kind: PositionalKind,
    max_positions: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    dims: ModelDims,
    attention_mode: AttentionMode,
    combine: Combine,
    positional: Option<PositionalSpec>,
    metadata: BTreeMap<String, String>,
    params: BTreeMap<String, ParamBlob>,
}

/// A model together with free-form string metadata (typically the resolved
/// training configuration).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: TgatModel,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(model: TgatModel, metadata: BTreeMap<String, String>) -> Self {
        Self { model, metadata }
    }

    pub fn to_json(&self) -> Result<String> {
        let m = &self.model;
        let params = m
            .params()
            .into_iter()
            .map(|p| {
                (
                    p.name,
                    ParamBlob {
                        shape: [p.shape.0, p.shape.1],
                        data: p.data.to_vec(),
                    },
                )
            })
            .collect();
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: m.dims,
            attention_mode: m.mode,
            combine: m.combine,
            positional: m.positional.as_ref().map(|p| PositionalSpec {
                kind: p.kind(),
                max_positions: p.max_positions(),
            }),
            metadata: self.metadata.clone(),
            params,
        };
        // round-trip through Value so every object is key-sorted
        let value = serde_json::to_value(&file).map_err(|e| Error::Serialization(e.to_string()))?;
        serde_json::to_string(&value).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Serialization(format!("not a checkpoint: format {:?}", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported checkpoint version {}",
                file.version
            )));
        }
        let init = ModelInit {
            t_max: 1.0,
            max_positions: file.positional.as_ref().map_or(1, |p| p.max_positions),
            positional_kind: file
                .positional
                .as_ref()
                .map_or(PositionalKind::Fixed, |p| p.kind),
        };
        let mut model = TgatModel::new(file.dims, file.attention_mode, file.combine, init, &mut rng_for(0, &[]))?;
        let expected: Vec<(String, (usize, usize))> =
            model.params().into_iter().map(|p| (p.name, p.shape)).collect();
        if expected.len() != file.params.len() {
            return Err(Error::Serialization(format!(
                "checkpoint holds {} parameter buffers, model needs {}",
                file.params.len(),
                expected.len()
            )));
        }
        for ((name, shape), slot) in expected.iter().zip(model.params_mut()) {
            let blob = file
                .params
                .get(name)
                .ok_or_else(|| Error::Serialization(format!("missing parameter {name}")))?;
            if blob.shape != [shape.0, shape.1] || blob.data.len() != slot.len() {
                return Err(Error::Serialization(format!(
                    "parameter {name}: shape {:?}, expected {:?}",
                    blob.shape, shape
                )));
            }
            slot.copy_from_slice(&blob.data);
        }
        Ok(Self {
            model,
            metadata: file.metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
