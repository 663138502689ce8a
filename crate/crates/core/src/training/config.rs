//! Line-oriented `key = value` training configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys and
//! malformed values are errors that name the offending key.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{NeighborQuery, SamplingStrategy};
use crate::model::{AttentionMode, Combine, ModelDims};
use crate::time_encoding::PositionalKind;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub layers: usize,
    pub heads: usize,
    pub neighborhood_size: usize,
    pub neighborhood_dropout: f64,
    pub sampling: SamplingStrategy,
    pub time_jitter: f64,
    pub negatives_per_positive: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub attention_mode: AttentionMode,
    pub positional_kind: PositionalKind,
    pub combine: Combine,
    pub seed: u64,
    pub embed_dim: usize,
    pub time_dim: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub unseen_fraction: f64,
    pub mlp_learning_rate: f64,
    pub mlp_l2: f64,
    pub mlp_epochs: usize,
    pub mlp_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            layers: 2,
            heads: 2,
            neighborhood_size: 20,
            neighborhood_dropout: 0.1,
            sampling: SamplingStrategy::Uniform,
            time_jitter: 1.0,
            negatives_per_positive: 1,
            batch_size: 200,
            max_epochs: 10,
            patience: 3,
            attention_mode: AttentionMode::Learned,
            positional_kind: PositionalKind::Fixed,
            combine: Combine::Concat,
            seed: 0,
            embed_dim: 32,
            time_dim: 32,
            head_dim: 16,
            ffn_dim: 32,
            train_frac: 0.70,
            val_frac: 0.15,
            unseen_fraction: 0.10,
            mlp_learning_rate: 1e-3,
            mlp_l2: 0.01,
            mlp_epochs: 50,
            mlp_batch_size: 64,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "learning_rate",
    "layers",
    "heads",
    "neighborhood_size",
    "neighborhood_dropout",
    "sampling",
    "time_jitter",
    "negatives_per_positive",
    "batch_size",
    "max_epochs",
    "patience",
    "attention_mode",
    "positional_kind",
    "combine",
    "seed",
    "embed_dim",
    "time_dim",
    "head_dim",
    "ffn_dim",
    "train_frac",
    "val_frac",
    "unseen_fraction",
    "mlp_learning_rate",
    "mlp_l2",
    "mlp_epochs",
    "mlp_batch_size",
];

fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: Display,
{
    raw.parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {raw:?}: {e}")))
}

impl TrainConfig {
    /// Overrides one field. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        match key {
            "learning_rate" => self.learning_rate = parse(key, raw)?,
            "layers" => self.layers = parse(key, raw)?,
            "heads" => self.heads = parse(key, raw)?,
            "neighborhood_size" => self.neighborhood_size = parse(key, raw)?,
            "neighborhood_dropout" => self.neighborhood_dropout = parse(key, raw)?,
            "sampling" => self.sampling = parse(key, raw)?,
            "time_jitter" => self.time_jitter = parse(key, raw)?,
            "negatives_per_positive" => self.negatives_per_positive = parse(key, raw)?,
            "batch_size" => self.batch_size = parse(key, raw)?,
            "max_epochs" => self.max_epochs = parse(key, raw)?,
            "patience" => self.patience = parse(key, raw)?,
            "attention_mode" => self.attention_mode = parse(key, raw)?,
            "positional_kind" => self.positional_kind = parse(key, raw)?,
            "combine" => self.combine = parse(key, raw)?,
            "seed" => self.seed = parse(key, raw)?,
            "embed_dim" => self.embed_dim = parse(key, raw)?,
            "time_dim" => self.time_dim = parse(key, raw)?,
            "head_dim" => self.head_dim = parse(key, raw)?,
            "ffn_dim" => self.ffn_dim = parse(key, raw)?,
            "train_frac" => self.train_frac = parse(key, raw)?,
            "val_frac" => self.val_frac = parse(key, raw)?,
            "unseen_fraction" => self.unseen_fraction = parse(key, raw)?,
            "mlp_learning_rate" => self.mlp_learning_rate = parse(key, raw)?,
            "mlp_l2" => self.mlp_l2 = parse(key, raw)?,
            "mlp_epochs" => self.mlp_epochs = parse(key, raw)?,
            "mlp_batch_size" => self.mlp_batch_size = parse(key, raw)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {line:?}", i + 1))
            })?;
            config.set(key.trim(), value)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.patience < 1 {
            return fail("patience must be at least 1".into());
        }
        if self.negatives_per_positive < 1 {
            return fail("negatives_per_positive must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.neighborhood_dropout) {
            return fail(format!(
                "neighborhood_dropout must lie in [0, 1), got {}",
                self.neighborhood_dropout
            ));
        }
        if self.neighborhood_size < 1 || self.batch_size < 1 {
            return fail("neighborhood_size and batch_size must be at least 1".into());
        }
        if !(self.time_jitter >= 0.0) {
            return fail(format!("time_jitter must be non-negative, got {}", self.time_jitter));
        }
        if !(0.0..1.0).contains(&self.unseen_fraction) {
            return fail(format!("unseen_fraction must lie in [0, 1), got {}", self.unseen_fraction));
        }
        if !(self.mlp_l2 >= 0.0) || !(self.mlp_learning_rate > 0.0) || self.mlp_batch_size < 1 {
            return fail("mlp_l2 >= 0, mlp_learning_rate > 0 and mlp_batch_size >= 1 required".into());
        }
        Ok(())
    }

    /// Every key with its current value, in key order.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let values: [String; 26] = [
            self.learning_rate.to_string(),
            self.layers.to_string(),
            self.heads.to_string(),
            self.neighborhood_size.to_string(),
            self.neighborhood_dropout.to_string(),
            self.sampling.to_string(),
            self.time_jitter.to_string(),
            self.negatives_per_positive.to_string(),
            self.batch_size.to_string(),
            self.max_epochs.to_string(),
            self.patience.to_string(),
            self.attention_mode.to_string(),
            self.positional_kind.to_string(),
            self.combine.to_string(),
            self.seed.to_string(),
            self.embed_dim.to_string(),
            self.time_dim.to_string(),
            self.head_dim.to_string(),
            self.ffn_dim.to_string(),
            self.train_frac.to_string(),
            self.val_frac.to_string(),
            self.unseen_fraction.to_string(),
            self.mlp_learning_rate.to_string(),
            self.mlp_l2.to_string(),
            self.mlp_epochs.to_string(),
            self.mlp_batch_size.to_string(),
        ];
        CONFIG_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    /// Inverse of [`to_map`](Self::to_map); absent keys keep their defaults.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut config = Self::default();
        for (k, v) in map {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// `key = value` lines, one per key.
    pub fn to_text(&self) -> String {
        self.to_map()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn dims(&self, node_dim: usize, edge_dim: usize) -> ModelDims {
        ModelDims {
            node_dim,
            edge_dim,
            embed_dim: self.embed_dim,
            time_dim: self.time_dim,
            head_dim: self.head_dim,
            ffn_dim: self.ffn_dim,
            heads: self.heads,
            layers: self.layers,
        }
    }

    pub fn query(&self) -> NeighborQuery {
        NeighborQuery {
            max_size: self.neighborhood_size,
            strategy: self.sampling,
            jitter: self.time_jitter,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::default();
        c.learning_rate = 0.0025;
        c.attention_mode = AttentionMode::Positional;
        c.sampling = SamplingStrategy::InverseTimespan;
        let back = TrainConfig::parse_str(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(TrainConfig::from_map(&c.to_map()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = TrainConfig::parse_str("layers = 1\nlearning_rte = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("learning_rte"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = TrainConfig::parse_str("# tiny\n\nheads = 3\n  seed=9 \n").unwrap();
        assert_eq!((c.heads, c.seed), (3, 9));
    }

    #[test]
    fn invariants_are_enforced() {
        for bad in ["patience = 0", "negatives_per_positive = 0", "neighborhood_dropout = 1.0"] {
            assert!(TrainConfig::parse_str(bad).is_err(), "{bad}");
        }
        let err = TrainConfig::parse_str("layers = two").unwrap_err();
        assert!(err.to_string().contains("layers"));
    }
}
