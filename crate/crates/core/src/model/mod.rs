//! Temporal graph attention model: parameters, checkpoints and the forward pass.

mod checkpoint;
mod forward;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Tensor};
use crate::error::{Error, Result};
use crate::init::glorot_uniform;
use crate::time_encoding::{PositionalEncoder, PositionalKind, TimeEncoder};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use forward::{
    attend_head, build_entity_matrix, AttentionRecord, BoundHead, BoundLayer, BoundParams,
    ForwardSettings, Forward, TimeBlock,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// Scaled dot-product attention over functional time encodings.
    Learned,
    /// Every neighbor weighted `1/N` (mean pooling of values).
    Constant,
    /// Dot-product attention with chronological position vectors in place
    /// of the time encoding.
    Positional,
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionMode::Learned => "learned",
            AttentionMode::Constant => "constant",
            AttentionMode::Positional => "positional",
        })
    }
}

impl FromStr for AttentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(AttentionMode::Learned),
            "constant" => Ok(AttentionMode::Constant),
            "positional" => Ok(AttentionMode::Positional),
            other => Err(Error::Config(format!(
                "unknown attention mode {other:?} (learned, constant, positional)"
            ))),
        }
    }
}

/// How hidden, edge and time blocks of an entity row are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    Concat,
    /// Elementwise sum; needs every block to share one width.
    Sum,
}

impl fmt::Display for Combine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Combine::Concat => "concat",
            Combine::Sum => "sum",
        })
    }
}

impl FromStr for Combine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(Combine::Concat),
            "sum" => Ok(Combine::Sum),
            other => Err(Error::Config(format!("unknown combine mode {other:?} (concat, sum)"))),
        }
    }
}

/// Layer widths. `time_dim` is twice the number of encoder frequencies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub node_dim: usize,
    pub edge_dim: usize,
    pub embed_dim: usize,
    pub time_dim: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub heads: usize,
    pub layers: usize,
}

impl ModelDims {
    /// Hidden width fed into layer `layer` (1-based).
    pub fn hidden_in(&self, layer: usize) -> usize {
        if layer == 1 {
            self.node_dim
        } else {
            self.embed_dim
        }
    }

    /// Width of one entity-matrix row at layer `layer`.
    pub fn entity_width(&self, layer: usize, combine: Combine) -> usize {
        match combine {
            Combine::Concat => self.hidden_in(layer) + self.edge_dim + self.time_dim,
            Combine::Sum => self.hidden_in(layer),
        }
    }

    pub fn validate(&self, combine: Combine) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        if self.heads == 0 {
            return Err(Error::Config("heads must be at least 1".into()));
        }
        if self.embed_dim == 0 || self.head_dim == 0 || self.ffn_dim == 0 {
            return Err(Error::Config("embed_dim, head_dim and ffn_dim must be positive".into()));
        }
        if self.time_dim == 0 || !self.time_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "time_dim must be even and positive, got {}",
                self.time_dim
            )));
        }
        if combine == Combine::Sum {
            let widths_match = (1..=self.layers).all(|l| self.hidden_in(l) == self.time_dim)
                && (self.edge_dim == 0 || self.edge_dim == self.time_dim);
            if !widths_match {
                return Err(Error::Config(
                    "combine = sum needs node_dim, embed_dim, time_dim (and edge_dim if any) to match"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

/// One attention layer: per-head projections plus the shared two-layer FFN.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub heads: Vec<HeadParams>,
    /// `(heads * head_dim + node_dim) x ffn_dim`
    pub w0: Matrix,
    pub b0: Matrix,
    /// `ffn_dim x embed_dim`
    pub w1: Matrix,
    pub b1: Matrix,
}

impl LayerParams {
    fn init(input_width: usize, dims: &ModelDims, rng: &mut impl Rng) -> Self {
        let heads = (0..dims.heads)
            .map(|_| HeadParams {
                w_q: glorot_uniform(input_width, dims.head_dim, rng),
                w_k: glorot_uniform(input_width, dims.head_dim, rng),
                w_v: glorot_uniform(input_width, dims.head_dim, rng),
            })
            .collect();
        let ffn_in = dims.heads * dims.head_dim + dims.node_dim;
        Self {
            heads,
            w0: glorot_uniform(ffn_in, dims.ffn_dim, rng),
            b0: Matrix::zeros(1, dims.ffn_dim),
            w1: glorot_uniform(dims.ffn_dim, dims.embed_dim, rng),
            b1: Matrix::zeros(1, dims.embed_dim),
        }
    }

    /// Weight footprint of one head's attention path, biases excluded:
    /// one projection (query, key and value projections all share this
    /// shape), the `W_0` rows this head's output and the raw features feed,
    /// and `W_1`.
    pub fn head_parameter_count(&self, head: usize) -> usize {
        let h = &self.heads[head];
        let head_dim = h.w_q.cols();
        let raw_rows = self.w0.rows() - self.heads.len() * head_dim;
        h.w_q.len() + (head_dim + raw_rows) * self.w0.cols() + self.w1.len()
    }

    /// Every scalar in the layer, biases and all three projections included.
    pub fn parameter_count(&self) -> usize {
        self.heads
            .iter()
            .map(|h| h.w_q.len() + h.w_k.len() + h.w_v.len())
            .sum::<usize>()
            + self.w0.len()
            + self.b0.len()
            + self.w1.len()
            + self.b1.len()
    }
}

/// Stacked attention layers sharing one time encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct TgatModel {
    pub dims: ModelDims,
    pub mode: AttentionMode,
    pub combine: Combine,
    pub layers: Vec<LayerParams>,
    pub time_encoder: TimeEncoder,
    /// Present only in [`AttentionMode::Positional`].
    pub positional: Option<PositionalEncoder>,
}

/// Named, shaped view of one parameter buffer.
#[derive(Debug)]
pub struct ParamRef<'a> {
    pub name: String,
    pub shape: (usize, usize),
    pub data: &'a [f64],
}

/// Options that only matter at construction.
#[derive(Clone, Copy, Debug)]
pub struct ModelInit {
    /// Time scale used to spread the initial frequency ladder.
    pub t_max: f64,
    /// Positional table size; must cover the neighborhood cap plus one.
    pub max_positions: usize,
    pub positional_kind: PositionalKind,
}

impl TgatModel {
    pub fn new(
        dims: ModelDims,
        mode: AttentionMode,
        combine: Combine,
        init: ModelInit,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        dims.validate(combine)?;
        let layers = (1..=dims.layers)
            .map(|l| LayerParams::init(dims.entity_width(l, combine), &dims, rng))
            .collect();
        let time_encoder = TimeEncoder::ladder(dims.time_dim, init.t_max)?;
        let positional = match mode {
            AttentionMode::Positional => Some(match init.positional_kind {
                PositionalKind::Fixed => PositionalEncoder::sinusoidal(init.max_positions, dims.time_dim),
                PositionalKind::Learnable => {
                    PositionalEncoder::learnable(init.max_positions, dims.time_dim, rng)
                }
            }),
            _ => None,
        };
        Ok(Self {
            dims,
            mode,
            combine,
            layers,
            time_encoder,
            positional,
        })
    }

    fn learnable_positional(&self) -> bool {
        self.positional
            .as_ref()
            .is_some_and(|p| p.kind() == PositionalKind::Learnable)
    }

    /// Every trainable buffer in a fixed order.
    pub fn params(&self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let l = l + 1;
            for (h, head) in layer.heads.iter().enumerate() {
                for (tag, m) in [("w_q", &head.w_q), ("w_k", &head.w_k), ("w_v", &head.w_v)] {
                    out.push(ParamRef {
                        name: format!("layer{l}.head{h}.{tag}"),
                        shape: m.shape(),
                        data: m.data(),
                    });
                }
            }
            for (tag, m) in [("w0", &layer.w0), ("b0", &layer.b0), ("w1", &layer.w1), ("b1", &layer.b1)] {
                out.push(ParamRef {
                    name: format!("layer{l}.{tag}"),
                    shape: m.shape(),
                    data: m.data(),
                });
            }
        }
        out.push(ParamRef {
            name: "time.omega".into(),
            shape: (1, self.time_encoder.num_frequencies()),
            data: self.time_encoder.frequencies(),
        });
        if self.learnable_positional() {
            let table = self.positional.as_ref().expect("positional").table();
            out.push(ParamRef {
                name: "position.table".into(),
                shape: table.shape(),
                data: table.data(),
            });
        }
        out
    }

    /// Mutable buffers in the same order as [`params`](Self::params).
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let learnable_pos = self.learnable_positional();
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            for head in &mut layer.heads {
                out.push(head.w_q.data_mut());
                out.push(head.w_k.data_mut());
                out.push(head.w_v.data_mut());
            }
            out.push(layer.w0.data_mut());
            out.push(layer.b0.data_mut());
            out.push(layer.w1.data_mut());
            out.push(layer.b1.data_mut());
        }
        out.push(self.time_encoder.frequencies_mut());
        if learnable_pos {
            out.push(self.positional.as_mut().expect("positional").table_mut().data_mut());
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    /// Places every parameter on `tape`, trainable or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let tensors: Vec<Tensor> = self
            .params()
            .iter()
            .map(|p| {
                let m = Matrix::from_vec(p.shape.0, p.shape.1, p.data.to_vec()).expect("parameter shape");
                tape.leaf(m, trainable)
            })
            .collect();
        self.bind_tensors(tape, &tensors).expect("tensors built from params")
    }

    /// Interprets tensors already on `tape`, given in [`params`](Self::params)
    /// order, as this model's parameters.
    pub fn bind_tensors(&self, tape: &mut Tape, tensors: &[Tensor]) -> Result<BoundParams> {
        let expected = self.params();
        if tensors.len() != expected.len() {
            return Err(Error::Contract(format!(
                "{} tensors for {} parameter buffers",
                tensors.len(),
                expected.len()
            )));
        }
        for (&t, p) in tensors.iter().zip(&expected) {
            if tape.shape(t) != p.shape {
                return Err(Error::Contract(format!(
                    "{}: tensor {:?}, expected {:?}",
                    p.name,
                    tape.shape(t),
                    p.shape
                )));
            }
        }
        let mut next = tensors.iter().copied();
        let mut take = || next.next().expect("count checked");
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let heads = layer
                .heads
                .iter()
                .map(|_| BoundHead {
                    w_q: take(),
                    w_k: take(),
                    w_v: take(),
                })
                .collect();
            layers.push(BoundLayer {
                heads,
                w0: take(),
                b0: take(),
                w1: take(),
                b1: take(),
            });
        }
        let omega = take();
        let positional = match &self.positional {
            Some(p) if p.kind() == PositionalKind::Learnable => Some(take()),
            Some(p) => Some(tape.constant(p.table().clone())),
            None => None,
        };
        Ok(BoundParams {
            layers,
            omega,
            positional,
            all: tensors.to_vec(),
        })
    }

    /// Gradients for every parameter after `tape.backward`, in
    /// [`params`](Self::params) order; untouched parameters get zeros.
    pub fn collect_grads(&self, tape: &Tape, bound: &BoundParams) -> Vec<Vec<f64>> {
        bound
            .all
            .iter()
            .map(|&t| match tape.grad(t) {
                Some(g) => g.data().to_vec(),
                None => vec![0.0; tape.value(t).len()],
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    pub(crate) fn dims() -> ModelDims {
        ModelDims {
            node_dim: 3,
            edge_dim: 2,
            embed_dim: 4,
            time_dim: 4,
            head_dim: 3,
            ffn_dim: 5,
            heads: 2,
            layers: 2,
        }
    }

    fn init() -> ModelInit {
        ModelInit {
            t_max: 10.0,
            max_positions: 6,
            positional_kind: PositionalKind::Learnable,
        }
    }

    #[test]
    fn layer_shapes_follow_dims() {
        let m = TgatModel::new(dims(), AttentionMode::Learned, Combine::Concat, init(), &mut rng_for(0, &[])).unwrap();
        assert_eq!(m.layers[0].heads[0].w_q.shape(), (3 + 2 + 4, 3));
        assert_eq!(m.layers[1].heads[1].w_v.shape(), (4 + 2 + 4, 3));
        assert_eq!(m.layers[1].w0.shape(), (2 * 3 + 3, 5));
        assert_eq!(m.layers[1].w1.shape(), (5, 4));
        assert!(m.positional.is_none());
    }

    #[test]
    fn params_and_params_mut_line_up() {
        let mut m =
            TgatModel::new(dims(), AttentionMode::Positional, Combine::Concat, init(), &mut rng_for(0, &[])).unwrap();
        let lens: Vec<usize> = m.params().iter().map(|p| p.data.len()).collect();
        let names: Vec<String> = m.params().iter().map(|p| p.name.clone()).collect();
        assert_eq!(names.last().unwrap(), "position.table");
        let mut_lens: Vec<usize> = m.params_mut().iter().map(|p| p.len()).collect();
        assert_eq!(lens, mut_lens);
        assert_eq!(m.parameter_count(), lens.iter().sum::<usize>());
    }

    #[test]
    fn sum_combine_requires_matching_widths() {
        let bad = TgatModel::new(dims(), AttentionMode::Learned, Combine::Sum, init(), &mut rng_for(0, &[]));
        assert!(matches!(bad, Err(Error::Config(_))));
        let ok = ModelDims {
            node_dim: 4,
            edge_dim: 0,
            ..dims()
        };
        assert!(TgatModel::new(ok, AttentionMode::Learned, Combine::Sum, init(), &mut rng_for(0, &[])).is_ok());
    }

    #[test]
    fn odd_time_dim_is_rejected() {
        let d = ModelDims { time_dim: 3, ..dims() };
        assert!(d.validate(Combine::Concat).is_err());
    }
}
