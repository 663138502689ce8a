//! Entity-temporal matrix assembly, masked dot-product attention and the
//! recursive L-hop forward pass.

use std::collections::HashMap;

use rand::Rng;

use super::{AttentionMode, Combine, TgatModel};
use crate::autodiff::{Matrix, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{NeighborEntry, NeighborQuery, NeighborSource, NeighborhoodSample, NodeId, TemporalGraph};
use crate::rng::rng_for;
use crate::time_encoding::TimeEncoder;

#[derive(Clone, Copy, Debug)]
pub struct BoundHead {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
}

#[derive(Clone, Debug)]
pub struct BoundLayer {
    pub heads: Vec<BoundHead>,
    pub w0: Tensor,
    pub b0: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
}

/// Model parameters recorded on one tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub layers: Vec<BoundLayer>,
    pub omega: Tensor,
    pub positional: Option<Tensor>,
    pub(crate) all: Vec<Tensor>,
}

impl BoundParams {
    /// Tensors in [`TgatModel::params`] order.
    pub fn tensors(&self) -> &[Tensor] {
        &self.all
    }
}

/// Source of the time block of each entity row.
#[derive(Clone, Copy, Debug)]
pub enum TimeBlock {
    /// `Phi(t - t_i)` from the frequency row vector `omega`.
    Functional { omega: Tensor },
    /// Row `rank` of a position table; the query row takes position `N`.
    Positional { table: Tensor },
}

/// Stacks `[hidden | edge features | time]` rows: the target first (zero edge
/// block, timespan 0), then one row per sampled interaction.
pub fn build_entity_matrix(
    tape: &mut Tape,
    target_hidden: Tensor,
    neighbor_hidden: &[Tensor],
    sample: &NeighborhoodSample,
    graph: &TemporalGraph,
    time: TimeBlock,
    combine: Combine,
) -> Result<Tensor> {
    if neighbor_hidden.len() != sample.len() {
        return Err(Error::Contract(format!(
            "{} hidden rows for {} sampled neighbors",
            neighbor_hidden.len(),
            sample.len()
        )));
    }
    let width = tape.shape(target_hidden);
    for &h in neighbor_hidden {
        if tape.shape(h) != width {
            return Err(Error::Contract(format!(
                "neighbor hidden state {:?} differs from target {:?}",
                tape.shape(h),
                width
            )));
        }
    }
    let rows = sample.len() + 1;
    let mut hidden_rows = Vec::with_capacity(rows);
    hidden_rows.push(target_hidden);
    hidden_rows.extend_from_slice(neighbor_hidden);
    let hidden = tape.concat_rows(&hidden_rows)?;

    let time_rows = match time {
        TimeBlock::Functional { omega } => {
            let mut deltas = Vec::with_capacity(rows);
            deltas.push(0.0);
            deltas.extend(sample.entries.iter().map(|e| sample.query_time - e.timestamp));
            TimeEncoder::encode_on_tape(tape, omega, &deltas)?
        }
        TimeBlock::Positional { table } => {
            let mut ranks = Vec::with_capacity(rows);
            ranks.push(sample.len());
            ranks.extend(0..sample.len());
            let available = tape.shape(table).0;
            if sample.len() >= available {
                return Err(Error::Lookup(format!(
                    "{} neighbors need {} positions, table has {available}",
                    sample.len(),
                    sample.len() + 1
                )));
            }
            tape.gather_rows(table, &ranks)?
        }
    };

    let edge_dim = graph.edge_dim();
    let edge_rows = (edge_dim > 0).then(|| {
        let mut m = Matrix::zeros(rows, edge_dim);
        for (i, e) in sample.entries.iter().enumerate() {
            m.data_mut()[(i + 1) * edge_dim..(i + 2) * edge_dim]
                .copy_from_slice(graph.edge_features(e.event));
        }
        tape.constant(m)
    });

    match combine {
        Combine::Concat => {
            let mut parts = vec![hidden];
            parts.extend(edge_rows);
            parts.push(time_rows);
            tape.concat_cols(&parts)
        }
        Combine::Sum => {
            let mut z = tape.add(hidden, time_rows)?;
            if let Some(edges) = edge_rows {
                z = tape.add(z, edges)?;
            }
            Ok(z)
        }
    }
}

/// One attention head over an entity matrix. Returns the `1 x head_dim`
/// neighborhood representation and the attention weights.
pub fn attend_head(
    tape: &mut Tape,
    z: Tensor,
    head: &BoundHead,
    mode: AttentionMode,
) -> Result<(Tensor, Vec<f64>)> {
    let rows = tape.shape(z).0;
    if rows < 2 {
        return Err(Error::Contract(
            "attention needs the target row and at least one neighbor".into(),
        ));
    }
    let n = rows - 1;
    let query_in = tape.slice_rows(z, 0, 1)?;
    let context = tape.slice_rows(z, 1, rows)?;
    let values = tape.matmul(context, head.w_v)?;
    let alpha = match mode {
        AttentionMode::Constant => tape.constant(Matrix::filled(1, n, 1.0 / n as f64)),
        AttentionMode::Learned | AttentionMode::Positional => {
            let q = tape.matmul(query_in, head.w_q)?;
            let k = tape.matmul(context, head.w_k)?;
            let kt = tape.transpose(k);
            let scores = tape.matmul(q, kt)?;
            let head_dim = tape.shape(head.w_q).1;
            let scaled = tape.scale(scores, 1.0 / (head_dim as f64).sqrt());
            tape.softmax_rows(scaled)
        }
    };
    let weights = tape.value(alpha).data().to_vec();
    let h = tape.matmul(alpha, values)?;
    Ok((h, weights))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardSettings {
    pub query: NeighborQuery,
    /// Probability of dropping each sampled interaction (training only).
    pub dropout: f64,
    pub seed: u64,
}

/// Attention weights produced for one (node, time) at one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub layer: usize,
    pub node: NodeId,
    pub query_time: f64,
    pub entries: Vec<NeighborEntry>,
    /// One weight vector per head, aligned with `entries`.
    pub weights: Vec<Vec<f64>>,
}

/// A single forward evaluation context bound to one tape's parameters.
pub struct Forward<'a> {
    pub model: &'a TgatModel,
    pub bound: &'a BoundParams,
    pub source: &'a dyn NeighborSource,
    pub settings: ForwardSettings,
    /// When set, every attention computation is appended here.
    pub attention: Option<Vec<AttentionRecord>>,
    memo: HashMap<(usize, NodeId, u64), Tensor>,
}

impl<'a> Forward<'a> {
    pub fn new(
        model: &'a TgatModel,
        bound: &'a BoundParams,
        source: &'a dyn NeighborSource,
        settings: ForwardSettings,
    ) -> Self {
        Self {
            model,
            bound,
            source,
            settings,
            attention: None,
            memo: HashMap::new(),
        }
    }

    pub fn recording(mut self) -> Self {
        self.attention = Some(Vec::new());
        self
    }

    fn sample(&self, layer: usize, node: NodeId, t: f64) -> Result<NeighborhoodSample> {
        let mut sample = self
            .source
            .neighborhood(node, t, &self.settings.query, self.settings.seed)?;
        let p = self.settings.dropout;
        if p > 0.0 && !sample.is_empty() {
            let mut rng = rng_for(self.settings.seed, &[node as u64, t.to_bits(), layer as u64, 0xd209]);
            sample.entries.retain(|_| rng.random::<f64>() >= p);
        }
        Ok(sample)
    }

    /// Hidden state of `node` at time `t` after `layer` layers; layer 0 is
    /// the raw node features. Repeated requests on one tape reuse the first
    /// result.
    pub fn layer_forward(&mut self, tape: &mut Tape, layer: usize, node: NodeId, t: f64) -> Result<Tensor> {
        let key = (layer, node, t.to_bits());
        if let Some(&done) = self.memo.get(&key) {
            return Ok(done);
        }
        let out = self.compute_layer(tape, layer, node, t)?;
        self.memo.insert(key, out);
        Ok(out)
    }

    fn compute_layer(&mut self, tape: &mut Tape, layer: usize, node: NodeId, t: f64) -> Result<Tensor> {
        let graph = self.source.graph();
        let raw = graph.node_features(node)?.to_vec();
        if layer == 0 {
            return Ok(tape.constant(Matrix::row_vector(raw)));
        }
        if layer > self.model.layers.len() {
            return Err(Error::Contract(format!(
                "layer {layer} requested from a {}-layer model",
                self.model.layers.len()
            )));
        }
        let bound = &self.bound.layers[layer - 1];
        let dims = self.model.dims;
        let sample = self.sample(layer, node, t)?;

        let neighborhood = if sample.is_empty() {
            tape.constant(Matrix::zeros(1, dims.heads * dims.head_dim))
        } else {
            let target_hidden = self.layer_forward(tape, layer - 1, node, t)?;
            let mut neighbor_hidden = Vec::with_capacity(sample.len());
            for e in &sample.entries {
                neighbor_hidden.push(self.layer_forward(tape, layer - 1, e.peer, e.timestamp)?);
            }
            let time = match self.model.mode {
                AttentionMode::Positional => TimeBlock::Positional {
                    table: self
                        .bound
                        .positional
                        .ok_or_else(|| Error::Contract("positional mode without a table".into()))?,
                },
                _ => TimeBlock::Functional {
                    omega: self.bound.omega,
                },
            };
            let z = build_entity_matrix(
                tape,
                target_hidden,
                &neighbor_hidden,
                &sample,
                graph,
                time,
                self.model.combine,
            )?;
            let mut heads = Vec::with_capacity(bound.heads.len());
            let mut weights = Vec::with_capacity(bound.heads.len());
            for head in &bound.heads {
                let (h, w) = attend_head(tape, z, head, self.model.mode)?;
                heads.push(h);
                weights.push(w);
            }
            if let Some(records) = self.attention.as_mut() {
                records.push(AttentionRecord {
                    layer,
                    node,
                    query_time: t,
                    entries: sample.entries.clone(),
                    weights,
                });
            }
            tape.concat_cols(&heads)?
        };

        let x0 = tape.constant(Matrix::row_vector(raw));
        let ffn_in = tape.concat_cols(&[neighborhood, x0])?;
        let pre = tape.matmul(ffn_in, bound.w0)?;
        let pre = tape.add(pre, bound.b0)?;
        let hidden = tape.relu(pre);
        let out = tape.matmul(hidden, bound.w1)?;
        tape.add(out, bound.b1)
    }

    /// Final-layer embedding of `node` at `t`.
    pub fn embed(&mut self, tape: &mut Tape, node: NodeId, t: f64) -> Result<Tensor> {
        self.layer_forward(tape, self.model.layers.len(), node, t)
    }
}

impl TgatModel {
    /// Inference-only embedding of `node` at time `t`.
    pub fn embed(
        &self,
        source: &dyn NeighborSource,
        node: NodeId,
        t: f64,
        settings: &ForwardSettings,
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let mut fwd = Forward::new(self, &bound, source, *settings);
        let e = fwd.embed(&mut tape, node, t)?;
        Ok(tape.value(e).data().to_vec())
    }

    /// Embedding plus every attention weight computed on the way.
    pub fn embed_with_attention(
        &self,
        source: &dyn NeighborSource,
        node: NodeId,
        t: f64,
        settings: &ForwardSettings,
    ) -> Result<(Vec<f64>, Vec<AttentionRecord>)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let mut fwd = Forward::new(self, &bound, source, *settings).recording();
        let e = fwd.embed(&mut tape, node, t)?;
        Ok((tape.value(e).data().to_vec(), fwd.attention.unwrap_or_default()))
    }
}
