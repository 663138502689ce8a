//! Immutable store of timestamped interactions with per-node chronological
//! adjacency, plus the causality-respecting queries built on it.

mod ingest;
mod sample;
mod split;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{ingest, ingest_path, IngestOptions};
pub use sample::{
    sample_negative, AccessObserver, GraphView, NeighborEntry, NeighborQuery, NeighborSource,
    NeighborhoodSample, SamplingStrategy,
};
pub use split::{chronological_split, mask_nodes, mask_unseen, NodeFilter, Period, SplitSpec};

pub type NodeId = usize;

/// One interaction, as handed to [`GraphBuilder`].
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalEvent {
    pub source: NodeId,
    pub destination: NodeId,
    pub timestamp: f64,
    pub edge_features: Vec<f64>,
    pub label: Option<bool>,
}

/// Borrowed view of a stored event.
#[derive(Clone, Copy, Debug)]
pub struct EventRef<'a> {
    pub index: usize,
    pub source: NodeId,
    pub destination: NodeId,
    pub timestamp: f64,
    pub edge_features: &'a [f64],
    pub label: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct AdjEntry {
    pub peer: u32,
    pub event: u32,
    pub timestamp: f64,
}

/// Where a node id came from in the source data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeOrigins {
    /// Original user ids; node `i` for `i < users.len()`.
    pub users: Vec<u64>,
    /// Original item ids; node `users.len() + j`.
    pub items: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalGraph {
    num_nodes: usize,
    node_dim: usize,
    edge_dim: usize,
    node_features: Vec<f64>,
    sources: Vec<u32>,
    destinations: Vec<u32>,
    timestamps: Vec<f64>,
    labels: Vec<Option<bool>>,
    edge_features: Vec<f64>,
    adj_offsets: Vec<usize>,
    adjacency: Vec<AdjEntry>,
    t_max: f64,
    origins: NodeOrigins,
}

const GRAPH_MAGIC: &[u8; 8] = b"TGATGRF1";

impl TemporalGraph {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_events(&self) -> usize {
        self.timestamps.len()
    }

    /// Raw node feature width `d_0`.
    pub fn node_dim(&self) -> usize {
        self.node_dim
    }

    /// Edge feature width `d_e`; zero when events carry no features.
    pub fn edge_dim(&self) -> usize {
        self.edge_dim
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn origins(&self) -> &NodeOrigins {
        &self.origins
    }

    pub fn has_node(&self, node: NodeId) -> bool {
        node < self.num_nodes
    }

    pub fn node_features(&self, node: NodeId) -> Result<&[f64]> {
        if node >= self.num_nodes {
            return Err(Error::Inference(format!(
                "node {node} has no features (graph has {} nodes)",
                self.num_nodes
            )));
        }
        Ok(&self.node_features[node * self.node_dim..(node + 1) * self.node_dim])
    }

    pub fn edge_features(&self, event: usize) -> &[f64] {
        &self.edge_features[event * self.edge_dim..(event + 1) * self.edge_dim]
    }

    pub fn timestamp(&self, event: usize) -> f64 {
        self.timestamps[event]
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn endpoints(&self, event: usize) -> (NodeId, NodeId) {
        (
            self.sources[event] as NodeId,
            self.destinations[event] as NodeId,
        )
    }

    pub fn event(&self, index: usize) -> EventRef<'_> {
        EventRef {
            index,
            source: self.sources[index] as NodeId,
            destination: self.destinations[index] as NodeId,
            timestamp: self.timestamps[index],
            edge_features: self.edge_features(index),
            label: self.labels[index],
        }
    }

    pub fn events(&self) -> impl Iterator<Item = EventRef<'_>> + '_ {
        (0..self.num_events()).map(move |i| self.event(i))
    }

    pub(crate) fn adjacency(&self, node: NodeId) -> &[AdjEntry] {
        &self.adjacency[self.adj_offsets[node]..self.adj_offsets[node + 1]]
    }

    /// All `(peer, event index)` pairs of `node`, oldest first.
    pub fn interactions(&self, node: NodeId) -> impl Iterator<Item = (NodeId, usize)> + '_ {
        self.adjacency(node)
            .iter()
            .map(|e| (e.peer as NodeId, e.event as usize))
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adj_offsets[node + 1] - self.adj_offsets[node]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(GRAPH_MAGIC).map_err(|e| Error::io(path, e))?;
        bincode::serialize_into(&mut w, self).map_err(|e| Error::Serialization(e.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != GRAPH_MAGIC {
            return Err(Error::Serialization(format!(
                "{} is not a graph file",
                path.display()
            )));
        }
        bincode::deserialize_from(r).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Collects events and node features, then freezes them into a [`TemporalGraph`].
#[derive(Clone, Debug)]
pub struct GraphBuilder {
    num_nodes: usize,
    node_dim: usize,
    edge_dim: usize,
    node_features: Vec<f64>,
    events: Vec<TemporalEvent>,
    origins: NodeOrigins,
}

impl GraphBuilder {
    /// Nodes start with all-zero features of width `node_dim`.
    pub fn new(num_nodes: usize, node_dim: usize, edge_dim: usize) -> Self {
        Self {
            num_nodes,
            node_dim,
            edge_dim,
            node_features: vec![0.0; num_nodes * node_dim],
            events: Vec::new(),
            origins: NodeOrigins::default(),
        }
    }

    pub fn origins(mut self, origins: NodeOrigins) -> Self {
        self.origins = origins;
        self
    }

    pub fn set_node_features(&mut self, node: NodeId, features: &[f64]) -> Result<()> {
        if node >= self.num_nodes {
            return Err(Error::Validation(format!("node {node} out of range")));
        }
        if features.len() != self.node_dim {
            return Err(Error::Validation(format!(
                "node {node}: {} features, expected {}",
                features.len(),
                self.node_dim
            )));
        }
        self.node_features[node * self.node_dim..(node + 1) * self.node_dim]
            .copy_from_slice(features);
        Ok(())
    }

    pub fn push(&mut self, event: TemporalEvent) -> Result<()> {
        if !(event.timestamp >= 0.0) || !event.timestamp.is_finite() {
            return Err(Error::Validation(format!(
                "timestamp {} must be a finite non-negative number",
                event.timestamp
            )));
        }
        if event.edge_features.len() != self.edge_dim {
            return Err(Error::Validation(format!(
                "event has {} edge features, graph declares {}",
                event.edge_features.len(),
                self.edge_dim
            )));
        }
        for n in [event.source, event.destination] {
            if n >= self.num_nodes {
                return Err(Error::Validation(format!(
                    "event references node {n} but the graph has {} nodes",
                    self.num_nodes
                )));
            }
        }
        self.events.push(event);
        Ok(())
    }

    pub fn add_event(&mut self, source: NodeId, destination: NodeId, timestamp: f64) -> Result<()> {
        let edge_features = vec![0.0; self.edge_dim];
        self.push(TemporalEvent {
            source,
            destination,
            timestamp,
            edge_features,
            label: None,
        })
    }

    pub fn build(mut self) -> TemporalGraph {
        // stable sort keeps ingestion order among equal timestamps
        self.events
            .sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite"));
        let n_events = self.events.len();
        let mut sources = Vec::with_capacity(n_events);
        let mut destinations = Vec::with_capacity(n_events);
        let mut timestamps = Vec::with_capacity(n_events);
        let mut labels = Vec::with_capacity(n_events);
        let mut edge_features = Vec::with_capacity(n_events * self.edge_dim);
        let mut degree = vec![0usize; self.num_nodes];
        for e in &self.events {
            sources.push(e.source as u32);
            destinations.push(e.destination as u32);
            timestamps.push(e.timestamp);
            labels.push(e.label);
            edge_features.extend_from_slice(&e.edge_features);
            degree[e.source] += 1;
            degree[e.destination] += 1;
        }
        let mut adj_offsets = vec![0usize; self.num_nodes + 1];
        for (i, d) in degree.iter().enumerate() {
            adj_offsets[i + 1] = adj_offsets[i] + d;
        }
        let mut fill = adj_offsets.clone();
        let mut adjacency = vec![
            AdjEntry {
                peer: 0,
                event: 0,
                timestamp: 0.0
            };
            adj_offsets[self.num_nodes]
        ];
        // events are already chronological, so appending keeps each list sorted
        for (i, e) in self.events.iter().enumerate() {
            adjacency[fill[e.source]] = AdjEntry {
                peer: e.destination as u32,
                event: i as u32,
                timestamp: e.timestamp,
            };
            fill[e.source] += 1;
            adjacency[fill[e.destination]] = AdjEntry {
                peer: e.source as u32,
                event: i as u32,
                timestamp: e.timestamp,
            };
            fill[e.destination] += 1;
        }
        let t_max = timestamps.last().copied().unwrap_or(0.0);
        TemporalGraph {
            num_nodes: self.num_nodes,
            node_dim: self.node_dim,
            edge_dim: self.edge_dim,
            node_features: self.node_features,
            sources,
            destinations,
            timestamps,
            labels,
            edge_features,
            adj_offsets,
            adjacency,
            t_max,
            origins: self.origins,
        }
    }
}
