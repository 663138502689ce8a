//! Temporal neighborhood queries and negative sampling.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AdjEntry, NodeId, TemporalGraph};
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// How a temporal neighborhood is cut down to `max_size` entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingStrategy {
    Uniform,
    /// Weight `1 / (t - t_i + jitter)`: recent interactions are favored.
    InverseTimespan,
    /// The `max_size` latest interactions; no randomness.
    MostRecent,
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingStrategy::Uniform => "uniform",
            SamplingStrategy::InverseTimespan => "inverse-timespan",
            SamplingStrategy::MostRecent => "most-recent",
        })
    }
}

impl FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SamplingStrategy::Uniform),
            "inverse-timespan" => Ok(SamplingStrategy::InverseTimespan),
            "most-recent" => Ok(SamplingStrategy::MostRecent),
            other => Err(Error::Config(format!(
                "unknown sampling strategy {other:?} (uniform, inverse-timespan, most-recent)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborQuery {
    pub max_size: usize,
    pub strategy: SamplingStrategy,
    /// Added to every timespan before inverting, in dataset time units.
    pub jitter: f64,
}

impl NeighborQuery {
    pub fn new(max_size: usize, strategy: SamplingStrategy) -> Self {
        Self {
            max_size,
            strategy,
            jitter: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborEntry {
    pub peer: NodeId,
    /// Index of the interaction in the graph; edge features live there.
    pub event: usize,
    pub timestamp: f64,
}

/// Interactions of one node strictly before `query_time`, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodSample {
    pub query_time: f64,
    pub entries: Vec<NeighborEntry>,
}

impl NeighborhoodSample {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sees every neighborhood handed out by a [`GraphView`].
pub trait AccessObserver: Sync {
    fn on_neighborhood(&self, node: NodeId, sample: &NeighborhoodSample);
}

/// Anything the attention layer can read temporal neighborhoods from.
pub trait NeighborSource: Sync {
    fn graph(&self) -> &TemporalGraph;

    fn neighborhood(
        &self,
        node: NodeId,
        t: f64,
        query: &NeighborQuery,
        seed: u64,
    ) -> Result<NeighborhoodSample>;
}

impl TemporalGraph {
    /// Up to `query.max_size` interactions of `node` strictly before `t`.
    /// Self-loops are skipped; recurring peers stay as separate entries.
    pub fn temporal_neighborhood(
        &self,
        node: NodeId,
        t: f64,
        query: &NeighborQuery,
        seed: u64,
    ) -> Result<NeighborhoodSample> {
        sample_neighborhood(self, node, t, query, seed, None)
    }
}

impl NeighborSource for TemporalGraph {
    fn graph(&self) -> &TemporalGraph {
        self
    }

    fn neighborhood(
        &self,
        node: NodeId,
        t: f64,
        query: &NeighborQuery,
        seed: u64,
    ) -> Result<NeighborhoodSample> {
        self.temporal_neighborhood(node, t, query, seed)
    }
}

/// A graph with some events hidden, optionally reporting every access.
#[derive(Clone, Copy)]
pub struct GraphView<'a> {
    graph: &'a TemporalGraph,
    visible: Option<&'a [bool]>,
    observer: Option<&'a dyn AccessObserver>,
}

impl<'a> GraphView<'a> {
    pub fn full(graph: &'a TemporalGraph) -> Self {
        Self {
            graph,
            visible: None,
            observer: None,
        }
    }

    /// `visible[e]` decides whether event `e` may appear in neighborhoods.
    pub fn masked(graph: &'a TemporalGraph, visible: &'a [bool]) -> Self {
        assert_eq!(visible.len(), graph.num_events());
        Self {
            graph,
            visible: Some(visible),
            observer: None,
        }
    }

    pub fn observed(mut self, observer: &'a dyn AccessObserver) -> Self {
        self.observer = Some(observer);
        self
    }
}

impl NeighborSource for GraphView<'_> {
    fn graph(&self) -> &TemporalGraph {
        self.graph
    }

    fn neighborhood(
        &self,
        node: NodeId,
        t: f64,
        query: &NeighborQuery,
        seed: u64,
    ) -> Result<NeighborhoodSample> {
        let sample = sample_neighborhood(self.graph, node, t, query, seed, self.visible)?;
        if let Some(obs) = self.observer {
            obs.on_neighborhood(node, &sample);
        }
        Ok(sample)
    }
}

fn sample_neighborhood(
    graph: &TemporalGraph,
    node: NodeId,
    t: f64,
    query: &NeighborQuery,
    seed: u64,
    visible: Option<&[bool]>,
) -> Result<NeighborhoodSample> {
    if !graph.has_node(node) {
        return Err(Error::Inference(format!("unknown node {node}")));
    }
    if query.max_size == 0 {
        return Err(Error::Contract("neighborhood max_size must be at least 1".into()));
    }
    let adj = graph.adjacency(node);
    let cut = adj.partition_point(|e| e.timestamp < t);
    let usable = |e: &&AdjEntry| e.peer as NodeId != node && visible.is_none_or(|m| m[e.event as usize]);
    let to_entry = |e: &AdjEntry| NeighborEntry {
        peer: e.peer as NodeId,
        event: e.event as usize,
        timestamp: e.timestamp,
    };

    let entries = match query.strategy {
        SamplingStrategy::MostRecent => {
            let mut picked: Vec<NeighborEntry> = adj[..cut]
                .iter()
                .rev()
                .filter(usable)
                .take(query.max_size)
                .map(to_entry)
                .collect();
            picked.reverse();
            picked
        }
        SamplingStrategy::Uniform | SamplingStrategy::InverseTimespan => {
            let candidates: Vec<&AdjEntry> = adj[..cut].iter().filter(usable).collect();
            if candidates.len() <= query.max_size {
                candidates.into_iter().map(to_entry).collect()
            } else {
                let mut rng = rng_for(seed, &[node as u64, t.to_bits()]);
                let mut chosen = if query.strategy == SamplingStrategy::Uniform {
                    index::sample(&mut rng, candidates.len(), query.max_size).into_vec()
                } else {
                    let weights: Vec<f64> = candidates
                        .iter()
                        .map(|e| 1.0 / (t - e.timestamp + query.jitter))
                        .collect();
                    index::sample_weighted(&mut rng, candidates.len(), |i| weights[i], query.max_size)
                        .map_err(|e| Error::Contract(format!("inverse-timespan weights: {e}")))?
                        .into_vec()
                };
                // candidate order is chronological
                chosen.sort_unstable();
                chosen.into_iter().map(|i| to_entry(candidates[i])).collect()
            }
        }
    };
    Ok(NeighborhoodSample {
        query_time: t,
        entries,
    })
}

/// `count` node ids drawn uniformly with replacement.
pub fn sample_negative(graph: &TemporalGraph, seed: u64, count: usize) -> Result<Vec<NodeId>> {
    if graph.num_nodes() == 0 {
        return Err(Error::Contract("cannot sample negatives from an empty graph".into()));
    }
    let mut rng = rng_for(seed, &[0x6e_6567]);
    Ok((0..count)
        .map(|_| rng.random_range(0..graph.num_nodes()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    fn star(times: &[f64]) -> TemporalGraph {
        let mut b = GraphBuilder::new(times.len() + 1, 1, 0);
        for (i, &t) in times.iter().enumerate() {
            b.add_event(0, i + 1, t).unwrap();
        }
        b.build()
    }

    #[test]
    fn most_recent_returns_everything_when_small() {
        let g = star(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let q = NeighborQuery::new(20, SamplingStrategy::MostRecent);
        let s = g.temporal_neighborhood(0, 10.0, &q, 0).unwrap();
        let ts: Vec<f64> = s.entries.iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn strictly_before_query_time() {
        let g = star(&[1.0, 2.0, 3.0, 9.0]);
        for strategy in [
            SamplingStrategy::Uniform,
            SamplingStrategy::InverseTimespan,
            SamplingStrategy::MostRecent,
        ] {
            let q = NeighborQuery::new(20, strategy);
            let s = g.temporal_neighborhood(0, 5.0, &q, 1).unwrap();
            let ts: Vec<f64> = s.entries.iter().map(|e| e.timestamp).collect();
            assert_eq!(ts, vec![1.0, 2.0, 3.0]);
            // an event exactly at the query time is excluded
            let s = g.temporal_neighborhood(0, 3.0, &q, 1).unwrap();
            assert_eq!(s.len(), 2);
        }
    }

    #[test]
    fn no_history_gives_empty_sample() {
        let g = star(&[4.0]);
        let q = NeighborQuery::new(3, SamplingStrategy::Uniform);
        assert!(g.temporal_neighborhood(1, 4.0, &q, 0).unwrap().is_empty());
    }

    #[test]
    fn self_loops_are_skipped() {
        let mut b = GraphBuilder::new(2, 0, 0);
        b.add_event(0, 0, 1.0).unwrap();
        b.add_event(0, 1, 2.0).unwrap();
        let g = b.build();
        let q = NeighborQuery::new(5, SamplingStrategy::MostRecent);
        let s = g.temporal_neighborhood(0, 5.0, &q, 0).unwrap();
        assert_eq!(s.entries.iter().map(|e| e.peer).collect::<Vec<_>>(), vec![1]);
    }

    fn pick_rate_of_late_event(jitter: f64) -> f64 {
        let g = star(&[1.0, 9.0]);
        let q = NeighborQuery {
            max_size: 1,
            strategy: SamplingStrategy::InverseTimespan,
            jitter,
        };
        let draws = 10_000;
        let hits = (0..draws)
            .filter(|&s| g.temporal_neighborhood(0, 10.0, &q, s).unwrap().entries[0].timestamp == 9.0)
            .count();
        hits as f64 / draws as f64
    }

    #[test]
    fn inverse_timespan_matches_closed_form_without_jitter() {
        let expected = (1.0 / 1.0) / ((1.0 / 1.0) + (1.0 / 9.0));
        let rate = pick_rate_of_late_event(0.0);
        assert!((rate - expected).abs() < 0.02, "{rate} vs {expected}");
    }

    #[test]
    fn inverse_timespan_matches_closed_form_with_default_jitter() {
        let expected = (1.0 / 2.0) / ((1.0 / 2.0) + (1.0 / 10.0));
        let rate = pick_rate_of_late_event(1.0);
        assert!((rate - expected).abs() < 0.02, "{rate} vs {expected}");
    }

    #[test]
    fn masked_view_hides_events() {
        let g = star(&[1.0, 2.0, 3.0]);
        let visible = vec![true, false, true];
        let view = GraphView::masked(&g, &visible);
        let q = NeighborQuery::new(10, SamplingStrategy::Uniform);
        let s = view.neighborhood(0, 10.0, &q, 0).unwrap();
        assert_eq!(s.entries.iter().map(|e| e.event).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn zero_max_size_is_rejected() {
        let g = star(&[1.0]);
        let q = NeighborQuery::new(0, SamplingStrategy::Uniform);
        assert!(g.temporal_neighborhood(0, 2.0, &q, 0).is_err());
    }

    #[test]
    fn negative_sampling_edge_cases() {
        let g = star(&[]);
        assert!(sample_negative(&g, 1, 0).unwrap().is_empty());
        assert_eq!(sample_negative(&g, 1, 3).unwrap(), vec![0, 0, 0]);
        let empty = GraphBuilder::new(0, 0, 0).build();
        assert!(sample_negative(&empty, 0, 1).is_err());
    }

    #[test]
    fn negative_sampling_is_uniform() {
        let g = star(&[1.0, 2.0, 3.0]);
        let draws = sample_negative(&g, 42, 10_000).unwrap();
        for node in 0..4 {
            let freq = draws.iter().filter(|&&d| d == node).count() as f64 / 10_000.0;
            assert!((freq - 0.25).abs() < 0.03, "node {node}: {freq}");
        }
    }
}
