//! Chronological train/validation/test periods and unseen-node masking.

use std::collections::BTreeSet;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{NodeId, TemporalGraph};
use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Period {
    Train,
    Validation,
    Test,
}

/// Which evaluation events to keep, relative to the unseen-node set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeFilter {
    /// Neither endpoint is unseen (transductive).
    Observed,
    /// At least one endpoint is unseen (inductive).
    Unseen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Last timestamp of the training period (inclusive).
    pub train_end: f64,
    /// Last timestamp of the validation period (inclusive).
    pub val_end: f64,
    pub unseen_nodes: BTreeSet<NodeId>,
}

impl SplitSpec {
    /// Boundary timestamps belong to the earlier period.
    pub fn period_of(&self, t: f64) -> Period {
        if t <= self.train_end {
            Period::Train
        } else if t <= self.val_end {
            Period::Validation
        } else {
            Period::Test
        }
    }

    pub fn is_unseen(&self, node: NodeId) -> bool {
        self.unseen_nodes.contains(&node)
    }

    fn touches_unseen(&self, g: &TemporalGraph, event: usize) -> bool {
        let (a, b) = g.endpoints(event);
        self.is_unseen(a) || self.is_unseen(b)
    }

    /// Events the model may learn from: training period, no unseen endpoint.
    pub fn training_events(&self, g: &TemporalGraph) -> Vec<usize> {
        (0..g.num_events())
            .filter(|&e| self.period_of(g.timestamp(e)) == Period::Train && !self.touches_unseen(g, e))
            .collect()
    }

    /// Neighborhood visibility while training.
    pub fn training_visibility(&self, g: &TemporalGraph) -> Vec<bool> {
        let mut visible = vec![false; g.num_events()];
        for e in self.training_events(g) {
            visible[e] = true;
        }
        visible
    }

    /// Neighborhood visibility at evaluation: unseen nodes contribute only
    /// their validation and test interactions.
    pub fn evaluation_visibility(&self, g: &TemporalGraph) -> Vec<bool> {
        (0..g.num_events())
            .map(|e| !(self.period_of(g.timestamp(e)) == Period::Train && self.touches_unseen(g, e)))
            .collect()
    }

    pub fn events_in(&self, g: &TemporalGraph, period: Period, filter: Option<NodeFilter>) -> Vec<usize> {
        (0..g.num_events())
            .filter(|&e| self.period_of(g.timestamp(e)) == period)
            .filter(|&e| match filter {
                None => true,
                Some(NodeFilter::Observed) => !self.touches_unseen(g, e),
                Some(NodeFilter::Unseen) => self.touches_unseen(g, e),
            })
            .collect()
    }
}

/// Cuts at the `train_frac` and `train_frac + val_frac` timestamp quantiles.
pub fn chronological_split(g: &TemporalGraph, train_frac: f64, val_frac: f64) -> Result<SplitSpec> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::Split(format!(
            "fractions ({train_frac}, {val_frac}) must be positive and sum below 1"
        )));
    }
    let n = g.num_events();
    if n < 3 {
        return Err(Error::Split(format!("need at least 3 events, graph has {n}")));
    }
    // timestamps are sorted; quantile q is the ceil(q n)-th smallest
    let quantile = |q: f64| {
        let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
        g.timestamp(rank.min(n) - 1)
    };
    Ok(SplitSpec {
        train_end: quantile(train_frac),
        val_end: quantile(train_frac + val_frac),
        unseen_nodes: BTreeSet::new(),
    })
}

/// Withholds a seeded `fraction` of all nodes from training.
pub fn mask_unseen(g: &TemporalGraph, split: &SplitSpec, fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Masking(format!("fraction {fraction} must lie in (0, 1)")));
    }
    let count = (fraction * g.num_nodes() as f64).round() as usize;
    let mut rng = rng_for(seed, &[0x6d61_736b]);
    let nodes = index::sample(&mut rng, g.num_nodes(), count.min(g.num_nodes()));
    mask_nodes(g, split, nodes)
}

/// Withholds exactly the given nodes from training.
pub fn mask_nodes(
    g: &TemporalGraph,
    split: &SplitSpec,
    nodes: impl IntoIterator<Item = NodeId>,
) -> Result<SplitSpec> {
    let masked = SplitSpec {
        unseen_nodes: nodes.into_iter().collect(),
        ..split.clone()
    };
    if let Some(&bad) = masked.unseen_nodes.iter().find(|&&n| n >= g.num_nodes()) {
        return Err(Error::Masking(format!("node {bad} is not in the graph")));
    }
    if masked.training_events(g).is_empty() {
        return Err(Error::Masking(format!(
            "masking {} nodes leaves no training events",
            masked.unseen_nodes.len()
        )));
    }
    Ok(masked)
}
