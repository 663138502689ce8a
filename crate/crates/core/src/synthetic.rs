//! Seeded synthetic interaction graphs whose future links depend on how
//! recently two nodes interacted.

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, TemporalGraph};
use crate::rng::rng_for;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecencyConfig {
    pub nodes: usize,
    pub events: usize,
    pub node_dim: usize,
    /// Mean gap between consecutive events.
    pub mean_gap: f64,
    /// Partners met within this many time units count as recent.
    pub window: f64,
    /// Probability that an event repeats a recent partner when one exists.
    pub repeat_prob: f64,
    /// Spread of the log-normal per-node activity rates.
    pub activity_sigma: f64,
    /// Global event rate alternates between `1/rate_contrast` and
    /// `rate_contrast` times the base rate, switching at random every
    /// `phase_length` time units. `1.0` disables the modulation.
    pub rate_contrast: f64,
    pub phase_length: f64,
    pub seed: u64,
}

impl Default for RecencyConfig {
    fn default() -> Self {
        Self {
            nodes: 500,
            events: 20_000,
            node_dim: 16,
            mean_gap: 1.0,
            window: 100.0,
            repeat_prob: 0.8,
            activity_sigma: 1.0,
            rate_contrast: 1.0,
            phase_length: 100.0,
            seed: 0,
        }
    }
}

/// Sources are drawn by activity rate. With probability `repeat_prob` the
/// destination is a uniform pick among the source's partners from the last
/// `window` time units; otherwise (or when there is none) it is a uniform
/// random node. Node features are standard normal; there are no edge features.
pub fn recency_graph(config: &RecencyConfig) -> Result<TemporalGraph> {
    if config.nodes < 2 || config.events == 0 {
        return Err(Error::Config("need at least 2 nodes and 1 event".into()));
    }
    let mut rng = rng_for(config.seed, &[0x7379_6e74]);
    let mut builder = GraphBuilder::new(config.nodes, config.node_dim, 0);
    for n in 0..config.nodes {
        let f: Vec<f64> = (0..config.node_dim).map(|_| rng.sample(StandardNormal)).collect();
        builder.set_node_features(n, &f)?;
    }
    let activity = LogNormal::new(0.0, config.activity_sigma)
        .map_err(|e| Error::Config(format!("activity_sigma: {e}")))?;
    let mut cumulative = Vec::with_capacity(config.nodes);
    let mut acc = 0.0;
    for _ in 0..config.nodes {
        acc += activity.sample(&mut rng);
        cumulative.push(acc);
    }
    let gap = Exp::new(1.0 / config.mean_gap).map_err(|e| Error::Config(format!("mean_gap: {e}")))?;
    // per node: (partner, time) history, newest last
    let mut history: Vec<Vec<(usize, f64)>> = vec![Vec::new(); config.nodes];
    let mut t = 0.0;
    let mut recent = Vec::new();
    let (mut phase_end, mut rate) = (0.0, 1.0);
    for _ in 0..config.events {
        while t >= phase_end {
            phase_end += config.phase_length;
            rate = if rng.random::<bool>() {
                config.rate_contrast
            } else {
                1.0 / config.rate_contrast
            };
        }
        t += gap.sample(&mut rng) / rate;
        let u = rng.random::<f64>() * acc;
        let src = cumulative.partition_point(|&c| c < u).min(config.nodes - 1);
        recent.clear();
        for &(p, when) in history[src].iter().rev() {
            if t - when >= config.window {
                break;
            }
            if !recent.contains(&p) {
                recent.push(p);
            }
        }
        let dst = if !recent.is_empty() && rng.random::<f64>() < config.repeat_prob {
            recent[rng.random_range(0..recent.len())]
        } else {
            loop {
                let d = rng.random_range(0..config.nodes);
                if d != src {
                    break d;
                }
            }
        };
        history[src].push((dst, t));
        history[dst].push((src, t));
        builder.add_event(src, dst, t)?;
    }
    Ok(builder.build())
}
