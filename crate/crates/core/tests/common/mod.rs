#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tgat::graph::{GraphBuilder, TemporalEvent, TemporalGraph};
use tgat::model::{AttentionMode, Combine, ModelDims, ModelInit, TgatModel};
use tgat::time_encoding::PositionalKind;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Four nodes, two node features, one edge feature, five events.
pub fn four_node_graph() -> TemporalGraph {
    let mut b = GraphBuilder::new(4, 2, 1);
    let feats = [[0.5, -1.0], [1.5, 0.25], [-0.75, 0.8], [0.1, 0.9]];
    for (n, f) in feats.iter().enumerate() {
        b.set_node_features(n, f).unwrap();
    }
    let events = [(0, 1, 1.0, 0.3), (1, 2, 2.0, -0.6), (0, 2, 3.0, 1.1), (2, 3, 4.0, 0.4), (0, 3, 5.0, -0.2)];
    for (s, d, t, e) in events {
        b.push(TemporalEvent {
            source: s,
            destination: d,
            timestamp: t,
            edge_features: vec![e],
            label: None,
        })
        .unwrap();
    }
    b.build()
}

/// `nodes` nodes with Gaussian-ish features and `events` random interactions
/// at strictly increasing times.
pub fn random_graph(nodes: usize, events: usize, node_dim: usize, edge_dim: usize, seed: u64) -> TemporalGraph {
    let mut r = rng(seed);
    let mut b = GraphBuilder::new(nodes, node_dim, edge_dim);
    for n in 0..nodes {
        let f: Vec<f64> = (0..node_dim).map(|_| r.random_range(-1.0..1.0)).collect();
        b.set_node_features(n, &f).unwrap();
    }
    let mut t = 0.0;
    for _ in 0..events {
        t += r.random_range(0.01..1.0);
        let s = r.random_range(0..nodes);
        let mut d = r.random_range(0..nodes);
        if d == s {
            d = (d + 1) % nodes;
        }
        b.push(TemporalEvent {
            source: s,
            destination: d,
            timestamp: t,
            edge_features: (0..edge_dim).map(|_| r.random_range(-1.0..1.0)).collect(),
            label: None,
        })
        .unwrap();
    }
    b.build()
}

pub fn small_model(g: &TemporalGraph, heads: usize, layers: usize, mode: AttentionMode, seed: u64) -> TgatModel {
    let dims = ModelDims {
        node_dim: g.node_dim(),
        edge_dim: g.edge_dim(),
        embed_dim: 4,
        time_dim: 6,
        head_dim: 3,
        ffn_dim: 5,
        heads,
        layers,
    };
    let init = ModelInit {
        t_max: g.t_max(),
        max_positions: 32,
        positional_kind: PositionalKind::Learnable,
    };
    TgatModel::new(dims, mode, Combine::Concat, init, &mut rng(seed)).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Pair counting: concordant pairs plus half of the tied ones.
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

/// Sum over distinct thresholds of recall increment times precision at
/// that threshold.
pub fn brute_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    for tau in thresholds {
        let above = scores.iter().filter(|&&s| s >= tau).count() as f64;
        let tp_above = scores.iter().zip(labels).filter(|(&s, &l)| l && s >= tau).count() as f64;
        let tp_at = scores.iter().zip(labels).filter(|(&s, &l)| l && s == tau).count() as f64;
        ap += (tp_at / pos) * (tp_above / above);
    }
    ap
}

/// Every configuration of at most `max` items up to reordering: a sequence
/// of tie groups in descending score order, each holding `(positives,
/// negatives)`.
pub fn configurations(max: usize) -> Vec<(Vec<f64>, Vec<bool>)> {
    fn rec(left: usize, groups: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if !groups.is_empty() {
            out.push(groups.clone());
        }
        for size in 1..=left {
            for p in 0..=size {
                groups.push((p, size - p));
                rec(left - size, groups, out);
                groups.pop();
            }
        }
    }
    let mut all = Vec::new();
    rec(max, &mut Vec::new(), &mut all);
    all.into_iter()
        .map(|groups| {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            let n = groups.len();
            for (g, &(p, q)) in groups.iter().enumerate() {
                let s = (n - g) as f64 / n as f64;
                for _ in 0..p {
                    scores.push(s);
                    labels.push(true);
                }
                for _ in 0..q {
                    scores.push(s);
                    labels.push(false);
                }
            }
            // interleave so the input is not pre-sorted
            let k = scores.len();
            let order: Vec<usize> = (0..k).map(|i| (i * 5 + 3) % k).collect();
            if is_permutation(&order) {
                (order.iter().map(|&i| scores[i]).collect(), order.iter().map(|&i| labels[i]).collect())
            } else {
                scores.reverse();
                labels.reverse();
                (scores, labels)
            }
        })
        .collect()
}

fn is_permutation(order: &[usize]) -> bool {
    let mut seen = vec![false; order.len()];
    order.iter().all(|&i| !std::mem::replace(&mut seen[i], true))
}
