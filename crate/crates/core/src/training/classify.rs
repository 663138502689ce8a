//! Downstream node classification from temporal embeddings.

use rand::seq::SliceRandom;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::config::TrainConfig;
use super::metrics::{accuracy, average_precision, roc_auc, EvalMetrics, SplitTag};
use crate::autodiff::{Matrix, Tape};
use crate::error::{Error, Result};
use crate::graph::{GraphView, NeighborQuery, Period, SplitSpec, TemporalGraph};
use crate::init::glorot_uniform;
use crate::model::{ForwardSettings, TgatModel};
use crate::rng::rng_for;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlpConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl From<&TrainConfig> for MlpConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            learning_rate: c.mlp_learning_rate,
            l2: c.mlp_l2,
            epochs: c.mlp_epochs,
            batch_size: c.mlp_batch_size,
        }
    }
}

/// Three dense layers `d -> d -> d/2 -> 1` with ReLU between them.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<(Matrix, Matrix)>,
}

impl Mlp {
    pub fn new(input_dim: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[0x6d_6c70]);
        let half = (input_dim / 2).max(1);
        let widths = [input_dim, input_dim, half, 1];
        let layers = widths
            .windows(2)
            .map(|w| (glorot_uniform(w[0], w[1], &mut rng), Matrix::zeros(1, w[1])))
            .collect();
        Self { layers }
    }

    /// Logits for each row of `x`.
    pub fn logits(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let input = tape.constant(rows_matrix(x)?);
        let mut h = input;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let (w, b) = (tape.constant(w.clone()), tape.constant(b.clone()));
            let z = tape.matmul(h, w)?;
            h = tape.add(z, b)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(tape.value(h).data().to_vec())
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|(w, b)| [w.data_mut(), b.data_mut()])
            .collect()
    }

    fn step_grads(&self, x: &[Vec<f64>], y: &[bool], l2: f64) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let input = tape.constant(rows_matrix(x)?);
        let mut params = Vec::new();
        let mut h = input;
        let mut penalty = None;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let (wt, bt) = (tape.param(w.clone()), tape.param(b.clone()));
            params.extend([wt, bt]);
            let sq = tape.mul(wt, wt)?;
            let sq = tape.sum(sq);
            penalty = Some(match penalty {
                None => sq,
                Some(p) => tape.add(p, sq)?,
            });
            let z = tape.matmul(h, wt)?;
            h = tape.add(z, bt)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        let targets: Vec<f64> = y.iter().map(|&l| l as u8 as f64).collect();
        let pos = tape.constant(Matrix::col_vector(targets.clone()));
        let neg = tape.constant(Matrix::col_vector(targets.iter().map(|t| 1.0 - t).collect()));
        let lp = tape.log_sigmoid(h);
        let flipped = tape.scale(h, -1.0);
        let ln = tape.log_sigmoid(flipped);
        let a = tape.mul(lp, pos)?;
        let b = tape.mul(ln, neg)?;
        let ll = tape.add(a, b)?;
        let ll = tape.sum(ll);
        let nll = tape.scale(ll, -1.0 / y.len() as f64);
        let reg = tape.scale(penalty.expect("layers"), l2);
        let loss = tape.add(nll, reg)?;
        tape.backward(loss)?;
        Ok(params
            .iter()
            .map(|&p| tape.grad(p).map_or_else(|| vec![0.0; tape.value(p).len()], |g| g.data().to_vec()))
            .collect())
    }
}

fn rows_matrix(x: &[Vec<f64>]) -> Result<Matrix> {
    let cols = x.first().map_or(0, Vec::len);
    Matrix::from_vec(x.len(), cols, x.concat())
}

/// Stratified mini-batches: every batch carries the class ratio of the
/// whole training set.
pub fn train_mlp(x: &[Vec<f64>], y: &[bool], config: &MlpConfig, seed: u64) -> Result<Mlp> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Contract(format!("{} rows for {} labels", x.len(), y.len())));
    }
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Evaluation("training labels hold a single class".into()));
    }
    let mut mlp = Mlp::new(x[0].len(), seed);
    let adam = AdamConfig::new(config.learning_rate);
    let mut state = AdamState::for_shapes(mlp.layers.iter().flat_map(|(w, b)| [w.len(), b.len()]));
    let batches = y.len().div_ceil(config.batch_size);
    for epoch in 0..config.epochs {
        let mut rng = rng_for(seed, &[0x6261_7463, epoch as u64]);
        let (mut p, mut n) = (pos.clone(), neg.clone());
        p.shuffle(&mut rng);
        n.shuffle(&mut rng);
        for b in 0..batches {
            let mut idx: Vec<usize> = p[b * p.len() / batches..(b + 1) * p.len() / batches].to_vec();
            idx.extend_from_slice(&n[b * n.len() / batches..(b + 1) * n.len() / batches]);
            if idx.is_empty() {
                continue;
            }
            let bx: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
            let by: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
            let grads = mlp.step_grads(&bx, &by, config.l2)?;
            adam_step(&mut mlp.buffers_mut(), &grads, &mut state, &adam)?;
        }
    }
    Ok(mlp)
}

/// Trains on training-period labels and reports test-period metrics,
/// each labeled node embedded at its label time.
pub fn node_classify(
    model: &TgatModel,
    graph: &TemporalGraph,
    split: &SplitSpec,
    query: &NeighborQuery,
    mlp: &MlpConfig,
    seed: u64,
) -> Result<EvalMetrics> {
    let settings = ForwardSettings {
        query: *query,
        dropout: 0.0,
        seed,
    };
    let view = GraphView::full(graph);
    let mut sets = [(Vec::new(), Vec::new()), (Vec::new(), Vec::new())];
    for ev in graph.events() {
        let Some(label) = ev.label else { continue };
        let slot = match split.period_of(ev.timestamp) {
            Period::Train => 0,
            Period::Test => 1,
            Period::Validation => continue,
        };
        let emb = model.embed(&view, ev.source, ev.timestamp, &settings)?;
        sets[slot].0.push(emb);
        sets[slot].1.push(label);
    }
    for (name, (_, y)) in ["training", "test"].iter().zip(&sets) {
        if !y.iter().any(|&l| l) || !y.iter().any(|&l| !l) {
            return Err(Error::Evaluation(format!("{name} labels need both classes")));
        }
    }
    let [(train_x, train_y), (test_x, test_y)] = sets;
    classify_embeddings(&train_x, &train_y, &test_x, &test_y, mlp, seed)
}

/// MLP fit on one labeled set, scored on another.
pub fn classify_embeddings(
    train_x: &[Vec<f64>],
    train_y: &[bool],
    test_x: &[Vec<f64>],
    test_y: &[bool],
    mlp: &MlpConfig,
    seed: u64,
) -> Result<EvalMetrics> {
    if !test_y.iter().any(|&l| l) || !test_y.iter().any(|&l| !l) {
        return Err(Error::Evaluation("test labels need both classes".into()));
    }
    let net = train_mlp(train_x, train_y, mlp, seed)?;
    let scores = net.logits(test_x)?;
    Ok(EvalMetrics {
        accuracy: accuracy(&scores, test_y, 0.0)?,
        average_precision: average_precision(&scores, test_y)?,
        auc: Some(roc_auc(&scores, test_y)?),
        split_tag: SplitTag::Transductive,
        count: scores.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn separable_embeddings_reach_full_auc() {
        let mut rng = rng_for(1, &[]);
        let make = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for i in 0..n {
                let label = i % 3 == 0;
                let c = if label { 2.0 } else { -2.0 };
                x.push(vec![c + rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)]);
                y.push(label);
            }
            (x, y)
        };
        let (tx, ty) = make(&mut rng, 120);
        let (vx, vy) = make(&mut rng, 60);
        let cfg = MlpConfig {
            learning_rate: 0.01,
            l2: 0.001,
            epochs: 60,
            batch_size: 32,
        };
        let m = classify_embeddings(&tx, &ty, &vx, &vy, &cfg, 3).unwrap();
        assert_eq!(m.auc, Some(1.0));
    }

    #[test]
    fn single_class_training_is_rejected() {
        let x = vec![vec![0.0]; 4];
        let cfg = MlpConfig {
            learning_rate: 0.01,
            l2: 0.0,
            epochs: 1,
            batch_size: 2,
        };
        let err = classify_embeddings(&x, &[true; 4], &x, &[true, false, true, false], &cfg, 0);
        assert!(matches!(err, Err(Error::Evaluation(_))));
    }
}
