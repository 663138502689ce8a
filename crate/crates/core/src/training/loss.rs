use rand::Rng;

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{NodeId, SplitSpec, TemporalGraph};
use crate::model::Forward;
use crate::rng::rng_for;

/// Inner product of two `1 x d` embeddings as a `1 x 1` tensor.
pub fn pair_score(tape: &mut Tape, a: Tensor, b: Tensor) -> Result<Tensor> {
    let prod = tape.mul(a, b)?;
    Ok(tape.sum(prod))
}

/// `-log s(a.p) - sum_q log s(-a.n_q)` for one positive pair and its negatives.
pub fn embedding_link_loss(
    tape: &mut Tape,
    source: Tensor,
    positive: Tensor,
    negatives: &[Tensor],
) -> Result<Tensor> {
    let s = pair_score(tape, source, positive)?;
    let mut loss = tape.log_sigmoid(s);
    for &n in negatives {
        let s = pair_score(tape, source, n)?;
        let flipped = tape.scale(s, -1.0);
        let term = tape.log_sigmoid(flipped);
        loss = tape.add(loss, term)?;
    }
    Ok(tape.scale(loss, -1.0))
}

/// One observed interaction plus the negative destinations scored against it.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSample {
    pub source: NodeId,
    pub destination: NodeId,
    pub time: f64,
    pub negatives: Vec<NodeId>,
}

/// Summed link loss over a batch; every embedding is taken at the
/// interaction time.
pub fn link_loss(tape: &mut Tape, forward: &mut Forward<'_>, batch: &[LinkSample]) -> Result<Tensor> {
    if batch.is_empty() {
        return Err(Error::Contract("link loss of an empty batch".into()));
    }
    let mut total: Option<Tensor> = None;
    for s in batch {
        let src = forward.embed(tape, s.source, s.time)?;
        let dst = forward.embed(tape, s.destination, s.time)?;
        let negs = s
            .negatives
            .iter()
            .map(|&n| forward.embed(tape, n, s.time))
            .collect::<Result<Vec<_>>>()?;
        let l = embedding_link_loss(tape, src, dst, &negs)?;
        total = Some(match total {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    Ok(total.expect("non-empty batch"))
}

/// Uniform negative destinations drawn from a fixed candidate pool.
#[derive(Clone, Debug)]
pub struct NegativeSampler {
    candidates: Vec<NodeId>,
}

impl NegativeSampler {
    pub fn new(candidates: Vec<NodeId>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Contract("negative sampler needs candidates".into()));
        }
        Ok(Self { candidates })
    }

    pub fn all_nodes(graph: &TemporalGraph) -> Result<Self> {
        Self::new((0..graph.num_nodes()).collect())
    }

    /// Nodes the model may see during training.
    pub fn observed(graph: &TemporalGraph, split: &SplitSpec) -> Result<Self> {
        Self::new((0..graph.num_nodes()).filter(|&n| !split.is_unseen(n)).collect())
    }

    pub fn candidates(&self) -> &[NodeId] {
        &self.candidates
    }

    /// `count` draws, none equal to `avoid`; a colliding draw is redrawn.
    pub fn draw(&self, seed: u64, key: &[u64], avoid: NodeId, count: usize) -> Result<Vec<NodeId>> {
        if self.candidates.iter().all(|&c| c == avoid) {
            return Err(Error::Contract(format!(
                "no negative candidate differs from node {avoid}"
            )));
        }
        let mut rng = rng_for(seed, key);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let c = self.candidates[rng.random_range(0..self.candidates.len())];
            if c != avoid {
                out.push(c);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Matrix;

    fn ln_sigmoid(x: f64) -> f64 {
        -(1.0 + (-x).exp()).ln()
    }

    #[test]
    fn zero_embeddings_cost_log_two_per_term() {
        for q in 1..4 {
            let mut tape = Tape::new();
            let z = tape.constant(Matrix::zeros(1, 5));
            let negs = vec![z; q];
            let l = embedding_link_loss(&mut tape, z, z, &negs).unwrap();
            let v = tape.value(l).get(0, 0);
            assert!((v - (1 + q) as f64 * std::f64::consts::LN_2).abs() < 1e-14);
        }
    }

    #[test]
    fn hand_set_inner_products() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::row_vector(vec![1.0, 1.0, 1.0]));
        let p = tape.constant(Matrix::row_vector(vec![1.0, 1.0, 1.0]));
        let n = tape.constant(Matrix::row_vector(vec![-1.0, -1.0, -1.0]));
        let l = embedding_link_loss(&mut tape, a, p, &[n]).unwrap();
        let expect = -ln_sigmoid(3.0) - ln_sigmoid(3.0);
        assert!((tape.value(l).get(0, 0) - expect).abs() < 1e-14);
    }

    #[test]
    fn negatives_avoid_the_destination() {
        let s = NegativeSampler::new(vec![0, 1, 2]).unwrap();
        for seed in 0..200 {
            let d = s.draw(seed, &[7], 1, 5).unwrap();
            assert!(d.iter().all(|&x| x != 1));
        }
        assert!(NegativeSampler::new(vec![4]).unwrap().draw(0, &[], 4, 1).is_err());
    }
}
