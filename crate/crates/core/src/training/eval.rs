use rayon::prelude::*;

use super::loss::NegativeSampler;
use super::metrics::{accuracy, average_precision, roc_auc, EvalMetrics, SplitTag};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::{GraphView, NeighborQuery, NeighborSource, NodeFilter, Period, SplitSpec, TemporalGraph};
use crate::model::{Forward, ForwardSettings, TgatModel};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Scores in `[0, 1]` with their labels; positives and negatives interleaved.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkScores {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

/// For each event: `sigmoid(h_src . h_dst)` as a positive and one seeded
/// negative destination as a negative, all embeddings taken at the event time.
pub fn score_links(
    model: &TgatModel,
    source: &dyn NeighborSource,
    events: &[usize],
    negatives: &NegativeSampler,
    query: &NeighborQuery,
    seed: u64,
) -> Result<LinkScores> {
    let graph = source.graph();
    let settings = ForwardSettings {
        query: *query,
        dropout: 0.0,
        seed,
    };
    let pairs: Vec<(f64, f64)> = events
        .par_iter()
        .map(|&e| {
            let (src, dst) = graph.endpoints(e);
            let t = graph.timestamp(e);
            let neg = negatives.draw(seed, &[0x6576_616c, e as u64], dst, 1)?[0];
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, false);
            let mut fwd = Forward::new(model, &bound, source, settings);
            let hs = fwd.embed(&mut tape, src, t)?;
            let hd = fwd.embed(&mut tape, dst, t)?;
            let hn = fwd.embed(&mut tape, neg, t)?;
            let dot = |a, b| -> f64 {
                let (a, b) = (tape.value(a).data(), tape.value(b).data());
                a.iter().zip(b).map(|(x, y)| x * y).sum()
            };
            Ok((sigmoid(dot(hs, hd)), sigmoid(dot(hs, hn))))
        })
        .collect::<Result<_>>()?;
    let mut out = LinkScores::default();
    for (p, n) in pairs {
        out.scores.extend([p, n]);
        out.labels.extend([true, false]);
    }
    Ok(out)
}

pub fn metrics_from_scores(scores: &[f64], labels: &[bool], split_tag: SplitTag) -> Result<EvalMetrics> {
    let auc = if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
        Some(roc_auc(scores, labels)?)
    } else {
        None
    };
    Ok(EvalMetrics {
        accuracy: accuracy(scores, labels, 0.5)?,
        average_precision: average_precision(scores, labels)?,
        auc,
        split_tag,
        count: scores.len(),
    })
}

/// Link prediction on one period. `Observed` keeps events among training
/// nodes (transductive); `Unseen` keeps events touching a withheld node
/// (inductive).
pub fn evaluate_links(
    model: &TgatModel,
    graph: &TemporalGraph,
    split: &SplitSpec,
    period: Period,
    filter: NodeFilter,
    query: &NeighborQuery,
    seed: u64,
) -> Result<EvalMetrics> {
    let events = split.events_in(graph, period, Some(filter));
    if events.is_empty() {
        return Err(Error::Evaluation(format!("no {filter:?} events in the {period:?} period")));
    }
    let visible = split.evaluation_visibility(graph);
    let view = GraphView::masked(graph, &visible);
    let negatives = NegativeSampler::all_nodes(graph)?;
    let scored = score_links(model, &view, &events, &negatives, query, seed)?;
    let tag = match filter {
        NodeFilter::Observed => SplitTag::Transductive,
        NodeFilter::Unseen => SplitTag::Inductive,
    };
    metrics_from_scores(&scored.scores, &scored.labels, tag)
}
