//! Self-check suites: sampled-kernel convergence and end-to-end gradient
//! verification of the attention model. Each suite accepts a `fault` flag
//! that plants a known bug, so the checks themselves can be shown to fail.

use rand::Rng;

use crate::autodiff::{grad_check_with, GradCheckConfig, GradCheckReport, Matrix, Tape, Tensor, UnaryRule};
use crate::error::Result;
use crate::graph::{GraphBuilder, NeighborQuery, SamplingStrategy, TemporalEvent, TemporalGraph};
use crate::model::{AttentionMode, Combine, Forward, ForwardSettings, ModelDims, ModelInit, TgatModel};
use crate::rng::rng_for;
use crate::time_encoding::{kernel_grid_check, KernelCheckReport, PositionalKind, SpectralDistribution, TimeEncoder};
use crate::training::{link_loss, pair_score, LinkSample};

#[derive(Clone, Debug)]
pub struct KernelSuite {
    pub reports: Vec<KernelCheckReport>,
    /// Trials where the large-sample error beat the small-sample error.
    pub improved_trials: usize,
    pub trials: usize,
    pub threshold: f64,
    pub passed: bool,
}

/// Standard-normal frequencies, `t_max = 10`, 100 x 100 grid, 5 trials, at
/// `k = 16` and `k = 4096`. Passes when the `k = 4096` mean sup error is
/// below 0.10 and beats the `k = 16` error in at least 90% of trials.
pub fn kernel_suite(fault: bool, seed: u64) -> Result<KernelSuite> {
    let (t_max, grid, trials, threshold) = (10.0, 100, 5, 0.10);
    let reports = kernel_grid_check(
        |k, rng| {
            let enc = TimeEncoder::standard_normal(k, rng)?;
            if fault {
                TimeEncoder::new(enc.frequencies().iter().map(|w| 2.0 * w).collect())
            } else {
                Ok(enc)
            }
        },
        SpectralDistribution::StandardNormal,
        &[16, 4096],
        t_max,
        grid,
        trials,
        seed,
    )?;
    let (small, large) = (&reports[0], &reports[1]);
    let improved_trials = small
        .trial_sup_errors
        .iter()
        .zip(&large.trial_sup_errors)
        .filter(|(s, l)| l < s)
        .count();
    let passed = large.sup_error < threshold && improved_trials * 10 >= trials * 9;
    Ok(KernelSuite {
        reports,
        improved_trials,
        trials,
        threshold,
        passed,
    })
}

/// Six nodes, three node features, two edge features, fourteen events.
pub fn six_node_fixture() -> TemporalGraph {
    let mut b = GraphBuilder::new(6, 3, 2);
    let mut rng = rng_for(0x66_6978, &[]);
    for n in 0..6 {
        let f: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        b.set_node_features(n, &f).expect("fixture features");
    }
    let pairs = [
        (0, 1),
        (1, 2),
        (0, 2),
        (3, 4),
        (2, 3),
        (4, 5),
        (0, 3),
        (1, 5),
        (5, 0),
        (2, 4),
        (1, 3),
        (0, 4),
        (3, 5),
        (2, 5),
    ];
    for (i, &(s, d)) in pairs.iter().enumerate() {
        b.push(TemporalEvent {
            source: s,
            destination: d,
            timestamp: 0.7 * (i + 1) as f64 + 0.05 * (i % 3) as f64,
            edge_features: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            label: None,
        })
        .expect("fixture event");
    }
    b.build()
}

/// `d_h = 4`, `d_T = 4`, `d = 5`, `d_f = 6`, two layers.
pub fn fixture_model(heads: usize, mode: AttentionMode, seed: u64) -> Result<TgatModel> {
    let g = six_node_fixture();
    let dims = ModelDims {
        node_dim: g.node_dim(),
        edge_dim: g.edge_dim(),
        embed_dim: 5,
        time_dim: 4,
        head_dim: 4,
        ffn_dim: 6,
        heads,
        layers: 2,
    };
    let init = ModelInit {
        t_max: g.t_max(),
        max_positions: 4,
        positional_kind: PositionalKind::Learnable,
    };
    let mut model = TgatModel::new(dims, mode, Combine::Concat, init, &mut rng_for(seed, &[0x6d_6f64]))?;
    // spread the frequencies so every sinusoid has visible curvature
    for (i, w) in model.time_encoder.frequencies_mut().iter_mut().enumerate() {
        *w = 0.4 + 0.3 * i as f64;
    }
    Ok(model)
}

fn fixture_batch(g: &TemporalGraph) -> Vec<LinkSample> {
    [10usize, 12, 13]
        .iter()
        .map(|&e| {
            let (source, destination) = g.endpoints(e);
            let negative = (destination + 2) % g.num_nodes();
            LinkSample {
                source,
                destination,
                time: g.timestamp(e),
                negatives: vec![if negative == destination { 0 } else { negative }],
            }
        })
        .collect()
}

fn faulty_log_sigmoid() -> UnaryRule {
    UnaryRule {
        forward: |x| -(1.0 + (-x).exp()).ln(),
        // correct derivative is 1 - sigmoid(x)
        derivative: |x| 1.0 / (1.0 + (-x).exp()),
    }
}

/// Link loss with the planted derivative bug on every log-sigmoid.
fn faulty_link_loss(tape: &mut Tape, fwd: &mut Forward<'_>, batch: &[LinkSample]) -> Result<Tensor> {
    let mut total = None;
    for s in batch {
        let a = fwd.embed(tape, s.source, s.time)?;
        let p = fwd.embed(tape, s.destination, s.time)?;
        let score = pair_score(tape, a, p)?;
        let mut l = tape.unary(score, faulty_log_sigmoid());
        for &n in &s.negatives {
            let h = fwd.embed(tape, n, s.time)?;
            let score = pair_score(tape, a, h)?;
            let flipped = tape.scale(score, -1.0);
            let term = tape.unary(flipped, faulty_log_sigmoid());
            l = tape.add(l, term)?;
        }
        let l = tape.scale(l, -1.0);
        total = Some(match total {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    Ok(total.expect("non-empty batch"))
}

/// Central-difference check of the full two-layer forward plus link loss,
/// every coordinate of every parameter (frequencies included).
pub fn model_grad_check(model: &TgatModel, fault: bool, config: &GradCheckConfig) -> Result<GradCheckReport> {
    let g = six_node_fixture();
    let batch = fixture_batch(&g);
    let settings = ForwardSettings {
        query: NeighborQuery::new(3, SamplingStrategy::MostRecent),
        dropout: 0.0,
        seed: 5,
    };
    let params: Vec<Matrix> = model
        .params()
        .iter()
        .map(|p| Matrix::from_vec(p.shape.0, p.shape.1, p.data.to_vec()))
        .collect::<Result<_>>()?;
    grad_check_with(
        |tape, vars| {
            let bound = model.bind_tensors(tape, vars)?;
            let mut fwd = Forward::new(model, &bound, &g, settings);
            if fault {
                faulty_link_loss(tape, &mut fwd, &batch)
            } else {
                link_loss(tape, &mut fwd, &batch)
            }
        },
        &params,
        config,
    )
}

/// Named gradient checks: one- and two-head learned attention, plus the
/// positional variant with a learnable table.
pub fn grad_suite(fault: bool, seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let config = GradCheckConfig {
        tolerance: 1e-4,
        step: 1e-5,
        coords_per_param: None,
        floor: 1e-6,
        seed,
    };
    let cases = [
        ("learned, 1 head", 1, AttentionMode::Learned),
        ("learned, 2 heads", 2, AttentionMode::Learned),
        ("positional, 2 heads", 2, AttentionMode::Positional),
    ];
    cases
        .iter()
        .map(|&(name, heads, mode)| {
            let model = fixture_model(heads, mode, seed)?;
            Ok((name.to_string(), model_grad_check(&model, fault, &config)?))
        })
        .collect()
}
