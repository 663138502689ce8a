use std::io::Write;

use rayon::prelude::*;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::config::TrainConfig;
use super::eval::evaluate_links;
use super::loss::{link_loss, LinkSample, NegativeSampler};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::{
    chronological_split, mask_unseen, AccessObserver, GraphView, NodeFilter, Period, SplitSpec, TemporalGraph,
};
use crate::model::{Forward, ForwardSettings, ModelInit, TgatModel};
use crate::rng::{derive_seed, rng_for};

/// Events per tape; gradients of the pieces are summed in a fixed order so
/// results do not depend on the thread count.
const CHUNK: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss per positive interaction.
    pub train_loss: f64,
    pub val_ap: f64,
    pub val_acc: f64,
}

/// Supplies the per-epoch validation metrics `(ap, accuracy)`.
pub trait Validator {
    fn validate(&mut self, model: &TgatModel, epoch: usize) -> Result<(f64, f64)>;
}

/// Transductive link prediction on the validation period.
pub struct LinkValidator<'a> {
    pub graph: &'a TemporalGraph,
    pub split: &'a SplitSpec,
    pub config: &'a TrainConfig,
}

impl Validator for LinkValidator<'_> {
    fn validate(&mut self, model: &TgatModel, _epoch: usize) -> Result<(f64, f64)> {
        let m = evaluate_links(
            model,
            self.graph,
            self.split,
            Period::Validation,
            NodeFilter::Observed,
            &self.config.query(),
            self.config.seed,
        )?;
        Ok((m.average_precision, m.accuracy))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (the initial model when no
    /// epoch ran).
    pub model: TgatModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Chronological split plus the seeded unseen-node mask from `config`.
pub fn prepare_split(graph: &TemporalGraph, config: &TrainConfig) -> Result<SplitSpec> {
    let split = chronological_split(graph, config.train_frac, config.val_frac)?;
    if config.unseen_fraction > 0.0 {
        mask_unseen(graph, &split, config.unseen_fraction, config.seed)
    } else {
        Ok(split)
    }
}

/// Freshly initialized model sized for `graph`.
pub fn init_model(graph: &TemporalGraph, split: &SplitSpec, config: &TrainConfig) -> Result<TgatModel> {
    let init = ModelInit {
        t_max: split.train_end,
        max_positions: config.neighborhood_size + 1,
        positional_kind: config.positional_kind,
    };
    TgatModel::new(
        config.dims(graph.node_dim(), graph.edge_dim()),
        config.attention_mode,
        config.combine,
        init,
        &mut rng_for(config.seed, &[0x696e_6974]),
    )
}

pub fn train(graph: &TemporalGraph, split: &SplitSpec, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut validator = LinkValidator { graph, split, config };
    train_with(graph, split, config, &mut validator, None)
}

/// Full training loop with a custom validator and an optional observer that
/// sees every neighborhood read by training forward passes.
pub fn train_with(
    graph: &TemporalGraph,
    split: &SplitSpec,
    config: &TrainConfig,
    validator: &mut dyn Validator,
    observer: Option<&dyn AccessObserver>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let events = split.training_events(graph);
    if events.is_empty() {
        return Err(Error::Split("training period holds no usable events".into()));
    }
    let mut model = init_model(graph, split, config)?;
    let visible = split.training_visibility(graph);
    let view = GraphView::masked(graph, &visible);
    let view = match observer {
        Some(o) => view.observed(o),
        None => view,
    };
    let negatives = NegativeSampler::observed(graph, split)?;
    let adam = AdamConfig::new(config.learning_rate);
    let mut state = AdamState::for_shapes(model.params().iter().map(|p| p.data.len()));

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, TgatModel)> = None;
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        let epoch_seed = derive_seed(config.seed, &[0x6570_6f63, epoch as u64]);
        let mut loss_sum = 0.0;
        for batch in events.chunks(config.batch_size) {
            let samples = batch
                .iter()
                .map(|&e| {
                    let (source, destination) = graph.endpoints(e);
                    Ok(LinkSample {
                        source,
                        destination,
                        time: graph.timestamp(e),
                        negatives: negatives.draw(
                            epoch_seed,
                            &[e as u64],
                            destination,
                            config.negatives_per_positive,
                        )?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let settings = ForwardSettings {
                query: config.query(),
                dropout: config.neighborhood_dropout,
                seed: epoch_seed,
            };
            let scale = 1.0 / samples.len() as f64;
            let pieces: Vec<(f64, Vec<Vec<f64>>)> = samples
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut tape = Tape::new();
                    let bound = model.bind(&mut tape, true);
                    let mut fwd = Forward::new(&model, &bound, &view, settings);
                    let total = link_loss(&mut tape, &mut fwd, chunk)?;
                    let value = tape.value(total).get(0, 0);
                    let mean = tape.scale(total, scale);
                    tape.backward(mean)?;
                    Ok((value, model.collect_grads(&tape, &bound)))
                })
                .collect::<Result<_>>()?;
            let mut grads: Option<Vec<Vec<f64>>> = None;
            for (value, g) in pieces {
                loss_sum += value;
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            for (x, y) in a.iter_mut().zip(b) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let grads = grads.expect("non-empty batch");
            if grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Contract(format!("non-finite gradient in epoch {epoch}")));
            }
            adam_step(&mut model.params_mut(), &grads, &mut state, &adam)?;
        }
        let (val_ap, val_acc) = validator.validate(&model, epoch)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / events.len() as f64,
            val_ap,
            val_acc,
        });
        if best.as_ref().is_none_or(|(ap, _, _)| val_ap > *ap) {
            best = Some((val_ap, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(match best {
        Some((_, epoch, m)) => TrainOutcome {
            model: m,
            history,
            best_epoch: Some(epoch),
        },
        None => TrainOutcome {
            model,
            history,
            best_epoch: None,
        },
    })
}

/// `epoch,train_loss,val_ap,val_acc` with a header row.
pub fn write_history_csv(history: &[EpochRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,train_loss,val_ap,val_acc")?;
    for r in history {
        writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_ap, r.val_acc)?;
    }
    Ok(())
}
