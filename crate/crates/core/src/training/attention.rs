//! Attention weights as functions of timespan and neighbor recurrence.

use std::collections::HashMap;
use std::io::Write;

use super::metrics::spearman;
use crate::error::Result;
use crate::graph::{NeighborQuery, NeighborSource, NodeId};
use crate::model::{ForwardSettings, TgatModel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimespanRow {
    pub layer: usize,
    pub head: usize,
    pub node: NodeId,
    pub query_time: f64,
    pub timespan: f64,
    /// Sampled neighborhood size the weight was normalized over.
    pub neighbors: usize,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecurrenceRow {
    pub layer: usize,
    pub occurrence_count: usize,
    /// Mean over heads.
    pub weight: f64,
    pub target_time_offset: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionReport {
    pub timespan_rows: Vec<TimespanRow>,
    pub recurrence_rows: Vec<RecurrenceRow>,
}

/// Embeds both endpoints of each event at `t + offset` for every offset and
/// records every attention weight computed along the way.
pub fn attention_report(
    model: &TgatModel,
    source: &dyn NeighborSource,
    events: &[usize],
    offsets: &[f64],
    query: &NeighborQuery,
    seed: u64,
) -> Result<AttentionReport> {
    let graph = source.graph();
    let settings = ForwardSettings {
        query: *query,
        dropout: 0.0,
        seed,
    };
    let mut report = AttentionReport::default();
    for &e in events {
        let (a, b) = graph.endpoints(e);
        for &offset in offsets {
            let t = graph.timestamp(e) + offset;
            for node in [a, b] {
                let (_, records) = model.embed_with_attention(source, node, t, &settings)?;
                for r in records {
                    for (head, w) in r.weights.iter().enumerate() {
                        for (entry, &weight) in r.entries.iter().zip(w) {
                            report.timespan_rows.push(TimespanRow {
                                layer: r.layer,
                                head,
                                node: r.node,
                                query_time: r.query_time,
                                timespan: r.query_time - entry.timestamp,
                                neighbors: r.entries.len(),
                                weight,
                            });
                        }
                    }
                    let mut counts: HashMap<NodeId, usize> = HashMap::new();
                    for entry in &r.entries {
                        *counts.entry(entry.peer).or_default() += 1;
                    }
                    for (i, entry) in r.entries.iter().enumerate() {
                        let weight = r.weights.iter().map(|w| w[i]).sum::<f64>() / r.weights.len() as f64;
                        report.recurrence_rows.push(RecurrenceRow {
                            layer: r.layer,
                            occurrence_count: counts[&entry.peer],
                            weight,
                            target_time_offset: offset,
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}

impl AttentionReport {
    /// Spearman correlation between timespan and mean weight after grouping
    /// rows of `layer` into `bins` equal-count timespan bins.
    pub fn timespan_trend(&self, layer: usize, bins: usize) -> f64 {
        let mut rows: Vec<(f64, f64)> = self
            .timespan_rows
            .iter()
            .filter(|r| r.layer == layer)
            .map(|r| (r.timespan, r.weight))
            .collect();
        if rows.len() < 2 || bins < 2 {
            return f64::NAN;
        }
        rows.sort_by(|x, y| x.0.total_cmp(&y.0));
        let bins = bins.min(rows.len());
        let (mut spans, mut weights) = (Vec::with_capacity(bins), Vec::with_capacity(bins));
        for b in 0..bins {
            let part = &rows[b * rows.len() / bins..(b + 1) * rows.len() / bins];
            let n = part.len() as f64;
            spans.push(part.iter().map(|r| r.0).sum::<f64>() / n);
            weights.push(part.iter().map(|r| r.1).sum::<f64>() / n);
        }
        spearman(&spans, &weights)
    }

    pub fn write_timespan_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "layer,head,node,query_time,timespan,neighbors,weight")?;
        for r in &self.timespan_rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.layer, r.head, r.node, r.query_time, r.timespan, r.neighbors, r.weight
            )?;
        }
        Ok(())
    }

    pub fn write_recurrence_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "layer,occurrence_count,weight,target_time_offset")?;
        for r in &self.recurrence_rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.layer, r.occurrence_count, r.weight, r.target_time_offset
            )?;
        }
        Ok(())
    }
}
