//! Interaction CSV reader.
//!
//! One header line, then `user_id,item_id,timestamp,state_label,f_1,...,f_de`.
//! Users and items live in separate id spaces: users become nodes
//! `0..U` in ascending id order, items `U..U+I`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::{GraphBuilder, NodeOrigins, TemporalEvent, TemporalGraph};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct IngestOptions {
    /// Edge feature count; inferred from the first data row when `None`.
    pub edge_dim: Option<usize>,
    /// Width of the all-zero node feature vectors.
    pub node_dim: usize,
    /// Every timestamp is divided by this before storage.
    pub time_divisor: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            edge_dim: None,
            node_dim: 0,
            time_divisor: 1.0,
        }
    }
}

struct Row {
    user: u64,
    item: u64,
    timestamp: f64,
    label: Option<bool>,
    features: Vec<f64>,
}

fn parse_field<T: std::str::FromStr>(raw: &str, what: &str, line: u64) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Ingest {
        line,
        message: format!("cannot parse {what} from {raw:?}"),
    })
}

pub fn ingest<R: Read>(reader: R, options: &IngestOptions) -> Result<TemporalGraph> {
    if !(options.time_divisor > 0.0) {
        return Err(Error::Validation(format!(
            "time divisor must be positive, got {}",
            options.time_divisor
        )));
    }
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut edge_dim = options.edge_dim;
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| Error::Ingest {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0).is_some_and(str::is_empty) {
            continue;
        }
        let expected = 4 + *edge_dim.get_or_insert(record.len().saturating_sub(4));
        if record.len() != expected || record.len() < 4 {
            return Err(Error::Ingest {
                line,
                message: format!("expected {expected} columns, found {}", record.len()),
            });
        }
        let user = parse_field(&record[0], "user id", line)?;
        let item = parse_field(&record[1], "item id", line)?;
        let raw_t: f64 = parse_field(&record[2], "timestamp", line)?;
        if !raw_t.is_finite() {
            return Err(Error::Ingest {
                line,
                message: format!("timestamp {raw_t} is not finite"),
            });
        }
        if raw_t < 0.0 {
            return Err(Error::Validation(format!(
                "line {line}: negative timestamp {raw_t}"
            )));
        }
        let label = match record[3].trim() {
            "" => None,
            raw => {
                let v: f64 = parse_field(raw, "state label", line)?;
                if v == 0.0 {
                    Some(false)
                } else if v == 1.0 {
                    Some(true)
                } else {
                    return Err(Error::Ingest {
                        line,
                        message: format!("state label must be 0 or 1, got {raw}"),
                    });
                }
            }
        };
        let features = record
            .iter()
            .skip(4)
            .map(|f| parse_field::<f64>(f, "edge feature", line))
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row {
            user,
            item,
            timestamp: raw_t / options.time_divisor,
            label,
            features,
        });
    }

    let mut users: BTreeMap<u64, usize> = rows.iter().map(|r| (r.user, 0)).collect();
    let mut items: BTreeMap<u64, usize> = rows.iter().map(|r| (r.item, 0)).collect();
    for (i, v) in users.values_mut().enumerate() {
        *v = i;
    }
    let n_users = users.len();
    for (j, v) in items.values_mut().enumerate() {
        *v = n_users + j;
    }
    let origins = NodeOrigins {
        users: users.keys().copied().collect(),
        items: items.keys().copied().collect(),
    };
    let mut builder = GraphBuilder::new(n_users + items.len(), options.node_dim, edge_dim.unwrap_or(0))
        .origins(origins);
    for r in rows {
        builder.push(TemporalEvent {
            source: users[&r.user],
            destination: items[&r.item],
            timestamp: r.timestamp,
            edge_features: r.features,
            label: r.label,
        })?;
    }
    Ok(builder.build())
}

pub fn ingest_path(path: impl AsRef<Path>, options: &IngestOptions) -> Result<TemporalGraph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest(std::io::BufReader::new(file), options)
}
