//! Link-prediction training, evaluation and downstream analysis.

mod adam;
mod attention;
mod classify;
mod config;
mod eval;
mod loss;
pub mod metrics;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use attention::{attention_report, AttentionReport, RecurrenceRow, TimespanRow};
pub use classify::{classify_embeddings, node_classify, train_mlp, Mlp, MlpConfig};
pub use config::{TrainConfig, CONFIG_KEYS};
pub use eval::{evaluate_links, metrics_from_scores, score_links, LinkScores};
pub use loss::{embedding_link_loss, link_loss, pair_score, LinkSample, NegativeSampler};
pub use metrics::{EvalMetrics, SplitTag};
pub use trainer::{
    init_model, prepare_split, train, train_with, write_history_csv, EpochRecord, LinkValidator, TrainOutcome,
    Validator,
};
