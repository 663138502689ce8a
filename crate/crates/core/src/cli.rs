//! Command-line front end. Exit codes: 0 success, 1 user or configuration
//! error, 2 filesystem error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::autodiff::GradCheckReport;
use crate::diagnostics::{grad_suite, kernel_suite};
use crate::error::{Error, Result};
use crate::graph::{ingest_path, GraphView, IngestOptions, NodeFilter, NodeId, Period, TemporalGraph};
use crate::model::{Checkpoint, ForwardSettings};
use crate::synthetic::{recency_graph, RecencyConfig};
use crate::time_encoding::write_kernel_table;
use crate::training::{
    attention_report, evaluate_links, node_classify, prepare_split, train, write_history_csv, MlpConfig,
    TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "tgat", version, about = "Temporal graph attention: ingest, train, evaluate, embed")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert an interaction CSV into a graph file.
    Ingest {
        dataset: PathBuf,
        out: PathBuf,
        /// Width of the all-zero node feature vectors.
        #[arg(long, default_value_t = 16)]
        node_dim: usize,
        /// Divide every timestamp by this value.
        #[arg(long, default_value_t = 1.0)]
        time_divisor: f64,
    },
    /// Write a seeded synthetic graph whose links depend on recency.
    Synth(SynthArgs),
    /// Train a model; writes checkpoint.json, history.csv and manifest.txt.
    Train {
        graph: PathBuf,
        config: PathBuf,
        outdir: PathBuf,
    },
    /// Evaluate a checkpoint on the test period.
    Eval {
        checkpoint: PathBuf,
        graph: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Transductive)]
        split: SplitArg,
        #[arg(long, value_enum, default_value_t = TaskArg::Link)]
        task: TaskArg,
        #[arg(long, value_enum, default_value_t = PeriodArg::Test)]
        period: PeriodArg,
    },
    /// Print embeddings for every (node, time) combination as CSV.
    Embed {
        checkpoint: PathBuf,
        graph: PathBuf,
        /// Comma-separated node ids.
        #[arg(long, value_delimiter = ',', required = true)]
        nodes: Vec<String>,
        /// Comma-separated query times.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<String>,
        /// Write to this file instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the built-in self checks.
    Check {
        /// Sampled-kernel convergence against the analytic kernel.
        #[arg(long, required_unless_present = "grad")]
        kernel: bool,
        /// Finite-difference gradient checks of the full model.
        #[arg(long)]
        grad: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Export attention weights against timespan and neighbor recurrence.
    Attention {
        checkpoint: PathBuf,
        graph: PathBuf,
        outdir: PathBuf,
        /// Number of test-period events to analyse.
        #[arg(long, default_value_t = 200)]
        events: usize,
        /// Comma-separated offsets added to each event time.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        offsets: Vec<f64>,
    },
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub nodes: usize,
    #[arg(long, default_value_t = 20_000)]
    pub events: usize,
    #[arg(long, default_value_t = 32)]
    pub node_dim: usize,
    #[arg(long, default_value_t = 0.01)]
    pub mean_gap: f64,
    #[arg(long, default_value_t = 6.0)]
    pub window: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Transductive,
    Inductive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Link,
    Node,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PeriodArg {
    Validation,
    Test,
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_USER
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Run manifest: invocation facts followed by the resolved configuration.
pub fn write_manifest(
    path: &Path,
    command: &str,
    inputs: &[(&str, &Path)],
    outdir: &Path,
    config: &TrainConfig,
) -> Result<()> {
    let mut lines = vec![format!("command = {command}")];
    for (k, p) in inputs {
        lines.push(format!("{k} = {}", p.display()));
    }
    lines.push(format!("output_dir = {}", outdir.display()));
    lines.push(format!("seed = {}", config.seed));
    lines.push(format!("invoked_at_unix = {}", now_unix()));
    for (k, v) in config.to_map() {
        lines.push(format!("config.{k} = {v}"));
    }
    write_with(path, |w| {
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, TrainConfig)> {
    let ck = Checkpoint::load(path)?;
    let config = TrainConfig::from_map(&ck.metadata)?;
    Ok((ck, config))
}

fn parse_list<T: std::str::FromStr>(what: &str, raw: &[String]) -> Result<Vec<T>> {
    raw.iter()
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("malformed {what} {s:?}")))
        })
        .collect()
}

fn grad_line(name: &str, r: &GradCheckReport) -> String {
    format!(
        "grad {name}: max_rel_error={:.3e} checked={} tolerance={:e} {}",
        r.max_relative_error,
        r.checked,
        r.tolerance,
        if r.passed { "PASS" } else { "FAIL" }
    )
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Ingest {
            dataset,
            out,
            node_dim,
            time_divisor,
        } => {
            let opts = IngestOptions {
                edge_dim: None,
                node_dim,
                time_divisor,
            };
            let g = ingest_path(&dataset, &opts)?;
            g.save(&out)?;
            println!("{} nodes, {} events, t_max={}", g.num_nodes(), g.num_events(), g.t_max());
            Ok(EXIT_OK)
        }
        Command::Synth(a) => {
            let cfg = RecencyConfig {
                nodes: a.nodes,
                events: a.events,
                node_dim: a.node_dim,
                mean_gap: a.mean_gap,
                window: a.window,
                seed: a.seed,
                ..RecencyConfig::default()
            };
            let g = recency_graph(&cfg)?;
            g.save(&a.out)?;
            println!("{} nodes, {} events, t_max={}", g.num_nodes(), g.num_events(), g.t_max());
            Ok(EXIT_OK)
        }
        Command::Train { graph, config, outdir } => {
            let cfg = TrainConfig::load(&config)?;
            let g = TemporalGraph::load(&graph)?;
            create_dir(&outdir)?;
            let split = prepare_split(&g, &cfg)?;
            let outcome = train(&g, &split, &cfg)?;
            let ck = Checkpoint::new(outcome.model, cfg.to_map());
            ck.save(outdir.join("checkpoint.json"))?;
            write_with(&outdir.join("history.csv"), |w| write_history_csv(&outcome.history, w))?;
            write_manifest(
                &outdir.join("manifest.txt"),
                "train",
                &[("config_path", &config), ("dataset_path", &graph)],
                &outdir,
                &cfg,
            )?;
            match outcome.history.iter().find(|r| Some(r.epoch) == outcome.best_epoch) {
                Some(best) => println!(
                    "epochs={} best_epoch={} val_ap={:.4} val_acc={:.4}",
                    outcome.history.len(),
                    best.epoch,
                    best.val_ap,
                    best.val_acc
                ),
                None => println!("epochs=0"),
            }
            Ok(EXIT_OK)
        }
        Command::Eval {
            checkpoint,
            graph,
            split,
            task,
            period,
        } => {
            let (ck, cfg) = load_checkpoint(&checkpoint)?;
            let g = TemporalGraph::load(&graph)?;
            let spec = prepare_split(&g, &cfg)?;
            let filter = match split {
                SplitArg::Transductive => NodeFilter::Observed,
                SplitArg::Inductive => NodeFilter::Unseen,
            };
            let period = match period {
                PeriodArg::Validation => Period::Validation,
                PeriodArg::Test => Period::Test,
            };
            let m = match task {
                TaskArg::Link => evaluate_links(&ck.model, &g, &spec, period, filter, &cfg.query(), cfg.seed)?,
                TaskArg::Node => node_classify(&ck.model, &g, &spec, &cfg.query(), &MlpConfig::from(&cfg), cfg.seed)?,
            };
            let auc = m.auc.map_or_else(|| "NA".to_string(), |a| format!("{a:.4}"));
            println!(
                "split={} task={} acc={:.4} ap={:.4} auc={auc}",
                format!("{split:?}").to_lowercase(),
                format!("{task:?}").to_lowercase(),
                m.accuracy,
                m.average_precision
            );
            Ok(EXIT_OK)
        }
        Command::Embed {
            checkpoint,
            graph,
            nodes,
            times,
            output,
        } => {
            let nodes: Vec<NodeId> = parse_list("node id", &nodes)?;
            let times: Vec<f64> = parse_list("time", &times)?;
            if let Some(t) = times.iter().find(|t| !t.is_finite()) {
                return Err(Error::Config(format!("time {t} is not finite")));
            }
            let (ck, cfg) = load_checkpoint(&checkpoint)?;
            let g = TemporalGraph::load(&graph)?;
            let rows = embed_rows(&ck, &cfg, &g, &nodes, &times)?;
            let text = embed_csv(ck.model.dims.embed_dim, &rows);
            match output {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?,
                None => print!("{text}"),
            }
            Ok(EXIT_OK)
        }
        Command::Check {
            kernel,
            grad,
            seed,
            inject_fault,
        } => {
            let mut ok = true;
            if kernel {
                let suite = kernel_suite(inject_fault, seed)?;
                let mut table = Vec::new();
                write_kernel_table(&suite.reports, &mut table).expect("in-memory write");
                print!("{}", String::from_utf8_lossy(&table));
                println!(
                    "kernel: k=4096 sup_error={:.4} (threshold {}), improved in {}/{} trials {}",
                    suite.reports[1].sup_error,
                    suite.threshold,
                    suite.improved_trials,
                    suite.trials,
                    if suite.passed { "PASS" } else { "FAIL" }
                );
                ok &= suite.passed;
            }
            if grad {
                for (name, report) in grad_suite(inject_fault, seed)? {
                    println!("{}", grad_line(&name, &report));
                    ok &= report.passed;
                }
            }
            Ok(if ok { EXIT_OK } else { EXIT_USER })
        }
        Command::Attention {
            checkpoint,
            graph,
            outdir,
            events,
            offsets,
        } => {
            let (ck, cfg) = load_checkpoint(&checkpoint)?;
            let g = TemporalGraph::load(&graph)?;
            let spec = prepare_split(&g, &cfg)?;
            let test = spec.events_in(&g, Period::Test, None);
            let step = (test.len() / events.max(1)).max(1);
            let picked: Vec<usize> = test.into_iter().step_by(step).take(events).collect();
            let visible = spec.evaluation_visibility(&g);
            let view = GraphView::masked(&g, &visible);
            let report = attention_report(&ck.model, &view, &picked, &offsets, &cfg.query(), cfg.seed)?;
            create_dir(&outdir)?;
            write_with(&outdir.join("attention_timespan.csv"), |w| report.write_timespan_csv(w))?;
            write_with(&outdir.join("attention_recurrence.csv"), |w| report.write_recurrence_csv(w))?;
            write_manifest(
                &outdir.join("manifest.txt"),
                "attention",
                &[("checkpoint_path", &checkpoint), ("dataset_path", &graph)],
                &outdir,
                &cfg,
            )?;
            println!(
                "rows={} timespan_spearman={:.4}",
                report.timespan_rows.len(),
                report.timespan_trend(ck.model.dims.layers, 10)
            );
            Ok(EXIT_OK)
        }
    }
}

/// Embedding rows `(node, t, values)` in node-major order over the full graph.
pub fn embed_rows(
    ck: &Checkpoint,
    cfg: &TrainConfig,
    g: &TemporalGraph,
    nodes: &[NodeId],
    times: &[f64],
) -> Result<Vec<(NodeId, f64, Vec<f64>)>> {
    let settings = embed_settings(cfg);
    let view = GraphView::full(g);
    let mut rows = Vec::with_capacity(nodes.len() * times.len());
    for &n in nodes {
        for &t in times {
            rows.push((n, t, ck.model.embed(&view, n, t, &settings)?));
        }
    }
    Ok(rows)
}

/// Inference settings used by `embed`: the checkpoint's neighborhood query
/// and seed, no dropout.
pub fn embed_settings(cfg: &TrainConfig) -> ForwardSettings {
    ForwardSettings {
        query: cfg.query(),
        dropout: 0.0,
        seed: cfg.seed,
    }
}

/// `node,t,e0,...` with shortest round-trip float formatting.
pub fn embed_csv(dim: usize, rows: &[(NodeId, f64, Vec<f64>)]) -> String {
    let mut out = String::from("node,t");
    for i in 0..dim {
        out.push_str(&format!(",e{i}"));
    }
    out.push('\n');
    for (n, t, v) in rows {
        out.push_str(&format!("{n},{t}"));
        for x in v {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
    }
    out
}

