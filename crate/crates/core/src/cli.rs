//! Command-line driver. Every stdout line is `key=value` pairs; diagnostics
//! go to stderr.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigFile, TrainConfig};
use crate::engine::{Engine, EngineOptions};
use crate::error::{FdgnnError, Result};
use crate::event_stream::{
    read_stream, validate_stream, write_stream, EdgeKey, EntityId, EventKind, EventRecord, NodeId, Stream,
};
use crate::params::Model;
use crate::simulator::{sidecar_path, thinning_sample, write_lambdas, SimSpec};
use crate::training::{evaluate, local_update, train};

#[derive(Debug, Parser)]
#[command(name = "fdgnn", version, about = "Embeddings and event intensities for fully dynamic graphs")]
pub struct Cli {
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for evaluation; 1 is the serial reference.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a stream file; prints one line per violation.
    Validate { stream: PathBuf },
    /// Fit a model and write it with a loss history next to it.
    Train {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write the initialized model without training.
        #[arg(long)]
        init_only: bool,
    },
    /// One local gradient step on a new event after the stream.
    Update {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        /// The event as one JSON stream line.
        #[arg(long)]
        event_line: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print embeddings after all events up to and including `--at`.
    Embed {
        #[command(flatten)]
        query: Query,
    },
    /// Print one intensity on the state just before `--at`.
    Intensity {
        #[command(flatten)]
        query: Query,
        #[arg(long)]
        kind: u8,
    },
    /// Draw a synthetic stream from the `[simulate]` table of a config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Held-out metrics for events from index `--from` on.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long, default_value_t = 0)]
        from: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Query {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long)]
    pub at: f64,
    #[arg(long, conflicts_with = "edge")]
    pub node: Option<NodeId>,
    /// Edge as `u,v`.
    #[arg(long, value_parser = parse_edge)]
    pub edge: Option<EdgeKey>,
}

fn parse_edge(s: &str) -> std::result::Result<EdgeKey, String> {
    let (a, b) = s.split_once(',').ok_or("expected u,v")?;
    let a: NodeId = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: NodeId = b.trim().parse().map_err(|e| format!("{e}"))?;
    EdgeKey::new(a, b).ok_or_else(|| "endpoints must differ".to_string())
}

impl Query {
    fn subject(&self) -> Option<EntityId> {
        self.node.map(EntityId::Node).or(self.edge.map(EntityId::Edge))
    }
}

/// Exit status for an error.
pub fn exit_code(e: &FdgnnError) -> i32 {
    match e {
        FdgnnError::Invalid(_) | FdgnnError::Forbidden { .. } => 1,
        FdgnnError::NonFinite(_) => 3,
        _ => 2,
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(",")
}

fn load_stream(path: &Path) -> Result<Stream> {
    read_stream(BufReader::new(File::open(path)?))
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ConfigFile> {
    let mut cfg = match path {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(s) = seed {
        cfg.train.seed = s;
        if let Some(sim) = cfg.simulate.as_mut() {
            sim.seed = s;
        }
    }
    Ok(cfg)
}

fn replay(model: Model, stream: &Stream, mut keep: impl FnMut(f64) -> bool) -> Result<Engine> {
    let mut engine = Engine::new(model, &stream.header, EngineOptions::default())?;
    for ev in stream.events.iter().take_while(|e| keep(e.t)) {
        engine.apply(ev)?;
    }
    Ok(engine)
}

/// Parses `args` and runs the command, writing reports to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Validate { stream } => {
            let s = load_stream(stream)?;
            let violations = validate_stream(&s.header, &s.events);
            for v in &violations {
                let seq = v.seq.map_or("g0".to_string(), |s| s.to_string());
                writeln!(out, "seq={seq} rule={} detail={:?}", v.rule.name(), v.detail)?;
            }
            Ok(if violations.is_empty() { 0 } else { 1 })
        }
        Command::Train { stream, config, out: path, init_only } => {
            let s = load_stream(stream)?;
            let cfg = load_config(config.as_deref(), cli.seed)?.train;
            let cfg = if *init_only { TrainConfig { epochs: 0, ..cfg } } else { cfg };
            let outcome = train(&s, &cfg, None)?;
            outcome.model.save(path)?;
            let mut hist = BufWriter::new(File::create(history_path(path))?);
            for (i, l) in outcome.history.iter().enumerate() {
                writeln!(hist, "epoch={i} loss={}", fmt_f(*l))?;
            }
            hist.flush()?;
            let best = outcome.best_epoch.map_or("none".to_string(), |e| e.to_string());
            writeln!(out, "epochs={} best_epoch={best}", outcome.history.len())?;
            if let Some(l) = outcome.best_epoch.map(|e| outcome.history[e]) {
                writeln!(out, "best_loss={}", fmt_f(l))?;
            }
            Ok(0)
        }
        Command::Update { model, stream, event_line, out: path, lr, config } => {
            let s = load_stream(stream)?;
            let m = Model::load(model)?;
            let cfg = load_config(config.as_deref(), cli.seed)?.train;
            let rec: EventRecord =
                serde_json::from_str(event_line).map_err(|e| FdgnnError::Parse { line: 1, msg: e.to_string() })?;
            let ev = rec.into_event().map_err(|msg| FdgnnError::Parse { line: 1, msg })?;
            let violations = validate_stream(&s.header, &s.events);
            if !violations.is_empty() {
                return Err(FdgnnError::Invalid(violations));
            }
            let engine = replay(m, &s, |_| true)?;
            let upd = local_update(&engine, &ev, lr.unwrap_or(cfg.local_lr), cfg.mc_time_samples, cfg.seed)?;
            upd.model.save(path)?;
            writeln!(out, "seq={} log_lambda={} loss={}", ev.seq, fmt_f(upd.log_lambda), fmt_f(upd.loss))?;
            Ok(0)
        }
        Command::Embed { query } => {
            let s = load_stream(&query.stream)?;
            let m = Model::load(&query.model)?;
            let mut engine = replay(m, &s, |t| t <= query.at)?;
            let subjects: Vec<EntityId> = match query.subject() {
                Some(x) => vec![x],
                None => {
                    let c = engine.candidates::<rand_chacha::ChaCha8Rng>(None, 0);
                    c.observed
                }
            };
            for x in subjects {
                let z = match engine.query_embedding(x, query.at) {
                    Some(z) => z,
                    None => {
                        let blank = engine.blank_attr(x);
                        engine.candidate_embedding(x, query.at, &blank)?
                    }
                };
                let status = engine.status(x);
                writeln!(out, "entity={x} status={status} z={}", fmt_vec(engine.value(z)))?;
            }
            Ok(0)
        }
        Command::Intensity { query, kind } => {
            let kind = EventKind::from_code(*kind)
                .ok_or_else(|| FdgnnError::Config(format!("unknown event kind {kind}")))?;
            let Some(x) = query.subject() else {
                return Err(FdgnnError::Config("one of --node or --edge is required".into()));
            };
            if kind.is_node_event() != x.is_node() {
                return Err(FdgnnError::Config(format!("kind {} does not apply to {x}", kind.code())));
            }
            let s = load_stream(&query.stream)?;
            if let EntityId::Node(v) = x {
                if v >= s.header.node_universe {
                    return Err(FdgnnError::Config(format!("node {v} outside the universe")));
                }
            }
            let m = Model::load(&query.model)?;
            let mut engine = replay(m, &s, |t| t < query.at)?;
            let r = engine.report(kind, x, query.at, None)?;
            writeln!(out, "kind={} subject={x} lambda={} branch={}", kind.code(), fmt_f(r.value), r.branch.name())?;
            Ok(0)
        }
        Command::Simulate { config, out: path } => {
            let cfg = load_config(Some(config), cli.seed)?;
            let sec = cfg.simulate.ok_or_else(|| FdgnnError::Config("missing [simulate] table".into()))?;
            let spec = SimSpec::from_section(&sec, config.parent())?;
            let trace = thinning_sample(&spec)?;
            let mut w = BufWriter::new(File::create(path)?);
            write_stream(&mut w, &trace.stream)?;
            w.flush()?;
            let mut w = BufWriter::new(File::create(sidecar_path(path))?);
            write_lambdas(&mut w, &trace.lambdas)?;
            w.flush()?;
            writeln!(out, "events={} horizon={}", trace.stream.events.len(), fmt_f(spec.horizon))?;
            Ok(0)
        }
        Command::Evaluate { model, stream, from, config } => {
            let s = load_stream(stream)?;
            let m = Model::load(model)?;
            let cfg = load_config(config.as_deref(), cli.seed)?.train;
            if cli.threads == 0 {
                let _ = writeln!(err, "--threads 0 treated as 1");
            }
            let r = evaluate(&m, &s, *from, &cfg, cli.threads.max(1))?;
            writeln!(out, "events={}", r.events)?;
            writeln!(out, "mean_nll={}", fmt_f(r.mean_nll))?;
            writeln!(out, "type_accuracy={}", fmt_f(r.type_accuracy))?;
            writeln!(out, "survival_per_event={}", fmt_f(r.survival_per_event))?;
            Ok(0)
        }
    }
}

/// Loss history file written next to a trained model.
pub fn history_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".history");
    s.into()
}
