//! `tde` command line: simulation runs, parameter sweeps, measured-data
//! evaluation and summaries, all written as CSV.

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use tde_core::ingest::{evaluate_downsampled, ground_truth_pipeline, load_measurement, IngestError};
use tde_core::scenario::{aggregate, place_image_sources, run_sweep, run_trial, ScenarioError, Stats};
use tde_core::{Execution, Method};
use thiserror::Error;

use config::RunConfig;
use output::Preamble;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "TDE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } | IngestError::Format(_) | IngestError::GeometryMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tde", version, about = "Subsample time-delay estimation and image-source localization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output CSV; overrides `output` from the config. Stdout when neither is set.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Run on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One simulation run: a row per (source, method).
    Simulate(RunArgs),
    /// One run per grid value of `[sweep]`: a row per (value, method).
    Sweep(RunArgs),
    /// Measured RIRs from `[ingest]`: a row per (source, event, method, pair).
    Ingest(RunArgs),
    /// Per-method summary of a simulate or ingest CSV.
    Report {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// JSON instead of CSV.
        #[arg(long)]
        json: bool,
    },
}

/// Configures the global thread pool from [`THREADS_ENV`].
pub fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn execution(args: &RunArgs) -> Execution {
    if args.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Runtime(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn load(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if args.output.is_some() {
        cfg.output = args.output.clone();
    }
    Ok(cfg)
}

pub fn cmd_simulate(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    cfg.scenario.validate()?;
    let trial = run_trial(&cfg.scenario, execution(args))?;
    let angles: Vec<f64> = place_image_sources(&cfg.scenario)?.iter().map(|s| s.angle).collect();
    let mut out = open_output(cfg.output.as_deref())?;
    let hash = cfg.hash();
    output::write_simulate(
        &mut out,
        &Preamble {
            schema: output::SIMULATE_SCHEMA,
            config_hash: &hash,
            seed: Some(cfg.scenario.seed),
            units: "toa_error_s and tdoa_error_s in seconds (mean absolute error over sensors / pairs); eps_pos dimensionless",
            notes: Vec::new(),
        },
        &trial,
        &angles,
    )?;
    out.flush()?;
    Ok(())
}

pub fn cmd_sweep(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let spec = cfg.sweep_spec()?;
    spec.validate()?;
    let result = run_sweep(&spec, execution(args))?;
    let mut out = open_output(cfg.output.as_deref())?;
    let hash = cfg.hash();
    output::write_sweep(
        &mut out,
        &Preamble {
            schema: output::SWEEP_SCHEMA,
            config_hash: &hash,
            seed: Some(cfg.scenario.seed),
            units: "times in seconds, rate in Hz, window in ms and samples, snr in dB, eps_pos dimensionless",
            notes: Vec::new(),
        },
        &result.table,
    )?;
    out.flush()?;
    Ok(())
}

pub fn cmd_ingest(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let section = cfg
        .ingest
        .clone()
        .ok_or_else(|| CliError::Config("ingest needs an [ingest] section".into()))?;
    if section.measurements.is_empty() {
        return Err(CliError::Config("[ingest] lists no measurements".into()));
    }
    for m in &section.measurements {
        for p in [&m.audio, &m.geometry] {
            if !p.is_file() {
                return Err(CliError::Config(format!("missing file {}", p.display())));
            }
        }
    }
    let exec = execution(args);
    let mut sets = Vec::new();
    for m in &section.measurements {
        let set = load_measurement(&m.audio, &m.geometry)?;
        let truth = ground_truth_pipeline(&set, &section.protocol)?;
        let records = evaluate_downsampled(&set, &truth, &section.protocol, exec)?;
        sets.push((set.source_label.clone(), set.geometry.len(), records));
    }
    let mut out = open_output(cfg.output.as_deref())?;
    let hash = cfg.hash();
    output::write_ingest(
        &mut out,
        &Preamble {
            schema: output::INGEST_SCHEMA,
            config_hash: &hash,
            seed: None,
            units: "tdoa_error_s in seconds, position_error_m in meters",
            notes: output::ingest_notes(),
        },
        &sets,
    )?;
    out.flush()?;
    Ok(())
}

/// Per-method statistics of one error column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: Method,
    pub metric: String,
    #[serde(flatten)]
    pub stats: Stats,
}

fn schema_of(text: &str) -> Option<&str> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# schema: "))
}

/// Summarizes a simulate or ingest CSV per method.
pub fn report(text: &str) -> Result<Vec<ReportRow>, CliError> {
    let schema = schema_of(text).ok_or_else(|| CliError::Config("input has no schema line".into()))?;
    let metrics: &[&str] = match schema {
        output::SIMULATE_SCHEMA => &["toa_error_s", "tdoa_error_s", "eps_pos"],
        output::INGEST_SCHEMA => &["tdoa_error_s", "position_error_m"],
        other => return Err(CliError::Config(format!("cannot summarize schema {other}"))),
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("column {name} missing")))
    };
    let method_col = col("method")?;
    let metric_cols = metrics.iter().map(|m| col(m)).collect::<Result<Vec<_>, _>>()?;
    // ingest repeats the position error on every pair row of an event
    let event_key = match schema {
        output::INGEST_SCHEMA => Some((col("source_label")?, col("event")?)),
        _ => None,
    };
    let mut values: BTreeMap<(Method, usize), Vec<f64>> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for rec in reader.records() {
        let rec = rec?;
        let method: Method = rec[method_col]
            .parse()
            .map_err(|e: tde_core::interp::InterpError| CliError::Config(e.to_string()))?;
        for (k, &c) in metric_cols.iter().enumerate() {
            if rec[c].is_empty() {
                continue;
            }
            if metrics[k] == "position_error_m" {
                let (l, e) = event_key.expect("ingest schema");
                if !seen.insert((rec[l].to_string(), rec[e].to_string(), method)) {
                    continue;
                }
            }
            let v: f64 = rec[c]
                .parse()
                .map_err(|_| CliError::Config(format!("bad number {:?} in {}", &rec[c], metrics[k])))?;
            values.entry((method, k)).or_default().push(v);
        }
    }
    Ok(values
        .into_iter()
        .map(|((method, k), v)| ReportRow {
            method,
            metric: metrics[k].to_string(),
            stats: aggregate(&v).expect("non-empty"),
        })
        .collect())
}

pub fn cmd_report(input: &Path, output: Option<&Path>, json: bool) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", input.display())))?;
    let rows = report(&text)?;
    let mut out = open_output(output)?;
    if json {
        serde_json::to_writer_pretty(&mut out, &rows).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(out)?;
    } else {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["method", "metric", "mean", "median", "std", "count"])?;
        for r in &rows {
            w.write_record([
                r.method.to_string(),
                r.metric.clone(),
                r.stats.mean.to_string(),
                r.stats.median.to_string(),
                r.stats.std.to_string(),
                r.stats.count.to_string(),
            ])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Report { input, output, json } => cmd_report(input, output.as_deref(), *json),
    }
}
