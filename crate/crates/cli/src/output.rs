//! CSV tables. Each file starts with `#` comment lines (schema, config hash,
//! seed, units); the column sets below are fixed per schema version.

use std::io::Write;

use tde_core::ingest::{IngestRecord, GROUND_TRUTH_CAVEAT};
use tde_core::locate::sensor_pairs;
use tde_core::scenario::{Stats, TrialResult};
use tde_core::ErrorTable;

use crate::CliError;

pub const SIMULATE_SCHEMA: &str = "tde-simulate/1";
pub const SWEEP_SCHEMA: &str = "tde-sweep/1";
pub const INGEST_SCHEMA: &str = "tde-ingest/1";

pub const SIMULATE_COLUMNS: [&str; 7] = [
    "source",
    "method",
    "angle_rad",
    "toa_error_s",
    "tdoa_error_s",
    "eps_pos",
    "failure",
];

pub const SWEEP_COLUMNS: [&str; 20] = [
    "parameter",
    "value",
    "rate_hz",
    "window_ms",
    "window_samples",
    "factor",
    "snr_db",
    "s",
    "method",
    "toa_mean_s",
    "toa_median_s",
    "toa_std_s",
    "tdoa_mean_s",
    "tdoa_median_s",
    "tdoa_std_s",
    "eps_pos_mean",
    "eps_pos_median",
    "eps_pos_std",
    "count",
    "failures",
];

pub const INGEST_COLUMNS: [&str; 8] = [
    "source_label",
    "event",
    "method",
    "m",
    "n",
    "tdoa_error_s",
    "position_error_m",
    "failure",
];

/// Header comment block shared by all tables.
pub struct Preamble<'a> {
    pub schema: &'a str,
    pub config_hash: &'a str,
    pub seed: Option<u64>,
    pub units: &'a str,
    pub notes: Vec<String>,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn stats_fields(s: &Option<Stats>) -> [String; 3] {
    match s {
        Some(s) => [num(s.mean), num(s.median), num(s.std)],
        None => Default::default(),
    }
}

fn writer<W: Write>(out: &mut W, pre: &Preamble, columns: &[&str]) -> Result<(), CliError> {
    writeln!(out, "# schema: {}", pre.schema)?;
    writeln!(out, "# config_sha256: {}", pre.config_hash)?;
    if let Some(seed) = pre.seed {
        writeln!(out, "# seed: {seed}")?;
    }
    writeln!(out, "# units: {}", pre.units)?;
    for n in &pre.notes {
        writeln!(out, "# note: {n}")?;
    }
    let mut w = csv::Writer::from_writer(&mut *out);
    w.write_record(columns)?;
    w.flush()?;
    Ok(())
}

fn rows<W: Write, I>(out: &mut W, records: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in records {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (source, method), sources numbered from 1: mean absolute TOA error over sensors, mean
/// absolute TDOA error over pairs, and the normalized position error.
pub fn write_simulate<W: Write>(out: &mut W, pre: &Preamble, trial: &TrialResult, angles: &[f64]) -> Result<(), CliError> {
    writer(out, pre, &SIMULATE_COLUMNS)?;
    rows(
        out,
        trial.records.iter().map(|r| {
            vec![
                r.source.to_string(),
                r.method.to_string(),
                num(angles[r.source - 1]),
                opt(r.mean_toa_error()),
                opt(r.mean_tdoa_error()),
                opt(r.eps_pos),
                r.failure.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// One row per (grid value, method).
pub fn write_sweep<W: Write>(out: &mut W, pre: &Preamble, table: &ErrorTable) -> Result<(), CliError> {
    writer(out, pre, &SWEEP_COLUMNS)?;
    rows(
        out,
        table.rows.iter().map(|r| {
            let mut f = vec![
                r.parameter.map(|p| p.name().to_string()).unwrap_or_default(),
                num(r.value),
                num(r.rate_hz),
                num(r.window_samples as f64 * 1000.0 / r.rate_hz),
                r.window_samples.to_string(),
                r.factor.to_string(),
                num(r.snr_db),
                r.s.to_string(),
                r.method.to_string(),
            ];
            f.extend(stats_fields(&r.toa));
            f.extend(stats_fields(&r.tdoa));
            f.extend(stats_fields(&r.eps_pos));
            f.push(r.tdoa.map(|s| s.count).unwrap_or(0).to_string());
            f.push(r.failures.to_string());
            f
        }),
    )
}

/// One row per (source, event, method, sensor pair); failed windows get a
/// single row with the failure text.
pub fn write_ingest<W: Write>(
    out: &mut W,
    pre: &Preamble,
    sets: &[(String, usize, Vec<IngestRecord>)],
) -> Result<(), CliError> {
    writer(out, pre, &INGEST_COLUMNS)?;
    let mut all = Vec::new();
    for (label, sensors, records) in sets {
        let pairs = sensor_pairs(*sensors);
        for r in records {
            if let Some(f) = &r.failure {
                all.push(vec![
                    label.clone(),
                    r.event.to_string(),
                    r.method.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    f.clone(),
                ]);
                continue;
            }
            for (&(m, n), e) in pairs.iter().zip(&r.tdoa_errors) {
                all.push(vec![
                    label.clone(),
                    r.event.to_string(),
                    r.method.to_string(),
                    m.to_string(),
                    n.to_string(),
                    num(*e),
                    opt(r.position_error),
                    String::new(),
                ]);
            }
        }
    }
    rows(out, all)
}

pub fn ingest_notes() -> Vec<String> {
    vec![format!("ground truth caveat: {GROUND_TRUTH_CAVEAT}")]
}
