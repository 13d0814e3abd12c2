//! CSV and JSON output of summary rows.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_HEADER: &str = "n_new,risk_identity,risk_estimated,risk_limit,diff_pct,frob_err,run_count,seed";

/// One averaged line of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n_new: usize,
    pub risk_identity: f64,
    pub risk_estimated: f64,
    pub risk_limit: f64,
    /// 100·(risk_estimated − risk_limit)/risk_limit.
    pub diff_pct: f64,
    pub frob_err: Option<f64>,
    pub run_count: usize,
    pub seed: u64,
}

impl SummaryRow {
    pub fn new(
        n_new: usize,
        risk_identity: f64,
        risk_estimated: f64,
        risk_limit: f64,
        frob_err: Option<f64>,
        run_count: usize,
        seed: u64,
    ) -> Self {
        Self {
            n_new,
            risk_identity,
            risk_estimated,
            risk_limit,
            diff_pct: diff_pct(risk_estimated, risk_limit),
            frob_err,
            run_count,
            seed,
        }
    }
}

pub fn diff_pct(estimated: f64, limit: f64) -> f64 {
    100.0 * (estimated - limit) / limit
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(crate::error::Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n_new,
            fmt_f64(r.risk_identity),
            fmt_f64(r.risk_estimated),
            fmt_f64(r.risk_limit),
            fmt_f64(r.diff_pct),
            r.frob_err.map(fmt_f64).unwrap_or_default(),
            r.run_count,
            r.seed
        ));
    }
    out
}

pub fn to_json(rows: &[SummaryRow]) -> String {
    serde_json::to_string_pretty(rows).expect("summary rows serialize")
}

pub fn render(rows: &[SummaryRow], format: Format) -> String {
    match format {
        Format::Csv => to_csv(rows),
        Format::Json => to_json(rows) + "\n",
    }
}

pub fn emit(rows: &[SummaryRow], format: Format, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(render(rows, format).as_bytes())?;
    Ok(())
}

/// Writes a header and comma-separated records, formatting floats with 17
/// significant digits.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => fmt_f64(*v),
            Cell::Text(s) => s.replace(',', ";"),
        }
    }
}
