//! Run reports: per-prosumer rows plus a game summary, written as CSV or
//! JSON lines with the summary in a `.summary.json` sidecar.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::config::ReportFormat;
use crate::shapley::Mode;

pub const CSV_HEADER: &str = "prosumer_id,owns_pv,owns_es,standalone_cost,payoff";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub prosumer_id: String,
    pub owns_pv: bool,
    pub owns_es: bool,
    /// Cost the prosumer pays on its own.
    pub standalone_cost: f64,
    /// Shapley payoff (exact or estimated).
    pub payoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub players: usize,
    /// `v(N)`, the grand coalition's saving.
    pub grand_value: f64,
    /// Cost the grand coalition pays when cooperating.
    pub grand_cost: f64,
    pub efficiency_residual: f64,
    pub mode: Mode,
    pub seed: Option<u64>,
    pub budget: Option<u64>,
    pub samples_per_player: Option<u64>,
    pub unused_budget: u64,
    pub elapsed_seconds: f64,
    pub lp_solves: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub cache_hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub summary: RunSummary,
}

impl RunReport {
    pub fn payoffs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.payoff).collect()
    }

    /// Mean payoff for each ownership type, in the order
    /// neither, PV only, ES only, both. `None` when nobody has that type.
    pub fn type_means(&self) -> [Option<f64>; 4] {
        let mut sums = [0.0; 4];
        let mut counts = [0usize; 4];
        for r in &self.rows {
            let k = usize::from(r.owns_pv) + 2 * usize::from(r.owns_es);
            sums[k] += r.payoff;
            counts[k] += 1;
        }
        std::array::from_fn(|k| (counts[k] > 0).then(|| sums[k] / counts[k] as f64))
    }
}

/// Where the summary of a report at `path` lives: the same stem with a
/// `.summary.json` extension.
pub fn summary_path(path: &Path) -> PathBuf {
    path.with_extension("summary.json")
}

fn csv_body(rows: &[ReportRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let id = if r.prosumer_id.contains([',', '"', '\n', '\r']) {
            format!("\"{}\"", r.prosumer_id.replace('"', "\"\""))
        } else {
            r.prosumer_id.clone()
        };
        let _ = writeln!(
            out,
            "{id},{},{},{:.6},{:.6}",
            r.owns_pv, r.owns_es, r.standalone_cost, r.payoff
        );
    }
    out
}

fn json_lines_body(rows: &[ReportRow]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        let id = serde_json::to_string(&r.prosumer_id)?;
        let _ = writeln!(
            out,
            "{{\"prosumer_id\":{id},\"owns_pv\":{},\"owns_es\":{},\"standalone_cost\":{:.6},\"payoff\":{:.6}}}",
            r.owns_pv, r.owns_es, r.standalone_cost, r.payoff
        );
    }
    Ok(out)
}

/// The rows as they appear in a report file.
pub fn render_rows(rows: &[ReportRow], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => Ok(csv_body(rows)),
        ReportFormat::JsonLines => json_lines_body(rows),
    }
}

/// Writes the rows to `path` and the summary next to it.
pub fn write_report(report: &RunReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, render_rows(&report.rows, format)?)?;
    let mut f = fs::File::create(summary_path(path))?;
    serde_json::to_writer_pretty(&mut f, &report.summary)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Reads a report written by [`write_report`], detecting the format from
/// the first byte. The sidecar summary must be present.
pub fn read_report(path: impl AsRef<Path>) -> Result<RunReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let rows = if text.trim_start().starts_with('{') {
        BufReader::new(text.as_bytes())
            .lines()
            .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
            .map(|l| Ok(serde_json::from_str::<ReportRow>(&l?)?))
            .collect::<Result<Vec<_>>>()?
    } else {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
        if headers != CSV_HEADER {
            return Err(Error::invalid(format!(
                "{}: expected header {CSV_HEADER:?}, found {headers:?}",
                path.display()
            )));
        }
        rdr.deserialize().collect::<std::result::Result<Vec<ReportRow>, _>>()?
    };
    let sidecar = summary_path(path);
    let summary: RunSummary = serde_json::from_reader(BufReader::new(fs::File::open(&sidecar).map_err(
        |e| std::io::Error::new(e.kind(), format!("summary {}: {e}", sidecar.display())),
    )?))?;
    if summary.players != rows.len() {
        return Err(Error::invalid(format!(
            "{}: {} rows but the summary lists {} players",
            path.display(),
            rows.len(),
            summary.players
        )));
    }
    Ok(RunReport { rows, summary })
}
