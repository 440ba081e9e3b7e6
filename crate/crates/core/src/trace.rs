//! Per-iteration measurement rows, the JSONL trace format and its CSV view.
//!
//! A trace file is JSON Lines. The first line is a `header`, then one `iter`
//! line per recorded iteration, then a single `footer`:
//!
//! ```text
//! {"kind":"header","schema":"ncgs-trace/1","algorithm":"ncgs1",...}
//! {"kind":"iter","iter":1,"epoch":null,"wall_seconds":null,"fo":1,...}
//! {"kind":"footer","algorithm":"ncgs1","fo":100,...}
//! ```
//!
//! The CSV view keeps the `iter` rows only, with columns
//! `iter,epoch,wall_seconds,fo,sfo,ifo,lo,sq_grad_mapping,objective_value,flags`.
//! Missing values are empty cells and flags are joined with `;`.

use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::OracleCounters;

pub const TRACE_SCHEMA: &str = "ncgs-trace/1";

pub const CSV_COLUMNS: [&str; 10] = [
    "iter",
    "epoch",
    "wall_seconds",
    "fo",
    "sfo",
    "ifo",
    "lo",
    "sq_grad_mapping",
    "objective_value",
    "flags",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// An inner condg call ran out of its oracle budget.
    CondgNonconverged,
    /// A nuclear-ball oracle call exhausted its Krylov budget and
    /// fell back to a dense SVD.
    LoNonconverged,
    /// The row's metric used an exact gradient that was not charged to any
    /// counter.
    DiagnosticGradient,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::CondgNonconverged => "condg_nonconverged",
            Flag::LoNonconverged => "lo_nonconverged",
            Flag::DiagnosticGradient => "diagnostic_gradient",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub epoch: Option<u64>,
    /// Algorithm time in seconds (metric evaluation excluded); `null` unless
    /// timing was requested.
    pub wall_seconds: Option<f64>,
    pub fo: u64,
    pub sfo: u64,
    pub ifo: u64,
    pub lo: u64,
    pub sq_grad_mapping: f64,
    pub objective_value: Option<f64>,
    pub flags: Vec<Flag>,
    /// Stochastic runs only: the mapping with the exact gradient in place of
    /// the mini-batch estimate (diagnostic).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_sq_grad_mapping: Option<f64>,
    /// Frank–Wolfe baselines only: `⟨∇F(θ), θ − v⟩` at the recorded iterate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fw_gap: Option<f64>,
}

impl TraceRecord {
    pub fn counters(&self) -> OracleCounters {
        OracleCounters {
            fo: self.fo,
            sfo: self.sfo,
            ifo: self.ifo,
            lo: self.lo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub algorithm: String,
    /// The problem section of the run configuration.
    pub problem: serde_json::Value,
    pub seed: u64,
    pub horizon: u64,
    pub smoothness: f64,
}

/// Final ledger and the algorithm's designated output measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFooter {
    pub algorithm: String,
    pub fo: u64,
    pub sfo: u64,
    pub ifo: u64,
    pub lo: u64,
    /// IFO count had snapshot component gradients been recomputed at every
    /// inner step (variance-reduced methods only).
    pub ifo_uncached: Option<u64>,
    /// Iteration whose measurement is the algorithm's output (min-metric
    /// iteration for deterministic methods, `R` for the stochastic method,
    /// the sampled inner index for variance-reduced ones).
    pub output_iter: u64,
    pub output_sq_grad_mapping: f64,
    pub min_sq_grad_mapping: f64,
    /// Mean of the metric over all recorded rows; the expectation over the
    /// uniform output for variance-reduced methods.
    pub mean_sq_grad_mapping: f64,
    pub condg_nonconverged: u64,
    pub lo_nonconverged: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceLine {
    Header(TraceHeader),
    Iter(TraceRecord),
    Footer(TraceFooter),
}

pub fn write_jsonl<W: Write>(
    mut w: W,
    header: &TraceHeader,
    records: &[TraceRecord],
    footer: &TraceFooter,
) -> std::io::Result<()> {
    let mut line = |l: TraceLine| -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &l)?;
        w.write_all(b"\n")
    };
    line(TraceLine::Header(header.clone()))?;
    for r in records {
        line(TraceLine::Iter(r.clone()))?;
    }
    line(TraceLine::Footer(footer.clone()))?;
    w.flush()
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TraceLine>, ExportError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine =
            serde_json::from_str(&line).map_err(|e| ExportError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(parsed);
    }
    Ok(out)
}

fn num(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_default()
}

fn opt<T, F: Fn(T) -> String>(x: Option<T>, f: F) -> String {
    x.map(f).unwrap_or_default()
}

/// Projects the `iter` rows of a JSONL trace onto the documented CSV columns.
/// Numbers keep their JSON spelling. Returns the number of data rows written.
pub fn export_csv<R: BufRead, W: Write>(input: R, mut out: W) -> Result<usize, ExportError> {
    let lines = read_jsonl(input)?;
    writeln!(out, "{}", CSV_COLUMNS.join(","))?;
    let mut rows = 0;
    for line in lines {
        if let TraceLine::Iter(r) = line {
            let flags: Vec<&str> = r.flags.iter().map(|f| f.as_str()).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.iter,
                opt(r.epoch, |e| e.to_string()),
                opt(r.wall_seconds, num),
                r.fo,
                r.sfo,
                r.ifo,
                r.lo,
                num(r.sq_grad_mapping),
                opt(r.objective_value, num),
                flags.join(";"),
            )?;
            rows += 1;
        }
    }
    out.flush()?;
    Ok(rows)
}

/// Monotonic stopwatch that can be paused around unmetered work.
#[derive(Debug)]
pub struct Stopwatch {
    elapsed: Duration,
    started: Option<Instant>,
}

impl Stopwatch {
    pub fn started() -> Self {
        Self {
            elapsed: Duration::ZERO,
            started: Some(Instant::now()),
        }
    }

    pub fn pause(&mut self) {
        if let Some(t) = self.started.take() {
            self.elapsed += t.elapsed();
        }
    }

    pub fn resume(&mut self) {
        if self.started.is_none() {
            self.started = Some(Instant::now());
        }
    }

    pub fn seconds(&self) -> f64 {
        let running = self.started.map(|t| t.elapsed()).unwrap_or_default();
        (self.elapsed + running).as_secs_f64()
    }
}
