//! Experiment reports: named statistics with verdicts, reproducibly tied to
//! the configuration that produced them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Check ran and held.
    Pass,
    /// Check ran and failed.
    Fail,
    /// Result is reported but not certified (validity precondition unmet,
    /// boundary touched, and similar).
    Flagged,
    /// Informational value; no check attached.
    Info,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Flagged => "flagged",
            Verdict::Info => "info",
        };
        f.write_str(s)
    }
}

/// One statistic: its value, a dispersion figure (standard error for
/// frequency/mean rows, p-value for KS rows), and the threshold the verdict
/// was decided against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatRow {
    pub name: String,
    pub value: f64,
    pub error: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<StatRow>,
    /// Wall-clock duration; volatile, excluded from determinism comparisons.
    pub wall_ms: u64,
}

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>, seed: u64, config_hash: String) -> Self {
        ExperimentReport {
            experiment: experiment.into(),
            seed,
            config_hash,
            rows: Vec::new(),
            wall_ms: 0,
        }
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        value: f64,
        error: f64,
        threshold: f64,
        verdict: Verdict,
    ) {
        self.rows.push(StatRow { name: name.into(), value, error, threshold, verdict });
    }

    /// Pushes a row whose verdict is `Pass`/`Fail` according to `ok`.
    pub fn check(
        &mut self,
        name: impl Into<String>,
        value: f64,
        error: f64,
        threshold: f64,
        ok: bool,
    ) {
        self.push(name, value, error, threshold, if ok { Verdict::Pass } else { Verdict::Fail });
    }

    pub fn info(&mut self, name: impl Into<String>, value: f64) {
        self.push(name, value, 0.0, 0.0, Verdict::Info);
    }

    /// True when no row failed.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn find(&self, name: &str) -> Option<&StatRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Per-statistic CSV. Contains no timing, so byte-identical reruns give
    /// byte-identical files.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,value,error,threshold,verdict\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.name, r.value, r.error, r.threshold, r.verdict)
                .expect("string write");
        }
        out
    }
}

/// SHA-256 of the canonical JSON encoding of a config; identifies the run's
/// inputs in manifests and reports.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut acc, b| {
        write!(acc, "{b:02x}").expect("string write");
        acc
    })
}

/// A point of a plot-data series; serialized as `(x, y, series)` CSV rows.
#[derive(Debug, Clone, Serialize)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub series: String,
}

/// Figure name -> points.
pub type PlotData = BTreeMap<String, Vec<PlotPoint>>;

pub fn plot_csv(points: &[PlotPoint]) -> String {
    let mut out = String::from("x,y,series\n");
    for p in points {
        writeln!(out, "{},{},{}", p.x, p.y, p.series).expect("string write");
    }
    out
}

/// Everything one experiment produces: the verdict report, plot data, and
/// any extra tabular surfaces (flow exports, per-level rows, ...) keyed by
/// file stem.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub plots: PlotData,
    pub tables: BTreeMap<String, String>,
}

impl ExperimentRun {
    pub fn new(report: ExperimentReport) -> Self {
        ExperimentRun { report, plots: BTreeMap::new(), tables: BTreeMap::new() }
    }
}
