//! Per-outer-iteration metrics and their versioned CSV form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::GroundTruth;
use crate::problem::{violations, StochasticProblem};

/// First line of every metrics file.
pub const METRICS_VERSION: &str = "# rmalm-metrics v1";

pub const METRICS_COLUMNS: [&str; 8] = [
    "k",
    "cum_inner",
    "obj",
    "avg_viol",
    "max_viol",
    "dist_sq_x",
    "dist_sq_y",
    "wall_time_s",
];

/// Size of the held-out sample used to report expectation-form objectives.
pub const HELD_OUT_SIZE: usize = 100_000;

/// Seed of the held-out evaluation sample unless overridden.
pub const HELD_OUT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub k: usize,
    pub cum_inner: u64,
    pub obj: Option<f64>,
    pub avg_viol: f64,
    pub max_viol: f64,
    pub dist_sq_x: Option<f64>,
    pub dist_sq_y: Option<f64>,
    pub wall_time_s: f64,
}

/// Evaluates [`MetricsRow`]s. Expectation-form objectives are reported on a
/// fixed held-out sample.
#[derive(Debug, Clone)]
pub struct Monitor {
    eval: StochasticProblem,
    truth: Option<GroundTruth>,
}

impl Monitor {
    /// Monitor with the default held-out sample.
    pub fn new(prob: &StochasticProblem) -> Self {
        Self::with_held_out(prob, HELD_OUT_SIZE, HELD_OUT_SEED)
    }

    pub fn with_held_out(prob: &StochasticProblem, size: usize, seed: u64) -> Self {
        Self {
            eval: prob.with_held_out_objective(size, seed),
            truth: None,
        }
    }

    pub fn with_truth(mut self, truth: GroundTruth) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn truth(&self) -> Option<&GroundTruth> {
        self.truth.as_ref()
    }

    /// The problem used for objective evaluation.
    pub fn eval_problem(&self) -> &StochasticProblem {
        &self.eval
    }

    /// Row for iterate `(x, y)` whose constraint values `h` are already known.
    pub fn row(&self, k: usize, cum_inner: u64, x: &[f64], y: &[f64], h: &[f64], wall_time_s: f64) -> MetricsRow {
        let (avg_viol, max_viol) = violations(h);
        MetricsRow {
            k,
            cum_inner,
            obj: self.eval.objective_value(x).ok(),
            avg_viol,
            max_viol,
            dist_sq_x: self.truth.as_ref().map(|t| linalg::dist_sq(x, &t.x_opt)),
            dist_sq_y: self.truth.as_ref().map(|t| linalg::dist_sq(y, &t.y_star)),
            wall_time_s,
        }
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_value).unwrap_or_default()
}

/// CSV text with the version line, header and one line per row.
pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 2));
    out.push_str(METRICS_VERSION);
    out.push('\n');
    out.push_str(&METRICS_COLUMNS.join(","));
    out.push('\n');
    for r in rows {
        let fields = [
            r.k.to_string(),
            r.cum_inner.to_string(),
            fmt_opt(r.obj),
            fmt_value(r.avg_viol),
            fmt_value(r.max_viol),
            fmt_opt(r.dist_sq_x),
            fmt_opt(r.dist_sq_y),
            fmt_value(r.wall_time_s),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, metrics_to_csv(rows)).map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(value: &str, row: usize, column: usize) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse {
        row,
        column,
        value: value.to_string(),
    })
}

fn parse_opt(value: &str, row: usize, column: usize) -> Result<Option<f64>> {
    if value.trim().is_empty() {
        Ok(None)
    } else {
        parse_field(value, row, column).map(Some)
    }
}

/// Parses metrics CSV text. The header must list exactly the known columns.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_COLUMNS {
        return Err(Error::Schema(format!(
            "expected columns {}, found {}",
            METRICS_COLUMNS.join(","),
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        rows.push(MetricsRow {
            k: parse_field(&rec[0], line, 1)?,
            cum_inner: parse_field(&rec[1], line, 2)?,
            obj: parse_opt(&rec[2], line, 3)?,
            avg_viol: parse_field(&rec[3], line, 4)?,
            max_viol: parse_field(&rec[4], line, 5)?,
            dist_sq_x: parse_opt(&rec[5], line, 6)?,
            dist_sq_y: parse_opt(&rec[6], line, 7)?,
            wall_time_s: parse_field(&rec[7], line, 8)?,
        });
    }
    Ok(rows)
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics_csv(&text)
}
