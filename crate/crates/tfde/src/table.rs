//! Result tables and their CSV/JSON encodings.
//!
//! Numbers are written in shortest round-trip form, so identical runs give
//! identical bytes and a JSON table re-emitted as CSV matches the direct CSV.
//! Timings never enter the primary table (`wall_ms` stays empty there); they
//! live in [`ResultTable::wall_ms`] and go to the metadata sidecar.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const HEADER: [&str; 8] = ["J", "metric", "value", "rate", "iterations", "cond_before", "cond_after", "wall_ms"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    #[serde(rename = "J")]
    pub j: Option<u32>,
    pub metric: String,
    pub value: Option<f64>,
    pub rate: Option<f64>,
    pub iterations: Option<usize>,
    pub cond_before: Option<f64>,
    pub cond_after: Option<f64>,
    pub wall_ms: Option<f64>,
}

impl Row {
    pub fn new(j: Option<u32>, metric: impl Into<String>, value: Option<f64>) -> Self {
        Self {
            j,
            metric: metric.into(),
            value,
            rate: None,
            iterations: None,
            cond_before: None,
            cond_after: None,
            wall_ms: None,
        }
    }
}

/// A row that did not complete normally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<Row>,
    /// Wall time per row, parallel to `rows`.
    pub wall_ms: Vec<Option<f64>>,
    pub flags: Vec<Flag>,
    pub diagnostics: Vec<String>,
    /// Extra files as (file-name suffix, contents).
    pub artifacts: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct JsonTable {
    columns: Vec<String>,
    rows: Vec<Row>,
}

impl ResultTable {
    pub fn push(&mut self, row: Row, wall_ms: Option<f64>) -> usize {
        self.rows.push(row);
        self.wall_ms.push(wall_ms);
        self.rows.len() - 1
    }

    pub fn flag(&mut self, row: usize, reason: impl Into<String>) {
        self.flags.push(Flag { row, reason: reason.into() });
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if !self.diagnostics.contains(&msg) {
            self.diagnostics.push(msg);
        }
    }

    pub fn is_partial(&self) -> bool {
        !self.flags.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = HEADER.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells = [
                opt(r.j),
                escape(&r.metric),
                num(r.value),
                num(r.rate),
                opt(r.iterations),
                num(r.cond_before),
                num(r.cond_after),
                num(r.wall_ms),
            ];
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = JsonTable { columns: HEADER.iter().map(|s| s.to_string()).collect(), rows: self.rows.clone() };
        let mut s = serde_json::to_string_pretty(&doc).expect("rows serialize");
        s.push('\n');
        s
    }

    /// Rows of a JSON table written by [`ResultTable::to_json`].
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let doc: JsonTable = serde_json::from_str(text)?;
        if doc.columns != HEADER {
            return Err(CliError::Invalid(format!("unexpected columns {:?}", doc.columns)));
        }
        let n = doc.rows.len();
        Ok(Self { rows: doc.rows, wall_ms: vec![None; n], ..Self::default() })
    }

    /// Writes `<stem>.<ext>` (plus artifacts) into `dir` and returns the paths.
    pub fn write(&self, dir: &Path, stem: &str, format: Format) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir)?;
        let (ext, body) = match format {
            Format::Csv => ("csv", self.to_csv()),
            Format::Json => ("json", self.to_json()),
        };
        let main = dir.join(format!("{stem}.{ext}"));
        std::fs::write(&main, body)?;
        let mut paths = vec![main];
        for (suffix, body) in &self.artifacts {
            let p = dir.join(format!("{stem}.{suffix}"));
            std::fs::write(&p, body)?;
            paths.push(p);
        }
        Ok(paths)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) => {
            let mut s = String::new();
            write!(s, "{x:e}").unwrap();
            s
        }
        None => String::new(),
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Whether a metric should shrink or grow with `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    /// log₂(e_{J−1}/e_J): convergence order of an error.
    Decay,
    /// log₂(c_J/c_{J−1}): growth exponent of a condition number.
    Growth,
}

/// Per-level rates of a series ordered by `J`, divided by the level gap.
/// The first entry, and any entry next to a missing value, has no rate.
pub fn rates(levels: &[u32], values: &[Option<f64>], kind: RateKind) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    for i in 1..values.len() {
        if let (Some(prev), Some(cur)) = (values[i - 1], values[i]) {
            if prev > 0.0 && cur > 0.0 {
                let gap = levels[i] as f64 - levels[i - 1] as f64;
                let r = match kind {
                    RateKind::Decay => (prev / cur).log2(),
                    RateKind::Growth => (cur / prev).log2(),
                };
                out[i] = Some(r / gap);
            }
        }
    }
    out
}

/// Least-squares slope of log₂(value) against `J` over the present values.
pub fn log2_slope(levels: &[u32], values: &[Option<f64>]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .zip(values)
        .filter_map(|(j, v)| v.filter(|x| *x > 0.0).map(|x| (*j as f64, x.log2())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(ResultTable::default().to_csv(), "J,metric,value,rate,iterations,cond_before,cond_after,wall_ms\n");
    }

    #[test]
    fn json_round_trip_reproduces_csv() {
        let mut t = ResultTable::default();
        let mut r = Row::new(Some(7), "energy[G alpha=1.4]", Some(8.2721e-3));
        r.rate = Some(1.3151000000000002);
        r.iterations = Some(14);
        t.push(r, Some(12.5));
        t.push(Row::new(None, "slope", Some(-2.0000000000000004)), None);
        t.push(Row::new(Some(8), "needs \"quotes\", commas", Some(0.1 + 0.2)), None);
        let back = ResultTable::from_json(&t.to_json()).unwrap();
        assert_eq!(back.to_csv(), t.to_csv());
    }

    #[test]
    fn rates_follow_kind_and_gaps() {
        let r = rates(&[6, 7, 9], &[Some(4.0), Some(1.0), Some(1.0 / 16.0)], RateKind::Decay);
        assert_eq!(r, vec![None, Some(2.0), Some(2.0)]);
        let g = rates(&[1, 2], &[Some(1.0), Some(8.0)], RateKind::Growth);
        assert_eq!(g[1], Some(3.0));
        assert_eq!(rates(&[1, 2], &[None, Some(1.0)], RateKind::Decay), vec![None, None]);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let levels = [6, 7, 8, 9];
        let vals: Vec<Option<f64>> = levels.iter().map(|j| Some(3.0 * 2f64.powi(-2 * *j as i32))).collect();
        assert!((log2_slope(&levels, &vals).unwrap() + 2.0).abs() < 1e-12);
    }
}
