//! Side-by-side comparison of two metrics CSVs.

use std::io::BufRead;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulator::METRIC_COLUMNS;

/// A metrics CSV loaded column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub steps: Vec<f64>,
    /// Values for each non-step column, in `METRIC_COLUMNS[1..]` order.
    pub columns: Vec<Vec<f64>>,
}

impl Series {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let idx = METRIC_COLUMNS[1..].iter().position(|c| *c == name)?;
        Some(&self.columns[idx])
    }
}

fn parse_row(line: &str, lineno: usize, width: usize) -> Result<Vec<f64>> {
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != width {
        return Err(Error::Parse { line: lineno, message: format!("expected {width} cells, found {}", cells.len()) });
    }
    cells
        .iter()
        .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Parse { line: lineno, message: format!("`{c}`: {e}") }))
        .collect()
}

/// Read a metrics CSV whose header must be exactly the metric column set.
pub fn read_metrics_csv<R: BufRead>(reader: R) -> Result<Series> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let names: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if names != METRIC_COLUMNS {
        return Err(Error::Parse {
            line: 1,
            message: format!("columns must be exactly `{}`, found `{}`", METRIC_COLUMNS.join(","), header.trim()),
        });
    }
    let mut series = Series { steps: Vec::new(), columns: vec![Vec::new(); METRIC_COLUMNS.len() - 1] };
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(&line, i + 2, METRIC_COLUMNS.len())?;
        series.steps.push(row[0]);
        for (col, v) in series.columns.iter_mut().zip(&row[1..]) {
            col.push(*v);
        }
    }
    if series.steps.is_empty() {
        return Err(Error::Parse { line: 1, message: "no data rows".into() });
    }
    Ok(series)
}

/// Final-row mode distribution from a histogram sidecar (`step,mode_0,..`).
pub fn read_final_histogram<R: BufRead>(reader: R) -> Result<Vec<f64>> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let width = header.trim().split(',').count();
    if width < 2 || !header.starts_with("step,") {
        return Err(Error::Parse { line: 1, message: "histogram header must start with `step,`".into() });
    }
    let mut last = None;
    for (i, line) in lines.enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            last = Some(parse_row(&line, i + 2, width)?);
        }
    }
    let row = last.ok_or_else(|| Error::Parse { line: 1, message: "no histogram rows".into() })?;
    Ok(row[1..].to_vec())
}

/// Trapezoidal area under `values` over `steps`.
pub fn area_under_curve(steps: &[f64], values: &[f64]) -> f64 {
    steps.windows(2).zip(values.windows(2)).map(|(s, v)| (s[1] - s[0]) * (v[0] + v[1]) / 2.0).sum()
}

/// A policy counts as collapsed when one mode holds at least this much mass.
pub const COLLAPSE_THRESHOLD: f64 = 0.95;

pub fn is_collapsed(histogram: &[f64]) -> bool {
    histogram.iter().copied().fold(0.0, f64::max) >= COLLAPSE_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricComparison {
    pub metric: String,
    pub final_a: f64,
    pub final_b: f64,
    /// `b - a`
    pub final_delta: f64,
    pub auc_a: f64,
    pub auc_b: f64,
    pub auc_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub label: String,
    pub steps: usize,
    pub max_mode_mass: Option<f64>,
    pub collapsed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub a: ArmSummary,
    pub b: ArmSummary,
    pub metrics: Vec<MetricComparison>,
}

const COMPARED: [&str; 6] = ["entropy_nats", "pass1", "pass_n", "maj_n", "mean_length", "mean_pairwise_sim"];

fn arm(label: &str, series: &Series, hist: Option<&[f64]>) -> ArmSummary {
    ArmSummary {
        label: label.to_owned(),
        steps: series.steps.len(),
        max_mode_mass: hist.map(|h| h.iter().copied().fold(0.0, f64::max)),
        collapsed: hist.map(is_collapsed),
    }
}

pub fn compare(
    (label_a, a, hist_a): (&str, &Series, Option<&[f64]>),
    (label_b, b, hist_b): (&str, &Series, Option<&[f64]>),
) -> Report {
    let metrics = COMPARED
        .iter()
        .map(|name| {
            let ca = a.column(name).expect("known column");
            let cb = b.column(name).expect("known column");
            let (final_a, final_b) = (*ca.last().expect("non-empty"), *cb.last().expect("non-empty"));
            let (auc_a, auc_b) = (area_under_curve(&a.steps, ca), area_under_curve(&b.steps, cb));
            MetricComparison {
                metric: name.to_string(),
                final_a,
                final_b,
                final_delta: final_b - final_a,
                auc_a,
                auc_b,
                auc_delta: auc_b - auc_a,
            }
        })
        .collect();
    Report { a: arm(label_a, a, hist_a), b: arm(label_b, b, hist_b), metrics }
}
