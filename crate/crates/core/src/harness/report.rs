//! CSV writers. Headers are fixed constants so that the schemas can be
//! checked against golden files; an empty table still gets its header.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::bounds::BoundReport;
use crate::error::{Error, Result};
use crate::policy::{MetricsRecord, TraceRow};

pub const METRICS_HEADER: [&str; 7] = [
    "scale",
    "policy",
    "sum_rate_mean",
    "sum_rate_std",
    "violation_mean",
    "violation_std",
    "trials",
];
pub const BOUNDS_HEADER: [&str; 9] = ["name", "n", "m", "sigma", "K", "lhs", "lhs_stderr", "rhs", "holds"];
pub const TRACE_HEADER: [&str; 5] = ["iter", "mean_sum_rate", "mean_violation", "lambda", "grad_norm"];
pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_lo", "bin_hi", "count"];
pub const CURVE_HEADER: [&str; 8] = [
    "scale",
    "nodes_mean",
    "policy",
    "per_node_rate_mean",
    "per_node_rate_std",
    "sum_rate_mean",
    "violation_mean",
    "violation_std",
];
pub const ALPHA_HEADER: [&str; 3] = ["side", "n", "mean_w2"];

/// Serializes `rows` under `header` into a CSV string.
pub fn to_csv<T: Serialize>(header: &[&str], rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, to_csv(header, rows)?).map_err(|e| Error::io(path, e))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRecord]) -> Result<()> {
    write_csv(path, &METRICS_HEADER, rows)
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_csv(path, &TRACE_HEADER, rows)
}

#[derive(Debug, Serialize)]
struct BoundRow<'a> {
    name: &'a str,
    n: usize,
    m: usize,
    sigma: f64,
    k: usize,
    lhs: f64,
    lhs_stderr: f64,
    rhs: f64,
    holds: bool,
}

pub fn bounds_csv(reports: &[BoundReport]) -> Result<String> {
    let rows: Vec<BoundRow> = reports
        .iter()
        .map(|r| BoundRow {
            name: r.name.as_str(),
            n: r.n,
            m: r.m,
            sigma: r.sigma,
            k: r.k,
            lhs: r.lhs,
            lhs_stderr: r.lhs_stderr,
            rhs: r.rhs,
            holds: r.holds,
        })
        .collect();
    to_csv(&BOUNDS_HEADER, &rows)
}

pub fn write_bounds(path: &Path, reports: &[BoundReport]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bounds_csv(reports)?).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

/// Equal-width bins over the range of `values`. A constant sample lands in
/// one bin of zero width.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![HistogramBin {
            bin_lo: lo,
            bin_hi: hi,
            count: values.len(),
        }];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin {
            bin_lo: lo + b as f64 * width,
            bin_hi: if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width },
            count,
        })
        .collect()
}
