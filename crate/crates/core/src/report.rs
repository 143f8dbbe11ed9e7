//! Evaluation artifacts on disk: per-repeat metrics CSV, pooled log10(LR)
//! histograms per hypothesis, and JSON summaries for single runs and sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::evaluation::{summarize, ExperimentResult, Summary, SweepRow};
use crate::metrics::MetricsRecord;
use crate::{Error, Result};

pub const METRICS_CSV_HEADER: &str = "repeat,cllr,cllr_min,cllr_cal,min_lr,max_lr,n_su,n_du";
pub const HISTOGRAM_CSV_HEADER: &str = "hypothesis,bin_left,bin_right,count";

/// Width of the log10(LR) histogram bins.
pub const LOG10_BIN_WIDTH: f64 = 0.25;

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(path.display().to_string(), e))?;
        }
    }
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Renders the per-repeat metrics table.
pub fn metrics_csv(records: &[MetricsRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::EmptyInput("metric records"));
    }
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for (i, r) in records.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{},{},{},{},{}\n",
            r.cllr, r.cllr_min, r.cllr_cal, r.min_lr, r.max_lr, r.n_su, r.n_du
        ));
    }
    Ok(out)
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    write_file(path, &metrics_csv(records)?)
}

/// One histogram bin over log10(LR).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

/// Histograms log10 of the LRs into bins of [`LOG10_BIN_WIDTH`] aligned to
/// multiples of the width, over the given shared range.
fn histogram(lrs: &[f64], lo: f64, n_bins: usize) -> Vec<HistogramBin> {
    let mut counts = vec![0usize; n_bins];
    for &lr in lrs {
        let v = lr.log10();
        let idx = (((v - lo) / LOG10_BIN_WIDTH).floor() as i64).clamp(0, n_bins as i64 - 1);
        counts[idx as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            bin_left: lo + i as f64 * LOG10_BIN_WIDTH,
            bin_right: lo + (i + 1) as f64 * LOG10_BIN_WIDTH,
            count,
        })
        .collect()
}

/// Builds the per-hypothesis log10(LR) histograms on one shared range so the
/// two distributions are directly comparable.
pub fn lr_histograms(
    su_lrs: &[f64],
    du_lrs: &[f64],
) -> Result<(Vec<HistogramBin>, Vec<HistogramBin>)> {
    if su_lrs.is_empty() || du_lrs.is_empty() {
        return Err(Error::EmptyInput("likelihood ratios"));
    }
    let logs: Vec<f64> = su_lrs.iter().chain(du_lrs).map(|lr| lr.log10()).collect();
    for v in &logs {
        assert!(v.is_finite(), "histograms need clipped, positive LRs");
    }
    let min = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = (min / LOG10_BIN_WIDTH).floor() * LOG10_BIN_WIDTH;
    let mut hi = (max / LOG10_BIN_WIDTH).ceil() * LOG10_BIN_WIDTH;
    if hi <= lo {
        hi = lo + LOG10_BIN_WIDTH;
    }
    let n_bins = ((hi - lo) / LOG10_BIN_WIDTH).round() as usize;
    Ok((
        histogram(su_lrs, lo, n_bins),
        histogram(du_lrs, lo, n_bins),
    ))
}

pub fn histogram_csv(su_lrs: &[f64], du_lrs: &[f64]) -> Result<String> {
    let (su, du) = lr_histograms(su_lrs, du_lrs)?;
    let mut out = String::from(HISTOGRAM_CSV_HEADER);
    out.push('\n');
    for (hypothesis, bins) in [("same_user", &su), ("different_user", &du)] {
        for b in bins {
            out.push_str(&format!(
                "{hypothesis},{},{},{}\n",
                b.bin_left, b.bin_right, b.count
            ));
        }
    }
    Ok(out)
}

pub fn write_histogram_csv(path: &Path, su_lrs: &[f64], du_lrs: &[f64]) -> Result<()> {
    write_file(path, &histogram_csv(su_lrs, du_lrs)?)
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_summary_json(path: &Path, summary: &Summary) -> Result<()> {
    write_file(path, &to_pretty_json(summary)?)
}

pub fn write_sweep_json(path: &Path, rows: &[SweepRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("sweep rows"));
    }
    write_file(path, &to_pretty_json(&rows)?)
}

/// Writes the full report bundle for one harness run; returns the paths
/// written (metrics.csv, lr_histogram.csv, summary.json).
pub fn export_run_report(dir: &Path, result: &ExperimentResult) -> Result<Vec<PathBuf>> {
    let summary = summarize(&result.records)?;
    let metrics = dir.join("metrics.csv");
    let histogram = dir.join("lr_histogram.csv");
    let summary_path = dir.join("summary.json");
    write_metrics_csv(&metrics, &result.records)?;
    write_histogram_csv(&histogram, &result.su_lrs, &result.du_lrs)?;
    write_summary_json(&summary_path, &summary)?;
    Ok(vec![metrics, histogram, summary_path])
}
