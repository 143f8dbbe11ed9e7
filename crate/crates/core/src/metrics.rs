//! Log-likelihood-ratio cost: the headline quality measure of an LR system,
//! its discrimination floor after isotonic post-calibration, and the
//! calibration loss between them.

use serde::{Deserialize, Serialize};

use crate::calibration::fit_pav;
use crate::{Error, Result};

/// Per-run quality metrics of a set of emitted likelihood ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub cllr: f64,
    pub cllr_min: f64,
    pub cllr_cal: f64,
    pub min_lr: f64,
    pub max_lr: f64,
    pub n_su: usize,
    pub n_du: usize,
}

/// Sums values in a permutation-independent order so equal multisets of LRs
/// give bit-identical results.
fn stable_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn half_costs(lrs_su: &[f64], lrs_du: &[f64]) -> Result<(f64, f64)> {
    if lrs_su.is_empty() || lrs_du.is_empty() {
        return Err(Error::EmptyInput("likelihood ratios"));
    }
    let su_terms: Vec<f64> = lrs_su.iter().map(|&lr| (1.0 + 1.0 / lr).log2()).collect();
    let du_terms: Vec<f64> = lrs_du.iter().map(|&lr| (1.0 + lr).log2()).collect();
    Ok((
        stable_sum(su_terms) / lrs_su.len() as f64,
        stable_sum(du_terms) / lrs_du.len() as f64,
    ))
}

/// Log-likelihood-ratio cost:
/// ½·[mean over same-user LRs of log2(1 + 1/LR) + mean over different-user
/// LRs of log2(1 + LR)]. The always-1 system scores exactly 1; a perfect
/// system approaches 0.
pub fn cllr(lrs_su: &[f64], lrs_du: &[f64]) -> Result<f64> {
    for &lr in lrs_su.iter().chain(lrs_du) {
        assert!(lr > 0.0 && lr.is_finite(), "cllr needs clipped LRs, got {lr}");
    }
    let (su_cost, du_cost) = half_costs(lrs_su, lrs_du)?;
    Ok(0.5 * (su_cost + du_cost))
}

/// Discrimination floor: the cllr after replacing each LR with its isotonic
/// (pool-adjacent-violators) re-calibration, with posteriors converted back
/// to LRs through the pooled prior odds.
pub fn cllr_min(lrs_su: &[f64], lrs_du: &[f64]) -> Result<f64> {
    if lrs_su.is_empty() || lrs_du.is_empty() {
        return Err(Error::EmptyInput("likelihood ratios"));
    }
    let pooled: Vec<(f64, bool)> = lrs_su
        .iter()
        .map(|&lr| (lr, true))
        .chain(lrs_du.iter().map(|&lr| (lr, false)))
        .collect();
    let fit = fit_pav(&pooled)?;
    let prior_odds = lrs_su.len() as f64 / lrs_du.len() as f64;
    let transform = |lr: f64| {
        let p = fit.evaluate(lr);
        if p >= 1.0 {
            f64::INFINITY
        } else {
            p / (1.0 - p) / prior_odds
        }
    };
    // A same-user sample always sits in a block containing its own positive
    // label, so its posterior is > 0; symmetrically a different-user sample's
    // posterior is < 1. The costs below are therefore finite even though
    // individual transformed LRs may be 0 or ∞.
    let su: Vec<f64> = lrs_su.iter().copied().map(transform).collect();
    let du: Vec<f64> = lrs_du.iter().copied().map(transform).collect();
    let (su_cost, du_cost) = half_costs(&su, &du)?;
    Ok(0.5 * (su_cost + du_cost))
}

/// Computes the full metrics record for one evaluated LR set.
pub fn metrics_record(lrs_su: &[f64], lrs_du: &[f64]) -> Result<MetricsRecord> {
    let cllr = cllr(lrs_su, lrs_du)?;
    let cllr_min = cllr_min(lrs_su, lrs_du)?;
    let raw_cal = cllr - cllr_min;
    assert!(
        raw_cal >= -1e-9,
        "isotonic re-calibration increased cllr: {cllr} < {cllr_min}"
    );
    let all = lrs_su.iter().chain(lrs_du);
    let min_lr = all.clone().copied().fold(f64::INFINITY, f64::min);
    let max_lr = all.copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MetricsRecord {
        cllr,
        cllr_min,
        cllr_cal: raw_cal.max(0.0),
        min_lr,
        max_lr,
        n_su: lrs_su.len(),
        n_du: lrs_du.len(),
    })
}
