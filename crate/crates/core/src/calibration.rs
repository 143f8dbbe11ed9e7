//! Score-to-LR calibration: Gaussian-kernel KDE (the baseline), a normal-fit
//! variant, isotonic regression (pool adjacent violators), and an identity
//! mapping that reads the score as a posterior — plus the empirical
//! lower-and-upper-bound (ELUB) clipping of the resulting likelihood ratios.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_KDE_BANDWIDTH: f64 = 0.05;

const SQRT_2PI: f64 = 2.5066282746310002;

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// Calibrator variant selector (for configs and sweeps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibratorKind {
    Kde { bandwidth: f64 },
    Gaussian,
    IsotonicPav,
    None,
}

impl CalibratorKind {
    pub fn name(&self) -> String {
        match self {
            CalibratorKind::Kde { bandwidth } => format!("kde_{bandwidth}"),
            CalibratorKind::Gaussian => "gaussian".into(),
            CalibratorKind::IsotonicPav => "isotonic_pav".into(),
            CalibratorKind::None => "none".into(),
        }
    }

    /// The grid for the calibrator sweep: the default KDE, a wider and a
    /// narrower bandwidth, the normal fit, isotonic, and no calibration.
    pub fn sweep_kinds() -> Vec<CalibratorKind> {
        vec![
            CalibratorKind::Kde { bandwidth: 0.05 },
            CalibratorKind::Kde { bandwidth: 0.1 },
            CalibratorKind::Kde { bandwidth: 0.025 },
            CalibratorKind::Gaussian,
            CalibratorKind::IsotonicPav,
            CalibratorKind::None,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if let CalibratorKind::Kde { bandwidth } = self {
            if !bandwidth.is_finite() || *bandwidth <= 0.0 {
                return Err(Error::ConfigValue {
                    key: "kde_bandwidth".into(),
                    reason: format!("must be a positive number, got {bandwidth}"),
                });
            }
        }
        Ok(())
    }
}

/// Non-decreasing step function fitted by isotonic regression: `ys[i]` is the
/// fitted value for score `xs[i]`, and evaluation extends each step to the
/// right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl IsotonicFit {
    pub fn evaluate(&self, x: f64) -> f64 {
        let idx = self.xs.partition_point(|&v| v <= x);
        if idx == 0 {
            self.ys[0]
        } else {
            self.ys[idx - 1]
        }
    }
}

/// A fitted score-to-LR calibrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Calibrator {
    Kde {
        bandwidth: f64,
        su_scores: Vec<f64>,
        du_scores: Vec<f64>,
    },
    Gaussian {
        su_mean: f64,
        su_sd: f64,
        du_mean: f64,
        du_sd: f64,
        n_su: usize,
        n_du: usize,
    },
    IsotonicPav {
        fit: IsotonicFit,
        n_su: usize,
        n_du: usize,
    },
    #[serde(rename = "none")]
    Uncalibrated { n_su: usize, n_du: usize },
}

impl Calibrator {
    /// Class counts (same-user, different-user) of the calibration set.
    pub fn counts(&self) -> (usize, usize) {
        match self {
            Calibrator::Kde {
                su_scores,
                du_scores,
                ..
            } => (su_scores.len(), du_scores.len()),
            Calibrator::Gaussian { n_su, n_du, .. }
            | Calibrator::IsotonicPav { n_su, n_du, .. }
            | Calibrator::Uncalibrated { n_su, n_du } => (*n_su, *n_du),
        }
    }
}

/// Gaussian-kernel density estimate `(1/n)·Σ φ((x−sᵢ)/h)/h`.
pub fn kde_density(samples: &[f64], bandwidth: f64, x: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("kde samples"));
    }
    assert!(bandwidth > 0.0, "kde bandwidth must be positive");
    let sum: f64 = samples.iter().map(|s| normal_pdf((x - s) / bandwidth)).sum();
    Ok(sum / (samples.len() as f64 * bandwidth))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn split_classes(scored: &[(f64, bool)]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut su = Vec::new();
    let mut du = Vec::new();
    for &(s, label) in scored {
        if !s.is_finite() {
            return Err(Error::NonFiniteFeature);
        }
        if label {
            su.push(s);
        } else {
            du.push(s);
        }
    }
    if su.is_empty() || du.is_empty() {
        return Err(Error::SingleClass);
    }
    Ok((su, du))
}

/// Fits the selected calibrator on (score, is_same_user) pairs.
pub fn fit_calibrator(kind: CalibratorKind, scored: &[(f64, bool)]) -> Result<Calibrator> {
    kind.validate()?;
    let (su, du) = split_classes(scored)?;
    Ok(match kind {
        CalibratorKind::Kde { bandwidth } => Calibrator::Kde {
            bandwidth,
            su_scores: su,
            du_scores: du,
        },
        CalibratorKind::Gaussian => Calibrator::Gaussian {
            su_mean: mean(&su),
            // A zero spread (constant scores) would make the density a point
            // mass; floor it so evaluation stays defined.
            su_sd: sample_sd(&su).max(1e-9),
            du_mean: mean(&du),
            du_sd: sample_sd(&du).max(1e-9),
            n_su: su.len(),
            n_du: du.len(),
        },
        CalibratorKind::IsotonicPav => Calibrator::IsotonicPav {
            fit: fit_pav(scored)?,
            n_su: su.len(),
            n_du: du.len(),
        },
        CalibratorKind::None => Calibrator::Uncalibrated {
            n_su: su.len(),
            n_du: du.len(),
        },
    })
}

fn posterior_to_lr(posterior: f64, n_su: usize, n_du: usize) -> f64 {
    if posterior >= 1.0 {
        return f64::INFINITY;
    }
    let odds = posterior / (1.0 - posterior);
    odds * n_du as f64 / n_su as f64
}

/// Likelihood ratio for a score under a fitted calibrator. A vanishing
/// denominator density yields the +∞ sentinel, which ELUB clipping later
/// replaces with the upper bound.
pub fn lr_from_score(calibrator: &Calibrator, s: f64) -> f64 {
    match calibrator {
        Calibrator::Kde {
            bandwidth,
            su_scores,
            du_scores,
        } => {
            let num = kde_density(su_scores, *bandwidth, s).expect("fitted kde has samples");
            let den = kde_density(du_scores, *bandwidth, s).expect("fitted kde has samples");
            if den == 0.0 {
                f64::INFINITY
            } else {
                num / den
            }
        }
        Calibrator::Gaussian {
            su_mean,
            su_sd,
            du_mean,
            du_sd,
            ..
        } => {
            let num = normal_pdf((s - su_mean) / su_sd) / su_sd;
            let den = normal_pdf((s - du_mean) / du_sd) / du_sd;
            if den == 0.0 {
                f64::INFINITY
            } else {
                num / den
            }
        }
        Calibrator::IsotonicPav { fit, n_su, n_du } => {
            posterior_to_lr(fit.evaluate(s), *n_su, *n_du)
        }
        Calibrator::Uncalibrated { n_su, n_du } => posterior_to_lr(s, *n_su, *n_du),
    }
}

/// Exact pool-adjacent-violators fit of a non-decreasing step function to
/// label indicators (same_user = 1) ordered by score. Equal scores share one
/// fitted value.
pub fn fit_pav(scored: &[(f64, bool)]) -> Result<IsotonicFit> {
    split_classes(scored)?;
    let mut sorted: Vec<(f64, f64)> = scored
        .iter()
        .map(|&(s, l)| (s, if l { 1.0 } else { 0.0 }))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Equal scores must share one fitted value, so pool ties into weighted
    // points before any violation merging — folding a tied sample into an
    // already-merged block instead would change merge history and lose
    // exactness.
    struct Block {
        x_first: f64,
        weight: f64,
        sum: f64,
    }
    impl Block {
        fn value(&self) -> f64 {
            self.sum / self.weight
        }
    }
    let mut groups: Vec<Block> = Vec::new();
    let mut last_x = f64::NAN;
    for (x, y) in sorted {
        if x == last_x {
            let g = groups.last_mut().unwrap();
            g.weight += 1.0;
            g.sum += y;
        } else {
            groups.push(Block {
                x_first: x,
                weight: 1.0,
                sum: y,
            });
            last_x = x;
        }
    }

    let mut blocks: Vec<Block> = Vec::new();
    for g in groups {
        blocks.push(g);
        while blocks.len() >= 2 {
            let last = blocks.len() - 1;
            if blocks[last - 1].value() > blocks[last].value() {
                let b = blocks.pop().unwrap();
                let prev = blocks.last_mut().unwrap();
                prev.weight += b.weight;
                prev.sum += b.sum;
            } else {
                break;
            }
        }
    }

    // Adjacent blocks may carry equal values; collapsing them leaves the
    // step function unchanged and the fitted values strictly increasing.
    let mut xs = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for b in &blocks {
        let v = b.value();
        if ys.last() != Some(&v) {
            xs.push(b.x_first);
            ys.push(v);
        }
    }
    Ok(IsotonicFit { xs, ys })
}

/// Empirical lower and upper LR bounds: the widest interval such that a
/// system emitting one more maximally misleading LR at the bound would still
/// match the always-neutral system on the affected half of the calibration
/// set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElubBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn elub_bounds(lrs_with_labels: &[(f64, bool)]) -> Result<ElubBounds> {
    let mut n_su = 0usize;
    let mut n_du = 0usize;
    let mut sum_su = 0.0; // Σ log2(1 + 1/LR) over same-user LRs
    let mut sum_du = 0.0; // Σ log2(1 + LR) over different-user LRs
    for &(lr, label) in lrs_with_labels {
        assert!(!lr.is_nan() && lr >= 0.0, "LR must be non-negative");
        if label {
            n_su += 1;
            sum_su += (1.0 + 1.0 / lr).log2();
        } else {
            n_du += 1;
            sum_du += (1.0 + lr).log2();
        }
    }
    if n_su == 0 || n_du == 0 {
        return Err(Error::SingleClass);
    }
    let finite = |v: f64| if v.is_finite() { v } else { f64::MAX };
    let upper = finite(2f64.powf((n_du as f64 + 1.0) - sum_du) - 1.0).max(1.0);
    let lower = 1.0 / finite(2f64.powf((n_su as f64 + 1.0) - sum_su) - 1.0).max(1.0);
    Ok(ElubBounds { lower, upper })
}

/// Clamps an LR into the ELUB interval; the +∞ sentinel maps to the upper
/// bound and 0 to the lower.
pub fn clip(lr: f64, bounds: ElubBounds) -> f64 {
    lr.max(bounds.lower).min(bounds.upper)
}
