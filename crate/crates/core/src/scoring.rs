//! Pair similarity scoring: the two-stage logistic pipeline (switch-level
//! model → score histogram → pair-level model) and three simpler baseline
//! scorers behind one enum.

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::logistic::{fit_logistic, predict_proba, LogisticModel};
use crate::switching::{
    apply_scaler, compute_features, extract_switches, fit_robust_scaler, ScalerParams,
    SwitchFeatures,
};
use crate::track::{PairLabel, TrackPair};
use crate::{Error, Result};

/// A switch counts as a dislocation when the phones registered far apart
/// within a short time.
pub const DISLOCATION_MAX_DT_S: f64 = 15.0 * 60.0;
pub const DISLOCATION_MIN_DISTANCE_M: f64 = 25_000.0;

/// Which switch features feed the switch-level model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub distance: bool,
    pub dt: bool,
    pub speed: bool,
    pub bearing: bool,
}

impl Default for FeatureSet {
    fn default() -> Self {
        FeatureSet {
            distance: true,
            dt: true,
            speed: true,
            bearing: false,
        }
    }
}

impl FeatureSet {
    pub fn full() -> FeatureSet {
        FeatureSet {
            bearing: true,
            ..FeatureSet::default()
        }
    }

    pub fn width(&self) -> usize {
        [self.distance, self.dt, self.speed, self.bearing]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    /// Raw feature vector in a fixed order; an absent direction difference
    /// is imputed as 0.
    pub fn vector(&self, f: &SwitchFeatures) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.width());
        if self.distance {
            v.push(f.distance_m);
        }
        if self.dt {
            v.push(f.dt_s);
        }
        if self.speed {
            v.push(f.speed_mps);
        }
        if self.bearing {
            v.push(f.bearing_diff_deg.unwrap_or(0.0));
        }
        v
    }

    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.distance {
            parts.push("distance");
        }
        if self.dt {
            parts.push("dt");
        }
        if self.speed {
            parts.push("speed");
        }
        if self.bearing {
            parts.push("bearing");
        }
        parts.join("+")
    }

    pub fn validate(&self) -> Result<()> {
        if self.width() == 0 {
            return Err(Error::ConfigValue {
                key: "features".into(),
                reason: "at least one feature must be enabled".into(),
            });
        }
        Ok(())
    }
}

/// The grid for the feature-ablation sweep: every non-empty subset of
/// {distance, dt, speed}, plus the four-feature variant with the direction
/// difference.
pub fn feature_sweep_sets() -> Vec<FeatureSet> {
    let fs = |distance, dt, speed, bearing| FeatureSet {
        distance,
        dt,
        speed,
        bearing,
    };
    vec![
        fs(true, true, true, false),
        fs(false, true, true, false),
        fs(true, false, true, false),
        fs(true, true, false, false),
        fs(true, false, false, false),
        fs(false, true, false, false),
        fs(false, false, true, false),
        fs(true, true, true, true),
    ]
}

/// Normalized 10-bin histogram of switch scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinHistogram {
    pub fractions: [f64; 10],
}

/// Bins scores into [0,0.1), [0.1,0.2), …, [0.9,1.0] and normalizes.
pub fn bin_scores(scores: &[f64]) -> Result<BinHistogram> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("switch scores"));
    }
    let mut counts = [0usize; 10];
    for &s in scores {
        assert!((0.0..=1.0).contains(&s), "score {s} outside [0,1]");
        let idx = ((s * 10.0).floor() as usize).min(9);
        counts[idx] += 1;
    }
    let total = scores.len() as f64;
    let mut fractions = [0.0; 10];
    for (f, c) in fractions.iter_mut().zip(counts) {
        *f = c as f64 / total;
    }
    Ok(BinHistogram { fractions })
}

/// A track pair reduced to what scoring needs: identity, label, the users
/// involved, and the raw features of its switches. Computing this once lets
/// many fitted models score the same pair without re-extracting switches.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub pair_id: String,
    pub label: PairLabel,
    /// The unordered user pair, e.g. `"u003"` for a same-user pair or
    /// `"u003|u007"`; grouped splitting keeps equal keys in one partition.
    pub user_key: String,
    pub features: Vec<SwitchFeatures>,
}

impl PreparedPair {
    pub fn from_pair(pair: &TrackPair) -> PreparedPair {
        let (ua, ub) = (pair.a().user_id(), pair.b().user_id());
        let user_key = match ua.cmp(ub) {
            std::cmp::Ordering::Equal => ua.to_string(),
            std::cmp::Ordering::Less => format!("{ua}|{ub}"),
            std::cmp::Ordering::Greater => format!("{ub}|{ua}"),
        };
        PreparedPair {
            pair_id: pair.pair_id(),
            label: pair.label(),
            user_key,
            features: extract_switches(pair).iter().map(compute_features).collect(),
        }
    }
}

pub fn prepare_pairs(pairs: &[TrackPair]) -> Vec<PreparedPair> {
    pairs.iter().map(PreparedPair::from_pair).collect()
}

/// Scorer variant selector (for configs and sweeps).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    TwoStepLogistic,
    OnedimBinning,
    DislocationCount,
    MeanDistance,
    /// Diagnostic scorer that ignores the data and returns a fixed score;
    /// the neutral system when the score is 0.5.
    Constant,
}

impl ScorerKind {
    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::TwoStepLogistic => "two_step_logistic",
            ScorerKind::OnedimBinning => "onedim_binning",
            ScorerKind::DislocationCount => "dislocation_count",
            ScorerKind::MeanDistance => "mean_distance",
            ScorerKind::Constant => "constant",
        }
    }

    /// The grid for the scorer sweep (the diagnostic constant is excluded).
    pub fn sweep_kinds() -> Vec<ScorerKind> {
        vec![
            ScorerKind::TwoStepLogistic,
            ScorerKind::OnedimBinning,
            ScorerKind::DislocationCount,
            ScorerKind::MeanDistance,
        ]
    }
}

/// A fitted pair scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PairScorer {
    TwoStepLogistic {
        features: FeatureSet,
        scaler: ScalerParams,
        switch_model: LogisticModel,
        pair_model: LogisticModel,
    },
    /// Per-feature linear binning of distance/dt/speed over the training
    /// extremes: 3 × 10 normalized counts → one logistic model.
    OnedimBinning {
        edges: Vec<(f64, f64)>,
        pair_model: LogisticModel,
    },
    DislocationCount { pair_model: LogisticModel },
    MeanDistance { pair_model: LogisticModel },
    Constant { score: f64 },
}

pub(crate) fn labeled(p: &PreparedPair) -> Result<bool> {
    match p.label {
        PairLabel::SameUser => Ok(true),
        PairLabel::DifferentUser => Ok(false),
        PairLabel::Unknown => Err(Error::InvalidPair(format!(
            "pair {} is unlabeled and cannot be used for training",
            p.pair_id
        ))),
    }
}

fn require_switches(p: &PreparedPair) -> Result<()> {
    if p.features.is_empty() {
        return Err(Error::Unscorable {
            pair_id: p.pair_id.clone(),
        });
    }
    Ok(())
}

/// Fits the full two-stage pipeline: robust scaler on all training switches,
/// switch-level logistic (labels inherited from the pair), per-pair score
/// histograms, pair-level logistic on those histograms.
pub fn fit_two_step<P: Borrow<PreparedPair>>(
    train: &[P],
    features: FeatureSet,
    l2_lambda: f64,
) -> Result<PairScorer> {
    features.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("training pairs"));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut switch_labels: Vec<bool> = Vec::new();
    let mut spans: Vec<(usize, usize, bool)> = Vec::with_capacity(train.len());
    for p in train {
        let p = p.borrow();
        let su = labeled(p)?;
        require_switches(p)?;
        let start = rows.len();
        for f in &p.features {
            rows.push(features.vector(f));
            switch_labels.push(su);
        }
        spans.push((start, rows.len(), su));
    }

    let scaler = fit_robust_scaler(&rows)?;
    let scaled: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| apply_scaler(&scaler, r))
        .collect::<Result<_>>()?;
    let switch_model = fit_logistic(&scaled, &switch_labels, l2_lambda)?;

    let mut histograms: Vec<Vec<f64>> = Vec::with_capacity(train.len());
    let mut pair_labels: Vec<bool> = Vec::with_capacity(train.len());
    for &(start, end, su) in &spans {
        let scores: Vec<f64> = scaled[start..end]
            .iter()
            .map(|r| predict_proba(&switch_model, r))
            .collect::<Result<_>>()?;
        histograms.push(bin_scores(&scores)?.fractions.to_vec());
        pair_labels.push(su);
    }
    let pair_model = fit_logistic(&histograms, &pair_labels, l2_lambda)?;

    Ok(PairScorer::TwoStepLogistic {
        features,
        scaler,
        switch_model,
        pair_model,
    })
}

/// The three raw values the 1-D binning baseline bins.
fn onedim_values(f: &SwitchFeatures) -> [f64; 3] {
    [f.distance_m, f.dt_s, f.speed_mps]
}

/// 30-dim vector: for each of distance/dt/speed, 10 linear bins between the
/// fitted extremes, out-of-range values clamped into the end bins, counts
/// normalized per feature block.
pub fn onedim_binning_features(p: &PreparedPair, edges: &[(f64, f64)]) -> Result<Vec<f64>> {
    require_switches(p)?;
    assert_eq!(edges.len(), 3);
    let mut out = vec![0.0; 30];
    for f in &p.features {
        for (k, v) in onedim_values(f).into_iter().enumerate() {
            let (min, max) = edges[k];
            let width = (max - min) / 10.0;
            let idx = if width > 0.0 && v.is_finite() {
                (((v - min) / width).floor() as i64).clamp(0, 9) as usize
            } else {
                0
            };
            out[k * 10 + idx] += 1.0;
        }
    }
    let total = p.features.len() as f64;
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

fn fit_onedim<P: Borrow<PreparedPair>>(train: &[P], l2_lambda: f64) -> Result<PairScorer> {
    let mut edges = vec![(f64::INFINITY, f64::NEG_INFINITY); 3];
    for p in train {
        let p = p.borrow();
        labeled(p)?;
        require_switches(p)?;
        for f in &p.features {
            for (k, v) in onedim_values(f).into_iter().enumerate() {
                edges[k].0 = edges[k].0.min(v);
                edges[k].1 = edges[k].1.max(v);
            }
        }
    }
    if train.is_empty() {
        return Err(Error::EmptyInput("training pairs"));
    }
    let x: Vec<Vec<f64>> = train
        .iter()
        .map(|p| onedim_binning_features(p.borrow(), &edges))
        .collect::<Result<_>>()?;
    let y: Vec<bool> = train
        .iter()
        .map(|p| labeled(p.borrow()))
        .collect::<Result<_>>()?;
    let pair_model = fit_logistic(&x, &y, l2_lambda)?;
    Ok(PairScorer::OnedimBinning { edges, pair_model })
}

/// Number of switches where the phones were seen more than 25 km apart less
/// than 15 minutes apart.
pub fn dislocation_count(features: &[SwitchFeatures]) -> usize {
    features
        .iter()
        .filter(|f| f.dt_s < DISLOCATION_MAX_DT_S && f.distance_m > DISLOCATION_MIN_DISTANCE_M)
        .count()
}

/// Mean switch distance in meters.
pub fn mean_distance_feature(features: &[SwitchFeatures]) -> f64 {
    features.iter().map(|f| f.distance_m).sum::<f64>() / features.len() as f64
}

fn fit_single_feature<P: Borrow<PreparedPair>>(
    train: &[P],
    l2_lambda: f64,
    value: impl Fn(&PreparedPair) -> f64,
) -> Result<LogisticModel> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training pairs"));
    }
    let mut x = Vec::with_capacity(train.len());
    let mut y = Vec::with_capacity(train.len());
    for p in train {
        let p = p.borrow();
        let su = labeled(p)?;
        require_switches(p)?;
        x.push(vec![value(p)]);
        y.push(su);
    }
    fit_logistic(&x, &y, l2_lambda)
}

/// Fits the selected scorer variant on prepared training pairs.
pub fn fit_pair_scorer<P: Borrow<PreparedPair>>(
    kind: ScorerKind,
    train: &[P],
    features: FeatureSet,
    l2_lambda: f64,
) -> Result<PairScorer> {
    match kind {
        ScorerKind::TwoStepLogistic => fit_two_step(train, features, l2_lambda),
        ScorerKind::OnedimBinning => fit_onedim(train, l2_lambda),
        ScorerKind::DislocationCount => Ok(PairScorer::DislocationCount {
            pair_model: fit_single_feature(train, l2_lambda, |p| {
                dislocation_count(&p.features) as f64
            })?,
        }),
        ScorerKind::MeanDistance => Ok(PairScorer::MeanDistance {
            pair_model: fit_single_feature(train, l2_lambda, |p| {
                mean_distance_feature(&p.features)
            })?,
        }),
        ScorerKind::Constant => Ok(PairScorer::Constant { score: 0.5 }),
    }
}

/// Similarity score in [0,1] for a prepared pair; pairs with no switches are
/// explicitly unscorable.
pub fn score_prepared(scorer: &PairScorer, p: &PreparedPair) -> Result<f64> {
    require_switches(p)?;
    match scorer {
        PairScorer::TwoStepLogistic {
            features,
            scaler,
            switch_model,
            pair_model,
        } => {
            let scores: Vec<f64> = p
                .features
                .iter()
                .map(|f| {
                    let scaled = apply_scaler(scaler, &features.vector(f))?;
                    predict_proba(switch_model, &scaled)
                })
                .collect::<Result<_>>()?;
            predict_proba(pair_model, &bin_scores(&scores)?.fractions)
        }
        PairScorer::OnedimBinning { edges, pair_model } => {
            predict_proba(pair_model, &onedim_binning_features(p, edges)?)
        }
        PairScorer::DislocationCount { pair_model } => {
            predict_proba(pair_model, &[dislocation_count(&p.features) as f64])
        }
        PairScorer::MeanDistance { pair_model } => {
            predict_proba(pair_model, &[mean_distance_feature(&p.features)])
        }
        PairScorer::Constant { score } => Ok(*score),
    }
}

/// Similarity score for a raw track pair.
pub fn score_track_pair(scorer: &PairScorer, pair: &TrackPair) -> Result<f64> {
    score_prepared(scorer, &PreparedPair::from_pair(pair))
}
