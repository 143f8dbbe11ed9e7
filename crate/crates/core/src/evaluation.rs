//! The repeated-split evaluation harness: stratified train/calibration/test
//! partitions, one fitted scorer + calibrator + LR bounds per repeat, cllr
//! metrics per repeat, and sensitivity sweeps over every pipeline knob.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::calibration::{clip, elub_bounds, fit_calibrator, lr_from_score, CalibratorKind};
use crate::derive_seed;
use crate::logistic::DEFAULT_L2_LAMBDA;
use crate::metrics::{metrics_record, MetricsRecord};
use crate::scoring::{
    feature_sweep_sets, fit_pair_scorer, labeled, score_prepared, FeatureSet, PreparedPair,
    ScorerKind,
};
use crate::{Error, Result};

/// One full harness configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_repeats: usize,
    /// Fraction of pairs held out for testing in each repeat.
    pub test_fraction: f64,
    /// Fraction of the training pairs used to fit the calibrator (the rest
    /// fits the scorer).
    pub calibration_fraction_of_train: f64,
    pub scorer: ScorerKind,
    pub calibrator: CalibratorKind,
    pub features: FeatureSet,
    /// Length of each track in days (data-construction knob).
    pub days_per_track: u32,
    /// Hourly rate of synthesized registration events (data-construction knob).
    pub events_per_hour: f64,
    /// Keep all pairs of the same unordered user pair in one partition.
    pub group_by_user: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_repeats: 100,
            test_fraction: 0.2,
            calibration_fraction_of_train: 0.5,
            scorer: ScorerKind::TwoStepLogistic,
            calibrator: CalibratorKind::Kde {
                bandwidth: crate::calibration::DEFAULT_KDE_BANDWIDTH,
            },
            features: FeatureSet::default(),
            days_per_track: 1,
            events_per_hour: 1.0,
            group_by_user: false,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fraction = |key: &str, v: f64| -> Result<()> {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::ConfigValue {
                    key: key.into(),
                    reason: format!("must be strictly between 0 and 1, got {v}"),
                });
            }
            Ok(())
        };
        fraction("test_fraction", self.test_fraction)?;
        fraction(
            "calibration_fraction_of_train",
            self.calibration_fraction_of_train,
        )?;
        if self.n_repeats == 0 {
            return Err(Error::ConfigValue {
                key: "n_repeats".into(),
                reason: "must be at least 1".into(),
            });
        }
        if self.days_per_track == 0 {
            return Err(Error::ConfigValue {
                key: "days_per_track".into(),
                reason: "must be at least 1".into(),
            });
        }
        if !(self.events_per_hour > 0.0 && self.events_per_hour.is_finite()) {
            return Err(Error::ConfigValue {
                key: "events_per_hour".into(),
                reason: format!("must be a positive number, got {}", self.events_per_hour),
            });
        }
        self.features.validate()?;
        self.calibrator.validate()?;
        Ok(())
    }
}

/// All repeats of one harness run: per-repeat metrics plus the pooled
/// clipped test LRs per hypothesis (for histograms and medians).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<MetricsRecord>,
    pub su_lrs: Vec<f64>,
    pub du_lrs: Vec<f64>,
}

/// Mean/sd aggregate over per-repeat metrics (sd uses the n−1 convention;
/// a single repeat reports sd 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_repeats: usize,
    pub mean_cllr: f64,
    pub sd_cllr: f64,
    pub mean_cllr_min: f64,
    pub sd_cllr_min: f64,
    pub mean_cllr_cal: f64,
    pub sd_cllr_cal: f64,
    pub mean_min_lr: f64,
    pub mean_max_lr: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(records: &[MetricsRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("metric records"));
    }
    let collect = |f: fn(&MetricsRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let (mean_cllr, sd_cllr) = mean_sd(&collect(|r| r.cllr));
    let (mean_cllr_min, sd_cllr_min) = mean_sd(&collect(|r| r.cllr_min));
    let (mean_cllr_cal, sd_cllr_cal) = mean_sd(&collect(|r| r.cllr_cal));
    let (mean_min_lr, _) = mean_sd(&collect(|r| r.min_lr));
    let (mean_max_lr, _) = mean_sd(&collect(|r| r.max_lr));
    Ok(Summary {
        n_repeats: records.len(),
        mean_cllr,
        sd_cllr,
        mean_cllr_min,
        sd_cllr_min,
        mean_cllr_cal,
        sd_cllr_cal,
        mean_min_lr,
        mean_max_lr,
    })
}

/// A split unit: one pair, or (grouped) all pairs of one user pair.
struct Unit {
    same_user: bool,
    pair_indices: Vec<usize>,
}

fn build_units(pairs: &[PreparedPair], group_by_user: bool) -> Result<Vec<Unit>> {
    if group_by_user {
        let mut by_key: Vec<(String, Unit)> = Vec::new();
        for (i, p) in pairs.iter().enumerate() {
            let su = labeled(p)?;
            match by_key.iter_mut().find(|(k, _)| *k == p.user_key) {
                Some((_, unit)) => unit.pair_indices.push(i),
                None => by_key.push((
                    p.user_key.clone(),
                    Unit {
                        same_user: su,
                        pair_indices: vec![i],
                    },
                )),
            }
        }
        Ok(by_key.into_iter().map(|(_, u)| u).collect())
    } else {
        pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                Ok(Unit {
                    same_user: labeled(p)?,
                    pair_indices: vec![i],
                })
            })
            .collect()
    }
}

struct Split {
    model: Vec<usize>,
    calibration: Vec<usize>,
    test: Vec<usize>,
}

/// Draws one stratified split: per class, `test_fraction` of the units go to
/// test and `calibration_fraction_of_train` of the remainder to calibration.
fn draw_split(units: &[Unit], cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Split {
    let mut split = Split {
        model: Vec::new(),
        calibration: Vec::new(),
        test: Vec::new(),
    };
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..units.len())
            .filter(|&i| units[i].same_user == class)
            .collect();
        idx.shuffle(rng);
        let n = idx.len();
        let n_test = ((n as f64) * cfg.test_fraction).round() as usize;
        let n_cal =
            (((n - n_test) as f64) * cfg.calibration_fraction_of_train).round() as usize;
        for (rank, unit_idx) in idx.into_iter().enumerate() {
            let bucket = if rank < n_test {
                &mut split.test
            } else if rank < n_test + n_cal {
                &mut split.calibration
            } else {
                &mut split.model
            };
            bucket.extend(units[unit_idx].pair_indices.iter().copied());
        }
    }
    split
}

fn has_both_classes(pairs: &[PreparedPair], indices: &[usize]) -> bool {
    let mut su = false;
    let mut du = false;
    for &i in indices {
        match labeled(&pairs[i]) {
            Ok(true) => su = true,
            Ok(false) => du = true,
            Err(_) => return false,
        }
    }
    su && du
}

/// A corpus missing one class entirely can never be split into two-class
/// partitions, so fail it up front instead of burning split retries.
fn require_both_classes(pairs: &[PreparedPair]) -> Result<()> {
    let mut su = false;
    let mut du = false;
    for p in pairs {
        if labeled(p)? {
            su = true;
        } else {
            du = true;
        }
    }
    if su && du {
        Ok(())
    } else {
        Err(Error::SingleClass)
    }
}

const MAX_SPLIT_RETRIES: usize = 10;

fn draw_valid_split(
    units: &[Unit],
    pairs: &[PreparedPair],
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
    repeat: usize,
) -> Result<Split> {
    for _ in 0..MAX_SPLIT_RETRIES {
        let split = draw_split(units, cfg, rng);
        if has_both_classes(pairs, &split.model)
            && has_both_classes(pairs, &split.calibration)
            && has_both_classes(pairs, &split.test)
        {
            return Ok(split);
        }
    }
    Err(Error::Split(format!(
        "repeat {repeat}: no partition with both classes after {MAX_SPLIT_RETRIES} attempts \
         (too few pairs of one label)"
    )))
}

/// Stratified two-way split of a whole corpus into (first, second) index
/// sets, with `second_fraction` of each class's units in the second set;
/// redraws until every part holds both classes. Used when fitting one
/// deployable pipeline: the first part fits the scorer, the second the
/// calibrator and LR bounds.
pub fn stratified_two_way(
    pairs: &[PreparedPair],
    second_fraction: f64,
    group_by_user: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(second_fraction > 0.0 && second_fraction < 1.0) {
        return Err(Error::ConfigValue {
            key: "calibration_fraction_of_train".into(),
            reason: format!("must be strictly between 0 and 1, got {second_fraction}"),
        });
    }
    require_both_classes(pairs)?;
    let units = build_units(pairs, group_by_user)?;
    for _ in 0..MAX_SPLIT_RETRIES {
        let mut first = Vec::new();
        let mut second = Vec::new();
        for class in [true, false] {
            let mut idx: Vec<usize> = (0..units.len())
                .filter(|&i| units[i].same_user == class)
                .collect();
            idx.shuffle(rng);
            let n_second = ((idx.len() as f64) * second_fraction).round() as usize;
            for (rank, unit_idx) in idx.into_iter().enumerate() {
                let bucket = if rank < n_second { &mut second } else { &mut first };
                bucket.extend(units[unit_idx].pair_indices.iter().copied());
            }
        }
        if has_both_classes(pairs, &first) && has_both_classes(pairs, &second) {
            return Ok((first, second));
        }
    }
    Err(Error::Split(format!(
        "no two-way partition with both classes after {MAX_SPLIT_RETRIES} attempts"
    )))
}

/// Scores, calibrates, clips, and groups a set of labeled pairs into
/// (same-user LRs, different-user LRs).
fn evaluate_pairs<'a>(
    pairs: impl Iterator<Item = &'a PreparedPair>,
    scorer: &crate::scoring::PairScorer,
    calibrator: &crate::calibration::Calibrator,
    bounds: crate::calibration::ElubBounds,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut su = Vec::new();
    let mut du = Vec::new();
    for p in pairs {
        let score = score_prepared(scorer, p)?;
        let lr = clip(lr_from_score(calibrator, score), bounds);
        if labeled(p)? {
            su.push(lr);
        } else {
            du.push(lr);
        }
    }
    Ok((su, du))
}

/// Runs the full repeated-split harness on prepared pairs.
pub fn run_experiment(pairs: &[PreparedPair], cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with_validation(pairs, None, cfg).map(|(test, _)| test)
}

/// Like [`run_experiment`], and additionally evaluates a second labeled
/// corpus with every repeat's fitted pipeline (all of it, no splitting).
pub fn run_experiment_with_validation(
    pairs: &[PreparedPair],
    validation: Option<&[PreparedPair]>,
    cfg: &ExperimentConfig,
) -> Result<(ExperimentResult, Option<ExperimentResult>)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pairs"));
    }
    require_both_classes(pairs)?;
    let units = build_units(pairs, cfg.group_by_user)?;

    let mut result = ExperimentResult {
        records: Vec::with_capacity(cfg.n_repeats),
        su_lrs: Vec::new(),
        du_lrs: Vec::new(),
    };
    let mut val_result = validation.map(|_| ExperimentResult {
        records: Vec::with_capacity(cfg.n_repeats),
        su_lrs: Vec::new(),
        du_lrs: Vec::new(),
    });

    for repeat in 0..cfg.n_repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, repeat as u64));
        let split = draw_valid_split(&units, pairs, cfg, &mut rng, repeat)?;

        let model: Vec<&PreparedPair> = split.model.iter().map(|&i| &pairs[i]).collect();
        let scorer = fit_pair_scorer(cfg.scorer, &model, cfg.features, DEFAULT_L2_LAMBDA)?;

        let cal_scores: Vec<(f64, bool)> = split
            .calibration
            .iter()
            .map(|&i| Ok((score_prepared(&scorer, &pairs[i])?, labeled(&pairs[i])?)))
            .collect::<Result<_>>()?;
        let calibrator = fit_calibrator(cfg.calibrator, &cal_scores)?;
        let cal_lrs: Vec<(f64, bool)> = cal_scores
            .iter()
            .map(|&(s, l)| (lr_from_score(&calibrator, s), l))
            .collect();
        let bounds = elub_bounds(&cal_lrs)?;

        let (su, du) = evaluate_pairs(
            split.test.iter().map(|&i| &pairs[i]),
            &scorer,
            &calibrator,
            bounds,
        )?;
        result.records.push(metrics_record(&su, &du)?);
        result.su_lrs.extend(su);
        result.du_lrs.extend(du);

        if let (Some(v), Some(out)) = (validation, val_result.as_mut()) {
            let (su, du) = evaluate_pairs(v.iter(), &scorer, &calibrator, bounds)?;
            out.records.push(metrics_record(&su, &du)?);
            out.su_lrs.extend(su);
            out.du_lrs.extend(du);
        }
    }
    Ok((result, val_result))
}

/// Sweepable pipeline dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepDimension {
    Scorer,
    Calibrator,
    CalibrationFraction,
    Features,
    Days,
    Rate,
}

impl SweepDimension {
    pub const ALL: [SweepDimension; 6] = [
        SweepDimension::Scorer,
        SweepDimension::Calibrator,
        SweepDimension::CalibrationFraction,
        SweepDimension::Features,
        SweepDimension::Days,
        SweepDimension::Rate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepDimension::Scorer => "scorer",
            SweepDimension::Calibrator => "calibrator",
            SweepDimension::CalibrationFraction => "calibration_fraction",
            SweepDimension::Features => "features",
            SweepDimension::Days => "days",
            SweepDimension::Rate => "rate",
        }
    }

    pub fn parse(s: &str) -> Result<SweepDimension> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::ConfigValue {
                key: "sweep".into(),
                reason: format!(
                    "unknown dimension {s:?}; expected one of scorer, calibrator, \
                     calibration_fraction, features, days, rate"
                ),
            })
    }

    /// Whether grid points of this dimension need their own data built.
    fn changes_data(self) -> bool {
        matches!(self, SweepDimension::Days | SweepDimension::Rate)
    }

    /// The grid: (row label, config) per point.
    fn grid(self, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        match self {
            SweepDimension::Scorer => ScorerKind::sweep_kinds()
                .into_iter()
                .map(|k| {
                    let mut cfg = *base;
                    cfg.scorer = k;
                    (k.name().to_string(), cfg)
                })
                .collect(),
            SweepDimension::Calibrator => CalibratorKind::sweep_kinds()
                .into_iter()
                .map(|k| {
                    let mut cfg = *base;
                    cfg.calibrator = k;
                    (k.name(), cfg)
                })
                .collect(),
            SweepDimension::CalibrationFraction => (1..=19)
                .map(|i| {
                    let f = i as f64 / 20.0;
                    let mut cfg = *base;
                    cfg.calibration_fraction_of_train = f;
                    (format!("{f:.2}"), cfg)
                })
                .collect(),
            SweepDimension::Features => feature_sweep_sets()
                .into_iter()
                .map(|fs| {
                    let mut cfg = *base;
                    cfg.features = fs;
                    (fs.name(), cfg)
                })
                .collect(),
            SweepDimension::Days => [1u32, 2, 3, 4]
                .into_iter()
                .map(|d| {
                    let mut cfg = *base;
                    cfg.days_per_track = d;
                    (format!("{d}"), cfg)
                })
                .collect(),
            SweepDimension::Rate => [1.0, 0.5, 0.25]
                .into_iter()
                .map(|r| {
                    let mut cfg = *base;
                    cfg.events_per_hour = r;
                    // Longer tracks compensate the lower rate so the
                    // expected event count per track stays constant.
                    cfg.days_per_track = base.days_per_track * (1.0 / r).round() as u32;
                    (format!("rate={r},days={}", cfg.days_per_track), cfg)
                })
                .collect(),
        }
    }
}

/// One sweep grid point with its aggregate metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub config: ExperimentConfig,
    pub summary: Summary,
}

/// Runs the harness once per grid point of `dimension`. `build` constructs
/// the prepared pairs for a grid point's config; it is called once per point
/// for data-changing dimensions (days, rate) and once in total otherwise.
pub fn sweep<F>(
    base: &ExperimentConfig,
    dimension: SweepDimension,
    mut build: F,
) -> Result<Vec<SweepRow>>
where
    F: FnMut(&ExperimentConfig) -> Result<Vec<PreparedPair>>,
{
    let grid = dimension.grid(base);
    let shared = if dimension.changes_data() {
        None
    } else {
        Some(build(base)?)
    };
    let mut rows = Vec::with_capacity(grid.len());
    for (label, cfg) in grid {
        let result = match &shared {
            Some(pairs) => run_experiment(pairs, &cfg)?,
            None => run_experiment(&build(&cfg)?, &cfg)?,
        };
        rows.push(SweepRow {
            label,
            config: cfg,
            summary: summarize(&result.records)?,
        });
    }
    Ok(rows)
}
