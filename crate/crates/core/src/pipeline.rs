//! The deployable fitted artifact: scorer + calibrator + LR bounds, stored
//! as a versioned JSON document with a content hash for case reports.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{
    clip, elub_bounds, fit_calibrator, lr_from_score, Calibrator, ElubBounds,
};
use crate::evaluation::{stratified_two_way, ExperimentConfig};
use crate::logistic::DEFAULT_L2_LAMBDA;
use crate::scoring::{fit_pair_scorer, score_prepared, PairScorer, PreparedPair};
use crate::{derive_seed, Error, Result};

pub const PIPELINE_FORMAT_VERSION: u32 = 1;

/// A fully fitted score-to-LR pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrPipeline {
    pub format_version: u32,
    pub scorer: PairScorer,
    pub calibrator: Calibrator,
    pub bounds: ElubBounds,
}

/// The three outputs of evaluating one pair with a fitted pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvaluation {
    pub score: f64,
    pub raw_lr: f64,
    pub clipped_lr: f64,
}

impl LrPipeline {
    pub fn new(scorer: PairScorer, calibrator: Calibrator, bounds: ElubBounds) -> LrPipeline {
        LrPipeline {
            format_version: PIPELINE_FORMAT_VERSION,
            scorer,
            calibrator,
            bounds,
        }
    }

    /// Scores a prepared pair and converts the score to a raw and a clipped
    /// likelihood ratio.
    pub fn evaluate_pair(&self, pair: &PreparedPair) -> Result<PairEvaluation> {
        let score = score_prepared(&self.scorer, pair)?;
        let raw_lr = lr_from_score(&self.calibrator, score);
        Ok(PairEvaluation {
            score,
            raw_lr,
            clipped_lr: clip(raw_lr, self.bounds),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a pipeline document, rejecting unknown format versions before
    /// interpreting the rest of the payload.
    pub fn from_json(text: &str) -> Result<LrPipeline> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == PIPELINE_FORMAT_VERSION as u64 => {}
            Some(v) => return Err(Error::PipelineVersion(v as u32)),
            None => return Err(Error::PipelineVersion(0)),
        }
        Ok(serde_json::from_value(value)?)
    }

    /// SHA-256 of the compact serialized document; identifies the exact
    /// fitted artifact in case reports.
    pub fn content_hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("pipeline serializes");
        let digest = Sha256::digest(compact.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<LrPipeline> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        LrPipeline::from_json(&text)
    }
}

/// Fits one deployable pipeline on a whole labeled corpus: a stratified split
/// reserves `calibration_fraction_of_train` of the pairs for the calibrator
/// and LR bounds, the rest fits the scorer.
pub fn fit_pipeline(pairs: &[PreparedPair], cfg: &ExperimentConfig) -> Result<LrPipeline> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pairs"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX));
    let (model_idx, cal_idx) = stratified_two_way(
        pairs,
        cfg.calibration_fraction_of_train,
        cfg.group_by_user,
        &mut rng,
    )?;
    let model: Vec<&PreparedPair> = model_idx.iter().map(|&i| &pairs[i]).collect();
    let scorer = fit_pair_scorer(cfg.scorer, &model, cfg.features, DEFAULT_L2_LAMBDA)?;
    let cal_scores: Vec<(f64, bool)> = cal_idx
        .iter()
        .map(|&i| {
            Ok((
                score_prepared(&scorer, &pairs[i])?,
                crate::scoring::labeled(&pairs[i])?,
            ))
        })
        .collect::<Result<_>>()?;
    let calibrator = fit_calibrator(cfg.calibrator, &cal_scores)?;
    let cal_lrs: Vec<(f64, bool)> = cal_scores
        .iter()
        .map(|&(s, l)| (lr_from_score(&calibrator, s), l))
        .collect();
    let bounds = elub_bounds(&cal_lrs)?;
    Ok(LrPipeline::new(scorer, calibrator, bounds))
}
