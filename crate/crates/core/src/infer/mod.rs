//! Presence detection, level regression, evaluation metrics, and recipe
//! round trips.

mod metrics;
mod regress;

use std::collections::BTreeMap;

use image::RgbImage;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degrade::{
    synthesize, DatasetManifest, DegradationRecipe, DegradationType, DegradeError,
};
use crate::encoder::{extract_features, manifest_features, Checkpoint, EncoderError};
use crate::numerics::NumericsError;
use crate::ordspace::{BinGrid, OrdSpaceError};
use crate::spectral;

pub use metrics::{score, MetricsReport, TypeMetrics};
pub use regress::{interpolate_level, top_indices, TopK};

#[derive(Debug, Error)]
pub enum InferError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid regression config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    OrdSpace(#[from] OrdSpaceError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionConfig {
    pub top_k: TopK,
    pub conf_threshold: f64,
    pub tau_w: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            top_k: TopK::Count(2),
            conf_threshold: 0.5,
            tau_w: 0.05,
        }
    }
}

impl RegressionConfig {
    /// Checks the thresholds and that `top_k` fits every grid.
    pub fn validate(&self, grids: &[BinGrid]) -> Result<(), InferError> {
        if !(self.conf_threshold > 0.0 && self.conf_threshold < 1.0) {
            return Err(InferError::InvalidConfig(format!(
                "conf_threshold {} outside (0, 1)",
                self.conf_threshold
            )));
        }
        if !(self.tau_w > 0.0 && self.tau_w.is_finite()) {
            return Err(InferError::InvalidConfig(format!("tau_w {}", self.tau_w)));
        }
        if let TopK::Count(k) = self.top_k {
            if k == 0 {
                return Err(InferError::InvalidConfig("top_k must be at least 1".into()));
            }
            if let Some(g) = grids.iter().find(|g| k > g.len()) {
                return Err(InferError::InvalidConfig(format!(
                    "top_k {k} exceeds the {} bins of {}",
                    g.len(),
                    g.kind
                )));
            }
        }
        Ok(())
    }
}

/// Confidence and regressed severity for one type, before thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeEstimate {
    pub conf: f64,
    pub level_norm: f64,
}

/// Estimates for all four types, indexed by `DegradationType::index`.
pub type Estimates = [TypeEstimate; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypePrediction {
    pub present: bool,
    pub conf: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub level_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub level_raw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelPrediction(pub BTreeMap<DegradationType, TypePrediction>);

impl LevelPrediction {
    pub fn from_estimates(est: &Estimates, threshold: f64) -> Self {
        LevelPrediction(
            DegradationType::ALL
                .iter()
                .map(|&t| {
                    let e = est[t.index()];
                    let present = e.conf >= threshold;
                    let p = TypePrediction {
                        present,
                        conf: e.conf,
                        level_norm: present.then_some(e.level_norm),
                        level_raw: present.then(|| t.range().denormalize(e.level_norm)),
                    };
                    (t, p)
                })
                .collect(),
        )
    }

    pub fn get(&self, kind: DegradationType) -> &TypePrediction {
        &self.0[&kind]
    }

    pub fn present_types(&self) -> Vec<DegradationType> {
        self.0
            .iter()
            .filter(|(_, p)| p.present)
            .map(|(&t, _)| t)
            .collect()
    }

    /// The detected types with their raw levels, or `None` when nothing is
    /// detected.
    pub fn recipe(&self, seed: u64) -> Option<DegradationRecipe> {
        let entries: BTreeMap<_, _> = self
            .0
            .iter()
            .filter_map(|(&t, p)| p.level_raw.map(|l| (t, t.range().clamp(l))))
            .collect();
        if entries.is_empty() {
            None
        } else {
            Some(DegradationRecipe::new(entries, seed).expect("levels clamped into range"))
        }
    }
}

/// Runs the encoder on raw feature rows and regresses every type's level.
pub fn estimate_features(
    ckpt: &Checkpoint,
    features: &[Vec<f64>],
    cfg: &RegressionConfig,
) -> Result<Vec<Estimates>, InferError> {
    let grids = ckpt.space.grids()?;
    cfg.validate(&grids)?;
    if features.is_empty() {
        return Ok(Vec::new());
    }
    let f = ckpt.params.arch.input;
    let mut x = Array2::zeros((features.len(), f));
    for (i, row) in features.iter().enumerate() {
        if row.len() != f {
            return Err(EncoderError::ShapeMismatch(format!(
                "{} features, expected {f}",
                row.len()
            ))
            .into());
        }
        x.row_mut(i)
            .assign(&ndarray::ArrayView1::from(&ckpt.standardizer.apply(row)));
    }
    let fwd = ckpt.params.forward_batch(&x)?;
    (0..features.len())
        .map(|i| {
            let mut out = [TypeEstimate {
                conf: 0.0,
                level_norm: 0.0,
            }; 4];
            for t in DegradationType::ALL {
                let emb = fwd.emb(t, i).to_vec();
                out[t.index()] = TypeEstimate {
                    conf: fwd.conf(t, i),
                    level_norm: interpolate_level(&emb, &grids[t.index()], cfg.top_k, cfg.tau_w)?,
                };
            }
            Ok(out)
        })
        .collect()
}

pub fn estimate(
    ckpt: &Checkpoint,
    img: &RgbImage,
    cfg: &RegressionConfig,
) -> Result<Estimates, InferError> {
    let feat = extract_features(img)?.to_vec();
    Ok(estimate_features(ckpt, &[feat], cfg)?[0])
}

pub fn predict(
    ckpt: &Checkpoint,
    img: &RgbImage,
    cfg: &RegressionConfig,
) -> Result<LevelPrediction, InferError> {
    Ok(LevelPrediction::from_estimates(
        &estimate(ckpt, img, cfg)?,
        cfg.conf_threshold,
    ))
}

/// Featurizes every record of `manifest` and scores the predictions.
pub fn evaluate(
    ckpt: &Checkpoint,
    manifest: &DatasetManifest,
    cfg: &RegressionConfig,
) -> Result<MetricsReport, InferError> {
    if manifest.is_empty() {
        return Err(InferError::EmptyDataset);
    }
    let feats = manifest_features(manifest)?;
    let est = estimate_features(ckpt, &feats, cfg)?;
    score(&manifest.records, &est, cfg.conf_threshold)
}

/// L2 distance between the radial log-power spectra of two images.
pub fn spectral_distance(a: &RgbImage, b: &RgbImage) -> f64 {
    let sa = spectral::radial_log_spectrum(&spectral::luminance(a));
    let sb = spectral::radial_log_spectrum(&spectral::luminance(b));
    sa.iter()
        .zip(&sb)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone)]
pub struct RoundTrip {
    pub prediction: LevelPrediction,
    /// `None` when no degradation was detected and the clean image is
    /// returned unchanged.
    pub recipe: Option<DegradationRecipe>,
    pub resynth: RgbImage,
    pub spectral_distance: f64,
}

/// Predicts a recipe from `lq`, applies it to `clean`, and compares the
/// spectra of `lq` and the re-synthesized image. `seed` drives the noise
/// stage of the re-synthesis.
pub fn roundtrip(
    ckpt: &Checkpoint,
    lq: &RgbImage,
    clean: &RgbImage,
    cfg: &RegressionConfig,
    seed: u64,
) -> Result<RoundTrip, InferError> {
    let prediction = predict(ckpt, lq, cfg)?;
    let recipe = prediction.recipe(seed);
    let resynth = match &recipe {
        Some(r) => synthesize(clean, r)?,
        None => clean.clone(),
    };
    let spectral_distance = spectral_distance(lq, &resynth);
    Ok(RoundTrip {
        prediction,
        recipe,
        resynth,
        spectral_distance,
    })
}
