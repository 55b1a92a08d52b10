//! Training objective, exact gradients, optimizer and loop.

mod adamw;
mod losses;
mod objective;
pub mod vjp;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adamw::{AdamW, AdamWConfig};
pub use losses::{loss_conf, loss_level, loss_scl, negative_weights};
pub use objective::{
    objective, objective_grad, shift_rows, shift_rows_mut, Grads, LossBreakdown, ObjectiveSettings,
    Sample, TypeBatch,
};

use crate::degrade::{DatasetManifest, DegradationType, DegradeError, ManifestRecord};
use crate::encoder::{
    init_params, manifest_features, Arch, Checkpoint, EncoderError, Standardizer, FEATURE_LEN,
};
use crate::infer::TopK;
use crate::numerics::NumericsError;
use crate::ordspace::{bin_count, OrdSpaceError, OrdinalEncoderSpec, OrdinalSpace};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("non-finite loss at {batch}")]
    NonFiniteLoss { batch: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    OrdSpace(#[from] OrdSpaceError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Loss-term combinations of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    /// Confidence loss only.
    A,
    /// Adds level regression.
    B,
    /// Adds the contrastive term.
    C,
    /// All three terms.
    D,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::A, Ablation::B, Ablation::C, Ablation::D];

    /// `(use_level, use_scl)`.
    pub fn toggles(self) -> (bool, bool) {
        match self {
            Ablation::A => (false, false),
            Ablation::B => (true, false),
            Ablation::C => (false, true),
            Ablation::D => (true, true),
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Ablation::A),
            "B" => Ok(Ablation::B),
            "C" => Ok(Ablation::C),
            "D" => Ok(Ablation::D),
            _ => Err(format!("ablation must be one of A, B, C, D; got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Samples per degradation type per step.
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub use_level: bool,
    pub use_scl: bool,
    pub top_k: TopK,
    pub gap: f64,
    pub tau: f64,
    pub tau_w: f64,
    pub hidden: Vec<usize>,
    pub d: usize,
    pub f: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = AdamWConfig::default();
        let obj = ObjectiveSettings::default();
        let spec = OrdinalEncoderSpec::default();
        Self {
            lr: opt.lr,
            epochs: 200,
            batch_size: 64,
            weight_decay: opt.weight_decay,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
            seed: 0,
            use_level: obj.use_level,
            use_scl: obj.use_scl,
            top_k: obj.top_k,
            gap: crate::ordspace::DEFAULT_GAP,
            tau: obj.tau,
            tau_w: obj.tau_w,
            hidden: Arch::default().hidden,
            d: spec.d,
            f: spec.f,
        }
    }
}

impl TrainConfig {
    pub fn with_ablation(mut self, a: Ablation) -> Self {
        (self.use_level, self.use_scl) = a.toggles();
        self
    }

    pub fn spec(&self) -> OrdinalEncoderSpec {
        OrdinalEncoderSpec {
            d: self.d,
            f: self.f,
        }
    }

    pub fn arch(&self) -> Arch {
        Arch {
            input: FEATURE_LEN,
            hidden: self.hidden.clone(),
            d: self.d,
        }
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn objective(&self) -> ObjectiveSettings {
        ObjectiveSettings {
            use_level: self.use_level,
            use_scl: self.use_scl,
            top_k: self.top_k,
            tau: self.tau,
            tau_w: self.tau_w,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive".into());
        }
        if !(self.tau > 0.0 && self.tau_w > 0.0) {
            return bad("temperatures must be positive".into());
        }
        self.spec().validate()?;
        self.arch().validate()?;
        let bins = bin_count(self.gap)?;
        if let TopK::Count(k) = self.top_k {
            if k == 0 || k > bins {
                return bad(format!("top_k {k} outside 1..={bins} for gap {}", self.gap));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub conf: f64,
    pub level: f64,
    pub scl: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

pub fn sample_from_record(rec: &ManifestRecord, features: Vec<f64>) -> Sample {
    Sample {
        features,
        conf_gt: DegradationType::ALL.map(|t| rec.is_active(t) as u8 as f64),
        severity: DegradationType::ALL.map(|t| rec.severity(t)),
    }
}

/// Trains on a manifest; images are read and featurized up front.
pub fn train(cfg: &TrainConfig, manifest: &DatasetManifest) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if manifest.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let raw = manifest_features(manifest)?;
    train_on_features(cfg, &manifest.records, &raw)
}

/// Trains on precomputed raw features, one row per record.
pub fn train_on_features(
    cfg: &TrainConfig,
    records: &[ManifestRecord],
    raw: &[Vec<f64>],
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if raw.len() != records.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} feature rows for {} records",
            raw.len(),
            records.len()
        )));
    }
    let standardizer = Standardizer::fit(raw)?;
    let samples: Vec<Sample> = records
        .iter()
        .zip(raw)
        .map(|(r, f)| sample_from_record(r, standardizer.apply(f)))
        .collect();

    let mut params = init_params(cfg.seed, &cfg.arch())?;
    let mut space = OrdinalSpace::new(cfg.spec(), cfg.gap, cfg.seed)?;
    let settings = cfg.objective();

    let mut by_type: Vec<Vec<usize>> = DegradationType::ALL
        .iter()
        .map(|&t| {
            (0..samples.len())
                .filter(|&i| samples[i].severity[t.index()].is_some())
                .collect()
        })
        .collect();
    let shapes: Vec<usize> = params
        .tensors()
        .iter()
        .map(|t| t.len())
        .chain(shift_rows(&space.shifts).iter().map(|r| r.len()))
        .collect();
    let mut opt = AdamW::new(cfg.optimizer(), &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        for idx in by_type.iter_mut() {
            idx.shuffle(&mut rng);
        }
        let steps = by_type
            .iter()
            .filter(|v| !v.is_empty())
            .map(|v| v.len().div_ceil(cfg.batch_size.min(v.len())))
            .max()
            .unwrap_or(0);
        let mut acc = LossBreakdown::default();
        for step in 0..steps {
            let batches: Vec<TypeBatch<'_>> = DegradationType::ALL
                .iter()
                .zip(&by_type)
                .map(|(&kind, idx)| {
                    let n = idx.len();
                    let bs = cfg.batch_size.min(n);
                    TypeBatch {
                        kind,
                        samples: (0..bs)
                            .map(|j| &samples[idx[(step * bs + j) % n]])
                            .collect(),
                    }
                })
                .collect();
            let (loss, grads) = objective_grad(&params, &space, &batches, &settings)?;
            if !loss.is_finite()
                || grads
                    .tensors()
                    .iter()
                    .any(|t| t.iter().any(|v| !v.is_finite()))
            {
                return Err(TrainError::NonFiniteLoss {
                    batch: format!("epoch {epoch} step {step}"),
                });
            }
            acc += loss;
            let mut targets = params.tensors_mut();
            targets.extend(shift_rows_mut(&mut space.shifts));
            opt.update(targets, grads.tensors())?;
        }
        let mean = acc.scaled(1.0 / steps.max(1) as f64);
        log.push(EpochLog {
            epoch,
            conf: mean.conf,
            level: mean.level,
            scl: mean.scl,
            total: mean.total,
        });
    }

    let checkpoint = Checkpoint {
        seed: cfg.seed,
        params,
        space,
        standardizer,
    };
    checkpoint.validate()?;
    Ok(TrainOutcome { checkpoint, log })
}

/// CSV with columns `epoch, conf, level, scl, total`.
pub fn write_loss_csv<W: Write>(log: &[EpochLog], out: W) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "conf", "level", "scl", "total"])?;
    for e in log {
        w.serialize((e.epoch, e.conf, e.level, e.scl, e.total))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_loss_csv(log: &[EpochLog], path: &Path) -> Result<(), TrainError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_loss_csv(log, std::fs::File::create(path)?)
}
