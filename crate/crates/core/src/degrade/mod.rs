//! Labeled low-quality image synthesis: the four degradation stages, their
//! canonical composition, and dataset manifests.

mod dataset;
mod manifest;
mod ops;
mod types;

use thiserror::Error;

pub use dataset::{generate_dataset, DatasetConfig, LevelSampling};
pub use manifest::{DatasetManifest, ManifestRecord, MANIFEST_FORMAT_VERSION, MANIFEST_NAME};
pub use ops::{
    apply_blur, apply_downsample, apply_jpeg, apply_noise, decode_jpeg, encode_jpeg,
    gaussian_kernel, jpeg_quality, synthesize, MIN_DOWNSAMPLED_SIDE,
};
pub use types::{DegradationRecipe, DegradationType, Direction, LevelRange};

#[derive(Debug, Error)]
pub enum DegradeError {
    #[error("image {width}x{height} too small (need at least {required} px per side)")]
    ImageTooSmall {
        width: u32,
        height: u32,
        required: u32,
    },
    #[error("JPEG quality must be in 1..=100, got {0}")]
    InvalidQuality(u32),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{kind} level {level} outside [{min}, {max}]")]
    LevelOutOfRange {
        kind: DegradationType,
        level: f64,
        min: f64,
        max: f64,
    },
    #[error("recipe has no entries")]
    EmptyRecipe,
    #[error("unknown degradation type {0:?}")]
    UnknownType(String),
    #[error("no clean images found in {0}")]
    EmptyCorpus(String),
    #[error("codec error: {0}")]
    Codec(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DegradeError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        DegradeError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
