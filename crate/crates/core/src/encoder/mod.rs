//! Degradation image encoder: fixed luminance features followed by a
//! trainable trunk and one head per degradation type.

mod checkpoint;
mod features;
mod net;

use thiserror::Error;

pub use checkpoint::{Checkpoint, Standardizer, CHECKPOINT_FORMAT_VERSION};
pub use features::{
    blockiness, extract_features, gradient_histogram, noise_proxy, FEATURE_LEN, GRADIENT_EDGES,
    IDX_BLOCKINESS, IDX_GRADIENT, IDX_MEAN, IDX_NOISE, IDX_SPECTRUM, IDX_STD, MIN_FEATURE_SIDE,
};
pub use net::{
    init_params, sigmoid, Arch, BatchForward, EncoderOutput, EncoderParams, Linear, TypeOutput,
    HEADS,
};

use rayon::prelude::*;

use crate::degrade::{DatasetManifest, DegradeError};
use crate::imageio;
use crate::ordspace::OrdSpaceError;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("image {width}x{height} too small (need at least {required} px per side)")]
    ImageTooSmall {
        width: u32,
        height: u32,
        required: u32,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("parameters contain a non-finite value")]
    NonFinite,
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
    #[error(transparent)]
    OrdSpace(#[from] OrdSpaceError),
    #[error(transparent)]
    Image(#[from] DegradeError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl EncoderError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        EncoderError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// Raw features of every record's low-quality image, in manifest order.
pub fn manifest_features(manifest: &DatasetManifest) -> Result<Vec<Vec<f64>>, EncoderError> {
    manifest
        .records
        .par_iter()
        .map(|r| {
            let img = imageio::load_rgb(&manifest.resolve(&r.lq_path))?;
            Ok(extract_features(&img)?.to_vec())
        })
        .collect()
}
