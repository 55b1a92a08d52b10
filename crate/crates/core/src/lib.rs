//! Ordinal degradation embeddings, slerp-based contrastive training, and
//! projection-guided sampling.

pub mod cfpg;
pub mod cli;
pub mod config;
pub mod degrade;
pub mod encoder;
pub mod imageio;
pub mod infer;
pub mod numerics;
pub mod ordspace;
pub mod scene;
pub mod spectral;
pub mod train;
