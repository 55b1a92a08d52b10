//! Hand-built degradation features computed on luminance.

use image::RgbImage;

use crate::spectral::{luminance, radial_log_spectrum, Plane, RADIAL_BINS};

use super::EncoderError;

/// Length of the feature vector.
pub const FEATURE_LEN: usize = 28;
pub const MIN_FEATURE_SIDE: u32 = 64;
/// Upper edges of the gradient-magnitude histogram; the last bin is open.
pub const GRADIENT_EDGES: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

const BLOCK: usize = 8;
/// Added to both sides of the blockiness ratio so flat images score 1.
const BLOCKINESS_EPS: f64 = 1.0;
/// MAD to standard deviation for a Gaussian.
const MAD_TO_STD: f64 = 1.482_602_218_505_602;
/// Norm of the 3x3 Laplacian mask used for the noise proxy.
const LAPLACIAN_GAIN: f64 = 6.0;

pub const IDX_SPECTRUM: usize = 0;
pub const IDX_BLOCKINESS: usize = RADIAL_BINS;
pub const IDX_NOISE: usize = RADIAL_BINS + 1;
pub const IDX_GRADIENT: usize = RADIAL_BINS + 2;
pub const IDX_MEAN: usize = FEATURE_LEN - 2;
pub const IDX_STD: usize = FEATURE_LEN - 1;

/// Mean squared luminance step across 8x8 block boundaries over the mean
/// squared step inside blocks.
pub fn blockiness(p: &Plane) -> f64 {
    let (mut edge, mut edge_n, mut inner, mut inner_n) = (0.0, 0usize, 0.0, 0usize);
    let mut add = |boundary: bool, d: f64| {
        if boundary {
            edge += d * d;
            edge_n += 1;
        } else {
            inner += d * d;
            inner_n += 1;
        }
    };
    for y in 0..p.height {
        for x in 0..p.width - 1 {
            add((x + 1) % BLOCK == 0, p.at(x + 1, y) - p.at(x, y));
        }
    }
    for y in 0..p.height - 1 {
        for x in 0..p.width {
            add((y + 1) % BLOCK == 0, p.at(x, y + 1) - p.at(x, y));
        }
    }
    let edge = if edge_n > 0 {
        edge / edge_n as f64
    } else {
        0.0
    };
    let inner = if inner_n > 0 {
        inner / inner_n as f64
    } else {
        0.0
    };
    (edge + BLOCKINESS_EPS) / (inner + BLOCKINESS_EPS)
}

fn median(xs: &mut [f64]) -> f64 {
    let n = xs.len();
    let mid = n / 2;
    let (_, &mut hi, _) = xs.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        hi
    } else {
        let lo = xs[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Robust noise standard deviation: MAD of the response to the
/// `[1 -2 1; -2 4 -2; 1 -2 1]` mask, which cancels locally linear content.
pub fn noise_proxy(p: &Plane) -> f64 {
    let mut r = Vec::with_capacity((p.width - 2) * (p.height - 2));
    for y in 1..p.height - 1 {
        for x in 1..p.width - 1 {
            let v =
                p.at(x - 1, y - 1) + p.at(x + 1, y - 1) + p.at(x - 1, y + 1) + p.at(x + 1, y + 1)
                    - 2.0 * (p.at(x, y - 1) + p.at(x - 1, y) + p.at(x + 1, y) + p.at(x, y + 1))
                    + 4.0 * p.at(x, y);
            r.push(v);
        }
    }
    let m = median(&mut r);
    let mut dev: Vec<f64> = r.iter().map(|v| (v - m).abs()).collect();
    median(&mut dev) * MAD_TO_STD / LAPLACIAN_GAIN
}

/// Fraction of interior pixels per central-difference gradient magnitude bin.
pub fn gradient_histogram(p: &Plane) -> [f64; 8] {
    let mut h = [0.0; 8];
    let mut n = 0usize;
    for y in 1..p.height - 1 {
        for x in 1..p.width - 1 {
            let gx = 0.5 * (p.at(x + 1, y) - p.at(x - 1, y));
            let gy = 0.5 * (p.at(x, y + 1) - p.at(x, y - 1));
            let mag = (gx * gx + gy * gy).sqrt();
            let bin = GRADIENT_EDGES.iter().position(|&e| mag < e).unwrap_or(7);
            h[bin] += 1.0;
            n += 1;
        }
    }
    h.iter_mut().for_each(|v| *v /= n as f64);
    h
}

pub fn extract_features(img: &RgbImage) -> Result<[f64; FEATURE_LEN], EncoderError> {
    let (w, h) = img.dimensions();
    if w.min(h) < MIN_FEATURE_SIDE {
        return Err(EncoderError::ImageTooSmall {
            width: w,
            height: h,
            required: MIN_FEATURE_SIDE,
        });
    }
    let lum = luminance(img);
    let mut f = [0.0; FEATURE_LEN];
    f[IDX_SPECTRUM..IDX_SPECTRUM + RADIAL_BINS].copy_from_slice(&radial_log_spectrum(&lum));
    f[IDX_BLOCKINESS] = blockiness(&lum);
    f[IDX_NOISE] = noise_proxy(&lum);
    f[IDX_GRADIENT..IDX_GRADIENT + 8].copy_from_slice(&gradient_histogram(&lum));
    f[IDX_MEAN] = lum.mean() / 255.0;
    f[IDX_STD] = lum.std() / 255.0;
    Ok(f)
}
