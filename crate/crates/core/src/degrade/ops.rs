//! The four degradation stages. Each takes and returns an 8-bit RGB raster.

use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DegradationRecipe, DegradationType, DegradeError};

/// Minimum side length that survives the downsample stage.
pub const MIN_DOWNSAMPLED_SIDE: u32 = 8;

#[inline]
fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Index into `0..len` with mirror reflection that does not repeat the edge
/// sample (`-1 -> 1`, `len -> len - 2`).
#[inline]
fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Isotropic Gaussian blur with a `ceil(3σ)` radius and reflected borders.
pub fn apply_blur(img: &RgbImage, sigma: f64) -> Result<RgbImage, DegradeError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(DegradeError::InvalidParameter(format!(
            "blur sigma {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let (w, h) = img.dimensions();
    let ksize = kernel.len() as u32;
    if w < ksize || h < ksize {
        return Err(DegradeError::ImageTooSmall {
            width: w,
            height: h,
            required: ksize,
        });
    }
    let (w, h) = (w as usize, h as usize);
    let radius = (kernel.len() / 2) as isize;
    let src: Vec<f64> = img.as_raw().iter().map(|&v| v as f64).collect();

    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        let row = &src[y * w * 3..(y + 1) * w * 3];
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (k, kv) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + k as isize - radius, w);
                for c in 0..3 {
                    acc[c] += kv * row[sx * 3 + c];
                }
            }
            tmp[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&acc);
        }
    }
    let mut out = vec![0u8; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (k, kv) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + k as isize - radius, h);
                let base = (sy * w + x) * 3;
                for c in 0..3 {
                    acc[c] += kv * tmp[base + c];
                }
            }
            for c in 0..3 {
                out[(y * w + x) * 3 + c] = to_u8(acc[c]);
            }
        }
    }
    Ok(RgbImage::from_raw(w as u32, h as u32, out).expect("buffer sized from dimensions"))
}

/// Bicubic reduction by `scale` followed by bicubic enlargement back to the
/// input size, so the output keeps the input dimensions.
pub fn apply_downsample(img: &RgbImage, scale: f64) -> Result<RgbImage, DegradeError> {
    if !(scale >= 1.0) || !scale.is_finite() {
        return Err(DegradeError::InvalidParameter(format!(
            "downsample scale {scale}"
        )));
    }
    let (w, h) = img.dimensions();
    let small_w = (w as f64 / scale).floor() as u32;
    let small_h = (h as f64 / scale).floor() as u32;
    if small_w.min(small_h) < MIN_DOWNSAMPLED_SIDE {
        return Err(DegradeError::ImageTooSmall {
            width: w,
            height: h,
            required: (MIN_DOWNSAMPLED_SIDE as f64 * scale).ceil() as u32,
        });
    }
    if small_w == w && small_h == h {
        return Ok(img.clone());
    }
    let small = imageops::resize(img, small_w, small_h, FilterType::CatmullRom);
    Ok(imageops::resize(&small, w, h, FilterType::CatmullRom))
}

/// Adds i.i.d. Gaussian noise with standard deviation `level` (8-bit units)
/// to every channel, then clamps.
pub fn apply_noise<R: Rng + ?Sized>(
    img: &RgbImage,
    level: f64,
    rng: &mut R,
) -> Result<RgbImage, DegradeError> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(DegradeError::InvalidParameter(format!(
            "noise level {level}"
        )));
    }
    if level == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, level).expect("positive finite std");
    let mut out = img.clone();
    for v in out.iter_mut() {
        *v = to_u8(*v as f64 + normal.sample(rng));
    }
    Ok(out)
}

/// Baseline JFIF round trip: 4:2:0 chroma, Annex K tables scaled by quality.
pub fn apply_jpeg(img: &RgbImage, quality: u32) -> Result<RgbImage, DegradeError> {
    let bytes = encode_jpeg(img, quality)?;
    decode_jpeg(&bytes)
}

pub fn encode_jpeg(img: &RgbImage, quality: u32) -> Result<Vec<u8>, DegradeError> {
    if !(1..=100).contains(&quality) {
        return Err(DegradeError::InvalidQuality(quality));
    }
    let (w, h) = img.dimensions();
    let (w16, h16) = match (u16::try_from(w), u16::try_from(h)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => {
            return Err(DegradeError::InvalidParameter(format!(
                "{w}x{h} too large for JPEG"
            )))
        }
    };
    let mut buf = Vec::new();
    let mut enc = jpeg_encoder::Encoder::new(&mut buf, quality as u8);
    enc.set_sampling_factor(jpeg_encoder::SamplingFactor::F_2_2);
    enc.encode(img.as_raw(), w16, h16, jpeg_encoder::ColorType::Rgb)
        .map_err(|e| DegradeError::Codec(e.to_string()))?;
    Ok(buf)
}

pub fn decode_jpeg(bytes: &[u8]) -> Result<RgbImage, DegradeError> {
    let mut dec = jpeg_decoder::Decoder::new(bytes);
    let pixels = dec
        .decode()
        .map_err(|e| DegradeError::Codec(e.to_string()))?;
    let info = dec
        .info()
        .ok_or_else(|| DegradeError::Codec("missing frame header".into()))?;
    let (w, h) = (info.width as u32, info.height as u32);
    let rgb = match info.pixel_format {
        jpeg_decoder::PixelFormat::RGB24 => pixels,
        jpeg_decoder::PixelFormat::L8 => pixels.iter().flat_map(|&v| [v, v, v]).collect(),
        other => {
            return Err(DegradeError::Codec(format!(
                "unsupported pixel format {other:?}"
            )))
        }
    };
    RgbImage::from_raw(w, h, rgb).ok_or_else(|| DegradeError::Codec("short pixel buffer".into()))
}

/// Applies the recipe's stages in canonical order (blur, downsample, noise,
/// JPEG), skipping absent ones. Noise draws from a generator seeded with the
/// recipe seed.
pub fn synthesize(img: &RgbImage, recipe: &DegradationRecipe) -> Result<RgbImage, DegradeError> {
    let mut cur = img.clone();
    for (&kind, &level) in recipe.entries() {
        cur = match kind {
            DegradationType::Blur => apply_blur(&cur, level)?,
            DegradationType::Downsample => apply_downsample(&cur, level)?,
            DegradationType::Noisy => {
                let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed());
                apply_noise(&cur, level, &mut rng)?
            }
            DegradationType::Jpeg => apply_jpeg(&cur, jpeg_quality(level))?,
        };
    }
    Ok(cur)
}

/// Continuous JPEG level to the integer quality the codec takes.
pub fn jpeg_quality(level: f64) -> u32 {
    level.round().clamp(1.0, 100.0) as u32
}
