//! Procedural stand-ins for clean photographs: a 1/f² colored background
//! with occluding, antialiased shapes, some of them textured. The result has
//! the power-law spectrum and sharp edges that the degradation features rely
//! on, and it is fully determined by the seed.

use image::RgbImage;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;

use crate::spectral::{fft2, freq};

/// Zero-mean, unit-variance field whose power falls off as `1/f^2`.
pub fn pink_field<R: Rng>(rng: &mut R, width: usize, height: usize) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = freq(y, height);
        for x in 0..width {
            let fx = freq(x, width);
            let r = (fx * fx + fy * fy).sqrt();
            let amp = if r == 0.0 {
                0.0
            } else {
                1.0 / (r + 1.0 / width.max(height) as f64)
            };
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            buf.push(Complex::new(re * amp, im * amp));
        }
    }
    fft2(&mut buf, width, height, true);
    let mut field: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let sd = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    field.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    field
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Ellipse { a: f64, b: f64 },
    Rect { a: f64, b: f64 },
}

struct Placed {
    shape: Shape,
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
    color: [f64; 3],
    stripes: Option<(f64, f64, f64, f64)>, // (kx, ky, amplitude, phase)
}

impl Placed {
    /// Signed distance in pixels, negative inside.
    fn distance(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = self.cos * dx + self.sin * dy;
        let v = -self.sin * dx + self.cos * dy;
        match self.shape {
            Shape::Ellipse { a, b } => {
                (((u / a).powi(2) + (v / b).powi(2)).sqrt() - 1.0) * a.min(b)
            }
            Shape::Rect { a, b } => {
                let qx = u.abs() - a;
                let qy = v.abs() - b;
                let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
                outside + qx.max(qy).min(0.0)
            }
        }
    }
}

/// Renders a `width x height` scene for `seed`.
pub fn render(seed: u64, width: u32, height: u32) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as usize, height as usize);
    let lum = pink_field(&mut rng, w, h);
    let chroma_a = pink_field(&mut rng, w, h);
    let chroma_b = pink_field(&mut rng, w, h);

    let base: [f64; 3] = [
        rng.random_range(70.0..180.0),
        rng.random_range(70.0..180.0),
        rng.random_range(70.0..180.0),
    ];
    let contrast = rng.random_range(18.0..36.0);
    let mut px = vec![0.0f64; w * h * 3];
    for i in 0..w * h {
        let l = contrast * lum[i];
        px[i * 3] = base[0] + l + 8.0 * chroma_a[i];
        px[i * 3 + 1] = base[1] + l - 4.0 * chroma_a[i] + 4.0 * chroma_b[i];
        px[i * 3 + 2] = base[2] + l - 8.0 * chroma_b[i];
    }

    let side = w.min(h) as f64;
    let n_shapes = rng.random_range(10..22);
    let shapes: Vec<Placed> = (0..n_shapes)
        .map(|_| {
            let a = rng.random_range(0.04..0.28) * side;
            let b = a * rng.random_range(0.3..1.0);
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let shape = if rng.random_bool(0.5) {
                Shape::Ellipse { a, b }
            } else {
                Shape::Rect { a, b }
            };
            let stripes = rng.random_bool(0.4).then(|| {
                let f = rng.random_range(0.04..0.3);
                let dir: f64 = rng.random_range(0.0..std::f64::consts::PI);
                (
                    f * dir.cos(),
                    f * dir.sin(),
                    rng.random_range(8.0..30.0),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            });
            Placed {
                shape,
                cx: rng.random_range(0.0..w as f64),
                cy: rng.random_range(0.0..h as f64),
                cos: angle.cos(),
                sin: angle.sin(),
                color: [
                    rng.random_range(15.0..240.0),
                    rng.random_range(15.0..240.0),
                    rng.random_range(15.0..240.0),
                ],
                stripes,
            }
        })
        .collect();

    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let i = y * w + x;
            for s in &shapes {
                let coverage = (0.5 - s.distance(fx, fy)).clamp(0.0, 1.0);
                if coverage == 0.0 {
                    continue;
                }
                let shade = 0.35 * contrast * lum[i];
                let tex = s.stripes.map_or(0.0, |(kx, ky, amp, ph)| {
                    amp * (std::f64::consts::TAU * (kx * fx + ky * fy) + ph).sin()
                });
                for c in 0..3 {
                    let v = s.color[c] + shade + tex;
                    px[i * 3 + c] = px[i * 3 + c] * (1.0 - coverage) + v * coverage;
                }
            }
        }
    }

    let raw = px
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    RgbImage::from_raw(width, height, raw).expect("buffer sized from dimensions")
}
