//! Luminance extraction and Fourier power-spectrum summaries.

use image::RgbImage;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Number of radial bins in [`radial_log_spectrum`].
pub const RADIAL_BINS: usize = 16;
/// Floor added before taking logs of band power.
pub const POWER_FLOOR: f64 = 1e-10;

/// Single-channel image in 8-bit units, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.data.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.data.len() as f64).sqrt()
    }
}

/// ITU-R BT.601 luma.
pub fn luminance(img: &RgbImage) -> Plane {
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    Plane::new(w as usize, h as usize, data)
}

/// In-place 2-D FFT over a row-major buffer.
pub fn fft2(buf: &mut [Complex<f64>], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (
            planner.plan_fft_inverse(width),
            planner.plan_fft_inverse(height),
        )
    } else {
        (
            planner.plan_fft_forward(width),
            planner.plan_fft_forward(height),
        )
    };
    for row in buf.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = buf[y * width + x];
        }
        col_fft.process(&mut col);
        for y in 0..height {
            buf[y * width + x] = col[y];
        }
    }
}

/// Signed frequency in cycles per sample for FFT index `k` of length `n`.
#[inline]
pub fn freq(k: usize, n: usize) -> f64 {
    let k = k as isize;
    let n = n as isize;
    let s = if k <= n / 2 { k } else { k - n };
    s as f64 / n as f64
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos())
        .collect()
}

/// Power spectrum of the mean-removed, Hann-windowed plane, normalized so
/// that the total power approximates the plane's variance. Entry `y * w + x`
/// holds frequency `(freq(x, w), freq(y, h))`.
pub fn power_spectrum(plane: &Plane) -> Vec<f64> {
    let (w, h) = (plane.width, plane.height);
    let wx = hann(w);
    let wy = hann(h);
    let mean = plane.mean();
    let mut energy = 0.0;
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let win = wx[x] * wy[y];
            energy += win * win;
            buf.push(Complex::new((plane.at(x, y) - mean) * win, 0.0));
        }
    }
    fft2(&mut buf, w, h, false);
    let scale = 1.0 / (energy * (w * h) as f64);
    buf.iter().map(|c| c.norm_sqr() * scale).collect()
}

/// Radius (cycles/pixel) of every spectrum entry.
pub fn radii(width: usize, height: usize) -> Vec<f64> {
    let mut r = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = freq(y, height);
        for x in 0..width {
            let fx = freq(x, width);
            r.push((fx * fx + fy * fy).sqrt());
        }
    }
    r
}

/// Edges of the log-spaced radial bins: from 1.5 cycles per image up to the
/// Nyquist radius 0.5.
pub fn radial_edges(width: usize, height: usize) -> [f64; RADIAL_BINS + 1] {
    let lo = 1.5 / width.min(height) as f64;
    let hi = 0.5f64;
    let mut edges = [0.0; RADIAL_BINS + 1];
    for (i, e) in edges.iter_mut().enumerate() {
        *e = lo * (hi / lo).powf(i as f64 / RADIAL_BINS as f64);
    }
    edges
}

/// `log10` of the mean power inside each radial band.
pub fn radial_log_spectrum(plane: &Plane) -> [f64; RADIAL_BINS] {
    let power = power_spectrum(plane);
    let r = radii(plane.width, plane.height);
    let edges = radial_edges(plane.width, plane.height);
    let mut sum = [0.0; RADIAL_BINS];
    let mut count = [0usize; RADIAL_BINS];
    for (p, &rad) in power.iter().zip(&r) {
        if rad < edges[0] || rad > edges[RADIAL_BINS] {
            continue;
        }
        let idx = edges[1..]
            .iter()
            .position(|&e| rad <= e)
            .unwrap_or(RADIAL_BINS - 1);
        sum[idx] += p;
        count[idx] += 1;
    }
    let mut out = [0.0; RADIAL_BINS];
    for i in 0..RADIAL_BINS {
        let mean = if count[i] > 0 {
            sum[i] / count[i] as f64
        } else {
            // low bands can be narrower than the frequency lattice
            nearest_ring_power(&power, &r, (edges[i] * edges[i + 1]).sqrt())
        };
        out[i] = (mean + POWER_FLOOR).log10();
    }
    out
}

/// Mean power over the lattice ring whose radius is closest to `target`.
fn nearest_ring_power(power: &[f64], radii: &[f64], target: f64) -> f64 {
    let best = radii
        .iter()
        .filter(|&&r| r > 0.0)
        .map(|&r| (r - target).abs())
        .fold(f64::INFINITY, f64::min);
    let (s, n) = power
        .iter()
        .zip(radii)
        .filter(|(_, &r)| r > 0.0 && ((r - target).abs() - best).abs() < 1e-12)
        .fold((0.0, 0usize), |(s, n), (p, _)| (s + p, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Total power at radii strictly above `cutoff` cycles/pixel.
pub fn high_band_energy(plane: &Plane, cutoff: f64) -> f64 {
    let power = power_spectrum(plane);
    let r = radii(plane.width, plane.height);
    power
        .iter()
        .zip(&r)
        .filter(|(_, &rad)| rad > cutoff)
        .map(|(p, _)| p)
        .sum()
}
