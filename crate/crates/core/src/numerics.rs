//! Deterministic vector math shared by every other module: similarity,
//! spherical interpolation, projection decomposition, softmax and rank
//! statistics. Everything here is a pure function over `f64` slices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this angle slerp switches to normalized linear interpolation.
pub const SLERP_SMALL_ANGLE: f64 = 1e-6;
/// Inputs with `p̂·q̂ <= -1 + SLERP_ANTIPODAL_EPS` have no unique great circle.
pub const SLERP_ANTIPODAL_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("slerp endpoints are antipodal (cos = {cos})")]
    AntipodalInputs { cos: f64 },
    #[error("empty input")]
    EmptyInput,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("input is constant; correlation undefined")]
    ConstantInput,
    #[error("input contains a non-finite value")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// A finite, non-empty vector of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(NumericsError::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "RealVector must be non-empty");
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for RealVector {
    type Error = NumericsError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RealVector> for Vec<f64> {
    fn from(v: RealVector) -> Self {
        v.0
    }
}

impl std::ops::Deref for RealVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(NumericsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(NumericsError::EmptyInput);
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Returns `a / ‖a‖`.
pub fn normalize(a: &[f64]) -> Result<Vec<f64>> {
    let n = norm(a);
    if n == 0.0 || !n.is_finite() {
        return Err(NumericsError::ZeroNorm);
    }
    Ok(a.iter().map(|x| x / n).collect())
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(NumericsError::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Which formula a slerp evaluation used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlerpBranch {
    /// `(sin((1-t)θ) p̂ + sin(tθ) q̂) / sin θ`
    Spherical { theta: f64 },
    /// `normalize((1-t) p̂ + t q̂)` for `θ < SLERP_SMALL_ANGLE`
    LinearFallback,
}

/// Spherical interpolation between the directions of `p` and `q`.
/// Both inputs are normalized first, so the result is always a unit vector.
pub fn slerp(p: &[f64], q: &[f64], t: f64) -> Result<Vec<f64>> {
    slerp_with_branch(p, q, t).map(|(v, _)| v)
}

pub fn slerp_with_branch(p: &[f64], q: &[f64], t: f64) -> Result<(Vec<f64>, SlerpBranch)> {
    check_len(p, q)?;
    let ph = normalize(p)?;
    let qh = normalize(q)?;
    slerp_unit(&ph, &qh, t)
}

/// Slerp over inputs that are already unit-norm.
pub fn slerp_unit(ph: &[f64], qh: &[f64], t: f64) -> Result<(Vec<f64>, SlerpBranch)> {
    let c = dot(ph, qh).clamp(-1.0, 1.0);
    if c <= -1.0 + SLERP_ANTIPODAL_EPS {
        return Err(NumericsError::AntipodalInputs { cos: c });
    }
    let theta = c.acos();
    if theta < SLERP_SMALL_ANGLE {
        let mixed: Vec<f64> = ph
            .iter()
            .zip(qh)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        return Ok((normalize(&mixed)?, SlerpBranch::LinearFallback));
    }
    let s = theta.sin();
    let wa = ((1.0 - t) * theta).sin() / s;
    let wb = (t * theta).sin() / s;
    let out = ph.iter().zip(qh).map(|(a, b)| wa * a + wb * b).collect();
    Ok((out, SlerpBranch::Spherical { theta }))
}

/// Splits `d` into the component along `b` and the remainder orthogonal to it.
pub fn project_decompose(d: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(d, b)?;
    let bb = dot(b, b);
    if bb == 0.0 {
        return Err(NumericsError::ZeroNorm);
    }
    let coef = dot(d, b) / bb;
    let par: Vec<f64> = b.iter().map(|x| coef * x).collect();
    let perp = d.iter().zip(&par).map(|(x, p)| x - p).collect();
    Ok((par, perp))
}

/// Softmax of `xs / temperature`, stabilized by subtracting the maximum.
pub fn softmax(xs: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(NumericsError::EmptyInput);
    }
    if !(temperature > 0.0) {
        return Err(NumericsError::NonPositiveTemperature(temperature));
    }
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| ((x - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// 1-based ranks; tied values share the average of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean((i+1)..=j)
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(NumericsError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(NumericsError::EmptyInput);
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    Ok(())
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(NumericsError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(close(
            cosine_similarity(&[1.0, 2.0], &[2.0, 4.0]).unwrap(),
            1.0,
            1e-15
        ));
        assert_eq!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(NumericsError::ZeroNorm)
        );
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(NumericsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn slerp_examples() {
        let p = [3.0, 0.0];
        let q = [0.0, 2.0];
        assert_eq!(slerp(&p, &q, 0.0).unwrap(), vec![1.0, 0.0]);
        let end = slerp(&p, &q, 1.0).unwrap();
        assert!(close(end[0], 0.0, 1e-15) && close(end[1], 1.0, 1e-15));
        let mid = slerp(&[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap();
        let h = 2f64.sqrt() / 2.0;
        assert!(close(mid[0], h, 1e-15) && close(mid[1], h, 1e-15));
    }

    #[test]
    fn slerp_errors() {
        assert!(matches!(
            slerp(&[1.0, 0.0], &[-1.0, 0.0], 0.5),
            Err(NumericsError::AntipodalInputs { .. })
        ));
        assert_eq!(
            slerp(&[0.0, 0.0], &[1.0, 0.0], 0.5),
            Err(NumericsError::ZeroNorm)
        );
    }

    #[test]
    fn slerp_fallback_agrees_with_analytic_path() {
        // Angle just under the switch: the fallback; compare against an
        // analytic evaluation done by hand at the same angle.
        for &angle in &[5e-7f64, 1e-7, 1e-9] {
            let p = [1.0, 0.0, 0.0];
            let q = [angle.cos(), angle.sin(), 0.0];
            let (v, branch) = slerp_with_branch(&p, &q, 0.3).unwrap();
            assert_eq!(branch, SlerpBranch::LinearFallback);
            let expected = [(0.3 * angle).cos(), (0.3 * angle).sin(), 0.0];
            for (a, b) in v.iter().zip(expected) {
                assert!(close(*a, b, 1e-8), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn projection_examples() {
        let (par, perp) = project_decompose(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert_eq!((par, perp), (vec![1.0, 0.0], vec![0.0, 1.0]));
        let (par, perp) = project_decompose(&[3.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!((par, perp), (vec![3.0, 0.0], vec![0.0, 0.0]));
        assert_eq!(
            project_decompose(&[1.0, 2.0], &[0.0, 0.0]),
            Err(NumericsError::ZeroNorm)
        );
    }

    #[test]
    fn projection_random_dim64() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let d: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (par, perp) = project_decompose(&d, &b).unwrap();
            for i in 0..64 {
                assert!(close(par[i] + perp[i], d[i], 1e-12 * norm(&d)));
            }
            assert!(dot(&perp, &b).abs() < 1e-10);
        }
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[2.0, 2.0, 2.0], 0.7).unwrap();
        assert!(u.iter().all(|x| close(*x, 1.0 / 3.0, 1e-15)));
        let e = std::f64::consts::E;
        let s = softmax(&[1.0, 0.0], 1.0).unwrap();
        assert!(close(s[0], e / (e + 1.0), 1e-15));
        assert!(close(s[1], 1.0 / (e + 1.0), 1e-15));
        let big = softmax(&[1000.0, 0.0], 1.0).unwrap();
        assert!(close(big[0], 1.0, 1e-15) && big[1] >= 0.0 && big[1] < 1e-300);
        assert_eq!(softmax(&[], 1.0), Err(NumericsError::EmptyInput));
        assert_eq!(
            softmax(&[1.0], 0.0),
            Err(NumericsError::NonPositiveTemperature(0.0))
        );
    }

    #[test]
    fn correlation_examples() {
        assert!(close(
            spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            1.0,
            1e-15
        ));
        assert!(close(
            pearson(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            1.0,
            1e-15
        ));
        assert!(close(
            spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0,
            1e-15
        ));
        // ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4): r = 4.5 / sqrt(4.5 * 5) = 3/sqrt(10)
        let expected = 3.0 / 10f64.sqrt();
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(close(r, expected, 1e-12));
        assert!(close(r, 0.9487, 5e-5));
        assert_eq!(
            pearson(&[1.0, 1.0], &[1.0, 2.0]),
            Err(NumericsError::ConstantInput)
        );
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0]),
            Err(NumericsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn real_vector_rejects_bad_input() {
        assert_eq!(RealVector::new(vec![]), Err(NumericsError::EmptyInput));
        assert_eq!(
            RealVector::new(vec![1.0, f64::NAN]),
            Err(NumericsError::NonFinite)
        );
        let v: RealVector = serde_json::from_str("[1.0, 2.0]").unwrap();
        assert_eq!(v.as_slice(), &[1.0, 2.0]);
        assert!(serde_json::from_str::<RealVector>("[]").is_err());
    }

    fn vec_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, len)
    }

    proptest! {
        #[test]
        fn slerp_is_unit_norm(p in vec_strategy(6), q in vec_strategy(6), t in 0.0f64..=1.0) {
            prop_assume!(norm(&p) > 1e-3 && norm(&q) > 1e-3);
            if let Ok(v) = slerp(&p, &q, t) {
                prop_assert!((norm(&v) - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(a in vec_strategy(5), b in vec_strategy(5), s in 0.01f64..100.0) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-15);
            let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
            prop_assert!((cosine_similarity(&scaled, &b).unwrap() - ab).abs() < 1e-12);
        }

        #[test]
        fn projection_idempotent(d in vec_strategy(8), b in vec_strategy(8)) {
            prop_assume!(norm(&b) > 1e-3);
            let (par, _) = project_decompose(&d, &b).unwrap();
            let (par2, perp2) = project_decompose(&par, &b).unwrap();
            let scale = norm(&d).max(1.0);
            for i in 0..8 {
                prop_assert!((par2[i] - par[i]).abs() < 1e-12 * scale);
                prop_assert!(perp2[i].abs() < 1e-12 * scale);
            }
        }

        #[test]
        fn spearman_monotone_invariant(xs in vec_strategy(12), ys in vec_strategy(12)) {
            if let Ok(r) = spearman(&xs, &ys) {
                let tx: Vec<f64> = xs.iter().map(|x| (x / 3.0).exp()).collect();
                let ty: Vec<f64> = ys.iter().map(|y| y * y * y + 2.0 * y).collect();
                let r2 = spearman(&tx, &ty).unwrap();
                prop_assert!((r - r2).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_sums_to_one_and_preserves_order(xs in vec_strategy(7), tau in 0.01f64..10.0) {
            let s = softmax(&xs, tau).unwrap();
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..7 {
                for j in 0..7 {
                    if xs[i] > xs[j] {
                        prop_assert!(s[i] >= s[j]);
                    }
                }
            }
        }
    }
}
