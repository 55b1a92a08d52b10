//! Vector-Jacobian products for the pieces of the training objective.
//! Each function takes the forward inputs and the upstream gradient and
//! returns the gradients of the inputs.

use crate::numerics::{dot, norm, SlerpBranch};

/// `c = a.b / (|a||b|)`; returns `(dc/da, dc/db)` scaled by `g`.
pub fn cosine(a: &[f64], b: &[f64], g: f64) -> (Vec<f64>, Vec<f64>) {
    let na = norm(a);
    let nb = norm(b);
    let c = dot(a, b) / (na * nb);
    let da = a
        .iter()
        .zip(b)
        .map(|(x, y)| g * (y / (na * nb) - c * x / (na * na)))
        .collect();
    let db = a
        .iter()
        .zip(b)
        .map(|(x, y)| g * (x / (na * nb) - c * y / (nb * nb)))
        .collect();
    (da, db)
}

/// `y = x / |x|`; returns `dx` for upstream `gy`.
pub fn normalize(x: &[f64], gy: &[f64]) -> Vec<f64> {
    let n = norm(x);
    let yg = dot(x, gy) / n;
    x.iter()
        .zip(gy)
        .map(|(xi, gi)| (gi - xi / n * yg) / n)
        .collect()
}

/// Slerp between unit vectors `p`, `q` at `t`, evaluated on `branch`;
/// returns `(dp, dq)` for upstream `g`.
pub fn slerp_unit(
    p: &[f64],
    q: &[f64],
    t: f64,
    branch: SlerpBranch,
    g: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    match branch {
        SlerpBranch::Spherical { theta } => {
            let s = theta.sin();
            let (a_arg, b_arg) = ((1.0 - t) * theta, t * theta);
            let wa = a_arg.sin() / s;
            let wb = b_arg.sin() / s;
            let dwa = ((1.0 - t) * a_arg.cos() * s - a_arg.sin() * theta.cos()) / (s * s);
            let dwb = (t * b_arg.cos() * s - b_arg.sin() * theta.cos()) / (s * s);
            let d_theta = dwa * dot(g, p) + dwb * dot(g, q);
            // theta = acos(p.q)
            let d_cos = -d_theta / s;
            let dp = g
                .iter()
                .zip(q)
                .map(|(gi, qi)| wa * gi + d_cos * qi)
                .collect();
            let dq = g
                .iter()
                .zip(p)
                .map(|(gi, pi)| wb * gi + d_cos * pi)
                .collect();
            (dp, dq)
        }
        SlerpBranch::LinearFallback => {
            let m: Vec<f64> = p
                .iter()
                .zip(q)
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect();
            let dm = normalize(&m, g);
            (
                dm.iter().map(|v| (1.0 - t) * v).collect(),
                dm.iter().map(|v| t * v).collect(),
            )
        }
    }
}

/// Softmax-weighted average `sum_i softmax(s / tau)_i * v_i`; returns the
/// gradient with respect to the scores `s` given upstream `g` and the
/// softmax weights `w` from the forward pass.
pub fn softmax_average(w: &[f64], values: &[f64], tau: f64, g: f64) -> Vec<f64> {
    let mean: f64 = w.iter().zip(values).map(|(a, b)| a * b).sum();
    w.iter()
        .zip(values)
        .map(|(wi, vi)| g * wi * (vi - mean) / tau)
        .collect()
}

/// Subgradient of `|x|` that is zero at the kink.
pub fn abs(x: f64, g: f64) -> f64 {
    if x > 0.0 {
        g
    } else if x < 0.0 {
        -g
    } else {
        0.0
    }
}

/// `|x|_2`; zero gradient at the origin.
pub fn l2(x: &[f64], g: f64) -> Vec<f64> {
    let n = norm(x);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| g * v / n).collect()
}

/// Logistic map given its output `y`.
pub fn sigmoid(y: f64, g: f64) -> f64 {
    g * y * (1.0 - y)
}
