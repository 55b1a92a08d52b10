//! The per-type batch objective and its exact gradient.

use std::ops::AddAssign;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degrade::DegradationType;
use crate::encoder::{BatchForward, EncoderParams};
use crate::infer::{interpolate_level, top_indices, TopK};
use crate::numerics::{self, cosine_similarity, softmax, SlerpBranch};
use crate::ordspace::{BinGrid, OrdinalSpace, ShiftTable};

use super::losses::{loss_conf, loss_scl, negative_weights};
use super::{vjp, TrainError};

/// One training example after feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Standardized features.
    pub features: Vec<f64>,
    pub conf_gt: [f64; 4],
    /// Ground-truth severity on the shared scale, per type.
    pub severity: [Option<f64>; 4],
}

/// Samples of one batch, all with `kind` active.
#[derive(Debug, Clone)]
pub struct TypeBatch<'a> {
    pub kind: DegradationType,
    pub samples: Vec<&'a Sample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSettings {
    pub use_level: bool,
    pub use_scl: bool,
    pub top_k: TopK,
    /// Contrastive temperature.
    pub tau: f64,
    /// Temperature of the level-interpolation softmax.
    pub tau_w: f64,
}

impl Default for ObjectiveSettings {
    fn default() -> Self {
        Self {
            use_level: true,
            use_scl: true,
            top_k: TopK::Count(2),
            tau: 0.1,
            tau_w: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub conf: f64,
    pub level: f64,
    pub scl: f64,
    pub total: f64,
}

impl AddAssign for LossBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.conf += o.conf;
        self.level += o.level;
        self.scl += o.scl;
        self.total += o.total;
    }
}

impl LossBreakdown {
    pub fn new(conf: f64, level: f64, scl: f64) -> Self {
        Self {
            conf,
            level,
            scl,
            total: conf + level + scl,
        }
    }

    pub fn scaled(self, s: f64) -> Self {
        Self {
            conf: self.conf * s,
            level: self.level * s,
            scl: self.scl * s,
            total: self.total * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.conf, self.level, self.scl, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Gradients for every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub params: EncoderParams,
    pub shifts: ShiftTable,
}

impl Grads {
    pub fn zeros(params: &EncoderParams, space: &OrdinalSpace) -> Self {
        let bins = space.shifts.for_type(DegradationType::Blur).len();
        Self {
            params: EncoderParams::zeros(&params.arch),
            shifts: ShiftTable::zeros(space.spec.d, bins),
        }
    }

    fn add(&mut self, other: &Grads) {
        for (a, b) in self
            .params
            .tensors_mut()
            .into_iter()
            .zip(other.params.tensors())
        {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in shift_rows_mut(&mut self.shifts)
            .into_iter()
            .zip(shift_rows(&other.shifts))
        {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    /// Every gradient buffer, encoder tensors first, then shift rows.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.params.tensors();
        t.extend(shift_rows(&self.shifts));
        t
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn shift_rows(t: &ShiftTable) -> Vec<&[f64]> {
    t.shifts
        .values()
        .flat_map(|rows| rows.iter().map(Vec::as_slice))
        .collect()
}

pub fn shift_rows_mut(t: &mut ShiftTable) -> Vec<&mut [f64]> {
    t.shifts
        .values_mut()
        .flat_map(|rows| rows.iter_mut().map(Vec::as_mut_slice))
        .collect()
}

fn feature_matrix(samples: &[&Sample]) -> Array2<f64> {
    let f = samples[0].features.len();
    Array2::from_shape_fn((samples.len(), f), |(i, j)| samples[i].features[j])
}

fn severity_of(s: &Sample, kind: DegradationType) -> Result<f64, TrainError> {
    s.severity[kind.index()].ok_or_else(|| {
        TrainError::InvalidBatch(format!("sample without a {kind} level in a {kind} batch"))
    })
}

/// Objective value by direct evaluation of the loss definitions.
pub fn objective(
    params: &EncoderParams,
    space: &OrdinalSpace,
    batches: &[TypeBatch<'_>],
    s: &ObjectiveSettings,
) -> Result<LossBreakdown, TrainError> {
    let mut total = LossBreakdown::default();
    for batch in batches {
        if batch.samples.is_empty() {
            continue;
        }
        let grid = space.grid(batch.kind)?;
        let fwd = params.forward_batch(&feature_matrix(&batch.samples))?;
        let b = batch.samples.len();
        let preds: Vec<[f64; 4]> = (0..b)
            .map(|i| DegradationType::ALL.map(|t| fwd.conf(t, i)))
            .collect();
        let gts: Vec<[f64; 4]> = batch.samples.iter().map(|s| s.conf_gt).collect();
        let conf = loss_conf(&preds, &gts)?;

        let sev = batch
            .samples
            .iter()
            .map(|x| severity_of(x, batch.kind))
            .collect::<Result<Vec<_>, _>>()?;
        let z: Vec<Vec<f64>> = (0..b).map(|i| fwd.emb(batch.kind, i).to_vec()).collect();
        let level = if s.use_level {
            let mut acc = 0.0;
            for i in 0..b {
                acc += (interpolate_level(&z[i], &grid, s.top_k, s.tau_w)? - sev[i]).abs();
            }
            acc / b as f64
        } else {
            0.0
        };
        let scl = if s.use_scl {
            let w = sev
                .iter()
                .map(|&l| grid.target_at_severity(l))
                .collect::<Result<Vec<_>, _>>()?;
            loss_scl(&z, &w, &sev, s.tau)?
        } else {
            0.0
        };
        total += LossBreakdown::new(conf, level, scl);
    }
    Ok(total)
}

/// Slerp target for one severity plus what its gradient needs.
struct Target {
    w: Vec<f64>,
    lo: usize,
    hi: usize,
    t: f64,
    branch: Option<SlerpBranch>,
    p: Vec<f64>,
    q: Vec<f64>,
}

fn target(grid: &BinGrid, severity: f64) -> Result<Target, TrainError> {
    let br = grid.bracket(severity)?;
    let p = numerics::normalize(&grid.bins[br.lo].center)?;
    if br.lo == br.hi {
        return Ok(Target {
            w: p.clone(),
            lo: br.lo,
            hi: br.hi,
            t: 0.0,
            branch: None,
            p,
            q: Vec::new(),
        });
    }
    let q = numerics::normalize(&grid.bins[br.hi].center)?;
    let (w, branch) = numerics::slerp_unit(&p, &q, br.t)?;
    Ok(Target {
        w,
        lo: br.lo,
        hi: br.hi,
        t: br.t,
        branch: Some(branch),
        p,
        q,
    })
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

fn type_batch_grad(
    params: &EncoderParams,
    space: &OrdinalSpace,
    batch: &TypeBatch<'_>,
    s: &ObjectiveSettings,
) -> Result<(LossBreakdown, Grads), TrainError> {
    let kind = batch.kind;
    let grid = space.grid(kind)?;
    let fwd: BatchForward = params.forward_focused(&feature_matrix(&batch.samples), kind)?;
    let b = batch.samples.len();
    let bf = b as f64;
    let d = params.arch.d;
    let mut d_heads: Vec<Array2<f64>> = (0..4).map(|_| Array2::zeros((b, d + 1))).collect();
    let mut d_centers = vec![vec![0.0; d]; grid.len()];

    let mut conf_loss = 0.0;
    for (i, sample) in batch.samples.iter().enumerate() {
        let confs = DegradationType::ALL.map(|t| fwd.conf(t, i));
        let diff: Vec<f64> = confs
            .iter()
            .zip(&sample.conf_gt)
            .map(|(a, b)| a - b)
            .collect();
        conf_loss += numerics::norm(&diff) / bf;
        let dr = vjp::l2(&diff, 1.0 / bf);
        for k in 0..4 {
            d_heads[k][[i, d]] += vjp::sigmoid(confs[k], dr[k]);
        }
    }

    let sev = batch
        .samples
        .iter()
        .map(|x| severity_of(x, kind))
        .collect::<Result<Vec<_>, _>>()?;
    let z: Vec<Vec<f64>> = (0..b).map(|i| fwd.emb(kind, i).to_vec()).collect();
    let ki = kind.index();

    let mut level_loss = 0.0;
    if s.use_level {
        let k = s.top_k.resolve(grid.len());
        for i in 0..b {
            let sims = grid
                .bins
                .iter()
                .map(|bin| cosine_similarity(&z[i], &bin.center))
                .collect::<Result<Vec<_>, _>>()?;
            let top = top_indices(&sims, k);
            let picked: Vec<f64> = top.iter().map(|&j| sims[j]).collect();
            let levels: Vec<f64> = top.iter().map(|&j| grid.bins[j].level_norm).collect();
            let w = softmax(&picked, s.tau_w)?;
            let pred: f64 = w.iter().zip(&levels).map(|(a, b)| a * b).sum();
            level_loss += (pred - sev[i]).abs() / bf;
            let d_pred = vjp::abs(pred - sev[i], 1.0 / bf);
            if d_pred == 0.0 {
                continue;
            }
            let d_sims = vjp::softmax_average(&w, &levels, s.tau_w, d_pred);
            for (&j, &g) in top.iter().zip(&d_sims) {
                let (dz, dc) = vjp::cosine(&z[i], &grid.bins[j].center, g);
                let mut row = d_heads[ki].row_mut(i);
                for (r, v) in row.iter_mut().zip(&dz) {
                    *r += v;
                }
                add_into(&mut d_centers[j], &dc);
            }
        }
    }

    let mut scl_loss = 0.0;
    if s.use_scl {
        let targets = sev
            .iter()
            .map(|&l| target(&grid, l))
            .collect::<Result<Vec<_>, _>>()?;
        let lambda = negative_weights(&sev);
        let mut d_w = vec![vec![0.0; d]; b];
        for i in 0..b {
            let cos: Vec<f64> = targets
                .iter()
                .map(|tg| cosine_similarity(&z[i], &tg.w))
                .collect::<Result<_, _>>()?;
            // exp((c - 1) / tau) <= 1; the shift cancels in the ratio
            let f: Vec<f64> = cos.iter().map(|c| ((c - 1.0) / s.tau).exp()).collect();
            let denom = f[i]
                + (0..b)
                    .filter(|&j| j != i)
                    .map(|j| lambda[i][j] * f[j])
                    .sum::<f64>();
            let term = denom.ln() - (cos[i] - 1.0) / s.tau;
            assert!(term >= -1e-12, "contrastive term {term} below zero");
            scl_loss += term / bf;
            for j in 0..b {
                let g = if j == i {
                    (f[i] / denom - 1.0) / s.tau / bf
                } else {
                    lambda[i][j] * f[j] / denom / s.tau / bf
                };
                if g == 0.0 {
                    continue;
                }
                let (dz, dw) = vjp::cosine(&z[i], &targets[j].w, g);
                let mut row = d_heads[ki].row_mut(i);
                for (r, v) in row.iter_mut().zip(&dz) {
                    *r += v;
                }
                add_into(&mut d_w[j], &dw);
            }
        }
        for (tg, dw) in targets.iter().zip(&d_w) {
            match tg.branch {
                None => {
                    let dc = vjp::normalize(&grid.bins[tg.lo].center, dw);
                    add_into(&mut d_centers[tg.lo], &dc);
                }
                Some(branch) => {
                    let (dp, dq) = vjp::slerp_unit(&tg.p, &tg.q, tg.t, branch, dw);
                    let dc_lo = vjp::normalize(&grid.bins[tg.lo].center, &dp);
                    let dc_hi = vjp::normalize(&grid.bins[tg.hi].center, &dq);
                    add_into(&mut d_centers[tg.lo], &dc_lo);
                    add_into(&mut d_centers[tg.hi], &dc_hi);
                }
            }
        }
    }

    let mut grads = Grads {
        params: params.backward_focused(&fwd, &d_heads, kind),
        shifts: ShiftTable::zeros(d, grid.len()),
    };
    // centers are anchor + code + shift, so shift gradients equal center gradients
    for (row, dc) in grads.shifts.for_type_mut(kind).iter_mut().zip(d_centers) {
        *row = dc;
    }
    Ok((LossBreakdown::new(conf_loss, level_loss, scl_loss), grads))
}

/// Objective value and exact gradients, summed over the type batches.
pub fn objective_grad(
    params: &EncoderParams,
    space: &OrdinalSpace,
    batches: &[TypeBatch<'_>],
    s: &ObjectiveSettings,
) -> Result<(LossBreakdown, Grads), TrainError> {
    let parts = batches
        .par_iter()
        .filter(|b| !b.samples.is_empty())
        .map(|b| type_batch_grad(params, space, b, s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut loss = LossBreakdown::default();
    let mut grads = Grads::zeros(params, space);
    for (l, g) in &parts {
        loss += *l;
        grads.add(g);
    }
    Ok((loss, grads))
}
