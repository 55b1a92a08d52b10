//! Projection-based guidance: deviations between visual and textual noise
//! estimates are split into components along and across the textual
//! baseline and re-weighted before the usual guided combination.

mod toy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{project_decompose, NumericsError};

pub use toy::{
    analytic_eps, cosine_schedule, sample, sample_with, write_trajectories_csv, Condition,
    ConditionMeans, GuidanceMode, ToyDiffusionSpec, Trajectory,
};

#[derive(Debug, Error, PartialEq)]
pub enum CfpgError {
    #[error("bundle fields have lengths {0:?}")]
    LengthMismatch([usize; 4]),
    #[error("bundle is empty")]
    Empty,
    #[error("bundle contains a non-finite value")]
    NonFinite,
    #[error("projection baseline has zero norm")]
    ZeroNorm,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Numerics(NumericsError),
}

impl From<NumericsError> for CfpgError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::ZeroNorm => CfpgError::ZeroNorm,
            other => CfpgError::Numerics(other),
        }
    }
}

/// The four conditional noise estimates, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceBundle {
    pub eps_txt_pos: Vec<f64>,
    pub eps_txt_neg: Vec<f64>,
    pub eps_sem: Vec<f64>,
    pub eps_deg: Vec<f64>,
}

impl GuidanceBundle {
    pub fn new(
        eps_txt_pos: Vec<f64>,
        eps_txt_neg: Vec<f64>,
        eps_sem: Vec<f64>,
        eps_deg: Vec<f64>,
    ) -> Result<Self, CfpgError> {
        let b = Self {
            eps_txt_pos,
            eps_txt_neg,
            eps_sem,
            eps_deg,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.eps_txt_pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps_txt_pos.is_empty()
    }

    fn fields(&self) -> [&[f64]; 4] {
        [
            &self.eps_txt_pos,
            &self.eps_txt_neg,
            &self.eps_sem,
            &self.eps_deg,
        ]
    }

    pub fn validate(&self) -> Result<(), CfpgError> {
        let lens = self.fields().map(<[f64]>::len);
        if lens.iter().any(|&l| l != lens[0]) {
            return Err(CfpgError::LengthMismatch(lens));
        }
        if lens[0] == 0 {
            return Err(CfpgError::Empty);
        }
        if self
            .fields()
            .iter()
            .any(|f| f.iter().any(|v| !v.is_finite()))
        {
            return Err(CfpgError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfpgParams {
    /// Scale on the component along the textual baseline.
    pub eta_par: f64,
    /// Scale on the component orthogonal to it.
    pub eta_perp: f64,
    /// Guidance scale.
    pub w: f64,
}

impl Default for CfpgParams {
    fn default() -> Self {
        Self {
            eta_par: 1.0,
            eta_perp: 0.6,
            w: 5.5,
        }
    }
}

impl CfpgParams {
    pub fn validate(&self) -> Result<(), CfpgError> {
        if [self.eta_par, self.eta_perp, self.w]
            .iter()
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(CfpgError::InvalidParameter(format!("{self:?}")))
        }
    }
}

/// Rectified estimate for one branch: `baseline + η∥·d∥ + η⊥·d⊥` where
/// `d = visual − baseline` is split against `baseline`.
pub fn rectify_branch(
    baseline: &[f64],
    visual: &[f64],
    eta_par: f64,
    eta_perp: f64,
) -> Result<Vec<f64>, CfpgError> {
    let d: Vec<f64> = visual.iter().zip(baseline).map(|(v, b)| v - b).collect();
    let (par, perp) = project_decompose(&d, baseline)?;
    Ok(baseline
        .iter()
        .zip(par.iter().zip(&perp))
        .map(|(b, (p, o))| b + eta_par * p + eta_perp * o)
        .collect())
}

/// `neg + w·(pos − neg)`.
pub fn guided(pos: &[f64], neg: &[f64], w: f64) -> Vec<f64> {
    pos.iter().zip(neg).map(|(p, n)| n + w * (p - n)).collect()
}

pub fn rectify(bundle: &GuidanceBundle, params: &CfpgParams) -> Result<Vec<f64>, CfpgError> {
    bundle.validate()?;
    params.validate()?;
    let pos = rectify_branch(
        &bundle.eps_txt_pos,
        &bundle.eps_sem,
        params.eta_par,
        params.eta_perp,
    )?;
    let neg = rectify_branch(
        &bundle.eps_txt_neg,
        &bundle.eps_deg,
        params.eta_par,
        params.eta_perp,
    )?;
    Ok(guided(&pos, &neg, params.w))
}

/// Plain interpolation per branch, `txt + γ·(visual − txt)`, then the
/// guided combination.
pub fn linear_cfg(bundle: &GuidanceBundle, gamma: f64, w: f64) -> Result<Vec<f64>, CfpgError> {
    bundle.validate()?;
    let lerp = |t: &[f64], v: &[f64]| -> Vec<f64> {
        t.iter().zip(v).map(|(a, b)| a + gamma * (b - a)).collect()
    };
    let pos = lerp(&bundle.eps_txt_pos, &bundle.eps_sem);
    let neg = lerp(&bundle.eps_txt_neg, &bundle.eps_deg);
    Ok(guided(&pos, &neg, w))
}
