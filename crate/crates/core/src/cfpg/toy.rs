//! A two-dimensional Gaussian world where every conditional noise
//! prediction has a closed form, used to drive the rectifier through a real
//! ancestral sampling loop.
//!
//! With data `x₀ ~ N(μ_c, I)` and `z_t = α_t·x₀ + σ_t·ε` under
//! `α_t² + σ_t² = 1`, the marginal is `q_t = N(α_t·μ_c, I)` and `ε` and
//! `z_t` are jointly Gaussian with `Cov(ε, z_t) = σ_t·I`. The optimal
//! prediction is therefore
//!
//! ```text
//! ε*(z_t, t, c) = E[ε | z_t] = σ_t·(z_t − α_t·μ_c) = −σ_t·∇ log q_t(z_t)
//! ```

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{linear_cfg, rectify, CfpgError, CfpgParams, GuidanceBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    TxtPos,
    TxtNeg,
    Sem,
    Deg,
}

/// Target mean per condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionMeans {
    pub txt_pos: [f64; 2],
    pub txt_neg: [f64; 2],
    pub sem: [f64; 2],
    pub deg: [f64; 2],
}

impl Default for ConditionMeans {
    fn default() -> Self {
        Self {
            txt_pos: [2.0, 0.0],
            txt_neg: [-2.0, 0.0],
            sem: [1.5, 1.0],
            deg: [-1.5, 1.0],
        }
    }
}

impl ConditionMeans {
    pub fn get(&self, c: Condition) -> [f64; 2] {
        match c {
            Condition::TxtPos => self.txt_pos,
            Condition::TxtNeg => self.txt_neg,
            Condition::Sem => self.sem,
            Condition::Deg => self.deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDiffusionSpec {
    pub means: ConditionMeans,
    /// `(α_t, σ_t)` for `t = 0..=steps`; index 0 is the data end.
    pub schedule: Vec<(f64, f64)>,
    pub seed: u64,
}

/// Cosine variance-preserving schedule with `steps` transitions. Per-step
/// noise is capped at 0.999 so the last transition stays invertible.
pub fn cosine_schedule(steps: usize) -> Vec<(f64, f64)> {
    let f = |s: usize| {
        let u = (s as f64 / steps as f64 + 0.008) / 1.008;
        (u * std::f64::consts::FRAC_PI_2).cos().powi(2)
    };
    let mut abar = 1.0;
    let mut out = vec![(1.0, 0.0)];
    for s in 1..=steps {
        let beta = (1.0 - f(s) / f(s - 1)).min(0.999);
        abar *= 1.0 - beta;
        out.push((abar.sqrt(), (1.0 - abar).sqrt()));
    }
    out
}

impl ToyDiffusionSpec {
    pub fn cosine(means: ConditionMeans, steps: usize, seed: u64) -> Self {
        Self {
            means,
            schedule: cosine_schedule(steps),
            seed,
        }
    }

    pub fn steps(&self) -> usize {
        self.schedule.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<(), CfpgError> {
        let bad = |m: String| Err(CfpgError::InvalidParameter(m));
        if self.schedule.is_empty() {
            return bad("empty schedule".into());
        }
        let all = [
            self.means.txt_pos,
            self.means.txt_neg,
            self.means.sem,
            self.means.deg,
        ];
        if all.iter().flatten().any(|v| !v.is_finite()) {
            return bad("non-finite mean".into());
        }
        for (t, &(a, s)) in self.schedule.iter().enumerate() {
            if !(a > 0.0 && a <= 1.0 && s >= 0.0) || (a * a + s * s - 1.0).abs() > 1e-12 {
                return bad(format!(
                    "schedule entry {t} = ({a}, {s}) is not variance preserving"
                ));
            }
            if t > 0 {
                let (pa, ps) = self.schedule[t - 1];
                if a > pa || s < ps || s == 0.0 {
                    return bad(format!("schedule not monotone at {t}"));
                }
            }
        }
        Ok(())
    }
}

pub fn analytic_eps(
    spec: &ToyDiffusionSpec,
    z: [f64; 2],
    t: usize,
    condition: Condition,
) -> Result<[f64; 2], CfpgError> {
    let &(a, s) = spec.schedule.get(t).ok_or(CfpgError::IndexOutOfRange {
        index: t,
        len: spec.schedule.len(),
    })?;
    let mu = spec.means.get(condition);
    Ok([s * (z[0] - a * mu[0]), s * (z[1] - a * mu[1])])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    Cfpg,
    LinearCfg,
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuidanceMode::Cfpg => "cfpg",
            GuidanceMode::LinearCfg => "linear_cfg",
        })
    }
}

impl FromStr for GuidanceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cfpg" => Ok(GuidanceMode::Cfpg),
            "linear_cfg" | "linear-cfg" => Ok(GuidanceMode::LinearCfg),
            _ => Err(format!("unknown mode {s:?} (expected cfpg or linear_cfg)")),
        }
    }
}

/// States visited by the sampler; `states[0]` is the initial noise and
/// `states[i]` the state after `i` reverse steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<[f64; 2]>,
}

/// Ancestral sampling where `guide` turns the four analytic predictions at
/// step `t` into the noise estimate used for the update.
pub fn sample_with<G>(spec: &ToyDiffusionSpec, mut guide: G) -> Result<Trajectory, CfpgError>
where
    G: FnMut(&GuidanceBundle, usize) -> Result<Vec<f64>, CfpgError>,
{
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = || -> [f64; 2] {
        [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ]
    };
    let mut z = normal();
    let mut states = vec![z];
    for t in (1..=spec.steps()).rev() {
        let eps = |c| analytic_eps(spec, z, t, c).map(|e| e.to_vec());
        let bundle = GuidanceBundle::new(
            eps(Condition::TxtPos)?,
            eps(Condition::TxtNeg)?,
            eps(Condition::Sem)?,
            eps(Condition::Deg)?,
        )?;
        let e = guide(&bundle, t)?;
        let (a_t, s_t) = spec.schedule[t];
        let (a_p, s_p) = spec.schedule[t - 1];
        let a = a_t / a_p;
        let beta = s_t * s_t - a * a * s_p * s_p;
        let std = (beta * s_p * s_p / (s_t * s_t)).max(0.0).sqrt();
        let n = normal();
        z = [
            (z[0] - beta / s_t * e[0]) / a + std * n[0],
            (z[1] - beta / s_t * e[1]) / a + std * n[1],
        ];
        states.push(z);
    }
    Ok(Trajectory { states })
}

/// In `LinearCfg` mode the per-branch interpolation weight is `eta_par`.
pub fn sample(
    spec: &ToyDiffusionSpec,
    params: &CfpgParams,
    mode: GuidanceMode,
) -> Result<Trajectory, CfpgError> {
    params.validate()?;
    sample_with(spec, |b, _| match mode {
        GuidanceMode::Cfpg => rectify(b, params),
        GuidanceMode::LinearCfg => linear_cfg(b, params.eta_par, params.w),
    })
}

/// CSV with columns `step, x, y, mode`.
pub fn write_trajectories_csv<W: Write>(
    out: W,
    runs: &[(GuidanceMode, &Trajectory)],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "x", "y", "mode"])?;
    for (mode, tr) in runs {
        for (i, s) in tr.states.iter().enumerate() {
            w.write_record([
                i.to_string(),
                s[0].to_string(),
                s[1].to_string(),
                mode.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
