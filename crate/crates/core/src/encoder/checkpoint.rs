use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ordspace::{OrdinalEncoderSpec, OrdinalSpace, ShiftTable, TypeAnchors};

use super::net::{Arch, EncoderParams, Linear};
use super::EncoderError;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Per-feature affine standardization fitted on the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(len: usize) -> Self {
        Self {
            mean: vec![0.0; len],
            scale: vec![1.0; len],
        }
    }

    /// Column means and standard deviations; near-constant columns keep
    /// unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, EncoderError> {
        let first = rows
            .first()
            .ok_or_else(|| EncoderError::ShapeMismatch("no rows to fit".into()))?;
        let len = first.len();
        if rows.iter().any(|r| r.len() != len) {
            return Err(EncoderError::ShapeMismatch("ragged feature rows".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; len];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; len];
        for r in rows {
            var.iter_mut()
                .zip(r.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
        }
        let scale = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-8 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, feat: &[f64]) -> Vec<f64> {
        feat.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Everything needed for inference: network, ordinal space, feature scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub params: EncoderParams,
    pub space: OrdinalSpace,
    pub standardizer: Standardizer,
}

#[derive(Serialize, Deserialize)]
struct Weights {
    trunk: Vec<Linear>,
    heads: Vec<Linear>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    arch: Arch,
    seed: u64,
    weights: Weights,
    shifts: ShiftTable,
    anchors: TypeAnchors,
    d: usize,
    f: f64,
    gap: f64,
    normalization: Standardizer,
}

impl Checkpoint {
    pub fn validate(&self) -> Result<(), EncoderError> {
        self.params.validate()?;
        self.space.validate()?;
        if self.space.spec.d != self.params.arch.d {
            return Err(EncoderError::InvalidCheckpoint(format!(
                "embedding dim {} vs network dim {}",
                self.space.spec.d, self.params.arch.d
            )));
        }
        let n = self.params.arch.input;
        if self.standardizer.mean.len() != n || self.standardizer.scale.len() != n {
            return Err(EncoderError::InvalidCheckpoint(
                "normalization length".into(),
            ));
        }
        if self
            .standardizer
            .mean
            .iter()
            .chain(&self.standardizer.scale)
            .any(|v| !v.is_finite())
            || self.standardizer.scale.iter().any(|&s| s <= 0.0)
        {
            return Err(EncoderError::InvalidCheckpoint(
                "normalization values".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = CheckpointFile {
            format_version: CHECKPOINT_FORMAT_VERSION,
            arch: self.params.arch.clone(),
            seed: self.seed,
            weights: Weights {
                trunk: self.params.trunk.clone(),
                heads: self.params.heads.clone(),
            },
            shifts: self.space.shifts.clone(),
            anchors: self.space.anchors.clone(),
            d: self.space.spec.d,
            f: self.space.spec.f,
            gap: self.space.gap,
            normalization: self.standardizer.clone(),
        };
        serde_json::to_string(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EncoderError> {
        let file: CheckpointFile = serde_json::from_str(text)
            .map_err(|e| EncoderError::InvalidCheckpoint(e.to_string()))?;
        if file.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(EncoderError::InvalidCheckpoint(format!(
                "unsupported format_version {}",
                file.format_version
            )));
        }
        let ckpt = Self {
            seed: file.seed,
            params: EncoderParams {
                arch: file.arch,
                trunk: file.weights.trunk,
                heads: file.weights.heads,
            },
            space: OrdinalSpace {
                spec: OrdinalEncoderSpec {
                    d: file.d,
                    f: file.f,
                },
                gap: file.gap,
                anchors: file.anchors,
                shifts: file.shifts,
            },
            standardizer: file.normalization,
        };
        ckpt.validate()
            .map_err(|e| EncoderError::InvalidCheckpoint(e.to_string()))?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| EncoderError::io(dir, e))?;
        }
        fs::write(path, self.to_json()).map_err(|e| EncoderError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let text = fs::read_to_string(path).map_err(|e| EncoderError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_params;

    fn ckpt() -> Checkpoint {
        let arch = Arch {
            input: 5,
            hidden: vec![7],
            d: 8,
        };
        let mut space =
            OrdinalSpace::new(OrdinalEncoderSpec::new(8, 10.0).unwrap(), 25.0, 2).unwrap();
        space
            .shifts
            .for_type_mut(crate::degrade::DegradationType::Noisy)[1][3] = 0.1 + 1e-17;
        Checkpoint {
            seed: 4,
            params: init_params(4, &arch).unwrap(),
            space,
            standardizer: Standardizer {
                mean: vec![0.1, 0.2, 0.3, 0.4, 1.0 / 3.0],
                scale: vec![1.0, 2.0, 0.5, 1.5, 7.0],
            },
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let c = ckpt();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/model.json");
        c.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, c);
        let feat = c.standardizer.apply(&[0.3, -0.1, 2.0, 1.0, 0.0]);
        assert_eq!(
            c.params.forward(&feat).unwrap(),
            back.params.forward(&feat).unwrap()
        );
        let v: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        for key in [
            "format_version",
            "arch",
            "seed",
            "weights",
            "shifts",
            "anchors",
            "d",
            "f",
            "gap",
            "normalization",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn rejects_corruption() {
        let text = ckpt().to_json();
        assert!(Checkpoint::from_json(&text[..text.len() / 2]).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["d"] = 10.into();
        assert!(Checkpoint::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["format_version"] = 9.into();
        assert!(Checkpoint::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["arch"]["hidden"] = serde_json::json!([6]);
        assert!(Checkpoint::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["normalization"]["scale"][0] = 0.into();
        assert!(Checkpoint::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn standardizer_fit() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&rows).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 6.0]), vec![1.0, 1.0]);
        assert!(Standardizer::fit(&[]).is_err());
    }
}
