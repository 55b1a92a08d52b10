use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestRecord, MANIFEST_NAME};
use super::{synthesize, DegradationRecipe, DegradationType, DegradeError};
use crate::imageio;

/// How levels are drawn for an active degradation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LevelSampling {
    /// Continuous uniform over the canonical range (JPEG rounded).
    #[default]
    Uniform,
    /// Uniform choice from an explicit list of raw levels per type.
    Grid(BTreeMap<DegradationType, Vec<f64>>),
}

impl LevelSampling {
    /// `n` evenly spaced severities per type.
    pub fn even_grid(n: usize) -> Self {
        LevelSampling::Grid(
            DegradationType::ALL
                .iter()
                .map(|&t| (t, t.range().grid(n)))
                .collect(),
        )
    }

    fn validate(&self) -> Result<(), DegradeError> {
        if let LevelSampling::Grid(g) = self {
            for t in DegradationType::ALL {
                let levels = g.get(&t).filter(|l| !l.is_empty()).ok_or_else(|| {
                    DegradeError::InvalidParameter(format!("level grid missing {t}"))
                })?;
                for &l in levels {
                    t.range().check(l)?;
                }
            }
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, kind: DegradationType, rng: &mut R) -> f64 {
        match self {
            LevelSampling::Uniform => {
                let r = kind.range();
                let v = rng.random_range(r.min..=r.max);
                if kind == DegradationType::Jpeg {
                    v.round()
                } else {
                    v
                }
            }
            LevelSampling::Grid(g) => *g[&kind].choose(rng).expect("validated non-empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub patch_size: u32,
    pub levels: LevelSampling,
    /// Fraction of records carrying a random non-empty subset of types; the
    /// rest carry exactly one type.
    pub mixture_ratio: f64,
    pub count: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            patch_size: 224,
            levels: LevelSampling::Uniform,
            mixture_ratio: 0.5,
            count: 0,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DegradeError> {
        if self.patch_size < 64 {
            return Err(DegradeError::InvalidParameter(format!(
                "patch_size {} < 64",
                self.patch_size
            )));
        }
        if !(0.0..=1.0).contains(&self.mixture_ratio) {
            return Err(DegradeError::InvalidParameter(format!(
                "mixture_ratio {} outside [0, 1]",
                self.mixture_ratio
            )));
        }
        self.levels.validate()
    }

    /// Draws the recipe and crop for record `index`. Randomness is keyed by
    /// `(seed, index)` only.
    fn plan(&self, index: usize, corpus: &[RgbImage]) -> (usize, u32, u32, DegradationRecipe) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let src = rng.random_range(0..corpus.len());
        let (w, h) = corpus[src].dimensions();
        let x = rng.random_range(0..=w - self.patch_size);
        let y = rng.random_range(0..=h - self.patch_size);
        let kinds: Vec<DegradationType> = if rng.random_bool(self.mixture_ratio) {
            // uniform over the 15 non-empty subsets
            let mask = rng.random_range(1..16u8);
            DegradationType::ALL
                .into_iter()
                .filter(|t| mask & (1 << t.index()) != 0)
                .collect()
        } else {
            vec![*DegradationType::ALL.choose(&mut rng).expect("non-empty")]
        };
        let entries = kinds
            .into_iter()
            .map(|k| (k, self.levels.draw(k, &mut rng)))
            .collect();
        let noise_seed = rng.random::<u64>();
        let recipe = DegradationRecipe::new(entries, noise_seed).expect("levels drawn in range");
        (src, x, y, recipe)
    }
}

fn load_corpus(clean_dir: &Path, patch: u32) -> Result<Vec<RgbImage>, DegradeError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(clean_dir)
        .map_err(|e| DegradeError::io(clean_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && imageio::is_image_path(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(DegradeError::EmptyCorpus(clean_dir.display().to_string()));
    }
    paths
        .iter()
        .map(|p| {
            let img = imageio::load_rgb(p)?;
            let (w, h) = img.dimensions();
            if w < patch || h < patch {
                return Err(DegradeError::ImageTooSmall {
                    width: w,
                    height: h,
                    required: patch,
                });
            }
            Ok(img)
        })
        .collect()
}

/// Crops patches from the clean images in `clean_dir`, degrades them, and
/// writes `lq/`, `gt/` and the manifest under `out_dir`.
pub fn generate_dataset(
    clean_dir: &Path,
    out_dir: &Path,
    config: &DatasetConfig,
) -> Result<DatasetManifest, DegradeError> {
    config.validate()?;
    let corpus = load_corpus(clean_dir, config.patch_size)?;
    for sub in ["lq", "gt"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| DegradeError::io(&d, e))?;
    }

    let records = (0..config.count)
        .into_par_iter()
        .map(|i| {
            let (src, x, y, recipe) = config.plan(i, &corpus);
            let patch =
                image::imageops::crop_imm(&corpus[src], x, y, config.patch_size, config.patch_size)
                    .to_image();
            let lq = synthesize(&patch, &recipe)?;
            let lq_rel = format!("lq/{i:06}.png");
            let gt_rel = format!("gt/{i:06}.png");
            imageio::save_png(&lq, &out_dir.join(&lq_rel))?;
            imageio::save_png(&patch, &out_dir.join(&gt_rel))?;
            Ok(ManifestRecord::from_recipe(lq_rel, gt_rel, recipe))
        })
        .collect::<Result<Vec<_>, DegradeError>>()?;

    let manifest = DatasetManifest::new(out_dir, records);
    manifest.write(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}
