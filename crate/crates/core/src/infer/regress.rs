use serde::{Deserialize, Serialize};

use crate::numerics::{cosine_similarity, softmax, NumericsError};
use crate::ordspace::BinGrid;

/// How many of the most similar bins take part in the level estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopK {
    Count(usize),
    All,
}

impl TopK {
    pub fn resolve(self, bins: usize) -> usize {
        match self {
            TopK::Count(k) => k.min(bins),
            TopK::All => bins,
        }
    }
}

impl Default for TopK {
    fn default() -> Self {
        TopK::Count(2)
    }
}

impl std::fmt::Display for TopK {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TopK::Count(k) => write!(f, "{k}"),
            TopK::All => f.write_str("all"),
        }
    }
}

impl std::str::FromStr for TopK {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(TopK::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(TopK::Count(k)),
            _ => Err(format!(
                "top-k must be a positive integer or \"all\", got {s:?}"
            )),
        }
    }
}

// serialized as a number or the string "all"
impl Serialize for TopK {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TopK::Count(k) => s.serialize_u64(*k as u64),
            TopK::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for TopK {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(0) => Err(serde::de::Error::custom("top-k must be at least 1")),
            Raw::N(k) => Ok(TopK::Count(k as usize)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Indices of the `k` largest scores, best first; ties keep the lower index.
pub fn top_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Severity estimate: softmax over the top-k cosine similarities (divided
/// by `tau_w`) weighting the bins' normalized levels.
pub fn interpolate_level(
    emb: &[f64],
    grid: &BinGrid,
    k: TopK,
    tau_w: f64,
) -> Result<f64, NumericsError> {
    let sims = grid
        .bins
        .iter()
        .map(|b| cosine_similarity(emb, &b.center))
        .collect::<Result<Vec<_>, _>>()?;
    let top = top_indices(&sims, k.resolve(grid.len()));
    let picked: Vec<f64> = top.iter().map(|&i| sims[i]).collect();
    let w = softmax(&picked, tau_w)?;
    Ok(top
        .iter()
        .zip(&w)
        .map(|(&i, wi)| wi * grid.bins[i].level_norm)
        .sum())
}
