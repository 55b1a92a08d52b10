use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DegradeError;

/// The four degradation families. The derived ordering is the order in
/// which [`super::synthesize`] applies them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DegradationType {
    Blur,
    Downsample,
    Noisy,
    #[serde(rename = "JPEG")]
    Jpeg,
}

impl DegradationType {
    pub const ALL: [DegradationType; 4] = [
        DegradationType::Blur,
        DegradationType::Downsample,
        DegradationType::Noisy,
        DegradationType::Jpeg,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DegradationType::Blur => "Blur",
            DegradationType::Downsample => "Downsample",
            DegradationType::Noisy => "Noisy",
            DegradationType::Jpeg => "JPEG",
        }
    }

    /// Canonical level range for this type.
    pub fn range(self) -> LevelRange {
        match self {
            DegradationType::Blur => LevelRange::new(self, 0.1, 4.0, Direction::SeverityIncreasing),
            DegradationType::Downsample => {
                LevelRange::new(self, 1.1, 7.0, Direction::SeverityIncreasing)
            }
            DegradationType::Noisy => {
                LevelRange::new(self, 1.0, 40.0, Direction::SeverityIncreasing)
            }
            DegradationType::Jpeg => {
                LevelRange::new(self, 30.0, 95.0, Direction::SeverityDecreasing)
            }
        }
    }
}

impl fmt::Display for DegradationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DegradationType {
    type Err = DegradeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "blur" => Ok(DegradationType::Blur),
            "downsample" => Ok(DegradationType::Downsample),
            "noisy" | "noise" => Ok(DegradationType::Noisy),
            "jpeg" => Ok(DegradationType::Jpeg),
            _ => Err(DegradeError::UnknownType(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    SeverityIncreasing,
    /// Larger raw values are milder (JPEG quality).
    SeverityDecreasing,
}

/// Raw parameter interval for one degradation type, with the mapping onto
/// the shared severity scale where 0 is mild and 1 is severe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRange {
    pub kind: DegradationType,
    pub min: f64,
    pub max: f64,
    pub direction: Direction,
}

impl LevelRange {
    pub const fn new(kind: DegradationType, min: f64, max: f64, direction: Direction) -> Self {
        Self {
            kind,
            min,
            max,
            direction,
        }
    }

    pub fn contains(&self, level: f64) -> bool {
        level >= self.min && level <= self.max
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    /// Raw level to severity in `[0, 1]`. Values outside the range map
    /// outside `[0, 1]`; callers validate first.
    pub fn normalize(&self, level: f64) -> f64 {
        match self.direction {
            Direction::SeverityIncreasing => (level - self.min) / self.width(),
            Direction::SeverityDecreasing => (self.max - level) / self.width(),
        }
    }

    pub fn denormalize(&self, severity: f64) -> f64 {
        match self.direction {
            Direction::SeverityIncreasing => self.min + severity * self.width(),
            Direction::SeverityDecreasing => self.max - severity * self.width(),
        }
    }

    /// `n` raw levels evenly spaced in severity from mild to severe.
    /// JPEG levels are rounded to whole quality steps.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        assert!(n >= 2, "a level grid needs at least two points");
        (0..n)
            .map(|i| {
                let raw = self.denormalize(i as f64 / (n - 1) as f64);
                if self.kind == DegradationType::Jpeg {
                    raw.round()
                } else {
                    raw
                }
            })
            .collect()
    }

    pub fn clamp(&self, level: f64) -> f64 {
        level.clamp(self.min, self.max)
    }

    pub fn check(&self, level: f64) -> Result<(), DegradeError> {
        if level.is_finite() && self.contains(level) {
            Ok(())
        } else {
            Err(DegradeError::LevelOutOfRange {
                kind: self.kind,
                level,
                min: self.min,
                max: self.max,
            })
        }
    }
}

/// Per-type degradation parameters applied to one image plus the seed for
/// the noise stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecipe", into = "RawRecipe")]
pub struct DegradationRecipe {
    entries: BTreeMap<DegradationType, f64>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct RawRecipe {
    entries: BTreeMap<DegradationType, f64>,
    seed: u64,
}

impl TryFrom<RawRecipe> for DegradationRecipe {
    type Error = DegradeError;
    fn try_from(raw: RawRecipe) -> Result<Self, DegradeError> {
        Self::new(raw.entries, raw.seed)
    }
}

impl From<DegradationRecipe> for RawRecipe {
    fn from(r: DegradationRecipe) -> Self {
        RawRecipe {
            entries: r.entries,
            seed: r.seed,
        }
    }
}

impl DegradationRecipe {
    /// Levels must be in their canonical range. The identity parameters
    /// (σ = 0, scale = 1, noise = 0) are also accepted so that no-op recipes
    /// can be expressed.
    pub fn new(entries: BTreeMap<DegradationType, f64>, seed: u64) -> Result<Self, DegradeError> {
        if entries.is_empty() {
            return Err(DegradeError::EmptyRecipe);
        }
        for (&kind, &level) in &entries {
            let identity = match kind {
                DegradationType::Blur | DegradationType::Noisy => level == 0.0,
                DegradationType::Downsample => level == 1.0,
                DegradationType::Jpeg => false,
            };
            if !identity {
                kind.range().check(level)?;
            }
        }
        Ok(Self { entries, seed })
    }

    pub fn from_pairs(pairs: &[(DegradationType, f64)], seed: u64) -> Result<Self, DegradeError> {
        Self::new(pairs.iter().copied().collect(), seed)
    }

    pub fn get(&self, kind: DegradationType) -> Option<f64> {
        self.entries.get(&kind).copied()
    }

    pub fn contains(&self, kind: DegradationType) -> bool {
        self.entries.contains_key(&kind)
    }

    pub fn entries(&self) -> &BTreeMap<DegradationType, f64> {
        &self.entries
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
