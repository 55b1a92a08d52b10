//! Composition ordinal embedding space: sinusoidal level codes added to
//! per-type anchor directions and learnable per-bin shifts, arranged into
//! bin grids with spherical interpolation between bins.

use std::collections::BTreeMap;
use std::io::Write;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degrade::DegradationType;
use crate::numerics::{self, cosine_similarity, normalize, slerp, NumericsError};

pub const DEFAULT_DIM: usize = 512;
pub const DEFAULT_FREQ_BASE: f64 = 10_000.0;
pub const DEFAULT_GAP: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrdSpaceError {
    #[error("severity {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("{kind} level {level} outside its range")]
    LevelOutOfRange { kind: DegradationType, level: f64 },
    #[error("gap must be in (0, 100], got {0}")]
    InvalidGap(f64),
    #[error("invalid encoder spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, OrdSpaceError>;

/// Dimension and frequency base of the sinusoidal level code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrdinalEncoderSpec {
    pub d: usize,
    pub f: f64,
}

impl Default for OrdinalEncoderSpec {
    fn default() -> Self {
        Self {
            d: DEFAULT_DIM,
            f: DEFAULT_FREQ_BASE,
        }
    }
}

impl OrdinalEncoderSpec {
    pub fn new(d: usize, f: f64) -> Result<Self> {
        let spec = Self { d, f };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 8 || !self.d.is_multiple_of(2) {
            return Err(OrdSpaceError::InvalidSpec(format!(
                "d must be even and at least 8, got {}",
                self.d
            )));
        }
        if !(self.f > 1.0) || !self.f.is_finite() {
            return Err(OrdSpaceError::InvalidSpec(format!(
                "f must be a finite real above 1, got {}",
                self.f
            )));
        }
        Ok(())
    }
}

/// `o[j] = cos(s * f^(-j/d))` for even `j`, `sin(s * f^(-j/d))` for odd `j`.
pub fn ordinal_embedding(spec: &OrdinalEncoderSpec, level_norm: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&level_norm) {
        return Err(OrdSpaceError::OutOfRange(level_norm));
    }
    let d = spec.d as f64;
    Ok((0..spec.d)
        .map(|j| {
            let arg = level_norm * spec.f.powf(-(j as f64) / d);
            if j % 2 == 0 {
                arg.cos()
            } else {
                arg.sin()
            }
        })
        .collect())
}

/// Fixed unit direction per degradation type, indexed by `DegradationType::index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeAnchors {
    pub vectors: Vec<Vec<f64>>,
}

impl TypeAnchors {
    /// Gram-Schmidt over seeded Gaussian draws, so the four anchors are
    /// mutually orthogonal unit vectors.
    pub fn generate(seed: u64, d: usize) -> Result<Self> {
        if d < DegradationType::ALL.len() {
            return Err(OrdSpaceError::InvalidSpec(format!(
                "d = {d} cannot hold four orthogonal anchors"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(4);
        while vectors.len() < DegradationType::ALL.len() {
            let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            for u in &vectors {
                let c = numerics::dot(&v, u);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
            if numerics::norm(&v) > 1e-6 {
                vectors.push(normalize(&v)?);
            }
        }
        Ok(Self { vectors })
    }

    pub fn get(&self, kind: DegradationType) -> &[f64] {
        &self.vectors[kind.index()]
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

/// Number of bins for a gap on the 0-100 severity scale.
pub fn bin_count(gap: f64) -> Result<usize> {
    if !(gap > 0.0 && gap <= 100.0) {
        return Err(OrdSpaceError::InvalidGap(gap));
    }
    // tolerate gaps like 100/3 whose quotient lands a hair under an integer
    Ok((100.0 / gap + 1e-9).floor() as usize + 1)
}

/// Normalized severities of the bins for `gap`.
pub fn bin_severities(gap: f64) -> Result<Vec<f64>> {
    let n = bin_count(gap)?;
    Ok((0..n).map(|i| (i as f64 * gap / 100.0).min(1.0)).collect())
}

/// Learnable offsets, one vector per (type, bin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftTable {
    pub shifts: BTreeMap<DegradationType, Vec<Vec<f64>>>,
}

impl ShiftTable {
    pub fn zeros(d: usize, bins: usize) -> Self {
        Self {
            shifts: DegradationType::ALL
                .into_iter()
                .map(|t| (t, vec![vec![0.0; d]; bins]))
                .collect(),
        }
    }

    pub fn for_type(&self, kind: DegradationType) -> &[Vec<f64>] {
        &self.shifts[&kind]
    }

    pub fn for_type_mut(&mut self, kind: DegradationType) -> &mut [Vec<f64>] {
        self.shifts.get_mut(&kind).expect("table covers every type")
    }

    pub fn validate(&self, d: usize, bins: usize) -> Result<()> {
        for t in DegradationType::ALL {
            let rows = self
                .shifts
                .get(&t)
                .ok_or_else(|| OrdSpaceError::ShapeMismatch(format!("no shifts for {t}")))?;
            if rows.len() != bins || rows.iter().any(|r| r.len() != d) {
                return Err(OrdSpaceError::ShapeMismatch(format!(
                    "{t} shifts are not {bins} x {d}"
                )));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(NumericsError::NonFinite.into());
            }
        }
        Ok(())
    }
}

/// `anchor + o(severity) + shift`.
pub fn compose_bin(
    anchor: &[f64],
    spec: &OrdinalEncoderSpec,
    level_norm: f64,
    shift: &[f64],
) -> Result<Vec<f64>> {
    if anchor.len() != spec.d || shift.len() != spec.d {
        return Err(OrdSpaceError::ShapeMismatch(format!(
            "anchor {} / shift {} vs d {}",
            anchor.len(),
            shift.len(),
            spec.d
        )));
    }
    let o = ordinal_embedding(spec, level_norm)?;
    Ok(anchor
        .iter()
        .zip(&o)
        .zip(shift)
        .map(|((a, o), s)| a + o + s)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    /// Raw level in the type's native units.
    pub level: f64,
    pub level_norm: f64,
    /// Unnormalized composition embedding.
    pub center: Vec<f64>,
}

/// Where a severity falls between two bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: usize,
    pub hi: usize,
    /// Fraction from `lo` to `hi`; zero when `lo == hi`.
    pub t: f64,
}

/// Ordered bins of one degradation type.
#[derive(Debug, Clone, PartialEq)]
pub struct BinGrid {
    pub kind: DegradationType,
    pub gap: f64,
    pub spec: OrdinalEncoderSpec,
    pub bins: Vec<Bin>,
}

#[derive(Serialize)]
struct GridDumpBin {
    level: f64,
    level_norm: f64,
}

#[derive(Serialize)]
struct GridDump {
    #[serde(rename = "type")]
    kind: DegradationType,
    gap: f64,
    bins: Vec<GridDumpBin>,
    d: usize,
    f: f64,
}

impl BinGrid {
    /// Bins at arbitrary raw levels, sorted by severity. `shifts` pairs with
    /// the sorted order.
    pub fn from_levels(
        kind: DegradationType,
        spec: &OrdinalEncoderSpec,
        anchor: &[f64],
        levels: &[f64],
        shifts: &[Vec<f64>],
        gap: f64,
    ) -> Result<Self> {
        if levels.len() < 2 || shifts.len() != levels.len() {
            return Err(OrdSpaceError::ShapeMismatch(format!(
                "{} levels, {} shifts",
                levels.len(),
                shifts.len()
            )));
        }
        let range = kind.range();
        let mut norms = Vec::with_capacity(levels.len());
        for &l in levels {
            if !range.contains(l) {
                return Err(OrdSpaceError::LevelOutOfRange { kind, level: l });
            }
            norms.push((l, range.normalize(l)));
        }
        norms.sort_by(|a, b| a.1.total_cmp(&b.1));
        if norms.windows(2).any(|w| w[1].1 <= w[0].1) {
            return Err(OrdSpaceError::ShapeMismatch("duplicate bin levels".into()));
        }
        let bins = norms
            .into_iter()
            .zip(shifts)
            .map(|((level, level_norm), shift)| {
                Ok(Bin {
                    level,
                    level_norm,
                    center: compose_bin(anchor, spec, level_norm, shift)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            gap,
            spec: *spec,
            bins,
        })
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn levels(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.level).collect()
    }

    pub fn severities(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.level_norm).collect()
    }

    /// Bracketing bins for a severity. Severities past the last bin (when
    /// the gap does not divide 100) clamp to it.
    pub fn bracket(&self, level_norm: f64) -> Result<Bracket> {
        if !(0.0..=1.0).contains(&level_norm) {
            return Err(OrdSpaceError::OutOfRange(level_norm));
        }
        let n = self.bins.len();
        let first = self.bins[0].level_norm;
        let last = self.bins[n - 1].level_norm;
        if level_norm <= first {
            return Ok(Bracket {
                lo: 0,
                hi: 0,
                t: 0.0,
            });
        }
        if level_norm >= last {
            return Ok(Bracket {
                lo: n - 1,
                hi: n - 1,
                t: 0.0,
            });
        }
        let hi = self.bins.partition_point(|b| b.level_norm < level_norm);
        if self.bins[hi].level_norm == level_norm {
            return Ok(Bracket { lo: hi, hi, t: 0.0 });
        }
        let lo = hi - 1;
        let a = self.bins[lo].level_norm;
        let b = self.bins[hi].level_norm;
        Ok(Bracket {
            lo,
            hi,
            t: (level_norm - a) / (b - a),
        })
    }

    /// Unit target for a severity on the shared scale.
    pub fn target_at_severity(&self, level_norm: f64) -> Result<Vec<f64>> {
        let br = self.bracket(level_norm)?;
        if br.lo == br.hi {
            return Ok(normalize(&self.bins[br.lo].center)?);
        }
        Ok(slerp(
            &self.bins[br.lo].center,
            &self.bins[br.hi].center,
            br.t,
        )?)
    }

    /// Cosine similarity between every pair of bin centers.
    pub fn similarity_matrix(&self) -> Result<Vec<Vec<f64>>> {
        self.bins
            .iter()
            .map(|a| {
                self.bins
                    .iter()
                    .map(|b| Ok(cosine_similarity(&a.center, &b.center)?))
                    .collect()
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let dump = GridDump {
            kind: self.kind,
            gap: self.gap,
            bins: self
                .bins
                .iter()
                .map(|b| GridDumpBin {
                    level: b.level,
                    level_norm: b.level_norm,
                })
                .collect(),
            d: self.spec.d,
            f: self.spec.f,
        };
        serde_json::to_string_pretty(&dump).expect("grid dump serializes")
    }

    /// One row per bin: `level, level_norm, c0 .. c{d-1}`.
    pub fn write_centers_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["level".to_string(), "level_norm".to_string()];
        header.extend((0..self.spec.d).map(|j| format!("c{j}")));
        w.write_record(&header)?;
        for b in &self.bins {
            let mut row = vec![b.level.to_string(), b.level_norm.to_string()];
            row.extend(b.center.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Bins at severities `0, gap/100, 2 gap/100, ...` for one type.
pub fn build_bin_grid(
    kind: DegradationType,
    spec: &OrdinalEncoderSpec,
    anchors: &TypeAnchors,
    shifts: &ShiftTable,
    gap: f64,
) -> Result<BinGrid> {
    let sev = bin_severities(gap)?;
    let rows = shifts.for_type(kind);
    if rows.len() != sev.len() {
        return Err(OrdSpaceError::ShapeMismatch(format!(
            "{} shifts for {} bins",
            rows.len(),
            sev.len()
        )));
    }
    let range = kind.range();
    let anchor = anchors.get(kind);
    let bins = sev
        .into_iter()
        .zip(rows)
        .map(|(s, shift)| {
            Ok(Bin {
                level: range.denormalize(s),
                level_norm: s,
                center: compose_bin(anchor, spec, s, shift)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BinGrid {
        kind,
        gap,
        spec: *spec,
        bins,
    })
}

/// Unit target for a raw `level` of the grid's type.
pub fn slerp_target(grid: &BinGrid, level: f64) -> Result<Vec<f64>> {
    let range = grid.kind.range();
    if !range.contains(level) {
        return Err(OrdSpaceError::LevelOutOfRange {
            kind: grid.kind,
            level,
        });
    }
    grid.target_at_severity(range.normalize(level))
}

/// Everything that defines the text side: code spec, gap, anchors, shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalSpace {
    pub spec: OrdinalEncoderSpec,
    pub gap: f64,
    pub anchors: TypeAnchors,
    pub shifts: ShiftTable,
}

impl OrdinalSpace {
    /// Fresh space with seeded anchors and zero shifts.
    pub fn new(spec: OrdinalEncoderSpec, gap: f64, anchor_seed: u64) -> Result<Self> {
        spec.validate()?;
        let bins = bin_count(gap)?;
        Ok(Self {
            spec,
            gap,
            anchors: TypeAnchors::generate(anchor_seed, spec.d)?,
            shifts: ShiftTable::zeros(spec.d, bins),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let bins = bin_count(self.gap)?;
        if self.anchors.vectors.len() != DegradationType::ALL.len()
            || self.anchors.vectors.iter().any(|a| a.len() != self.spec.d)
        {
            return Err(OrdSpaceError::ShapeMismatch("anchors".into()));
        }
        self.shifts.validate(self.spec.d, bins)
    }

    pub fn grid(&self, kind: DegradationType) -> Result<BinGrid> {
        build_bin_grid(kind, &self.spec, &self.anchors, &self.shifts, self.gap)
    }

    /// Grids for all four types, indexed by `DegradationType::index`.
    pub fn grids(&self) -> Result<Vec<BinGrid>> {
        DegradationType::ALL.iter().map(|&t| self.grid(t)).collect()
    }
}
