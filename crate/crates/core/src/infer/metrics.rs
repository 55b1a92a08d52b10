use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Estimates, InferError};
use crate::degrade::{DegradationType, ManifestRecord};
use crate::numerics::{pearson, spearman, NumericsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    /// Records where this type is active.
    pub count: usize,
    /// Percent of all records where this type's presence is called right.
    pub detect_acc: f64,
    /// Raw level units; `None` when `count` is 0.
    pub mae: Option<f64>,
    pub mae_norm: Option<f64>,
    /// `None` when fewer than two pairs or either side is constant.
    pub srocc: Option<f64>,
    pub pcc: Option<f64>,
}

/// Scores over a labelled set. Level errors and correlations use every
/// record where the type is active, detected or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records: usize,
    /// Percent of records whose detected type set equals the labelled set.
    pub type_acc: f64,
    /// Macro average over types with at least one active record.
    pub mae: f64,
    pub mae_norm: f64,
    /// Macro average over types where the correlation is defined.
    pub srocc: Option<f64>,
    pub pcc: Option<f64>,
    pub per_type: BTreeMap<DegradationType, TypeMetrics>,
}

fn defined(r: Result<f64, NumericsError>) -> Result<Option<f64>, InferError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(NumericsError::ConstantInput) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn score(
    records: &[ManifestRecord],
    estimates: &[Estimates],
    threshold: f64,
) -> Result<MetricsReport, InferError> {
    if records.is_empty() {
        return Err(InferError::EmptyDataset);
    }
    if records.len() != estimates.len() {
        return Err(NumericsError::LengthMismatch {
            left: records.len(),
            right: estimates.len(),
        }
        .into());
    }
    let n = records.len() as f64;
    let exact = records
        .iter()
        .zip(estimates)
        .filter(|(r, e)| {
            DegradationType::ALL
                .iter()
                .all(|&t| r.is_active(t) == (e[t.index()].conf >= threshold))
        })
        .count();

    let mut per_type = BTreeMap::new();
    for t in DegradationType::ALL {
        let range = t.range();
        let detected = records
            .iter()
            .zip(estimates)
            .filter(|(r, e)| r.is_active(t) == (e[t.index()].conf >= threshold))
            .count();
        let pairs: Vec<(f64, f64, f64)> = records
            .iter()
            .zip(estimates)
            .filter_map(|(r, e)| {
                let gt = *r.level_gt.get(&t)?;
                let p = e[t.index()].level_norm;
                Some((p, range.normalize(gt), gt))
            })
            .collect();
        let pred: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let gt: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (srocc, pcc) = if pairs.len() >= 2 {
            (
                defined(spearman(&pred, &gt))?,
                defined(pearson(&pred, &gt))?,
            )
        } else {
            (None, None)
        };
        per_type.insert(
            t,
            TypeMetrics {
                count: pairs.len(),
                detect_acc: 100.0 * detected as f64 / n,
                mae: mean(
                    pairs
                        .iter()
                        .map(|&(p, _, raw)| (range.denormalize(p) - raw).abs()),
                ),
                mae_norm: mean(pairs.iter().map(|&(p, g, _)| (p - g).abs())),
                srocc,
                pcc,
            },
        );
    }
    let mae = mean(per_type.values().filter_map(|m| m.mae)).ok_or(InferError::EmptyDataset)?;
    let mae_norm = mean(per_type.values().filter_map(|m| m.mae_norm)).unwrap_or(0.0);
    Ok(MetricsReport {
        records: records.len(),
        type_acc: 100.0 * exact as f64 / n,
        mae,
        mae_norm,
        srocc: mean(per_type.values().filter_map(|m| m.srocc)),
        pcc: mean(per_type.values().filter_map(|m| m.pcc)),
        per_type,
    })
}

impl MetricsReport {
    /// Range checks on every field.
    pub fn validate(&self) -> Result<(), String> {
        let pct = |v: f64| (0.0..=100.0).contains(&v);
        let corr = |v: Option<f64>| v.is_none_or(|c| (-1.0..=1.0).contains(&c));
        let nonneg = |v: Option<f64>| v.is_none_or(|x| x >= 0.0 && x.is_finite());
        if self.records == 0 || !pct(self.type_acc) {
            return Err(format!(
                "type_acc {} over {} records",
                self.type_acc, self.records
            ));
        }
        if !nonneg(Some(self.mae))
            || !nonneg(Some(self.mae_norm))
            || !corr(self.srocc)
            || !corr(self.pcc)
        {
            return Err("aggregate metric out of range".into());
        }
        if self.per_type.len() != 4 {
            return Err(format!("{} per-type entries", self.per_type.len()));
        }
        for (t, m) in &self.per_type {
            let levels = m.mae.is_some() && m.mae_norm.is_some();
            if !pct(m.detect_acc)
                || !nonneg(m.mae)
                || !nonneg(m.mae_norm)
                || !corr(m.srocc)
                || !corr(m.pcc)
                || levels != (m.count > 0)
            {
                return Err(format!("{t} metrics out of range"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per type plus a `macro` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scope", "count", "type_acc", "mae", "mae_norm", "srocc", "pcc",
        ])?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (t, m) in &self.per_type {
            w.write_record([
                t.name().to_string(),
                m.count.to_string(),
                m.detect_acc.to_string(),
                cell(m.mae),
                cell(m.mae_norm),
                cell(m.srocc),
                cell(m.pcc),
            ])?;
        }
        w.write_record([
            "macro".to_string(),
            self.records.to_string(),
            self.type_acc.to_string(),
            self.mae.to_string(),
            self.mae_norm.to_string(),
            cell(self.srocc),
            cell(self.pcc),
        ])?;
        w.flush()?;
        Ok(())
    }
}
