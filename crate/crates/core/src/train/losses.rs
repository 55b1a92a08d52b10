//! Forward-only loss terms. These are the reference definitions; the
//! gradient code in `objective` is checked against them.

use crate::numerics::{cosine_similarity, norm, NumericsError};

/// Batch mean of the per-sample Euclidean distance between predicted and
/// ground-truth presence vectors.
pub fn loss_conf(preds: &[[f64; 4]], gts: &[[f64; 4]]) -> Result<f64, NumericsError> {
    if preds.len() != gts.len() {
        return Err(NumericsError::LengthMismatch {
            left: preds.len(),
            right: gts.len(),
        });
    }
    if preds.is_empty() {
        return Err(NumericsError::EmptyInput);
    }
    let total: f64 = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| {
            let diff: Vec<f64> = p.iter().zip(g).map(|(a, b)| a - b).collect();
            norm(&diff)
        })
        .sum();
    Ok(total / preds.len() as f64)
}

/// Batch mean over samples of the summed absolute severity errors of the
/// active types. Each sample lists `(predicted, ground truth)` pairs.
pub fn loss_level(samples: &[Vec<(f64, f64)>]) -> Result<f64, NumericsError> {
    if samples.is_empty() {
        return Err(NumericsError::EmptyInput);
    }
    let total: f64 = samples
        .iter()
        .map(|s| s.iter().map(|(p, g)| (p - g).abs()).sum::<f64>())
        .sum();
    Ok(total / samples.len() as f64)
}

/// Negative weights from severity distances, scaled by the largest distance
/// from the same anchor; all zero when every other sample shares its level.
pub fn negative_weights(severities: &[f64]) -> Vec<Vec<f64>> {
    let m = severities.len();
    (0..m)
        .map(|i| {
            let d: Vec<f64> = (0..m)
                .map(|j| (severities[i] - severities[j]).abs())
                .collect();
            let max = (0..m).filter(|&j| j != i).map(|j| d[j]).fold(0.0, f64::max);
            d.iter()
                .enumerate()
                .map(|(j, &v)| if j == i || max == 0.0 { 0.0 } else { v / max })
                .collect()
        })
        .collect()
}

/// Contrastive loss between image embeddings `z` and their targets `w`,
/// with every other target in the batch as an ordinally weighted negative.
pub fn loss_scl(
    z: &[Vec<f64>],
    w: &[Vec<f64>],
    severities: &[f64],
    tau: f64,
) -> Result<f64, NumericsError> {
    let m = z.len();
    if m == 0 {
        return Err(NumericsError::EmptyInput);
    }
    if w.len() != m || severities.len() != m {
        return Err(NumericsError::LengthMismatch {
            left: m,
            right: w.len().min(severities.len()),
        });
    }
    if !(tau > 0.0) {
        return Err(NumericsError::NonPositiveTemperature(tau));
    }
    let lambda = negative_weights(severities);
    let mut total = 0.0;
    for i in 0..m {
        let pos = (cosine_similarity(&z[i], &w[i])? / tau).exp();
        let mut denom = pos;
        for j in (0..m).filter(|&j| j != i) {
            denom += lambda[i][j] * (cosine_similarity(&z[i], &w[j])? / tau).exp();
        }
        total -= (pos / denom).ln();
    }
    Ok(total / m as f64)
}
