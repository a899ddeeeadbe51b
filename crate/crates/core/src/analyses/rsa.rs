//! Representational similarity analysis on condensed cosine RDMs.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlcore::stats::spearman_rho;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaResult {
    pub representation: String,
    pub rho_abstract: f64,
    pub rho_concrete: f64,
}

/// Upper-triangular cosine distances, pairs `(i, j)` with `i < j` in row-major order.
pub fn compute_rdm(x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let norms: Vec<f64> = x
        .axis_iter(Axis(0))
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(row) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroNorm(row));
    }
    let n = x.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let dot: f64 = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| a * b).sum();
            out.push((1.0 - dot / (norms[i] * norms[j])).clamp(0.0, 2.0));
        }
    }
    Ok(out)
}

/// Spearman correlation of two condensed RDMs over the same items.
pub fn rsa_correlate(rdm_a: &[f64], rdm_b: &[f64]) -> Result<f64> {
    spearman_rho(rdm_a, rdm_b)
}

/// RSA computed separately within the abstract items and within the concrete
/// items; cross-class pairs are not used. `labels` are class signs.
pub fn rsa_by_class(
    representation: &str,
    brain: ArrayView2<'_, f64>,
    model: ArrayView2<'_, f64>,
    labels: &[f64],
) -> Result<RsaResult> {
    if brain.nrows() != model.nrows() || brain.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "rsa rows".into(),
            expected: brain.nrows(),
            found: model.nrows().min(labels.len()),
        });
    }
    let within = |sign: f64| -> Result<f64> {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == sign).collect();
        let a = compute_rdm(brain.select(Axis(0), &idx).view())?;
        let b = compute_rdm(model.select(Axis(0), &idx).view())?;
        rsa_correlate(&a, &b)
    };
    Ok(RsaResult {
        representation: representation.to_string(),
        rho_abstract: within(-1.0)?,
        rho_concrete: within(1.0)?,
    })
}
