//! Risk–coverage curve and its area (AURC).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCoveragePoint {
    pub coverage: f64,
    pub risk: f64,
    /// Confidence of the last sample admitted at this point.
    pub theta: f64,
}

/// Admits samples in order of decreasing confidence (ties by input index)
/// and records one point per admitted sample: coverage `(i+1)/n` and the
/// fraction of admitted samples that are not correct.
pub fn risk_coverage_curve(confidence: &[f64], correct: &[bool]) -> Result<Vec<RiskCoveragePoint>> {
    if confidence.len() != correct.len() {
        return Err(Error::LengthMismatch {
            left: confidence.len(),
            right: correct.len(),
        });
    }
    if confidence.is_empty() {
        return Err(Error::EmptyInput("risk-coverage curve".into()));
    }
    let n = confidence.len();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal confidences keep input order
    order.sort_by(|&a, &b| confidence[b].total_cmp(&confidence[a]));
    let mut wrong = 0usize;
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, idx)| {
            if !correct[idx] {
                wrong += 1;
            }
            RiskCoveragePoint {
                coverage: (i + 1) as f64 / n as f64,
                risk: wrong as f64 / (i + 1) as f64,
                theta: confidence[idx],
            }
        })
        .collect())
}

/// Mean risk over the curve's points, scaled by 1000.
pub fn aurc(curve: &[RiskCoveragePoint]) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::EmptyInput("aurc".into()));
    }
    let mean = super::neumaier_sum(curve.iter().map(|p| p.risk)) / curve.len() as f64;
    Ok(1000.0 * mean)
}
