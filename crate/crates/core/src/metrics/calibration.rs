//! Expected calibration error over equal-width confidence bins.

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 15;

/// Bin owning confidence `c`: bin `b` covers `(b/n, (b+1)/n]`, and 0 goes
/// to the first bin. Edges are the rounded values of `b/n`.
pub fn bin_index(c: f64, n_bins: usize) -> usize {
    let n = n_bins as f64;
    let mut b = ((c * n).ceil() as usize).saturating_sub(1).min(n_bins - 1);
    while b > 0 && c <= b as f64 / n {
        b -= 1;
    }
    while b + 1 < n_bins && c > (b + 1) as f64 / n {
        b += 1;
    }
    b
}

/// `Σ_b (|B_b| / n) · |acc(B_b) − conf(B_b)|`; empty bins contribute 0.
pub fn ece(confidence: &[f64], correct: &[bool], n_bins: usize) -> Result<f64> {
    if confidence.len() != correct.len() {
        return Err(Error::LengthMismatch {
            left: confidence.len(),
            right: correct.len(),
        });
    }
    if confidence.is_empty() {
        return Err(Error::EmptyInput("ece".into()));
    }
    if n_bins == 0 {
        return Err(Error::InvalidParameter("n_bins must be >= 1".into()));
    }
    if let Some(c) = confidence.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::OutOfRange(format!("confidence {c} outside [0, 1]")));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, &c) in confidence.iter().enumerate() {
        members[bin_index(c, n_bins)].push(i);
    }
    let n = confidence.len() as f64;
    let gaps = members.iter().filter(|m| !m.is_empty()).map(|m| {
        let size = m.len() as f64;
        let acc = m.iter().filter(|&&i| correct[i]).count() as f64 / size;
        let conf = super::neumaier_sum(m.iter().map(|&i| confidence[i])) / size;
        (size / n) * (acc - conf).abs()
    });
    Ok(super::neumaier_sum(gaps))
}
