//! Threshold-free ranking metrics: AUROC and AUPR.
//!
//! Scores are uncertainties; the reject class ("positives") is expected
//! to score higher.

use crate::error::{Error, Result};

/// Sum of doubled midranks (1-based) of the positive samples, in exact
/// integer arithmetic.
fn doubled_positive_rank_sum(neg: &[f64], pos: &[f64]) -> u128 {
    let mut all: Vec<(f64, bool)> = neg
        .iter()
        .map(|&s| (s, false))
        .chain(pos.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut sum = 0u128;
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // positions i..j share the midrank ((i + 1) + j) / 2
        let twice_mid = (i + 1 + j) as u128;
        let n_pos = all[i..j].iter().filter(|x| x.1).count() as u128;
        sum += twice_mid * n_pos;
        i = j;
    }
    sum
}

/// `P(pos > neg) + 0.5 · P(pos = neg)` over all cross pairs (Mann–Whitney
/// U with midranks). Exact rational arithmetic until the final division;
/// `auroc(a, b) + auroc(b, a) == 1.0` holds bit-exactly.
pub fn auroc(neg: &[f64], pos: &[f64]) -> Result<f64> {
    if neg.is_empty() {
        return Err(Error::EmptyClass("accept class".into()));
    }
    if pos.is_empty() {
        return Err(Error::EmptyClass("reject class".into()));
    }
    let (m, n) = (neg.len() as u128, pos.len() as u128);
    // 2U = 2R - n(n + 1); all quantities are integers.
    let twice_u = doubled_positive_rank_sum(neg, pos) - n * (n + 1);
    let denom = 2 * m * n;
    // Evaluate the side at or below one half directly and mirror the other,
    // so swapping the classes yields exactly the complement.
    if 2 * twice_u <= denom {
        Ok(twice_u as f64 / denom as f64)
    } else {
        Ok(1.0 - (denom - twice_u) as f64 / denom as f64)
    }
}

/// Average precision with the reject class as positive. Thresholds sweep
/// the distinct scores in descending order; tied samples enter together,
/// and each recall increment is weighted by the precision at that
/// threshold, so the segment from recall 0 uses the first precision.
pub fn aupr(neg: &[f64], pos: &[f64]) -> Result<f64> {
    if neg.is_empty() {
        return Err(Error::EmptyClass("accept class".into()));
    }
    if pos.is_empty() {
        return Err(Error::EmptyClass("reject class".into()));
    }
    let mut all: Vec<(f64, bool)> = neg
        .iter()
        .map(|&s| (s, false))
        .chain(pos.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total_pos = pos.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / total_pos;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}
