//! Post-hoc uncertainty scorers over logits.
//!
//! Every scorer emits "higher = more uncertain". Softmax-based scorers take
//! a [`Temperature`]; logits are divided by it before normalization.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::{FeatureMatrix, LabelVector};

/// Softmax temperature, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t > 0.0 {
            Ok(Self(t))
        } else {
            Err(Error::InvalidParameter(format!("temperature must be > 0, got {t}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Self(1.0)
    }
}

/// Per-sample uncertainty scores plus the scorer that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub scorer_id: String,
    pub params: BTreeMap<String, f64>,
}

impl ScoreVector {
    pub fn new(scorer_id: impl Into<String>, scores: Vec<f64>) -> Self {
        Self {
            scores,
            scorer_id: scorer_id.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn select(&self, indices: &[usize]) -> ScoreVector {
        ScoreVector {
            scores: indices.iter().map(|&i| self.scores[i]).collect(),
            scorer_id: self.scorer_id.clone(),
            params: self.params.clone(),
        }
    }

    /// Appends `other`'s scores, keeping this vector's provenance.
    pub fn concat(mut self, other: &ScoreVector) -> ScoreVector {
        self.scores.extend_from_slice(&other.scores);
        self
    }
}

fn row_max(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Temperature-scaled softmax, shifted by the row maximum.
pub fn softmax(logits_row: &[f64], t: Temperature) -> Vec<f64> {
    let t = t.get();
    let m = row_max(logits_row);
    let mut out: Vec<f64> = logits_row.iter().map(|&x| ((x - m) / t).exp()).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

/// Log-softmax via log-sum-exp.
pub fn log_softmax(logits_row: &[f64], t: Temperature) -> Vec<f64> {
    let t = t.get();
    let m = row_max(logits_row);
    let shifted: Vec<f64> = logits_row.iter().map(|&x| (x - m) / t).collect();
    let lse = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    shifted.into_iter().map(|s| s - lse).collect()
}

fn msp_row(row: &[f64], t: Temperature) -> f64 {
    1.0 - row_max(&softmax(row, t))
}

fn entropy_row(row: &[f64], t: Temperature) -> f64 {
    let h: f64 = log_softmax(row, t)
        .into_iter()
        .map(|lp| {
            let p = lp.exp();
            if p > 0.0 {
                -p * lp
            } else {
                0.0
            }
        })
        .sum();
    h.max(0.0)
}

fn energy_row(row: &[f64], t: Temperature) -> f64 {
    let t = t.get();
    let m = row_max(row);
    let lse = row.iter().map(|&x| ((x - m) / t).exp()).sum::<f64>().ln();
    -(m + t * lse)
}

fn gini_row(row: &[f64], t: Temperature) -> f64 {
    1.0 - softmax(row, t).iter().map(|p| p * p).sum::<f64>()
}

fn map_rows(logits: &FeatureMatrix, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
    (0..logits.rows())
        .into_par_iter()
        .map(|i| f(&logits.row_f64(i)))
        .collect()
}

/// `1 - max softmax(row / t)`.
pub fn msp_score(logits: &FeatureMatrix, t: Temperature) -> ScoreVector {
    ScoreVector::new("msp", map_rows(logits, |r| msp_row(r, t))).with_param("temperature", t.get())
}

/// Shannon entropy (natural log) of the tempered softmax.
pub fn entropy_score(logits: &FeatureMatrix, t: Temperature) -> ScoreVector {
    ScoreVector::new("entropy", map_rows(logits, |r| entropy_row(r, t)))
        .with_param("temperature", t.get())
}

/// Negated maximum logit.
pub fn maxlogit_score(logits: &FeatureMatrix) -> ScoreVector {
    ScoreVector::new("maxlogit", map_rows(logits, |r| -row_max(r)))
}

/// Free energy `-t * logsumexp(row / t)`.
pub fn energy_score(logits: &FeatureMatrix, t: Temperature) -> ScoreVector {
    ScoreVector::new("energy", map_rows(logits, |r| energy_row(r, t)))
        .with_param("temperature", t.get())
}

/// Gini impurity `1 - sum p^2` of the tempered softmax.
pub fn gini_score(logits: &FeatureMatrix, t: Temperature) -> ScoreVector {
    ScoreVector::new("gini", map_rows(logits, |r| gini_row(r, t))).with_param("temperature", t.get())
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predictions_from_logits(logits: &FeatureMatrix) -> LabelVector {
    let preds = (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best as i64
        })
        .collect();
    LabelVector(preds)
}

/// Logit-space scorers selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogitScorer {
    Msp,
    Entropy,
    MaxLogit,
    Energy,
    Gini,
}

impl LogitScorer {
    pub const ALL: [LogitScorer; 5] = [
        LogitScorer::Msp,
        LogitScorer::Entropy,
        LogitScorer::MaxLogit,
        LogitScorer::Energy,
        LogitScorer::Gini,
    ];

    pub fn id(self) -> &'static str {
        match self {
            LogitScorer::Msp => "msp",
            LogitScorer::Entropy => "entropy",
            LogitScorer::MaxLogit => "maxlogit",
            LogitScorer::Energy => "energy",
            LogitScorer::Gini => "gini",
        }
    }

    pub fn score(self, logits: &FeatureMatrix, t: Temperature) -> ScoreVector {
        match self {
            LogitScorer::Msp => msp_score(logits, t),
            LogitScorer::Entropy => entropy_score(logits, t),
            LogitScorer::MaxLogit => maxlogit_score(logits),
            LogitScorer::Energy => energy_score(logits, t),
            LogitScorer::Gini => gini_score(logits, t),
        }
    }
}

impl fmt::Display for LogitScorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for LogitScorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "msp" | "softmax" => Ok(LogitScorer::Msp),
            "entropy" => Ok(LogitScorer::Entropy),
            "maxlogit" | "maxlogits" => Ok(LogitScorer::MaxLogit),
            "energy" => Ok(LogitScorer::Energy),
            "gini" | "doctor" => Ok(LogitScorer::Gini),
            other => Err(Error::InvalidParameter(format!("unknown logit scorer {other:?}"))),
        }
    }
}

/// Max-probability confidence per row, the calibration input.
pub fn max_probability(logits: &FeatureMatrix, t: Temperature) -> Vec<f64> {
    map_rows(logits, |r| row_max(&softmax(r, t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: f64) -> Temperature {
        Temperature::new(v).unwrap()
    }

    fn one(row: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&[row.to_vec()]).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0], t(1.0)), vec![0.5, 0.5]);
        for a in [-7.0, 0.0, 3.5] {
            for p in softmax(&[a, a, a], t(0.3)) {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let a = softmax(&[2.0, 0.0], t(2.0));
        let b = softmax(&[1.0, 0.0], t(1.0));
        assert_eq!(a, b);
    }

    #[test]
    fn temperature_must_be_positive() {
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
    }

    #[test]
    fn msp_examples() {
        assert_eq!(msp_score(&one(&[0.0, 0.0]), t(1.0)).scores, vec![0.5]);
        assert!(msp_score(&one(&[1000.0, 0.0]), t(1.0)).scores[0].abs() < 1e-300);
        let e = std::f64::consts::E;
        let expected = 1.0 - e / (e + 2.0);
        let got = msp_score(&one(&[1.0, 0.0, 0.0]), t(1.0)).scores[0];
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.42388).abs() < 1e-5);
    }

    #[test]
    fn entropy_examples() {
        let h = entropy_score(&one(&[0.0, 0.0]), t(1.0)).scores[0];
        assert!((h - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(entropy_score(&one(&[1e4, 0.0, 0.0]), t(1.0)).scores[0], 0.0);
        // closed form for (1,0,0): p = (e, 1, 1) / (e + 2)
        let e = std::f64::consts::E;
        let z = e + 2.0;
        let expected = -(e / z) * (e / z).ln() - 2.0 * (1.0 / z) * (1.0 / z).ln();
        let got = entropy_score(&one(&[1.0, 0.0, 0.0]), t(1.0)).scores[0];
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn maxlogit_examples() {
        assert_eq!(maxlogit_score(&one(&[3.0, 1.0])).scores, vec![-3.0]);
        assert_eq!(maxlogit_score(&one(&[0.0, 0.0])).scores, vec![0.0]);
        assert_eq!(maxlogit_score(&one(&[-5.0, -2.0])).scores, vec![2.0]);
    }

    #[test]
    fn energy_examples() {
        let u = energy_score(&one(&[0.0, 0.0]), t(1.0)).scores[0];
        assert!((u + std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(energy_score(&one(&[4.5]), t(1.0)).scores[0], -4.5);
        let u = energy_score(&one(&[1000.0, 1000.0]), t(1.0)).scores[0];
        assert!((u - (-1000.0 - std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini_score(&one(&[0.0, 0.0]), t(1.0)).scores[0], 0.5);
        assert_eq!(gini_score(&one(&[1e4, 0.0]), t(1.0)).scores[0], 0.0);
        // logits (ln 4, 0) give p = (0.8, 0.2)
        let g = gini_score(&one(&[4f64.ln(), 0.0]), t(1.0)).scores[0];
        assert!((g - 0.32).abs() < 1e-6);
    }

    #[test]
    fn argmax_and_ties() {
        let m = FeatureMatrix::from_rows(&[vec![0.1, 0.9], vec![2.0, 2.0]]).unwrap();
        assert_eq!(predictions_from_logits(&m).0, vec![1, 0]);
    }

    #[test]
    fn scorer_names_parse() {
        for s in LogitScorer::ALL {
            assert_eq!(s.id().parse::<LogitScorer>().unwrap(), s);
        }
        assert!("odin".parse::<LogitScorer>().is_err());
    }

    fn row_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e4f64..1e4, 1..8)
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(row in row_strategy(), temp in 0.05f64..50.0) {
            let p = softmax(&row, t(temp));
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn scorers_finite_and_bounded(row in row_strategy(), temp in 0.05f64..50.0) {
            let c = row.len() as f64;
            let m = one(&row);
            let tt = t(temp);
            for s in LogitScorer::ALL {
                prop_assert!(s.score(&m, tt).scores[0].is_finite());
            }
            let msp = msp_score(&m, tt).scores[0];
            prop_assert!((-1e-12..=1.0 - 1.0 / c + 1e-12).contains(&msp));
            let h = entropy_score(&m, tt).scores[0];
            prop_assert!((0.0..=c.ln() + 1e-12).contains(&h));
            let g = gini_score(&m, tt).scores[0];
            prop_assert!((-1e-12..=1.0 - 1.0 / c + 1e-12).contains(&g));
        }

        #[test]
        fn shift_invariance(row in prop::collection::vec(-50f64..50.0, 2..6), shift in -100f64..100.0) {
            // f32 storage: keep shifted values exactly representable
            let shift = shift.round();
            let row: Vec<f64> = row.iter().map(|v| (v * 8.0).round() / 8.0).collect();
            let shifted: Vec<f64> = row.iter().map(|v| v + shift).collect();
            let (a, b) = (one(&row), one(&shifted));
            for s in [LogitScorer::Msp, LogitScorer::Entropy, LogitScorer::Gini] {
                let (x, y) = (s.score(&a, t(1.0)).scores[0], s.score(&b, t(1.0)).scores[0]);
                prop_assert!((x - y).abs() < 1e-12, "{s}: {x} vs {y}");
            }
        }

        #[test]
        fn argmax_temperature_invariant(row in row_strategy()) {
            let m = one(&row);
            let p = predictions_from_logits(&m).0[0] as usize;
            for temp in [0.1, 5.0, 20.0] {
                let probs = softmax(&m.row_f64(0), t(temp));
                let best = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(probs[p], best);
            }
        }
    }
}
