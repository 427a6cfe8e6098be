//! Score fusion of a softmax-family score `u0` with a few-shot KNN score
//! `u1`.
//!
//! The gated fusion adds `u1` with a sigmoid weight that opens once `u1`
//! passes a threshold `λ`:
//!
//! ```text
//! û = u0 + u1 / (1 + exp(-α (u1 - λ)))
//! λ = mean - β · std
//! ```
//!
//! where `mean`/`std` are taken over the `u1` scores of the few-shot OoD
//! reference samples. Samples whose `u1` stays below `λ` keep (almost)
//! their `u0` ranking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorers::ScoreVector;

/// Gate sharpness `alpha`, threshold offset `beta`, and the threshold
/// `lambda` itself once it has been selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl FusionParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
        }
        if !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be finite, got {beta}")));
        }
        Ok(Self {
            alpha,
            beta,
            lambda: 0.0,
        })
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            alpha: 50.0,
            beta: 1.0,
            lambda: 0.0,
        }
    }
}

/// Mean and population standard deviation of reference-sample scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn ref_stats(ref_uncertainties: &ScoreVector) -> Result<RefStats> {
    let u = ref_uncertainties.as_slice();
    if u.is_empty() {
        return Err(Error::EmptyInput("reference scores".into()));
    }
    let n = u.len() as f64;
    let mean = u.iter().sum::<f64>() / n;
    let var = u.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(RefStats {
        mean,
        std: var.sqrt(),
        n: u.len(),
    })
}

/// `λ = mean - β · σ`.
pub fn select_lambda(s: &RefStats, beta: f64) -> f64 {
    s.mean - beta * s.std
}

/// Logistic function, evaluated so that neither branch overflows.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_len(u0: &ScoreVector, u1: &ScoreVector) -> Result<()> {
    if u0.len() != u1.len() {
        return Err(Error::LengthMismatch {
            left: u0.len(),
            right: u1.len(),
        });
    }
    Ok(())
}

fn merged_params(id: &str, u0: &ScoreVector, u1: &ScoreVector, scores: Vec<f64>) -> ScoreVector {
    let mut out = ScoreVector::new(id, scores);
    for (k, v) in &u1.params {
        out.params.insert(k.clone(), *v);
    }
    for (k, v) in &u0.params {
        out.params.insert(k.clone(), *v);
    }
    out
}

/// Sigmoid-gated fusion `u0 + σ(α (u1 - λ)) · u1`.
pub fn fsknns_fuse(u0: &ScoreVector, u1: &ScoreVector, p: &FusionParams) -> Result<ScoreVector> {
    check_len(u0, u1)?;
    let scores = u0
        .as_slice()
        .iter()
        .zip(u1.as_slice())
        .map(|(&a, &b)| a + sigmoid(p.alpha * (b - p.lambda)) * b)
        .collect();
    Ok(merged_params("fsknns", u0, u1, scores)
        .with_param("alpha", p.alpha)
        .with_param("beta", p.beta)
        .with_param("lambda", p.lambda))
}

/// Raw sum `u0 + u1`.
pub fn additive_fuse(u0: &ScoreVector, u1: &ScoreVector) -> Result<ScoreVector> {
    check_len(u0, u1)?;
    let scores = u0.as_slice().iter().zip(u1.as_slice()).map(|(a, b)| a + b).collect();
    Ok(merged_params("fsknn+s", u0, u1, scores))
}

/// Raw product `u0 · u1`.
pub fn multiplicative_fuse(u0: &ScoreVector, u1: &ScoreVector) -> Result<ScoreVector> {
    check_len(u0, u1)?;
    let scores = u0.as_slice().iter().zip(u1.as_slice()).map(|(a, b)| a * b).collect();
    Ok(merged_params("fsknn*s", u0, u1, scores))
}
