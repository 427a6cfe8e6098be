//! Hyperparameter grids over K, α and β.
//!
//! All cells share one reference partition, so differences between cells
//! come from the parameters alone.

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fewshot::{draw_reference_partition, run_with_draws, FewShotConfig, Method};
use crate::fusion::FusionParams;
use crate::knn::KnnParams;
use crate::metrics::MetricReport;
use crate::tensorio::EvaluationBundle;

/// Axis values; an empty axis keeps the base configuration's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(default)]
    pub ks: Vec<usize>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Mean report per method.
    pub reports: BTreeMap<Method, MetricReport>,
    /// Fingerprint of the reference partition used by this cell.
    pub partition_hash: u64,
}

fn axis<T: Copy + PartialOrd>(values: &[T], base: T) -> Vec<T> {
    let mut v = if values.is_empty() { vec![base] } else { values.to_vec() };
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite grid values"));
    v.dedup_by(|a, b| a == b);
    v
}

impl SweepGrid {
    /// Cells in lexicographic `(k, alpha, beta)` order.
    pub fn cells(&self, base: &FewShotConfig) -> Result<Vec<(usize, f64, f64)>> {
        if self.ks.is_empty() && self.alphas.is_empty() && self.betas.is_empty() {
            return Err(Error::BadSpec("sweep grid has no values".into()));
        }
        if self.ks.contains(&0) {
            return Err(Error::BadSpec("k values must be >= 1".into()));
        }
        if self.alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::BadSpec("alpha values must be > 0".into()));
        }
        if self.betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::BadSpec("beta values must be finite".into()));
        }
        let mut out = Vec::new();
        for &k in &axis(&self.ks, base.knn.k) {
            for &a in &axis(&self.alphas, base.fusion.alpha) {
                for &b in &axis(&self.betas, base.fusion.beta) {
                    out.push((k, a, b));
                }
            }
        }
        Ok(out)
    }
}

pub fn partition_hash(draws: &[Vec<usize>]) -> u64 {
    let mut h = DefaultHasher::new();
    draws.hash(&mut h);
    h.finish()
}

/// One few-shot run per cell with the swept parameters substituted into
/// `base`.
pub fn sweep(bundle: &EvaluationBundle, base: &FewShotConfig, grid: &SweepGrid) -> Result<Vec<SweepCell>> {
    let cells = grid.cells(base)?;
    let ids = bundle
        .ood_class_ids
        .as_ref()
        .ok_or_else(|| Error::MissingComponent("OoD class ids".into()))?;
    let draws = draw_reference_partition(ids, base.shots, base.seed)?;
    let hash = partition_hash(&draws);
    cells
        .into_par_iter()
        .map(|(k, alpha, beta)| {
            let cfg = FewShotConfig {
                knn: KnnParams::new(k)?,
                fusion: FusionParams::new(alpha, beta)?,
                ..*base
            };
            let r = run_with_draws(bundle, &cfg, draws.clone())?;
            Ok(SweepCell {
                k,
                alpha,
                beta,
                reports: r.mean,
                partition_hash: hash,
            })
        })
        .collect()
}

pub const CSV_HEADER: &str = "k,alpha,beta,uosr_auroc,osr_auroc,inc_inw,inc_ood,aurc";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Grid table for one method; metric values are raw fractions and AURC
/// is in ×10³ units.
pub fn to_csv(cells: &[SweepCell], method: Method) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for c in cells {
        let r = &c.reports[&method];
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.k,
            c.alpha,
            c.beta,
            opt(r.auroc_uosr),
            opt(r.auroc_osr),
            opt(r.auroc_inc_inw),
            opt(r.auroc_inc_ood),
            opt(r.aurc_uosr)
        ));
    }
    out
}

pub fn to_json(cells: &[SweepCell], method: Method) -> String {
    let rows: Vec<serde_json::Value> = cells
        .iter()
        .map(|c| {
            let r = &c.reports[&method];
            serde_json::json!({
                "k": c.k,
                "alpha": c.alpha,
                "beta": c.beta,
                "uosr_auroc": r.auroc_uosr,
                "osr_auroc": r.auroc_osr,
                "inc_inw": r.auroc_inc_inw,
                "inc_ood": r.auroc_inc_ood,
                "aurc": r.aurc_uosr,
            })
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("json values serialize");
    s.push('\n');
    s
}
