//! Evaluation metrics and the per-run [`MetricReport`].
//!
//! AUROC values are fractions; reports print them as percentages. AURC is
//! reported in the ×10³ convention.

pub mod calibration;
pub mod histogram;
pub mod ranking;
pub mod report;
pub mod risk;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outcomes::{closed_set_accuracy, ground_truth, Outcome, OutcomeVector, Task};
use crate::scorers::ScoreVector;

pub use calibration::{ece, DEFAULT_BINS};
pub use histogram::{histogram, GroupHistogram};
pub use ranking::{aupr, auroc};
pub use risk::{aurc, risk_coverage_curve, RiskCoveragePoint};

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// One evaluation run. Fields that are undefined for the given outcomes
/// (an empty accept or reject class, no confidence source) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scorer_id: String,
    pub params: BTreeMap<String, f64>,
    /// Closed-set accuracy in percent.
    pub accuracy: Option<f64>,
    pub auroc_uosr: Option<f64>,
    pub auroc_osr: Option<f64>,
    pub auroc_sp: Option<f64>,
    pub auroc_inc_inw: Option<f64>,
    pub auroc_inc_ood: Option<f64>,
    pub auroc_inw_ood: Option<f64>,
    pub aupr_uosr: Option<f64>,
    /// Area under the risk–coverage curve, ×10³.
    pub aurc_uosr: Option<f64>,
    pub ece: Option<f64>,
    pub n_inc: usize,
    pub n_inw: usize,
    pub n_ood: usize,
}

fn optional(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyClass(_)) | Err(Error::EmptyInput(_)) | Err(Error::EmptyInD) => Ok(None),
        Err(e) => Err(e),
    }
}

fn group(scores: &[f64], outcomes: &OutcomeVector, which: Outcome) -> Vec<f64> {
    scores
        .iter()
        .zip(outcomes.as_slice())
        .filter(|(_, &o)| o == which)
        .map(|(&s, _)| s)
        .collect()
}

/// Weighted mean `(wa·a + wb·b) / (wa + wb)` skipping undefined terms.
fn mixture(a: Option<f64>, wa: usize, b: Option<f64>, wb: usize) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0usize;
    for (v, w) in [(a, wa), (b, wb)] {
        if w > 0 {
            num += v? * w as f64;
            den += w;
        }
    }
    (den > 0).then(|| num / den as f64)
}

const MIXTURE_TOL: f64 = 1e-9;

impl MetricReport {
    /// Checks the two mixture identities: UOSR AUROC is the (n_inw, n_ood)
    /// weighted mean of InC/InW and InC/OoD, and OSR AUROC is the
    /// (n_inc, n_inw) weighted mean of InC/OoD and InW/OoD. Returns the
    /// largest absolute deviation over the identities that are defined.
    pub fn mixture_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        if let (Some(u), Some(m)) = (
            self.auroc_uosr,
            mixture(self.auroc_inc_inw, self.n_inw, self.auroc_inc_ood, self.n_ood),
        ) {
            worst = worst.max((u - m).abs());
        }
        if let (Some(o), Some(m)) = (
            self.auroc_osr,
            mixture(self.auroc_inc_ood, self.n_inc, self.auroc_inw_ood, self.n_inw),
        ) {
            worst = worst.max((o - m).abs());
        }
        worst
    }

    /// Value of a numeric field by its serialized name.
    pub fn field(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => self.accuracy,
            "auroc_uosr" => self.auroc_uosr,
            "auroc_osr" => self.auroc_osr,
            "auroc_sp" => self.auroc_sp,
            "auroc_inc_inw" => self.auroc_inc_inw,
            "auroc_inc_ood" => self.auroc_inc_ood,
            "auroc_inw_ood" => self.auroc_inw_ood,
            "aupr_uosr" => self.aupr_uosr,
            "aurc_uosr" => self.aurc_uosr,
            "ece" => self.ece,
            _ => None,
        }
    }
}

/// Assembles a [`MetricReport`] for uncertainty `scores` over `outcomes`.
///
/// `confidence`, when given, must be probability-valued (max softmax) and
/// aligned with `scores`; ECE is then computed over the in-distribution
/// samples only.
pub fn evaluate(
    scores: &ScoreVector,
    outcomes: &OutcomeVector,
    confidence: Option<&[f64]>,
) -> Result<MetricReport> {
    evaluate_with_bins(scores, outcomes, confidence, DEFAULT_BINS)
}

pub fn evaluate_with_bins(
    scores: &ScoreVector,
    outcomes: &OutcomeVector,
    confidence: Option<&[f64]>,
    n_bins: usize,
) -> Result<MetricReport> {
    let u = scores.as_slice();
    if u.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: outcomes.len(),
        });
    }
    let task_auroc = |task: Task| {
        let (neg, pos) = ground_truth(task, outcomes).split(u);
        optional(auroc(&neg, &pos))
    };
    let (inc, inw, ood) = (
        group(u, outcomes, Outcome::InC),
        group(u, outcomes, Outcome::InW),
        group(u, outcomes, Outcome::OoD),
    );
    let uosr_split = ground_truth(Task::Uosr, outcomes).split(u);

    let correct: Vec<bool> = outcomes.as_slice().iter().map(|&o| o == Outcome::InC).collect();
    let negated: Vec<f64> = u.iter().map(|s| -s).collect();
    let aurc_uosr = if u.is_empty() {
        None
    } else {
        Some(aurc(&risk_coverage_curve(&negated, &correct)?)?)
    };

    let ece_value = match confidence {
        None => None,
        Some(conf) => {
            if conf.len() != u.len() {
                return Err(Error::LengthMismatch {
                    left: conf.len(),
                    right: u.len(),
                });
            }
            let (c, k): (Vec<f64>, Vec<bool>) = conf
                .iter()
                .zip(outcomes.as_slice())
                .filter(|(_, &o)| o != Outcome::OoD)
                .map(|(&c, &o)| (c, o == Outcome::InC))
                .unzip();
            optional(ece(&c, &k, n_bins))?
        }
    };

    let report = MetricReport {
        scorer_id: scores.scorer_id.clone(),
        params: scores.params.clone(),
        accuracy: optional(closed_set_accuracy(outcomes))?.map(|a| 100.0 * a),
        auroc_uosr: task_auroc(Task::Uosr)?,
        auroc_osr: task_auroc(Task::Osr)?,
        auroc_sp: task_auroc(Task::Sp)?,
        auroc_inc_inw: optional(auroc(&inc, &inw))?,
        auroc_inc_ood: optional(auroc(&inc, &ood))?,
        auroc_inw_ood: optional(auroc(&inw, &ood))?,
        aupr_uosr: optional(aupr(&uosr_split.0, &uosr_split.1))?,
        aurc_uosr,
        ece: ece_value,
        n_inc: outcomes.n_inc(),
        n_inw: outcomes.n_inw(),
        n_ood: outcomes.n_ood(),
    };
    let residual = report.mixture_residual();
    if residual > MIXTURE_TOL {
        return Err(Error::Internal(format!(
            "AUROC mixture identity off by {residual:e}"
        )));
    }
    Ok(report)
}

/// Field-wise arithmetic mean of several reports. A field is `None` in the
/// mean if it is `None` in any input. Counts are averaged and rounded.
pub fn mean_report(reports: &[MetricReport]) -> Result<MetricReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::EmptyInput("no reports to average".into()))?;
    let n = reports.len() as f64;
    let avg = |f: fn(&MetricReport) -> Option<f64>| -> Option<f64> {
        let vals: Option<Vec<f64>> = reports.iter().map(f).collect();
        vals.map(|v| v.iter().sum::<f64>() / n)
    };
    let avg_count = |f: fn(&MetricReport) -> usize| -> usize {
        (reports.iter().map(|r| f(r) as f64).sum::<f64>() / n).round() as usize
    };
    let mut params = first.params.clone();
    for (k, v) in params.iter_mut() {
        let vals: Vec<f64> = reports.iter().filter_map(|r| r.params.get(k).copied()).collect();
        *v = vals.iter().sum::<f64>() / vals.len() as f64;
    }
    Ok(MetricReport {
        scorer_id: first.scorer_id.clone(),
        params,
        accuracy: avg(|r| r.accuracy),
        auroc_uosr: avg(|r| r.auroc_uosr),
        auroc_osr: avg(|r| r.auroc_osr),
        auroc_sp: avg(|r| r.auroc_sp),
        auroc_inc_inw: avg(|r| r.auroc_inc_inw),
        auroc_inc_ood: avg(|r| r.auroc_inc_ood),
        auroc_inw_ood: avg(|r| r.auroc_inw_ood),
        aupr_uosr: avg(|r| r.aupr_uosr),
        aurc_uosr: avg(|r| r.aurc_uosr),
        ece: avg(|r| r.ece),
        n_inc: avg_count(|r| r.n_inc),
        n_inw: avg_count(|r| r.n_inw),
        n_ood: avg_count(|r| r.n_ood),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcomes::Outcome::*;
    use rand::{Rng, SeedableRng};

    fn outcomes(inc: usize, inw: usize, ood: usize) -> OutcomeVector {
        let mut v = vec![InC; inc];
        v.extend(vec![InW; inw]);
        v.extend(vec![OoD; ood]);
        OutcomeVector::new(v)
    }

    #[test]
    fn all_correct_has_absent_aurocs() {
        let o = outcomes(5, 0, 0);
        let r = evaluate(&ScoreVector::new("x", vec![0.1, 0.2, 0.3, 0.4, 0.5]), &o, None).unwrap();
        assert_eq!(r.accuracy, Some(100.0));
        assert_eq!(r.aurc_uosr, Some(0.0));
        assert_eq!(r.auroc_uosr, None);
        assert_eq!(r.auroc_inc_inw, None);
        assert_eq!(r.ece, None);
    }

    #[test]
    fn separated_groups_mixture() {
        let o = outcomes(30, 10, 20);
        let mut s = vec![0.1; 30];
        s.extend(vec![0.9; 30]);
        let r = evaluate(&ScoreVector::new("x", s), &o, None).unwrap();
        assert_eq!(r.auroc_uosr, Some(1.0));
        assert_eq!(r.auroc_inw_ood, Some(0.5));
        let expected = (30.0 * 1.0 + 10.0 * 0.5) / 40.0;
        assert!((r.auroc_osr.unwrap() - expected).abs() < 1e-12);
        assert_eq!(r.auroc_sp, Some(1.0));
    }

    #[test]
    fn uninformative_scores_near_half() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<Outcome> = (0..10_000).map(|_| [InC, InW, OoD][rng.random_range(0..3)]).collect();
        let o = OutcomeVector::new(raw);
        let s: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let r = evaluate(&ScoreVector::new("x", s), &o, None).unwrap();
        for v in [r.auroc_uosr, r.auroc_osr, r.auroc_sp, r.auroc_inc_inw, r.auroc_inc_ood, r.auroc_inw_ood] {
            assert!((v.unwrap() - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn ece_ignores_ood() {
        let o = outcomes(8, 2, 5);
        let mut conf = vec![0.8; 10];
        conf.extend(vec![1.0; 5]);
        let s: Vec<f64> = conf.iter().map(|c| 1.0 - c).collect();
        let r = evaluate(&ScoreVector::new("msp", s), &o, Some(&conf)).unwrap();
        assert_eq!(r.ece, Some(0.0));
    }

    #[test]
    fn length_mismatch() {
        let o = outcomes(2, 0, 0);
        assert!(matches!(
            evaluate(&ScoreVector::new("x", vec![0.1]), &o, None),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mean_of_reports() {
        let o = outcomes(2, 1, 1);
        let a = evaluate(&ScoreVector::new("x", vec![0.1, 0.2, 0.9, 0.8]), &o, None).unwrap();
        let b = evaluate(&ScoreVector::new("x", vec![0.3, 0.2, 0.1, 0.8]), &o, None).unwrap();
        let m = mean_report(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(m.auroc_uosr.unwrap(), (a.auroc_uosr.unwrap() + b.auroc_uosr.unwrap()) / 2.0);
        assert!(mean_report(&[]).is_err());
    }

    #[test]
    fn neumaier_beats_naive() {
        assert_eq!(neumaier_sum(std::iter::repeat_n(0.1, 10)), 1.0);
        assert_eq!(neumaier_sum([1e100, 1.0, -1e100]), 1.0);
    }
}
