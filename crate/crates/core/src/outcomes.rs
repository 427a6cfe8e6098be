//! Outcome categories (correct / wrong / out-of-distribution) and the
//! binary accept/reject ground truth each task derives from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::LabelVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// In-distribution, correctly classified.
    InC,
    /// In-distribution, wrongly classified.
    InW,
    /// Out-of-distribution.
    OoD,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::InC => "InC",
            Outcome::InW => "InW",
            Outcome::OoD => "OoD",
        }
    }
}

/// Per-sample outcomes with cached group counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeVector {
    outcomes: Vec<Outcome>,
    n_inc: usize,
    n_inw: usize,
    n_ood: usize,
}

impl OutcomeVector {
    pub fn new(outcomes: Vec<Outcome>) -> Self {
        let count = |o| outcomes.iter().filter(|&&x| x == o).count();
        let (n_inc, n_inw, n_ood) = (count(Outcome::InC), count(Outcome::InW), count(Outcome::OoD));
        Self {
            outcomes,
            n_inc,
            n_inw,
            n_ood,
        }
    }

    pub fn as_slice(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn n_inc(&self) -> usize {
        self.n_inc
    }

    pub fn n_inw(&self) -> usize {
        self.n_inw
    }

    pub fn n_ood(&self) -> usize {
        self.n_ood
    }

    /// `(n_inc, n_inw, n_ood)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.n_inc, self.n_inw, self.n_ood)
    }

    /// Keeps the samples at `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> OutcomeVector {
        OutcomeVector::new(indices.iter().map(|&i| self.outcomes[i]).collect())
    }
}

/// InD sample `i` is InC iff `predictions[i] == labels[i]`; `n_ood` OoD
/// samples are appended after the InD block.
pub fn classify_outcomes(
    predictions: &LabelVector,
    labels: &LabelVector,
    n_ood: usize,
) -> Result<OutcomeVector> {
    if predictions.len() != labels.len() {
        return Err(Error::RowCountMismatch {
            what: "predictions/labels".into(),
            left: predictions.len(),
            right: labels.len(),
        });
    }
    let mut v: Vec<Outcome> = predictions
        .as_slice()
        .iter()
        .zip(labels.as_slice())
        .map(|(p, l)| if p == l { Outcome::InC } else { Outcome::InW })
        .collect();
    v.extend(std::iter::repeat_n(Outcome::OoD, n_ood));
    Ok(OutcomeVector::new(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Task {
    /// Unified open-set recognition: accept InC, reject InW and OoD.
    Uosr,
    /// Open-set recognition: accept all InD, reject OoD.
    Osr,
    /// Selective prediction: accept InC, reject InW, OoD absent.
    Sp,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Uosr, Task::Osr, Task::Sp];

    /// Reject label for an outcome, `None` when the outcome does not take
    /// part in the task.
    pub fn reject(self, o: Outcome) -> Option<bool> {
        match (self, o) {
            (_, Outcome::InC) => Some(false),
            (Task::Uosr, Outcome::InW) => Some(true),
            (Task::Uosr, Outcome::OoD) => Some(true),
            (Task::Osr, Outcome::InW) => Some(false),
            (Task::Osr, Outcome::OoD) => Some(true),
            (Task::Sp, Outcome::InW) => Some(true),
            (Task::Sp, Outcome::OoD) => None,
        }
    }
}

/// Binary ground truth for one task. `labels[i]` is 1 for reject, 0 for
/// accept; entries with `mask[i] == false` do not participate and their
/// label is 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskGroundTruth {
    pub task: Task,
    pub labels: Vec<u8>,
    pub mask: Vec<bool>,
}

impl TaskGroundTruth {
    /// Labels of participating samples only.
    pub fn participating_labels(&self) -> Vec<u8> {
        self.labels
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| l)
            .collect()
    }

    pub fn n_participants(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Splits `scores` into (accept, reject) groups over participants.
    pub fn split(&self, scores: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut neg = Vec::new();
        let mut pos = Vec::new();
        for ((&s, &l), &m) in scores.iter().zip(&self.labels).zip(&self.mask) {
            if m {
                if l == 1 {
                    pos.push(s);
                } else {
                    neg.push(s);
                }
            }
        }
        (neg, pos)
    }
}

pub fn ground_truth(task: Task, o: &OutcomeVector) -> TaskGroundTruth {
    let (labels, mask) = o
        .as_slice()
        .iter()
        .map(|&x| match task.reject(x) {
            Some(r) => (r as u8, true),
            None => (0, false),
        })
        .unzip();
    TaskGroundTruth { task, labels, mask }
}

/// Closed-set accuracy `n_inc / (n_inc + n_inw)` as a fraction.
pub fn closed_set_accuracy(o: &OutcomeVector) -> Result<f64> {
    let ind = o.n_inc + o.n_inw;
    if ind == 0 {
        return Err(Error::EmptyInD);
    }
    Ok(o.n_inc as f64 / ind as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Outcome::*;

    fn counts_vec(inc: usize, inw: usize, ood: usize) -> OutcomeVector {
        let mut v = vec![InC; inc];
        v.extend(vec![InW; inw]);
        v.extend(vec![OoD; ood]);
        OutcomeVector::new(v)
    }

    #[test]
    fn classify_basic() {
        let o = classify_outcomes(&vec![1, 2].into(), &vec![1, 3].into(), 1).unwrap();
        assert_eq!(o.as_slice(), &[InC, InW, OoD]);
        assert_eq!(o.counts(), (1, 1, 1));
    }

    #[test]
    fn classify_all_correct_and_all_wrong() {
        let o = classify_outcomes(&vec![4, 5].into(), &vec![4, 5].into(), 0).unwrap();
        assert_eq!(o.counts(), (2, 0, 0));
        let o = classify_outcomes(&vec![0, 0, 0].into(), &vec![1, 1, 1].into(), 2).unwrap();
        assert_eq!(o.as_slice(), &[InW, InW, InW, OoD, OoD]);
    }

    #[test]
    fn classify_length_mismatch() {
        assert!(matches!(
            classify_outcomes(&vec![0].into(), &vec![0, 1].into(), 0),
            Err(Error::RowCountMismatch { .. })
        ));
    }

    #[test]
    fn task_tables() {
        let o = OutcomeVector::new(vec![InC, InW, OoD]);
        let g = ground_truth(Task::Uosr, &o);
        assert_eq!(g.labels, vec![0, 1, 1]);
        assert_eq!(g.mask, vec![true; 3]);
        assert_eq!(ground_truth(Task::Osr, &o).labels, vec![0, 0, 1]);
        let sp = ground_truth(Task::Sp, &o);
        assert_eq!(sp.participating_labels(), vec![0, 1]);
        assert_eq!(sp.mask, vec![true, true, false]);
    }

    #[test]
    fn accuracy() {
        assert_eq!(closed_set_accuracy(&counts_vec(3, 1, 5)).unwrap(), 0.75);
        assert_eq!(closed_set_accuracy(&counts_vec(0, 4, 0)).unwrap(), 0.0);
        assert!(matches!(
            closed_set_accuracy(&counts_vec(0, 0, 5)),
            Err(Error::EmptyInD)
        ));
    }

    proptest::proptest! {
        #[test]
        fn osr_rejects_subset_of_uosr(raw in proptest::collection::vec(0u8..3, 0..50)) {
            let o = OutcomeVector::new(raw.iter().map(|r| [InC, InW, OoD][*r as usize]).collect());
            let u = ground_truth(Task::Uosr, &o);
            let s = ground_truth(Task::Osr, &o);
            for i in 0..o.len() {
                proptest::prop_assert!(s.labels[i] <= u.labels[i]);
            }
            proptest::prop_assert_eq!(ground_truth(Task::Sp, &o).n_participants(), o.n_inc() + o.n_inw());
            proptest::prop_assert_eq!(ground_truth(Task::Uosr, &o), u);
            let (a, b, c) = o.counts();
            proptest::prop_assert_eq!(a + b + c, o.len());
        }
    }
}
