//! Per-outcome-group score histograms for external plotting.

use crate::error::{Error, Result};
use crate::outcomes::{Outcome, OutcomeVector};

#[derive(Debug, Clone, PartialEq)]
pub struct GroupHistogram {
    /// `n_bins + 1` edges spanning exactly `[min, max]` of the pooled scores.
    pub edges: Vec<f64>,
    /// Counts per bin for InC, InW and OoD.
    pub inc: Vec<usize>,
    pub inw: Vec<usize>,
    pub ood: Vec<usize>,
}

/// Equal-width bins over the pooled score range. Bins are half-open
/// `[e_b, e_{b+1})` except the last, which also owns `max`.
pub fn histogram(scores: &[f64], outcomes: &OutcomeVector, n_bins: usize) -> Result<GroupHistogram> {
    if scores.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: outcomes.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("histogram scores".into()));
    }
    if n_bins == 0 {
        return Err(Error::InvalidParameter("bins must be >= 1".into()));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (0..=n_bins).map(|b| lo + width * b as f64).collect();
    edges[n_bins] = hi;

    let mut h = GroupHistogram {
        edges,
        inc: vec![0; n_bins],
        inw: vec![0; n_bins],
        ood: vec![0; n_bins],
    };
    for (&s, &o) in scores.iter().zip(outcomes.as_slice()) {
        let b = if width > 0.0 {
            // first bin whose upper edge exceeds s
            h.edges[1..n_bins].partition_point(|&e| e <= s)
        } else {
            0
        };
        match o {
            Outcome::InC => h.inc[b] += 1,
            Outcome::InW => h.inw[b] += 1,
            Outcome::OoD => h.ood[b] += 1,
        }
    }
    Ok(h)
}

impl GroupHistogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,lo,hi,inc,inw,ood\n");
        for b in 0..self.inc.len() {
            out.push_str(&format!(
                "{b},{},{},{},{},{}\n",
                self.edges[b],
                self.edges[b + 1],
                self.inc[b],
                self.inw[b],
                self.ood[b]
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcomes::Outcome::*;
    use proptest::prelude::*;

    #[test]
    fn point_masses_fill_one_bin_each() {
        let o = OutcomeVector::new(vec![InC, InC, InW, OoD, OoD, OoD]);
        let h = histogram(&[0.1, 0.1, 0.5, 0.9, 0.9, 0.9], &o, 10).unwrap();
        for (g, n) in [(&h.inc, 2), (&h.inw, 1), (&h.ood, 3)] {
            assert_eq!(g.iter().filter(|&&c| c > 0).count(), 1);
            assert_eq!(g.iter().sum::<usize>(), n);
        }
        assert_eq!(h.edges[0], 0.1);
        assert_eq!(h.edges[10], 0.9);
    }

    #[test]
    fn one_bin_counts_group_sizes() {
        let o = OutcomeVector::new(vec![InC, InW, InW, OoD]);
        let h = histogram(&[3.0, -1.0, 2.0, 7.0], &o, 1).unwrap();
        assert_eq!((h.inc[0], h.inw[0], h.ood[0]), (1, 2, 1));
        assert_eq!(h.edges, vec![-1.0, 7.0]);
    }

    #[test]
    fn degenerate_range() {
        let o = OutcomeVector::new(vec![InC, OoD]);
        let h = histogram(&[0.4, 0.4], &o, 5).unwrap();
        assert_eq!((h.inc[0], h.ood[0]), (1, 1));
        assert!(histogram(&[], &OutcomeVector::new(vec![]), 3).is_err());
    }

    proptest! {
        #[test]
        fn counts_conserved(v in prop::collection::vec((-10f64..10.0, 0u8..3), 1..80), bins in 1usize..30) {
            let scores: Vec<f64> = v.iter().map(|x| x.0).collect();
            let o = OutcomeVector::new(v.iter().map(|x| [InC, InW, OoD][x.1 as usize]).collect());
            let h = histogram(&scores, &o, bins).unwrap();
            prop_assert_eq!(h.inc.iter().sum::<usize>(), o.n_inc());
            prop_assert_eq!(h.inw.iter().sum::<usize>(), o.n_inw());
            prop_assert_eq!(h.ood.iter().sum::<usize>(), o.n_ood());
            prop_assert_eq!(h.edges.len(), bins + 1);
        }
    }
}
