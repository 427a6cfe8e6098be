//! Synthetic scores, feature bundles and calibration scenarios.
//!
//! Every random draw comes from a ChaCha8 stream keyed by the sample, so
//! sample `i` of a group is the same no matter how generation is split
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outcomes::{Outcome, OutcomeVector};
use crate::scorers::ScoreVector;
use crate::tensorio::{EvaluationBundle, FeatureMatrix, LabelVector};

/// Score distribution of one outcome group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScoreDist {
    Gaussian { mu: f64, sigma: f64 },
    Beta { a: f64, b: f64 },
    Point { v: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub n: usize,
    pub dist: ScoreDist,
    #[serde(default)]
    pub clip: Option<[f64; 2]>,
}

impl GroupSpec {
    pub fn gaussian(n: usize, mu: f64, sigma: f64) -> Self {
        Self { n, dist: ScoreDist::Gaussian { mu, sigma }, clip: None }
    }

    pub fn point(n: usize, v: f64) -> Self {
        Self { n, dist: ScoreDist::Point { v }, clip: None }
    }

    pub fn beta(n: usize, a: f64, b: f64) -> Self {
        Self { n, dist: ScoreDist::Beta { a, b }, clip: None }
    }

    pub fn clipped(mut self, lo: f64, hi: f64) -> Self {
        self.clip = Some([lo, hi]);
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadSpec(m));
        match self.dist {
            ScoreDist::Gaussian { mu, sigma } if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) => {
                bad(format!("gaussian needs finite mu and sigma >= 0, got ({mu}, {sigma})"))
            }
            ScoreDist::Beta { a, b } if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) => {
                bad(format!("beta parameters must be > 0, got ({a}, {b})"))
            }
            ScoreDist::Point { v } if !v.is_finite() => bad(format!("point value must be finite, got {v}")),
            _ => match self.clip {
                Some([lo, hi]) if !(lo <= hi) => bad(format!("clip range [{lo}, {hi}] is empty")),
                _ => Ok(()),
            },
        }
    }
}

/// Generator for sample `index` of stream `stream`.
fn sample_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    // 16 words per block; 64 blocks of headroom per sample
    rng.set_word_pos(index as u128 * 1024);
    rng
}

fn draw_group(spec: &GroupSpec, seed: u64, stream: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let draw = |i: usize| -> f64 {
        let mut rng = sample_rng(seed, stream, i as u64);
        let v = match spec.dist {
            ScoreDist::Gaussian { mu, sigma } => Normal::new(mu, sigma).expect("validated").sample(&mut rng),
            ScoreDist::Beta { a, b } => Beta::new(a, b).expect("validated").sample(&mut rng),
            ScoreDist::Point { v } => v,
        };
        match spec.clip {
            Some([lo, hi]) => v.clamp(lo, hi),
            None => v,
        }
    };
    Ok((0..spec.n).into_par_iter().map(draw).collect())
}

/// Scores for InC, InW and OoD groups, concatenated in that order.
pub fn gen_scores(inc: &GroupSpec, inw: &GroupSpec, ood: &GroupSpec, seed: u64) -> Result<(ScoreVector, OutcomeVector)> {
    if inc.n + inw.n + ood.n == 0 {
        return Err(Error::BadSpec("no samples requested".into()));
    }
    let mut scores = Vec::with_capacity(inc.n + inw.n + ood.n);
    let mut outcomes = Vec::with_capacity(scores.capacity());
    for (stream, (spec, o)) in [(inc, Outcome::InC), (inw, Outcome::InW), (ood, Outcome::OoD)].into_iter().enumerate() {
        scores.extend(draw_group(spec, seed, stream as u64)?);
        outcomes.extend(std::iter::repeat_n(o, spec.n));
    }
    Ok((ScoreVector::new("synthetic", scores), OutcomeVector::new(outcomes)))
}

/// Isotropic Gaussian cluster of `n` feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub n: usize,
    pub center: Vec<f64>,
    pub spread: f64,
    pub class_id: i64,
}

impl ClusterSpec {
    pub fn new(n: usize, center: Vec<f64>, spread: f64, class_id: i64) -> Self {
        Self { n, center, spread, class_id }
    }
}

/// Train, in-distribution test and OoD clusters of one synthetic bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub train: Vec<ClusterSpec>,
    pub test: Vec<ClusterSpec>,
    pub ood: Vec<ClusterSpec>,
}

fn unit(dim: usize, axis: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[axis] = scale;
    v
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

impl BundleSpec {
    /// Four in-distribution classes on orthogonal axes and two OoD
    /// classes that sit off-axis. Some training samples of each class lie
    /// halfway to the next class centre; test samples drawn there are
    /// often misclassified yet look familiar in feature space. The OoD
    /// clusters leave the logit margins of in-distribution samples
    /// largely intact but occupy their own feature directions.
    pub fn fewshot_demo() -> Self {
        let dim = 16;
        let n_classes = 4;
        let radius = 4.0;
        let centers: Vec<Vec<f64>> = (0..n_classes).map(|c| unit(dim, c, radius)).collect();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for c in 0..n_classes {
            let next = &centers[(c + 1) % n_classes];
            let mid = lerp(&centers[c], next, 0.5);
            train.push(ClusterSpec::new(200, centers[c].clone(), 0.6, c as i64));
            train.push(ClusterSpec::new(60, mid.clone(), 0.6, c as i64));
            test.push(ClusterSpec::new(150, centers[c].clone(), 0.6, c as i64));
            test.push(ClusterSpec::new(40, mid, 0.6, c as i64));
        }
        let ood = (0..2)
            .map(|j| {
                let c = 2 * j;
                let offset = unit(dim, n_classes + j, radius);
                ClusterSpec::new(100, add(&lerp(&centers[c], &[0.0; 16], -0.5), &offset), 0.6, j as i64)
            })
            .collect();
        Self { train, test, ood }
    }
}

/// Class centres for the logit model: the centre of the first train
/// cluster of each class. Class ids must be `0..n_classes`.
fn class_centers(train: &[ClusterSpec]) -> Result<Vec<Vec<f64>>> {
    let n_classes = train.iter().map(|c| c.class_id).max().map_or(0, |m| m + 1);
    if n_classes <= 0 || train.iter().any(|c| c.class_id < 0) {
        return Err(Error::BadSpec("train clusters need class ids 0..n_classes".into()));
    }
    (0..n_classes)
        .map(|c| {
            train
                .iter()
                .find(|s| s.class_id == c)
                .map(|s| s.center.clone())
                .ok_or_else(|| Error::BadSpec(format!("no train cluster for class {c}")))
        })
        .collect()
}

fn check_clusters(specs: &[ClusterSpec], dim: usize) -> Result<()> {
    for s in specs {
        if s.center.len() != dim {
            return Err(Error::BadSpec(format!(
                "cluster centre has {} dims, expected {dim}",
                s.center.len()
            )));
        }
        if !(s.spread.is_finite() && s.spread >= 0.0) || s.center.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadSpec("cluster spread and centre must be finite, spread >= 0".into()));
        }
    }
    Ok(())
}

/// Samples `center + spread · N(0, I)` for every cluster, in order.
fn sample_clusters(specs: &[ClusterSpec], dim: usize, seed: u64, stream: u64) -> Result<(FeatureMatrix, Vec<i64>)> {
    let owners: Vec<&ClusterSpec> = specs.iter().flat_map(|s| std::iter::repeat_n(s, s.n)).collect();
    let rows: Vec<Vec<f64>> = owners
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = sample_rng(seed, stream, i as u64);
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            s.center.iter().map(|&c| c + s.spread * normal.sample(&mut rng)).collect()
        })
        .collect();
    let ids = owners.iter().map(|s| s.class_id).collect();
    if rows.is_empty() {
        return Err(Error::BadSpec("cluster list produces no samples".into()));
    }
    let m = FeatureMatrix::from_rows(&rows)?;
    debug_assert_eq!(m.cols(), dim);
    Ok((m, ids))
}

/// `logit_c = -‖x - center_c‖` for every row.
pub fn distance_logits(features: &FeatureMatrix, centers: &[Vec<f64>]) -> Result<FeatureMatrix> {
    let rows: Vec<Vec<f64>> = (0..features.rows())
        .into_par_iter()
        .map(|i| {
            let x = features.row_f64(i);
            centers
                .iter()
                .map(|c| -x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect()
        })
        .collect();
    FeatureMatrix::from_rows(&rows)
}

/// Samples a bundle with distance-based logits. Test and OoD features and
/// logits are filled; predictions are left to the argmax of the logits.
pub fn gen_bundle(spec: &BundleSpec, seed: u64) -> Result<EvaluationBundle> {
    let centers = class_centers(&spec.train)?;
    let dim = centers[0].len();
    if dim == 0 {
        return Err(Error::BadSpec("zero-dimensional centres".into()));
    }
    for group in [&spec.train, &spec.test, &spec.ood] {
        check_clusters(group, dim)?;
    }
    let n_classes = centers.len() as i64;
    if let Some(s) = spec.test.iter().find(|s| s.class_id < 0 || s.class_id >= n_classes) {
        return Err(Error::BadSpec(format!("test cluster class {} has no train class", s.class_id)));
    }
    let (train_features, train_labels) = sample_clusters(&spec.train, dim, seed, 0)?;
    let (test_features, test_labels) = sample_clusters(&spec.test, dim, seed, 1)?;
    let (ood_features, ood_ids) = sample_clusters(&spec.ood, dim, seed, 2)?;
    let test_logits = distance_logits(&test_features, &centers)?;
    let ood_logits = distance_logits(&ood_features, &centers)?;
    Ok(EvaluationBundle {
        train_features: Some(train_features),
        train_labels: Some(LabelVector(train_labels)),
        test_features: Some(test_features),
        test_logits: Some(test_logits),
        test_labels: LabelVector(test_labels),
        test_predictions: None,
        ood_features: Some(ood_features),
        ood_logits: Some(ood_logits),
        ood_class_ids: Some(LabelVector(ood_ids)),
    })
}

/// One in-distribution confidence layout with its correctness labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationScenario {
    pub id: String,
    pub description: String,
    /// Max-probability confidence per sample.
    pub confidence: Vec<f64>,
    pub correct: Vec<bool>,
}

impl CalibrationScenario {
    /// Uncertainty `1 - confidence`.
    pub fn uncertainty(&self) -> ScoreVector {
        ScoreVector::new("msp", self.confidence.iter().map(|c| 1.0 - c).collect())
    }

    pub fn outcomes(&self) -> OutcomeVector {
        OutcomeVector::new(
            self.correct
                .iter()
                .map(|&c| if c { Outcome::InC } else { Outcome::InW })
                .collect(),
        )
    }
}

/// Five scenarios sharing one correctly-classified confidence layout
/// (36 samples at 0.9, 35 at 0.7) and differing in where the 19
/// misclassified samples sit. Scenario `c` is perfectly calibrated under
/// 15 bins yet ranks worse than the separated scenarios `a` and `b`.
/// `seed` only permutes sample order.
pub fn calibration_scenarios(seed: u64) -> Vec<CalibrationScenario> {
    let inc = [(36usize, 0.9), (35, 0.7)];
    let layouts: [(&str, &str, &[(usize, f64)]); 5] = [
        ("a", "misclassified far below, underconfident", &[(19, 0.1)]),
        ("b", "misclassified just below, overconfident", &[(19, 0.6)]),
        ("c", "misclassified matching per-bin accuracy", &[(4, 0.9), (15, 0.7)]),
        ("d", "misclassified above every correct sample", &[(19, 0.95)]),
        ("e", "misclassified split between high and mid", &[(10, 0.9), (9, 0.5)]),
    ];
    layouts
        .iter()
        .enumerate()
        .map(|(s, (id, description, inw))| {
            let mut samples: Vec<(f64, bool)> = Vec::new();
            for &(n, c) in &inc {
                samples.extend(std::iter::repeat_n((c, true), n));
            }
            for &(n, c) in inw.iter() {
                samples.extend(std::iter::repeat_n((c, false), n));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            rand::seq::SliceRandom::shuffle(samples.as_mut_slice(), &mut rng);
            let (confidence, correct) = samples.into_iter().unzip();
            CalibrationScenario {
                id: id.to_string(),
                description: description.to_string(),
                confidence,
                correct,
            }
        })
        .collect()
}

/// Scenario file read by the `synth` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scores: Option<ScoreGroups>,
    #[serde(default)]
    pub bundle: Option<BundleChoice>,
    #[serde(default)]
    pub calibration: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreGroups {
    pub inc: GroupSpec,
    pub inw: GroupSpec,
    pub ood: GroupSpec,
}

/// Either the built-in demo layout or explicit clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BundleChoice {
    Preset { preset: String },
    Custom(BundleSpec),
}

impl BundleChoice {
    pub fn resolve(&self) -> Result<BundleSpec> {
        match self {
            BundleChoice::Custom(s) => Ok(s.clone()),
            BundleChoice::Preset { preset } if preset == "fewshot-demo" => Ok(BundleSpec::fewshot_demo()),
            BundleChoice::Preset { preset } => Err(Error::BadSpec(format!("unknown bundle preset `{preset}`"))),
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::BadSpec(e.to_string()))?;
        if cfg.scores.is_none() && cfg.bundle.is_none() && !cfg.calibration {
            return Err(Error::BadSpec("config requests nothing: add [scores], [bundle] or calibration = true".into()));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{auroc, ece, evaluate};
    use crate::scorers::predictions_from_logits;

    #[test]
    fn point_groups_separate_perfectly() {
        let (s, o) = gen_scores(&GroupSpec::point(5, 0.1), &GroupSpec::point(3, 0.9), &GroupSpec::point(4, 0.9), 0).unwrap();
        assert_eq!(o.counts(), (5, 3, 4));
        let r = evaluate(&s, &o, None).unwrap();
        assert_eq!(r.auroc_uosr, Some(1.0));
    }

    #[test]
    fn shared_distribution_for_inw_and_ood() {
        let (s, o) = gen_scores(
            &GroupSpec::gaussian(2000, 0.2, 0.05),
            &GroupSpec::gaussian(2000, 0.7, 0.1),
            &GroupSpec::gaussian(2000, 0.7, 0.1),
            3,
        )
        .unwrap();
        let r = evaluate(&s, &o, None).unwrap();
        let v = r.auroc_inw_ood.unwrap();
        assert!((0.45..=0.55).contains(&v), "{v}");
    }

    #[test]
    fn identical_groups_are_indistinguishable() {
        let g = GroupSpec::beta(3000, 2.0, 5.0);
        let (s, o) = gen_scores(&g, &g, &g, 9).unwrap();
        let r = evaluate(&s, &o, None).unwrap();
        for v in [r.auroc_inc_inw, r.auroc_inc_ood, r.auroc_inw_ood] {
            assert!((v.unwrap() - 0.5).abs() < 0.03);
        }
    }

    #[test]
    fn deterministic_and_clipped() {
        let g = GroupSpec::gaussian(100, 0.5, 1.0).clipped(0.0, 1.0);
        let a = gen_scores(&g, &g, &g, 5).unwrap();
        assert_eq!(a, gen_scores(&g, &g, &g, 5).unwrap());
        assert_ne!(a.0, gen_scores(&g, &g, &g, 6).unwrap().0);
        assert!(a.0.scores.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn per_index_identity_across_group_sizes() {
        let small = draw_group(&GroupSpec::gaussian(10, 0.0, 1.0), 1, 0).unwrap();
        let large = draw_group(&GroupSpec::gaussian(1000, 0.0, 1.0), 1, 0).unwrap();
        assert_eq!(small[..], large[..10]);
    }

    #[test]
    fn bad_specs() {
        let ok = GroupSpec::point(1, 0.0);
        assert!(gen_scores(&GroupSpec::gaussian(1, 0.0, -1.0), &ok, &ok, 0).is_err());
        assert!(gen_scores(&GroupSpec::beta(1, 0.0, 1.0), &ok, &ok, 0).is_err());
        let none = GroupSpec::point(0, 0.0);
        assert!(matches!(gen_scores(&none, &none, &none, 0), Err(Error::BadSpec(_))));
    }

    #[test]
    fn exact_centres_classify_correctly() {
        let c = |v: [f64; 2], id| ClusterSpec::new(5, v.to_vec(), 0.0, id);
        let spec = BundleSpec {
            train: vec![c([1.0, 0.0], 0), c([0.0, 1.0], 1)],
            test: vec![c([1.0, 0.0], 0), c([0.0, 1.0], 1), c([0.0, 1.0], 0)],
            ood: vec![c([-1.0, -1.0], 0)],
        };
        let b = gen_bundle(&spec, 0).unwrap();
        let preds = predictions_from_logits(b.test_logits.as_ref().unwrap());
        let correct: Vec<bool> = preds.as_slice().iter().zip(b.test_labels.as_slice()).map(|(p, l)| p == l).collect();
        assert!(correct[..10].iter().all(|&x| x));
        // placed at the wrong class centre
        assert!(correct[10..].iter().all(|&x| !x));
    }

    #[test]
    fn argmax_is_nearest_centre() {
        let b = gen_bundle(&BundleSpec::fewshot_demo(), 4).unwrap();
        let feats = b.test_features.as_ref().unwrap();
        let preds = predictions_from_logits(b.test_logits.as_ref().unwrap());
        let centers = class_centers(&BundleSpec::fewshot_demo().train).unwrap();
        for i in 0..feats.rows() {
            let x = feats.row_f64(i);
            let d: Vec<f64> = centers.iter().map(|c| x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum()).collect();
            let nearest = (0..d.len()).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
            assert_eq!(preds.as_slice()[i], nearest as i64);
        }
        assert_eq!(b, gen_bundle(&BundleSpec::fewshot_demo(), 4).unwrap());
    }

    #[test]
    fn bundle_spec_errors() {
        let mut spec = BundleSpec::fewshot_demo();
        spec.test[0].class_id = 9;
        assert!(matches!(gen_bundle(&spec, 0), Err(Error::BadSpec(_))));
        let mut spec = BundleSpec::fewshot_demo();
        spec.ood[0].center.pop();
        assert!(matches!(gen_bundle(&spec, 0), Err(Error::BadSpec(_))));
    }

    #[test]
    fn calibration_scenarios_disagree() {
        let sc = calibration_scenarios(0);
        assert_eq!(sc.len(), 5);
        let mut eces = Vec::new();
        let mut aurocs = Vec::new();
        for s in &sc {
            let e = ece(&s.confidence, &s.correct, 15).unwrap();
            let (neg, pos): (Vec<f64>, Vec<f64>) = {
                let u = s.uncertainty();
                let inc = u.scores.iter().zip(&s.correct).filter(|x| *x.1).map(|x| *x.0).collect();
                let inw = u.scores.iter().zip(&s.correct).filter(|x| !*x.1).map(|x| *x.0).collect();
                (inc, inw)
            };
            eces.push(e);
            aurocs.push(auroc(&neg, &pos).unwrap());
        }
        // c is calibrated but not separable
        assert!(eces[2] < 1e-12);
        assert!(aurocs[2] < 1.0);
        // b separates perfectly while overconfident
        assert_eq!(aurocs[1], 1.0);
        assert!(eces[1] > 0.2);
        let disagree = (0..5).any(|i| (0..5).any(|j| eces[i] < eces[j] && aurocs[i] < aurocs[j]));
        assert!(disagree);
        assert_eq!(sc, calibration_scenarios(0));
    }

    #[test]
    fn toml_config() {
        let cfg = SynthConfig::from_toml(
            r#"
seed = 3
calibration = true
[scores.inc]
n = 10
dist = { kind = "gaussian", mu = 0.2, sigma = 0.05 }
[scores.inw]
n = 5
dist = { kind = "beta", a = 2.0, b = 2.0 }
clip = [0.0, 1.0]
[scores.ood]
n = 5
dist = { kind = "point", v = 0.9 }
[bundle]
preset = "fewshot-demo"
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.scores.unwrap().inw.clip, Some([0.0, 1.0]));
        assert_eq!(cfg.bundle.unwrap().resolve().unwrap(), BundleSpec::fewshot_demo());
        assert!(SynthConfig::from_toml("seed = 1").is_err());
        assert!(SynthConfig::from_toml("bogus = 1").is_err());
    }
}
