//! Few-shot evaluation protocol.
//!
//! The OoD test set doubles as the reference pool. Each class is shuffled
//! once with a seeded generator and cut into consecutive chunks of
//! `shots`; repeat `r` uses chunk `r` of every class as the reference
//! bank. Repeats continue until the smallest class is exhausted, and the
//! reported result is the mean over repeats.
//!
//! Shuffling is Fisher–Yates driven by ChaCha8 (`rand_chacha`, seeded with
//! `seed_from_u64(seed)` and stream = class position in ascending class-id
//! order). A bounded index `j < n` is drawn with Lemire's multiply-shift
//! method: `m = x · n` as a 128-bit product of a fresh `u64` `x`; if the
//! low word is below `(2⁶⁴ − n) mod n` the draw is rejected, otherwise
//! `j = m >> 64`. This keeps partitions reproducible outside Rust.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{additive_fuse, fsknns_fuse, multiplicative_fuse, ref_stats, select_lambda, FusionParams, RefStats};
use crate::knn::{topk_similarities, KnnParams, SimilarityBank};
use crate::metrics::report::{render_table, ReportFormat};
use crate::metrics::{evaluate, mean_report, MetricReport};
use crate::outcomes::{classify_outcomes, OutcomeVector};
use crate::scorers::{max_probability, predictions_from_logits, LogitScorer, ScoreVector, Temperature};
use crate::tensorio::{EvaluationBundle, FeatureMatrix, LabelVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FewShotConfig {
    pub shots: usize,
    pub knn: KnnParams,
    pub fusion: FusionParams,
    pub seed: u64,
    /// Logit scorer providing `u0`.
    pub scorer0: LogitScorer,
    pub temperature: Temperature,
    /// Remove each repeat's reference samples from the evaluated OoD set.
    pub exclude_drawn: bool,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        Self {
            shots: 5,
            knn: KnnParams::default(),
            fusion: FusionParams::default(),
            seed: 0,
            scorer0: LogitScorer::Msp,
            temperature: Temperature::default(),
            exclude_drawn: true,
        }
    }
}

/// Rows of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// The plain logit scorer.
    U0,
    Knn,
    FsKnn,
    FsKnnAdd,
    FsKnnMul,
    FsKnns,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::U0,
        Method::Knn,
        Method::FsKnn,
        Method::FsKnnAdd,
        Method::FsKnnMul,
        Method::FsKnns,
    ];

    pub fn label(self, scorer0: LogitScorer) -> String {
        match self {
            Method::U0 => scorer0.id().to_ascii_uppercase(),
            Method::Knn => "KNN".into(),
            Method::FsKnn => "FS-KNN".into(),
            Method::FsKnnAdd => "FS-KNN+S".into(),
            Method::FsKnnMul => "FS-KNN*S".into(),
            Method::FsKnns => "FS-KNNS".into(),
        }
    }

    /// Identifier accepted on the command line.
    pub fn id(self) -> &'static str {
        match self {
            Method::U0 => "u0",
            Method::Knn => "knn",
            Method::FsKnn => "fsknn",
            Method::FsKnnAdd => "fsknn+s",
            Method::FsKnnMul => "fsknn*s",
            Method::FsKnns => "fsknns",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::BadSpec(format!("unknown method `{s}`")))
    }
}

/// Per-method reports of one repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    /// Reference indices into the OoD pool, ascending.
    pub reference: Vec<usize>,
    pub ref_stats: RefStats,
    pub lambda: f64,
    pub reports: BTreeMap<Method, MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotResult {
    pub config: FewShotConfig,
    pub n_repeats: usize,
    /// Pool samples never drawn because their class size is not a
    /// multiple of the repeat count times `shots`.
    pub n_unused: usize,
    pub repeats: Vec<RepeatResult>,
    /// Field-wise means over repeats, per method.
    pub mean: BTreeMap<Method, MetricReport>,
}

impl FewShotResult {
    /// FS-KNNS reports per repeat.
    pub fn per_repeat(&self) -> Vec<&MetricReport> {
        self.repeats.iter().map(|r| &r.reports[&Method::FsKnns]).collect()
    }

    pub fn mean_report(&self) -> &MetricReport {
        &self.mean[&Method::FsKnns]
    }

    /// Comparison table over `methods` (all six when empty).
    pub fn table(&self, methods: &[Method], format: ReportFormat) -> String {
        let methods = if methods.is_empty() { &Method::ALL[..] } else { methods };
        let rows: Vec<(String, MetricReport)> = methods
            .iter()
            .map(|m| (m.label(self.config.scorer0), self.mean[m].clone()))
            .collect();
        render_table(&rows, format)
    }
}

/// Uniform integer in `[0, n)` by Lemire's multiply-shift with rejection.
fn bounded(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    let mut m = rng.next_u64() as u128 * n as u128;
    if (m as u64) < n {
        let threshold = n.wrapping_neg() % n;
        while (m as u64) < threshold {
            m = rng.next_u64() as u128 * n as u128;
        }
    }
    (m >> 64) as u64
}

fn fisher_yates(v: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = bounded(rng, i as u64 + 1) as usize;
        v.swap(i, j);
    }
}

/// Splits the pool into repeats of `shots` samples per class. Returns one
/// ascending index set per repeat.
pub fn draw_reference_partition(class_ids: &LabelVector, shots: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be >= 1".into()));
    }
    if class_ids.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut classes: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &c) in class_ids.as_slice().iter().enumerate() {
        classes.entry(c).or_default().push(i);
    }
    if let Some((&class, members)) = classes.iter().find(|(_, m)| m.len() < shots) {
        return Err(Error::ShotsExceedClassSize {
            class,
            size: members.len(),
            shots,
        });
    }
    let n_repeats = classes.values().map(Vec::len).min().unwrap_or(0) / shots;
    let mut draws = vec![Vec::new(); n_repeats];
    for (stream, members) in classes.values_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        fisher_yates(members, &mut rng);
        for (r, chunk) in members.chunks_exact(shots).take(n_repeats).enumerate() {
            draws[r].extend_from_slice(chunk);
        }
    }
    for d in &mut draws {
        d.sort_unstable();
    }
    Ok(draws)
}

/// OoD pool indices scored in a repeat whose reference set is
/// `reference` (ascending).
pub fn evaluated_ood(n_pool: usize, reference: &[usize], exclude_drawn: bool) -> Vec<usize> {
    (0..n_pool)
        .filter(|i| !exclude_drawn || reference.binary_search(i).is_err())
        .collect()
}

fn require<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::MissingComponent(what.into()))
}

/// Everything shared by all repeats: stacked test+OoD rows and their
/// repeat-independent scores.
struct Prepared<'a> {
    queries: FeatureMatrix,
    ood_features: &'a FeatureMatrix,
    predictions: LabelVector,
    labels: &'a LabelVector,
    u0: ScoreVector,
    confidence: Option<Vec<f64>>,
    knn: ScoreVector,
    /// `topK(S_train)` for every stacked row.
    train_top: Vec<f64>,
    k_eff_train: usize,
    n_test: usize,
}

fn prepare<'a>(bundle: &'a EvaluationBundle, cfg: &FewShotConfig) -> Result<Prepared<'a>> {
    let train = require(&bundle.train_features, "train features")?;
    let test_feats = require(&bundle.test_features, "test features")?;
    let test_logits = require(&bundle.test_logits, "test logits")?;
    let ood_feats = require(&bundle.ood_features, "OoD features")?;
    let ood_logits = require(&bundle.ood_logits, "OoD logits")?;
    let ood_ids = require(&bundle.ood_class_ids, "OoD class ids")?;
    for (what, l, r) in [
        ("test features/test labels", test_feats.rows(), bundle.test_labels.len()),
        ("test logits/test labels", test_logits.rows(), bundle.test_labels.len()),
        ("OoD logits/OoD features", ood_logits.rows(), ood_feats.rows()),
        ("OoD class ids/OoD features", ood_ids.len(), ood_feats.rows()),
    ] {
        if l != r {
            return Err(Error::RowCountMismatch {
                what: what.into(),
                left: l,
                right: r,
            });
        }
    }
    let predictions = match &bundle.test_predictions {
        Some(p) => p.clone(),
        None => predictions_from_logits(test_logits),
    };
    let queries = test_feats.vstack(ood_feats)?;
    let logits = test_logits.vstack(ood_logits)?;
    let u0 = cfg.scorer0.score(&logits, cfg.temperature);
    let confidence = (cfg.scorer0 == LogitScorer::Msp).then(|| max_probability(&logits, cfg.temperature));
    let train_bank = SimilarityBank::new(train)?;
    let k_eff_train = cfg.knn.effective(&train_bank);
    let train_top = topk_similarities(&queries, &train_bank, k_eff_train)?;
    let knn = ScoreVector::new("knn", train_top.iter().map(|s| 1.0 - s).collect())
        .with_param("k", cfg.knn.k as f64)
        .with_param("k_eff_train", k_eff_train as f64);
    Ok(Prepared {
        queries,
        ood_features: ood_feats,
        predictions,
        labels: &bundle.test_labels,
        u0,
        confidence,
        knn,
        train_top,
        k_eff_train,
        n_test: bundle.test_labels.len(),
    })
}

fn run_repeat(p: &Prepared, cfg: &FewShotConfig, mut reference: Vec<usize>) -> Result<RepeatResult> {
    reference.sort_unstable();
    reference.dedup();
    let evaluated = evaluated_ood(p.ood_features.rows(), &reference, cfg.exclude_drawn);
    let rows: Vec<usize> = (0..p.n_test).chain(evaluated.iter().map(|i| p.n_test + i)).collect();
    let n_eval_ood = rows.len() - p.n_test;
    let outcomes: OutcomeVector = classify_outcomes(&p.predictions, p.labels, n_eval_ood)?;

    let ref_feats = p.ood_features.select_rows(&reference)?;
    let ref_bank = SimilarityBank::new(&ref_feats)?;
    let k_eff_ref = cfg.knn.effective(&ref_bank);
    let fsknn_of = |train_top: &[f64], ref_top: Vec<f64>| -> ScoreVector {
        let scores = train_top.iter().zip(ref_top).map(|(t, r)| 1.0 - t + r).collect();
        ScoreVector::new("fsknn", scores)
            .with_param("k", cfg.knn.k as f64)
            .with_param("k_eff_train", p.k_eff_train as f64)
            .with_param("k_eff_ref", k_eff_ref as f64)
    };

    let eval_queries = p.queries.select_rows(&rows)?;
    let eval_train_top: Vec<f64> = rows.iter().map(|&i| p.train_top[i]).collect();
    let u1 = fsknn_of(&eval_train_top, topk_similarities(&eval_queries, &ref_bank, k_eff_ref)?);

    // reference samples scored against their own bank
    let ref_train_top: Vec<f64> = reference.iter().map(|&i| p.train_top[p.n_test + i]).collect();
    let ref_u1 = fsknn_of(&ref_train_top, topk_similarities(&ref_feats, &ref_bank, k_eff_ref)?);
    let stats = ref_stats(&ref_u1)?;
    let lambda = select_lambda(&stats, cfg.fusion.beta);
    let fusion = FusionParams::new(cfg.fusion.alpha, cfg.fusion.beta)?.with_lambda(lambda);

    let u0 = p.u0.select(&rows);
    let knn = p.knn.select(&rows);
    let conf: Option<Vec<f64>> = p.confidence.as_ref().map(|c| rows.iter().map(|&i| c[i]).collect());

    let mut reports = BTreeMap::new();
    reports.insert(Method::U0, evaluate(&u0, &outcomes, conf.as_deref())?);
    reports.insert(Method::Knn, evaluate(&knn, &outcomes, None)?);
    reports.insert(Method::FsKnnAdd, evaluate(&additive_fuse(&u0, &u1)?, &outcomes, None)?);
    reports.insert(Method::FsKnnMul, evaluate(&multiplicative_fuse(&u0, &u1)?, &outcomes, None)?);
    reports.insert(Method::FsKnns, evaluate(&fsknns_fuse(&u0, &u1, &fusion)?, &outcomes, None)?);
    reports.insert(Method::FsKnn, evaluate(&u1, &outcomes, None)?);
    Ok(RepeatResult {
        reference,
        ref_stats: stats,
        lambda,
        reports,
    })
}

/// Runs every repeat and averages the per-method reports.
pub fn run_fewshot(bundle: &EvaluationBundle, cfg: &FewShotConfig) -> Result<FewShotResult> {
    let ood_ids = require(&bundle.ood_class_ids, "OoD class ids")?;
    let draws = draw_reference_partition(ood_ids, cfg.shots, cfg.seed)?;
    run_with_draws(bundle, cfg, draws)
}

/// [`run_fewshot`] with a precomputed partition.
pub fn run_with_draws(bundle: &EvaluationBundle, cfg: &FewShotConfig, draws: Vec<Vec<usize>>) -> Result<FewShotResult> {
    let prepared = prepare(bundle, cfg)?;
    let n_pool = prepared.ood_features.rows();
    if let Some(&bad) = draws.iter().flatten().find(|&&i| i >= n_pool) {
        return Err(Error::OutOfRange(format!("reference index {bad} outside pool of {n_pool}")));
    }
    let n_used: usize = draws.iter().map(Vec::len).sum();
    let repeats: Vec<RepeatResult> = draws
        .into_par_iter()
        .map(|d| run_repeat(&prepared, cfg, d))
        .collect::<Result<_>>()?;
    let mut mean = BTreeMap::new();
    for m in Method::ALL {
        let per: Vec<MetricReport> = repeats.iter().map(|r| r.reports[&m].clone()).collect();
        mean.insert(m, mean_report(&per)?);
    }
    Ok(FewShotResult {
        config: *cfg,
        n_repeats: repeats.len(),
        n_unused: n_pool.saturating_sub(n_used),
        repeats,
        mean,
    })
}
