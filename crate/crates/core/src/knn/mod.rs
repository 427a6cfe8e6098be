//! Feature-space scorers built on exact top-K cosine similarity.
//!
//! `knn_score` compares each query with the training bank only:
//! `u = 1 - topK(S_train)`. `fsknn_score` also consults a few-shot bank of
//! known OoD reference samples: `u = 1 - topK(S_train) + topK(S_ref)`,
//! where `topK` is the K-th largest cosine similarity (duplicates count
//! separately).
//!
//! Both scorers clamp K per bank to the bank size; the effective values
//! are echoed in the returned [`ScoreVector`] params.

pub mod kernel;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorers::ScoreVector;
use crate::tensorio::FeatureMatrix;

use kernel::{padded_len, tile_dots, QB};

/// Immutable bank of padded `f64` rows with cached Euclidean norms.
#[derive(Debug, Clone)]
pub struct SimilarityBank {
    rows: usize,
    dim: usize,
    stride: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

fn pack(features: &FeatureMatrix) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let stride = padded_len(features.cols());
    let mut data = Vec::with_capacity(features.rows() * stride);
    for i in 0..features.rows() {
        kernel::pack_row(features.row(i), stride, &mut data);
    }
    let norms = data
        .chunks_exact(stride)
        .enumerate()
        .map(|(i, r)| {
            let n = kernel::dot(r, r).sqrt();
            if n > 0.0 {
                Ok(n)
            } else {
                Err(Error::ZeroVector(i))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((stride, data, norms))
}

impl SimilarityBank {
    /// Rejects any zero-norm row.
    pub fn new(features: &FeatureMatrix) -> Result<Self> {
        let (stride, data, norms) = pack(features)?;
        Ok(Self {
            rows: features.rows(),
            dim: features.cols(),
            stride,
            data,
            norms,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }

    /// Cosine similarity of every bank row with `query`, in bank order.
    pub fn similarities(&self, query: &[f64]) -> Result<Vec<f64>> {
        let (q, qn) = self.pack_query(query)?;
        Ok((0..self.rows)
            .map(|i| cosine(kernel::dot(&q, self.row(i)), qn, self.norms[i]))
            .collect())
    }

    fn pack_query(&self, query: &[f64]) -> Result<(Vec<f64>, f64)> {
        if query.len() != self.dim {
            return Err(Error::DimMismatch {
                what: "query/bank".into(),
                left: query.len(),
                right: self.dim,
            });
        }
        let mut q = query.to_vec();
        q.resize(self.stride, 0.0);
        let n = kernel::dot(&q, &q).sqrt();
        if n > 0.0 {
            Ok((q, n))
        } else {
            Err(Error::ZeroVector(0))
        }
    }
}

#[inline]
fn cosine(dot: f64, qn: f64, bn: f64) -> f64 {
    (dot / (qn * bn)).clamp(-1.0, 1.0)
}

/// Neighbour count K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl KnnParams {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::KOutOfRange { k, rows: 0 });
        }
        Ok(Self { k })
    }

    /// `min(k, bank_rows)`.
    pub fn effective(&self, bank: &SimilarityBank) -> usize {
        self.k.min(bank.rows())
    }
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Running K-th-largest tracker over a multiset.
#[derive(Debug, Clone)]
enum TopK {
    /// Descending buffer holding at most `k` values.
    Small { k: usize, buf: Vec<f64> },
    All { k: usize, buf: Vec<f64> },
}

const SMALL_K: usize = 64;

impl TopK {
    fn new(k: usize) -> Self {
        if k <= SMALL_K {
            TopK::Small {
                k,
                buf: Vec::with_capacity(k + 1),
            }
        } else {
            TopK::All { k, buf: Vec::new() }
        }
    }

    #[inline]
    fn push(&mut self, v: f64) {
        match self {
            TopK::Small { k, buf } => {
                if buf.len() == *k {
                    if v <= buf[*k - 1] {
                        return;
                    }
                    buf.pop();
                }
                let pos = buf.partition_point(|&x| x >= v);
                buf.insert(pos, v);
            }
            TopK::All { buf, .. } => buf.push(v),
        }
    }

    /// Values at or below this cannot change the K-th largest.
    #[inline]
    fn floor(&self) -> f64 {
        match self {
            TopK::Small { k, buf } if buf.len() == *k => buf[*k - 1],
            _ => f64::NEG_INFINITY,
        }
    }

    fn kth(mut self) -> f64 {
        match &mut self {
            TopK::Small { k, buf } => buf[*k - 1],
            TopK::All { k, buf } => {
                let idx = *k - 1;
                let (_, v, _) = buf.select_nth_unstable_by(idx, |a, b| b.total_cmp(a));
                *v
            }
        }
    }
}

/// K-th largest cosine similarity between `query` and the bank.
pub fn topk_similarity(query: &[f64], bank: &SimilarityBank, k: usize) -> Result<f64> {
    if k == 0 || k > bank.rows() {
        return Err(Error::KOutOfRange {
            k,
            rows: bank.rows(),
        });
    }
    let mut top = TopK::new(k);
    for s in bank.similarities(query)? {
        top.push(s);
    }
    Ok(top.kth())
}

const QUERY_BLOCK: usize = 64;
const BANK_TILE: usize = 256;

/// K-th largest cosine similarity for every row of `queries`, computed in
/// cache-sized tiles. Query blocks run in parallel on the current rayon
/// pool; the values are independent of the thread count.
pub fn topk_similarities(
    queries: &FeatureMatrix,
    bank: &SimilarityBank,
    k: usize,
) -> Result<Vec<f64>> {
    if queries.cols() != bank.dim() {
        return Err(Error::DimMismatch {
            what: "queries/bank".into(),
            left: queries.cols(),
            right: bank.dim(),
        });
    }
    if k == 0 || k > bank.rows() {
        return Err(Error::KOutOfRange {
            k,
            rows: bank.rows(),
        });
    }
    let (stride, qdata, qnorms) = pack(queries)?;
    let blocks: Vec<Vec<f64>> = qdata
        .par_chunks(QUERY_BLOCK * stride)
        .zip(qnorms.par_chunks(QUERY_BLOCK))
        .map(|(block, norms)| score_block(block, norms, stride, bank, k))
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

fn score_block(
    block: &[f64],
    qnorms: &[f64],
    stride: usize,
    bank: &SimilarityBank,
    k: usize,
) -> Vec<f64> {
    let nq = qnorms.len();
    let qrow = |i: usize| &block[i * stride..(i + 1) * stride];
    let mut tops: Vec<TopK> = (0..nq).map(|_| TopK::new(k)).collect();
    let mut dots = vec![[0.0f64; QB]; BANK_TILE];
    for tile in (0..bank.rows).step_by(BANK_TILE) {
        let tile_end = (tile + BANK_TILE).min(bank.rows);
        let n = tile_end - tile;
        let tile_data = &bank.data[tile * stride..tile_end * stride];
        let tile_norms = &bank.norms[tile..tile_end];
        for q0 in (0..nq).step_by(QB) {
            // Tail blocks repeat the last valid row; the extra results are dropped.
            let qs: [&[f64]; QB] = std::array::from_fn(|r| qrow((q0 + r).min(nq - 1)));
            let q_valid = (nq - q0).min(QB);
            tile_dots(qs, tile_data, stride, &mut dots[..n]);
            for r in 0..q_valid {
                let top = &mut tops[q0 + r];
                let qn = qnorms[q0 + r];
                let mut floor = top.floor();
                for (d, &bn) in dots[..n].iter().zip(tile_norms) {
                    let s = cosine(d[r], qn, bn);
                    if s > floor {
                        top.push(s);
                        floor = top.floor();
                    }
                }
            }
        }
    }
    tops.into_iter().map(TopK::kth).collect()
}

fn check_dims(test: &FeatureMatrix, bank: &SimilarityBank, what: &str) -> Result<()> {
    if test.cols() != bank.dim() {
        return Err(Error::DimMismatch {
            what: what.into(),
            left: test.cols(),
            right: bank.dim(),
        });
    }
    Ok(())
}

/// `u = 1 - topK(S_train)`, in `[0, 2]`.
pub fn knn_score(
    test: &FeatureMatrix,
    train_bank: &SimilarityBank,
    p: KnnParams,
) -> Result<ScoreVector> {
    check_dims(test, train_bank, "test/train features")?;
    let k = p.effective(train_bank);
    let sims = topk_similarities(test, train_bank, k)?;
    Ok(
        ScoreVector::new("knn", sims.into_iter().map(|s| 1.0 - s).collect())
            .with_param("k", p.k as f64)
            .with_param("k_eff_train", k as f64),
    )
}

/// `u = 1 - topK(S_train) + topK(S_ref)`, in `[-1, 3]`.
pub fn fsknn_score(
    test: &FeatureMatrix,
    train_bank: &SimilarityBank,
    ref_bank: &SimilarityBank,
    p: KnnParams,
) -> Result<ScoreVector> {
    check_dims(test, train_bank, "test/train features")?;
    check_dims(test, ref_bank, "test/reference features")?;
    let k_train = p.effective(train_bank);
    let k_ref = p.effective(ref_bank);
    let train = topk_similarities(test, train_bank, k_train)?;
    let reference = topk_similarities(test, ref_bank, k_ref)?;
    let scores = train
        .into_iter()
        .zip(reference)
        .map(|(t, r)| 1.0 - t + r)
        .collect();
    Ok(ScoreVector::new("fsknn", scores)
        .with_param("k", p.k as f64)
        .with_param("k_eff_train", k_train as f64)
        .with_param("k_eff_ref", k_ref as f64))
}
