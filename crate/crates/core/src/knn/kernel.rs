//! Dot-product kernels with a fixed accumulation order.
//!
//! Vectors are stored zero-padded to a multiple of [`LANES`]. A dot product
//! keeps one accumulator per lane; lane `l` sums the fused multiply-adds of
//! indices `i ≡ l (mod 4)` in increasing `i`, and the lanes are combined as
//! `(s0 + s1) + (s2 + s3)`. The AVX2 path and the portable path implement
//! exactly this order, so results do not depend on the CPU, on how queries
//! are blocked, or on the number of worker threads.

pub const LANES: usize = 4;

/// Rounds `dim` up to a multiple of [`LANES`].
pub fn padded_len(dim: usize) -> usize {
    dim.div_ceil(LANES) * LANES
}

/// Copies `src` into a zero-padded `f64` buffer of length `stride`.
pub fn pack_row(src: &[f32], stride: usize, dst: &mut Vec<f64>) {
    dst.extend(src.iter().map(|&v| v as f64));
    dst.extend(std::iter::repeat_n(0.0, stride - src.len()));
}

#[inline]
fn combine(acc: [f64; LANES]) -> f64 {
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Portable reference implementation of the canonical dot product.
pub fn dot_portable(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len() % LANES, 0);
    let mut acc = [0.0f64; LANES];
    for (ca, cb) in a.chunks_exact(LANES).zip(b.chunks_exact(LANES)) {
        for l in 0..LANES {
            acc[l] = ca[l].mul_add(cb[l], acc[l]);
        }
    }
    combine(acc)
}

/// Canonical dot product of two padded vectors.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if simd::available() {
            // SAFETY: avx2 and fma were detected at runtime.
            return unsafe { simd::dot(a, b) };
        }
    }
    dot_portable(a, b)
}

/// Query rows per micro-kernel call.
pub const QB: usize = 4;

/// Dots of `QB` query rows against consecutive bank rows.
///
/// `bank` holds `out.len()` padded rows of length `stride`; on return
/// `out[j][r] = dot(queries[r], bank row j)`.
pub fn tile_dots(queries: [&[f64]; QB], bank: &[f64], stride: usize, out: &mut [[f64; QB]]) {
    assert!(stride % LANES == 0 && bank.len() >= out.len() * stride);
    assert!(queries.iter().all(|q| q.len() == stride));
    #[cfg(target_arch = "x86_64")]
    {
        if simd::available() {
            // SAFETY: avx2 and fma were detected at runtime; slice lengths
            // were asserted above.
            unsafe { simd::tile_dots(queries, bank, stride, out) };
            return;
        }
    }
    for (j, o) in out.iter_mut().enumerate() {
        let row = &bank[j * stride..(j + 1) * stride];
        for r in 0..QB {
            o[r] = dot_portable(queries[r], row);
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod simd {
    use std::arch::x86_64::*;
    use std::sync::OnceLock;

    use super::{LANES, QB};

    pub fn available() -> bool {
        static AVAILABLE: OnceLock<bool> = OnceLock::new();
        *AVAILABLE.get_or_init(|| {
            is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma")
        })
    }

    #[inline]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn reduce(v: __m256d) -> f64 {
        let mut lanes = [0.0f64; LANES];
        _mm256_storeu_pd(lanes.as_mut_ptr(), v);
        super::combine(lanes)
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn dot(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().min(b.len());
        let mut acc = _mm256_setzero_pd();
        let mut i = 0;
        while i + LANES <= n {
            let va = _mm256_loadu_pd(a.as_ptr().add(i));
            let vb = _mm256_loadu_pd(b.as_ptr().add(i));
            acc = _mm256_fmadd_pd(va, vb, acc);
            i += LANES;
        }
        reduce(acc)
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn tile_dots(q: [&[f64]; QB], bank: &[f64], stride: usize, out: &mut [[f64; QB]]) {
        let rows = out.len();
        let qp = q.map(|r| r.as_ptr());
        let mut j = 0;
        while j + 2 <= rows {
            let b0 = bank.as_ptr().add(j * stride);
            let b1 = b0.add(stride);
            let mut acc0 = [_mm256_setzero_pd(); QB];
            let mut acc1 = [_mm256_setzero_pd(); QB];
            let mut i = 0;
            while i < stride {
                let v0 = _mm256_loadu_pd(b0.add(i));
                let v1 = _mm256_loadu_pd(b1.add(i));
                for r in 0..QB {
                    let vq = _mm256_loadu_pd(qp[r].add(i));
                    acc0[r] = _mm256_fmadd_pd(vq, v0, acc0[r]);
                    acc1[r] = _mm256_fmadd_pd(vq, v1, acc1[r]);
                }
                i += LANES;
            }
            for r in 0..QB {
                out[j][r] = reduce(acc0[r]);
                out[j + 1][r] = reduce(acc1[r]);
            }
            j += 2;
        }
        if j < rows {
            let b0 = bank.as_ptr().add(j * stride);
            let mut acc0 = [_mm256_setzero_pd(); QB];
            let mut i = 0;
            while i < stride {
                let v0 = _mm256_loadu_pd(b0.add(i));
                for r in 0..QB {
                    let vq = _mm256_loadu_pd(qp[r].add(i));
                    acc0[r] = _mm256_fmadd_pd(vq, v0, acc0[r]);
                }
                i += LANES;
            }
            for r in 0..QB {
                out[j][r] = reduce(acc0[r]);
            }
        }
    }
}
