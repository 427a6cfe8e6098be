// Exact top-K cosine scoring throughput on random features.
//
// ```bash
// cargo run --release --example knn_throughput -- 10000 50000 128
// ```
//
// Arguments are queries, bank rows and dimension; the defaults are small
// so that the example also runs quickly in debug builds.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uosr::knn::{knn_score, KnnParams, SimilarityBank};
use uosr::tensorio::FeatureMatrix;

fn random_matrix(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> uosr::Result<FeatureMatrix> {
    FeatureMatrix::new(rows, dim, (0..rows * dim).map(|_| rng.random::<f32>() - 0.5).collect())
}

fn run(queries: usize, bank_rows: usize, dim: usize) -> uosr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bank = random_matrix(bank_rows, dim, &mut rng)?;
    let q = random_matrix(queries, dim, &mut rng)?;
    let start = Instant::now();
    let bank = SimilarityBank::new(&bank)?;
    let scores = knn_score(&q, &bank, KnnParams::new(5)?)?;
    let secs = start.elapsed().as_secs_f64();
    let pairs = queries as f64 * bank_rows as f64;
    println!(
        "{queries} x {bank_rows} x {dim}: {secs:.3} s, {:.1} M similarities/s, {} threads, first score {:.6}",
        pairs / secs / 1e6,
        rayon::current_num_threads(),
        scores.as_slice()[0]
    );
    Ok(())
}

pub fn run_example() -> uosr::Result<()> {
    run(500, 2000, 64)
}

fn main() -> uosr::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    match args[..] {
        [q, b, d] => run(q, b, d),
        _ => run_example(),
    }
}
