// Sweeps K, then alpha and beta, with one shared reference partition.
//
// ```bash
// cargo run --release --example ablation_sweep
// ```

use uosr::fewshot::{FewShotConfig, Method};
use uosr::sweep::{sweep, to_csv, SweepGrid};
use uosr::synth::{gen_bundle, BundleSpec};

pub fn run_example() -> uosr::Result<()> {
    let bundle = gen_bundle(&BundleSpec::fewshot_demo(), 3)?;
    let base = FewShotConfig::default();

    let k_grid = SweepGrid {
        ks: (1..=10).collect(),
        ..SweepGrid::default()
    };
    let cells = sweep(&bundle, &base, &k_grid)?;
    println!("FS-KNN over K");
    print!("{}", to_csv(&cells, Method::FsKnn));

    let fusion_grid = SweepGrid {
        alphas: vec![10.0, 50.0, 200.0],
        betas: vec![-0.5, 0.0, 0.5, 1.0, 1.5],
        ..SweepGrid::default()
    };
    let cells = sweep(&bundle, &base, &fusion_grid)?;
    println!("\nFS-KNNS over alpha and beta");
    print!("{}", to_csv(&cells, Method::FsKnns));
    Ok(())
}

fn main() -> uosr::Result<()> {
    run_example()
}
