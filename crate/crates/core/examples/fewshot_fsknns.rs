// Few-shot open-set evaluation on a synthetic feature bundle: a plain
// softmax score, train-only KNN, few-shot KNN and its fusions.
//
// ```bash
// cargo run --release --example fewshot_fsknns
// ```

use uosr::fewshot::{run_fewshot, FewShotConfig, Method};
use uosr::metrics::report::ReportFormat;
use uosr::synth::{gen_bundle, BundleSpec};

pub fn run_example() -> uosr::Result<()> {
    let bundle = gen_bundle(&BundleSpec::fewshot_demo(), 7)?;
    for shots in [5, 1] {
        let cfg = FewShotConfig {
            shots,
            seed: 7,
            ..FewShotConfig::default()
        };
        let result = run_fewshot(&bundle, &cfg)?;
        println!("{shots}-shot, {} repeats", result.n_repeats);
        print!("{}", result.table(&Method::ALL, ReportFormat::Markdown));
        let lambdas: Vec<f64> = result.repeats.iter().map(|r| r.lambda).collect();
        let mean_lambda = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
        println!("mean gate threshold {mean_lambda:.4}\n");
    }
    Ok(())
}

fn main() -> uosr::Result<()> {
    run_example()
}
