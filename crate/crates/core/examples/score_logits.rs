// Scores a handful of logit rows with every post-hoc scorer and shows
// that temperature changes MSP but never the predicted class.
//
// ```bash
// cargo run --example score_logits
// ```

use uosr::scorers::{predictions_from_logits, LogitScorer, Temperature};
use uosr::tensorio::FeatureMatrix;

pub fn run_example() -> uosr::Result<()> {
    let logits = FeatureMatrix::from_rows(&[
        [4.0, 0.5, 0.1],
        [1.0, 0.9, 0.8],
        [0.0, 0.0, 6.0],
        [2.0, 2.0, -1.0],
    ])?;

    println!("{:<9} {:>8} {:>8} {:>8} {:>8}", "scorer", "row0", "row1", "row2", "row3");
    for scorer in LogitScorer::ALL {
        let u = scorer.score(&logits, Temperature::default());
        print!("{:<9}", scorer.id());
        for v in u.as_slice() {
            print!(" {v:>8.4}");
        }
        println!();
    }

    let base = predictions_from_logits(&logits);
    println!("\npredictions {:?}", base.as_slice());
    for t in [0.5, 1.0, 2.0, 10.0] {
        let t = Temperature::new(t)?;
        let msp = LogitScorer::Msp.score(&logits, t);
        // argmax of logits / T is argmax of logits
        assert_eq!(predictions_from_logits(&logits), base);
        println!("T = {:>4}: MSP uncertainty {:?}", t.get(), rounded(msp.as_slice()));
    }
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

fn main() -> uosr::Result<()> {
    run_example()
}
