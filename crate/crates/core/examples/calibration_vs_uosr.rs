// Good calibration does not imply good separation of correct and wrong
// predictions. Five confidence layouts share their correct samples and
// move only the misclassified ones.
//
// ```bash
// cargo run --example calibration_vs_uosr
// ```

use uosr::metrics::{auroc, ece, DEFAULT_BINS};
use uosr::synth::calibration_scenarios;

pub fn run_example() -> uosr::Result<()> {
    println!("{:<3} {:>7} {:>9}  description", "id", "ECE", "SP AUROC");
    let mut rows = Vec::new();
    for s in calibration_scenarios(0) {
        let u = s.uncertainty();
        let (mut inc, mut inw) = (Vec::new(), Vec::new());
        for (&v, &ok) in u.as_slice().iter().zip(&s.correct) {
            if ok { inc.push(v) } else { inw.push(v) }
        }
        let e = ece(&s.confidence, &s.correct, DEFAULT_BINS)?;
        let a = auroc(&inc, &inw)?;
        println!("{:<3} {e:>7.4} {a:>9.4}  {}", s.id, s.description);
        rows.push((s.id, e, a));
    }
    let best_ece = rows.iter().min_by(|x, y| x.1.total_cmp(&y.1)).map(|r| r.0.clone());
    let best_auroc = rows.iter().max_by(|x, y| x.2.total_cmp(&y.2)).map(|r| r.0.clone());
    println!("\nbest calibrated: {best_ece:?}; best separated: {best_auroc:?}");
    Ok(())
}

fn main() -> uosr::Result<()> {
    run_example()
}
