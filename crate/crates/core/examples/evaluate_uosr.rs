// Misclassified in-distribution samples and OoD samples often look
// alike to an uncertainty score. This example draws scores where they
// share one distribution and compares the OSR and UOSR views of the
// same scores.
//
// ```bash
// cargo run --example evaluate_uosr
// ```

use uosr::metrics::evaluate;
use uosr::metrics::report::{render_table, ReportFormat};
use uosr::synth::{gen_scores, GroupSpec};

pub fn run_example() -> uosr::Result<()> {
    let inc = GroupSpec::gaussian(2000, 0.2, 0.05);
    let inw = GroupSpec::gaussian(500, 0.7, 0.1);
    let ood = GroupSpec::gaussian(2000, 0.7, 0.1);
    let (scores, outcomes) = gen_scores(&inc, &inw, &ood, 42)?;

    let report = evaluate(&scores, &outcomes, None)?;
    print!("{}", render_table(&[("overlap".into(), report.clone())], ReportFormat::Markdown));

    let (uosr, osr) = (report.auroc_uosr.unwrap_or(0.0), report.auroc_osr.unwrap_or(0.0));
    println!("\nInW/OoD AUROC {:.4}", report.auroc_inw_ood.unwrap_or(f64::NAN));
    println!("UOSR {uosr:.4} vs OSR {osr:.4}: gap {:.4}", uosr - osr);
    println!("AUPR (UOSR) {:.4}", report.aupr_uosr.unwrap_or(f64::NAN));
    println!("mixture residual {:e}", report.mixture_residual());
    Ok(())
}

fn main() -> uosr::Result<()> {
    run_example()
}
