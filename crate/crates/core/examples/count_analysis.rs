//! Synthetic count table with planted trends, analysed with calibrated
//! effect sizes.
//!
//!     cargo run --release --example count_analysis

use wamdf::counts::{synthesize, SynthConfig};
use wamdf::{analyze, AnalysisParams};

fn main() -> wamdf::Result<()> {
    let synth = synthesize(&SynthConfig::default_design(400, 0.2, 0.8, 11))?;
    let analysis = analyze(&synth.dataset, &AnalysisParams::default())?;
    let c = &analysis.calibration;
    println!("K = {:.4}, average power {:.6}", c.k_beta, c.achieved_power);
    println!("WA rejections: {}", analysis.wa.r);
    println!("UA rejections: {}", analysis.ua.r);
    println!("excluded: {}", analysis.excluded.len());

    let mut rows: Vec<_> = analysis.features.iter().collect();
    rows.sort_by_key(|r| r.n);
    println!("\nn\tgamma\tw\tpower\tweighted power");
    for r in rows.iter().step_by(rows.len() / 8) {
        println!(
            "{}\t{:.2}\t{:.3}\t{:.3}\t{:.3}",
            r.n, r.gamma, r.w, r.power_unweighted, r.power_weighted
        );
    }
    Ok(())
}
