//! Dirac-Uniform data: adaptive procedures use up the full level, BH only
//! its null fraction.
//!
//!     cargo run --release --example du_exhaustion

use wamdf::sim::{run_du_simulation, DuConfig, WeightMode};
use wamdf::Variant;

fn main() -> wamdf::Result<()> {
    let config = DuConfig {
        m0: 2000,
        m1: 2000,
        replications: 50,
        alpha: 0.05,
        lambda: 0.2,
        variants: Variant::ALL.to_vec(),
        weight_mode: WeightMode::Independent,
        seed: 3,
    };
    let summary = run_du_simulation(&config)?;
    for v in &summary.variants {
        println!("{}\tmean FDP {:.4}", v.variant, v.mean_fdp);
    }
    Ok(())
}
