//! Optimal fixed-t weights for two hypotheses with equal priors and
//! effect sizes 1.5 and 2.5, across a range of mean thresholds.
//!
//!     cargo run --example fixed_t_weights

use wamdf::weights::expected_correct_rejections;
use wamdf::{optimal_fixed_t_weights, PowerModel, PriorSpec};

fn main() -> wamdf::Result<()> {
    let model = PowerModel::NormalLocation;
    let prior = PriorSpec::new(vec![0.5, 0.5], vec![1.5, 2.5])?;
    println!("t\tk*\tw1\tw2\tgain");
    for t in [0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2] {
        let profile = optimal_fixed_t_weights(&model, &prior, t)?;
        let weighted = expected_correct_rejections(&model, &prior, &profile.thresholds())?;
        let flat = expected_correct_rejections(&model, &prior, &[t, t])?;
        println!(
            "{t}\t{:.4}\t{:.4}\t{:.4}\t{:+.5}",
            profile.k_star, profile.weights[0], profile.weights[1], weighted - flat
        );
    }
    Ok(())
}
