//! Weight selection for ten hypotheses, half with effect size 2 and half
//! with 3, all with prior probability 1/2, at level 0.05.
//!
//!     cargo run --example asymptotic_weights

use wamdf::{asymptotically_optimal_weights, fdp_approximator, PowerModel, PriorSpec};

fn main() -> wamdf::Result<()> {
    let model = PowerModel::NormalLocation;
    let gamma = [vec![2.0; 5], vec![3.0; 5]].concat();
    let prior = PriorSpec::new(vec![0.5; 10], gamma)?;
    let profile = asymptotically_optimal_weights(&model, &prior, 0.05)?;

    println!("k*     = {:.4}", profile.k_star);
    println!("lambda = {:.4}", profile.t_bar);
    println!("u      = {:.4}", profile.u);
    println!("FDP~   = {:.6}", fdp_approximator(&model, &prior, profile.k_star)?.value);
    for (g, w) in prior.gamma().iter().zip(&profile.weights).step_by(5) {
        println!("gamma {g}: w = {w:.4}");
    }
    Ok(())
}
