//! Finite-sample FDR control with fixed weights: the adjusted level, the
//! bound, and a Monte Carlo check.
//!
//!     cargo run --release --example finite_fdr

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wamdf::normal;
use wamdf::sim::evaluate;
use wamdf::{alpha_star, fdr_upper_bound, run_procedure, ProcedureParams, ThresholdMode, Variant};

fn main() -> wamdf::Result<()> {
    let (m, m0, lambda, alpha) = (20, 15, 0.2, 0.05);
    // Weights averaging one with maximum 1.5.
    let w: Vec<f64> = (0..m).map(|i| if i % 2 == 0 { 1.5 } else { 0.5 }).collect();
    let w0_bar = w[..m0].iter().sum::<f64>() / m0 as f64;
    println!("alpha* = {:.6}", alpha_star(alpha, lambda, 1.5)?);
    println!("bound  = {:.6}", fdr_upper_bound(alpha, lambda, w0_bar, m0)?);

    let params = ProcedureParams::new(alpha)
        .with_lambda(lambda)
        .with_mode(ThresholdMode::FiniteSample);
    let theta: Vec<bool> = (0..m).map(|i| i >= m0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let reps = 2000;
    let mut total = 0.0;
    for _ in 0..reps {
        let p: Vec<f64> = theta
            .iter()
            .map(|&t| {
                let z: f64 = rng.sample(StandardNormal);
                normal::sf(z + if t { 3.0 } else { 0.0 })
            })
            .collect();
        let r = run_procedure(Variant::WA, &p, Some(&w), &params)?;
        total += evaluate(&theta, &r.rejected)?.fdp;
    }
    println!("empirical FDR over {reps} runs = {:.4}", total / reps as f64);
    Ok(())
}
