//! The four procedures on ten p-values using asymptotically optimal weights.
//!
//!     cargo run --example threshold_selection

use wamdf::{
    asymptotically_optimal_weights, run_procedure, PowerModel, PriorSpec, ProcedureParams, Variant,
};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");

fn main() -> wamdf::Result<()> {
    let prior = PriorSpec::from_csv_path(format!("{DATA}/worked_prior.csv"))?;
    let file = std::fs::File::open(format!("{DATA}/worked_pvalues.csv")).expect("fixture");
    let (p, _) = wamdf::procedure::read_pvalue_csv(file)?;

    let profile = asymptotically_optimal_weights(&PowerModel::NormalLocation, &prior, 0.05)?;
    let params = ProcedureParams::new(0.05).with_lambda(profile.t_bar);
    for v in Variant::ALL {
        let r = run_procedure(v, &p, Some(&profile.weights), &params)?;
        println!(
            "{v}: M0_hat={:.2} t_hat={:.5} R={} rejected={:?}",
            r.m0_hat, r.t_hat, r.r, r.rejected_indices
        );
    }
    Ok(())
}
