//! Power, slope and slope inversion for the normal model and a tabulated curve.
//!
//!     cargo run --example power_curves

use wamdf::{EffectSize, PowerModel, TabulatedCurve};

fn main() -> wamdf::Result<()> {
    let normal = PowerModel::NormalLocation;
    println!("gamma\tt\tpower\tslope\tinverted");
    for g in [1.0, 2.0, 3.0] {
        let gamma = EffectSize::new(g)?;
        for t in [0.001, 0.01, 0.05, 0.2] {
            let s = normal.power_slope(gamma, t)?;
            let back = normal.threshold_for_slope(gamma, s)?;
            println!("{g}\t{t}\t{:.6}\t{s:.4}\t{back:.6}", normal.power(gamma, t)?);
        }
    }

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/sqrt_power.csv");
    let curve = PowerModel::Tabulated(TabulatedCurve::from_csv_path(path)?);
    let any = EffectSize::new(1.0)?;
    println!("\ntabulated sqrt(t) curve");
    for t in [0.01, 0.1, 0.5] {
        println!("t={t}\tpower={:.4}\tslope={:.4}", curve.power(any, t)?, curve.power_slope(any, t)?);
    }
    Ok(())
}
