//! Weighted adaptive multiple decision functions.
//!
//! Prior information about each hypothesis (a probability of being
//! non-null and an effect size) is turned into p-value weights that
//! maximise expected correct rejections at a fixed false discovery level.
//! The weighted p-values then enter a step-up procedure with an optional
//! adaptive estimate of the number of true nulls.
//!
//! ```
//! use wamdf::{asymptotically_optimal_weights, PowerModel, PriorSpec};
//!
//! let prior = PriorSpec::new(vec![0.2, 0.9], vec![2.0, 2.0]).unwrap();
//! let profile = asymptotically_optimal_weights(&PowerModel::NormalLocation, &prior, 0.05).unwrap();
//! assert!(profile.weights[1] > profile.weights[0]);
//! ```

pub mod error;
pub mod normal;
pub mod numeric;
pub mod power;
pub mod weights;
pub mod procedure;
pub mod sim;
pub mod counts;
pub mod cli;

pub use error::{Error, Result};
pub use power::{EffectSize, OperatingPoint, PowerModel, TabulatedCurve};
pub use procedure::{
    alpha_star, fdr_upper_bound, run_procedure, DecisionReport, ProcedureParams, StepUp,
    ThresholdMode, Variant,
};
pub use counts::{analyze, calibrate_k, score_statistic, Analysis, AnalysisParams, CountDataset};
pub use sim::{run_simulation, SimConfig, SimSummary};
pub use weights::{
    asymptotically_optimal_weights, fdp_approximator, optimal_fixed_t_weights, PriorSpec,
    WeightProfile,
};
