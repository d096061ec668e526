//! Monte Carlo evaluation of the four procedures.
//!
//! Each replication draws a fresh random-effects configuration
//! `(p_m, γ_m, θ_m, Z_m)`, re-solves the weights from the realised
//! `(p, γ)`, and records the false and correct discovery proportions of
//! every procedure. Replication `i` draws from stream `i` of a ChaCha
//! generator keyed by the seed, so results do not depend on how the
//! replications are scheduled across threads.

use std::io::Write;

use rand::distributions::Open01;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::normal;
use crate::numeric::mean_and_se;
use crate::power::PowerModel;
use crate::procedure::{run_procedure, DecisionReport, ProcedureParams, Variant};
use crate::weights::{asymptotically_optimal_weights, perturb_weights, PriorSpec, WeightProfile};

/// Resampling cap for perturbation factors violating `U_m t_m <= 1`.
const MAX_RESAMPLE: usize = 1000;

/// Distribution of the prior probabilities `p_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PriorLaw {
    Fixed(f64),
    /// `p_m ~ Uniform(0, 1)`.
    Uniform,
}

/// Effect sizes `γ_m ~ Uniform(lo, hi)`; `lo == hi` is a point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLaw {
    pub lo: f64,
    pub hi: f64,
}

/// Which weights the weighted procedures use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    /// Asymptotically optimal weights for the realised `(p, γ)`.
    Optimal,
    /// Optimal weights times `U_m ~ Uniform(0, 2)`.
    Perturbed,
    /// `w_m ~ Uniform(0, 2)`, independent of everything else.
    Independent,
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaRule {
    /// `λ = t̄(k*_M)` from the optimal weights of the realised prior.
    MeanThreshold,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub m: usize,
    pub replications: usize,
    pub alpha: f64,
    pub variants: Vec<Variant>,
    pub prior_law: PriorLaw,
    pub gamma_law: GammaLaw,
    pub weight_mode: WeightMode,
    pub lambda_rule: LambdaRule,
    pub seed: u64,
}

impl SimConfig {
    /// One of the four canned studies with `γ_m ~ Uniform(1, a)` at level 0.05:
    ///
    /// 1. `p_m = 0.5`, optimal weights;
    /// 2. `p_m ~ Uniform(0, 1)`, optimal weights;
    /// 3. as 2 with perturbed weights;
    /// 4. as 2 with independent `Uniform(0, 2)` weights.
    pub fn preset(simulation: u8, a: f64, m: usize, replications: usize, seed: u64) -> Result<Self> {
        let (prior_law, weight_mode) = match simulation {
            1 => (PriorLaw::Fixed(0.5), WeightMode::Optimal),
            2 => (PriorLaw::Uniform, WeightMode::Optimal),
            3 => (PriorLaw::Uniform, WeightMode::Perturbed),
            4 => (PriorLaw::Uniform, WeightMode::Independent),
            other => {
                return Err(Error::invalid(format!(
                    "unknown simulation preset {other}; expected 1, 2, 3 or 4"
                )))
            }
        };
        let config = SimConfig {
            m,
            replications,
            alpha: 0.05,
            variants: Variant::ALL.to_vec(),
            prior_law,
            gamma_law: GammaLaw { lo: 1.0, hi: a },
            weight_mode,
            lambda_rule: LambdaRule::MeanThreshold,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.replications == 0 {
            return Err(Error::invalid("M and K must both be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let GammaLaw { lo, hi } = self.gamma_law;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::domain(format!("invalid effect-size range ({lo}, {hi})")));
        }
        if let PriorLaw::Fixed(p) = self.prior_law {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("prior probability {p} outside [0, 1]")));
            }
        }
        if let LambdaRule::Fixed(l) = self.lambda_rule {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::domain(format!("lambda must lie in (0, 1), got {l}")));
            }
        }
        if self.variants.is_empty() {
            return Err(Error::invalid("no variants requested"));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn open01(rng: &mut impl Rng) -> f64 {
    rng.sample(Open01)
}

/// One draw from the random-effects model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model1Draw {
    /// `true` where the null is false.
    pub theta: Vec<bool>,
    pub p: Vec<f64>,
    pub gamma: Vec<f64>,
    pub z: Vec<f64>,
    /// `P_m = 1 - Φ(Z_m)`.
    pub p_values: Vec<f64>,
}

/// Draws `p_m`, `γ_m`, `θ_m ~ Bernoulli(p_m)`, `Z_m ~ N(θ_m γ_m, 1)`.
pub fn generate_model1(config: &SimConfig, rng: &mut impl Rng) -> Model1Draw {
    let m = config.m;
    let mut draw = Model1Draw {
        theta: Vec::with_capacity(m),
        p: Vec::with_capacity(m),
        gamma: Vec::with_capacity(m),
        z: Vec::with_capacity(m),
        p_values: Vec::with_capacity(m),
    };
    let GammaLaw { lo, hi } = config.gamma_law;
    for _ in 0..m {
        let p = match config.prior_law {
            PriorLaw::Fixed(p) => p,
            PriorLaw::Uniform => open01(rng),
        };
        let gamma = if hi > lo { lo + (hi - lo) * open01(rng) } else { lo };
        let theta = rng.gen::<f64>() < p;
        let noise: f64 = rng.sample(StandardNormal);
        let z = if theta { gamma + noise } else { noise };
        draw.theta.push(theta);
        draw.p.push(p);
        draw.gamma.push(gamma);
        draw.z.push(z);
        draw.p_values.push(normal::sf(z));
    }
    draw
}

/// A Dirac-Uniform configuration: `m0` uniform null p-values followed by
/// `m1` alternative p-values equal to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DuDraw {
    pub theta: Vec<bool>,
    pub p_values: Vec<f64>,
}

pub fn generate_du(m0: usize, m1: usize, rng: &mut impl Rng) -> Result<DuDraw> {
    if m0 + m1 == 0 {
        return Err(Error::invalid("DU configuration needs at least one hypothesis"));
    }
    let mut p_values: Vec<f64> = (0..m0).map(|_| rng.gen::<f64>()).collect();
    p_values.extend(std::iter::repeat(0.0).take(m1));
    let mut theta = vec![false; m0];
    theta.extend(std::iter::repeat(true).take(m1));
    Ok(DuDraw { theta, p_values })
}

/// Realised false and correct discovery proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outcome {
    /// `V / max(R, 1)`.
    pub fdp: f64,
    /// Rejected false nulls over `max(M₁, 1)`.
    pub cdp: f64,
}

pub fn evaluate(theta: &[bool], rejected: &[bool]) -> Result<Outcome> {
    check_len("rejections", theta.len(), rejected.len())?;
    let (mut v, mut s, mut m1) = (0usize, 0usize, 0usize);
    for (&t, &r) in theta.iter().zip(rejected) {
        m1 += usize::from(t);
        if r {
            if t {
                s += 1;
            } else {
                v += 1;
            }
        }
    }
    Ok(Outcome {
        fdp: v as f64 / (v + s).max(1) as f64,
        cdp: s as f64 / m1.max(1) as f64,
    })
}

/// One procedure's result within a replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub outcome: Outcome,
    pub rejections: usize,
    pub m0_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationOutcome {
    pub index: usize,
    pub lambda: f64,
    /// The weight solve reported `α > 1 - max(p)`.
    pub warning: bool,
    pub variants: Vec<VariantOutcome>,
}

impl ReplicationOutcome {
    pub fn get(&self, variant: Variant) -> Option<&VariantOutcome> {
        self.variants.iter().find(|v| v.variant == variant)
    }
}

fn uniform_weights(m: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..m).map(|_| 2.0 * open01(rng)).collect()
}

fn perturbation(profile: &WeightProfile, rng: &mut impl Rng) -> Result<WeightProfile> {
    let mut u = Vec::with_capacity(profile.len());
    for &w in &profile.weights {
        let t = profile.t_bar * w;
        let draw = (0..MAX_RESAMPLE)
            .map(|_| 2.0 * open01(rng))
            .find(|x| x * t <= 1.0)
            .ok_or_else(|| Error::domain("could not draw a perturbation with U·t <= 1"))?;
        u.push(draw);
    }
    perturb_weights(profile, &u, false)
}

/// Runs replication `index` of `config`.
pub fn run_replication(config: &SimConfig, index: usize) -> Result<ReplicationOutcome> {
    let mut rng = stream_rng(config.seed, index as u64);
    let draw = generate_model1(config, &mut rng);
    let model = PowerModel::NormalLocation;

    let needs_profile = config.lambda_rule == LambdaRule::MeanThreshold
        || matches!(config.weight_mode, WeightMode::Optimal | WeightMode::Perturbed);
    let optimal = if needs_profile {
        let prior = PriorSpec::new(draw.p.clone(), draw.gamma.clone())?;
        Some(asymptotically_optimal_weights(&model, &prior, config.alpha)?)
    } else {
        None
    };
    let warning = optimal.as_ref().is_some_and(|p| p.warning.is_some());
    let lambda = match config.lambda_rule {
        LambdaRule::MeanThreshold => optimal.as_ref().map(|p| p.t_bar).unwrap_or(f64::NAN),
        LambdaRule::Fixed(l) => l,
    };
    let weights = match config.weight_mode {
        WeightMode::Optimal => optimal.as_ref().map(|p| p.weights.clone()).unwrap_or_default(),
        WeightMode::Perturbed => perturbation(optimal.as_ref().expect("profile solved"), &mut rng)?.weights,
        WeightMode::Independent => uniform_weights(config.m, &mut rng),
        WeightMode::Unit => vec![1.0; config.m],
    };

    let params = ProcedureParams::new(config.alpha).with_lambda(lambda);
    let variants = config
        .variants
        .iter()
        .map(|&v| {
            let report = run_procedure(v, &draw.p_values, Some(&weights), &params)?;
            Ok(variant_outcome(&draw.theta, &report)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationOutcome {
        index,
        lambda,
        warning,
        variants,
    })
}

fn variant_outcome(theta: &[bool], report: &DecisionReport) -> Result<VariantOutcome> {
    Ok(VariantOutcome {
        variant: report.variant,
        outcome: evaluate(theta, &report.rejected)?,
        rejections: report.r,
        m0_hat: report.m0_hat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub mean_fdp: f64,
    pub se_fdp: Option<f64>,
    pub mean_cdp: f64,
    pub se_cdp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub m: usize,
    /// Completed replications.
    pub replications: usize,
    /// Replications dropped because no weight solution existed.
    pub skipped: usize,
    /// Replications whose weight solve carried a precondition warning.
    pub warnings: usize,
    pub variants: Vec<VariantSummary>,
}

impl SimSummary {
    pub fn get(&self, variant: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.variant == variant)
    }
}

fn summarize(m: usize, variants: &[Variant], reps: &[ReplicationOutcome], skipped: usize) -> SimSummary {
    let summaries = variants
        .iter()
        .map(|&v| {
            let (fdp, cdp): (Vec<f64>, Vec<f64>) = reps
                .iter()
                .filter_map(|r| r.get(v))
                .map(|o| (o.outcome.fdp, o.outcome.cdp))
                .unzip();
            let (mean_fdp, se_fdp) = mean_and_se(&fdp);
            let (mean_cdp, se_cdp) = mean_and_se(&cdp);
            VariantSummary {
                variant: v,
                mean_fdp,
                se_fdp,
                mean_cdp,
                se_cdp,
            }
        })
        .collect();
    SimSummary {
        m,
        replications: reps.len(),
        skipped,
        warnings: reps.iter().filter(|r| r.warning).count(),
        variants: summaries,
    }
}

/// Runs every replication (in parallel) and aggregates.
///
/// Replications without a weight solution are skipped and counted; any
/// other error aborts the run.
pub fn run_simulation(config: &SimConfig) -> Result<SimSummary> {
    config.validate()?;
    let results: Vec<Result<ReplicationOutcome>> = (0..config.replications)
        .into_par_iter()
        .map(|i| run_replication(config, i))
        .collect();
    let mut reps = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for r in results {
        match r {
            Ok(rep) => reps.push(rep),
            Err(Error::NoSolution { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(summarize(config.m, &config.variants, &reps, skipped))
}

/// Monte Carlo over Dirac-Uniform data with a fixed `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuConfig {
    pub m0: usize,
    pub m1: usize,
    pub replications: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub variants: Vec<Variant>,
    /// Weights for the weighted variants: `Independent` or `Unit`.
    pub weight_mode: WeightMode,
    pub seed: u64,
}

pub fn run_du_replication(config: &DuConfig, index: usize) -> Result<ReplicationOutcome> {
    let mut rng = stream_rng(config.seed, index as u64);
    let draw = generate_du(config.m0, config.m1, &mut rng)?;
    let m = config.m0 + config.m1;
    let weights = match config.weight_mode {
        WeightMode::Independent => uniform_weights(m, &mut rng),
        WeightMode::Unit => vec![1.0; m],
        other => {
            return Err(Error::invalid(format!(
                "DU runs take independent or unit weights, not {other:?}"
            )))
        }
    };
    let params = ProcedureParams::new(config.alpha).with_lambda(config.lambda);
    let variants = config
        .variants
        .iter()
        .map(|&v| variant_outcome(&draw.theta, &run_procedure(v, &draw.p_values, Some(&weights), &params)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationOutcome {
        index,
        lambda: config.lambda,
        warning: false,
        variants,
    })
}

pub fn run_du_simulation(config: &DuConfig) -> Result<SimSummary> {
    if config.replications == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let reps = (0..config.replications)
        .into_par_iter()
        .map(|i| run_du_replication(config, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(config.m0 + config.m1, &config.variants, &reps, 0))
}

/// Summaries of one preset across several values of `a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTable {
    pub simulation: u8,
    pub alpha: f64,
    pub columns: Vec<SimColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimColumn {
    pub a: f64,
    pub summary: SimSummary,
}

pub fn run_preset_table(
    simulation: u8,
    a_values: &[f64],
    m: usize,
    replications: usize,
    seed: u64,
) -> Result<SimTable> {
    let mut columns = Vec::with_capacity(a_values.len());
    let mut alpha = 0.05;
    for &a in a_values {
        let config = SimConfig::preset(simulation, a, m, replications, seed)?;
        alpha = config.alpha;
        columns.push(SimColumn {
            a,
            summary: run_simulation(&config)?,
        });
    }
    Ok(SimTable {
        simulation,
        alpha,
        columns,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}

impl SimTable {
    /// Rows UU/WU/UA/WA; one `CDP(FDP)` cell per `a`, then the standard errors.
    pub fn write_tsv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        let mut header = vec!["variant".to_string()];
        header.extend(self.columns.iter().map(|c| format!("a={}", c.a)));
        for c in &self.columns {
            header.push(format!("se_cdp_a={}", c.a));
            header.push(format!("se_fdp_a={}", c.a));
        }
        wtr.write_record(&header)?;
        for v in Variant::ALL {
            let cells: Vec<&VariantSummary> =
                self.columns.iter().filter_map(|c| c.summary.get(v)).collect();
            if cells.len() != self.columns.len() {
                continue;
            }
            let mut row = vec![v.to_string()];
            row.extend(cells.iter().map(|s| format!("{:.3}({:.3})", s.mean_cdp, s.mean_fdp)));
            for s in &cells {
                row.push(fmt_opt(s.se_cdp));
                row.push(fmt_opt(s.se_fdp));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<tsv>", e))?;
        Ok(())
    }

    /// Long format: `variant, a, metric, value, se`.
    pub fn write_long_tsv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        wtr.write_record(["variant", "a", "metric", "value", "se"])?;
        for c in &self.columns {
            for s in &c.summary.variants {
                for (metric, value, se) in [("cdp", s.mean_cdp, s.se_cdp), ("fdp", s.mean_fdp, s.se_fdp)] {
                    wtr.write_record([
                        s.variant.to_string(),
                        c.a.to_string(),
                        metric.to_string(),
                        value.to_string(),
                        se.map_or_else(|| "NA".to_string(), |x| x.to_string()),
                    ])?;
                }
            }
        }
        wtr.flush().map_err(|e| Error::io("<tsv>", e))?;
        Ok(())
    }
}

/// Key-value simulation config file (TOML):
///
/// ```toml
/// preset = 1          # 1, 2, 3 or 4
/// a = [1, 3, 5]       # upper ends of the effect-size range
/// m = 1000
/// replications = 1000
/// seed = 7            # required
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub preset: u8,
    #[serde(default = "default_a")]
    pub a: Vec<f64>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_m")]
    pub replications: usize,
    pub seed: u64,
}

fn default_a() -> Vec<f64> {
    vec![1.0, 3.0, 5.0]
}

fn default_m() -> usize {
    1000
}

impl SimFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}
