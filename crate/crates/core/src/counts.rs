//! Count-data association: multinomial score tests of trend in a covariate.
//!
//! Each feature `m` has counts `Y_m` over `g` groups with covariate `x`.
//! Under `log μ_im = β₀m + β₁m x_i` and conditioning on the total `n_m`,
//! the score statistic for `β₁m = 0` is asymptotically standard normal
//! under the null and has mean about `√n_m K(β)` under the alternative.
//! Effect sizes are therefore posited as `γ_m = √n_m K`, with the common
//! `K` calibrated so that the weighted procedure has a target average power.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::normal;
use crate::numeric::{mean, pairwise_sum};
use crate::power::PowerModel;
use crate::procedure::{run_procedure, DecisionReport, ProcedureParams, Variant};
use crate::weights::{asymptotically_optimal_weights, PriorSpec, WeightProfile};

/// Relative size of `x'Σ̂x` below which a feature counts as degenerate.
const DEGENERATE_TOL: f64 = 1e-12;
pub const POWER_TOLERANCE: f64 = 1e-6;
const K_BISECTION_ITER: usize = 200;
const K_HI_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct CountDataset {
    names: Vec<String>,
    counts: Vec<Vec<u64>>,
    x: Vec<f64>,
}

impl CountDataset {
    pub fn new(names: Vec<String>, counts: Vec<Vec<u64>>, x: Vec<f64>) -> Result<Self> {
        check_len("feature names", counts.len(), names.len())?;
        if counts.is_empty() {
            return Err(Error::invalid("count table has no features"));
        }
        for (i, row) in counts.iter().enumerate() {
            if row.len() != x.len() {
                return Err(Error::invalid(format!(
                    "feature {} has {} counts but the covariate has {} groups",
                    names[i],
                    row.len(),
                    x.len()
                )));
            }
        }
        check_covariate(&x)?;
        Ok(CountDataset { names, counts, x })
    }

    /// Features named `0, 1, ...`.
    pub fn unnamed(counts: Vec<Vec<u64>>, x: Vec<f64>) -> Result<Self> {
        let names = (0..counts.len()).map(|i| i.to_string()).collect();
        Self::new(names, counts, x)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn groups(&self) -> usize {
        self.x.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// One row per feature. Columns are all counts, except that a leading
    /// column headed `feature` holds names. A header row is required.
    pub fn from_csv_reader<R: Read>(reader: R, x: Vec<f64>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let named = rdr
            .headers()?
            .get(0)
            .is_some_and(|h| h.eq_ignore_ascii_case("feature"));
        let mut names = Vec::new();
        let mut counts = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let mut fields = rec.iter();
            let name = if named {
                fields.next().unwrap_or_default().to_string()
            } else {
                row.to_string()
            };
            let values = fields
                .enumerate()
                .map(|(col, f)| {
                    f.parse::<u64>().map_err(|_| {
                        Error::invalid(format!(
                            "line {line}, count column {}: {f:?} is not a nonnegative integer",
                            col + 1
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            names.push(name);
            counts.push(values);
        }
        Self::new(names, counts, x)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, x: Vec<f64>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, x)
    }

    /// Writes the table in the format `from_csv_reader` accepts.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["feature".to_string()];
        header.extend((1..=self.groups()).map(|i| format!("g{i}")));
        wtr.write_record(&header)?;
        for (name, row) in self.names.iter().zip(&self.counts) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn check_covariate(x: &[f64]) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::invalid("covariate needs at least two groups"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("covariate has non-finite values"));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::invalid("covariate needs at least two distinct values"));
    }
    Ok(())
}

/// Parses a covariate given inline as `0.86,1.34,...`, or whitespace/comma
/// separated in a file.
pub fn parse_covariate(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::invalid(format!("covariate value {s:?} is not a number")))
        })
        .collect()
}

/// `Z = (x'y - n x̄) / √(x'Σ̂x)`, `Σ̂ = n(diag(p̂) - p̂p̂')`, `p̂ = y/n`.
///
/// Fails with `Degenerate` when `x'Σ̂x` vanishes (all mass in groups sharing
/// one covariate value).
pub fn score_statistic(y: &[u64], x: &[f64]) -> Result<f64> {
    check_len("counts", x.len(), y.len())?;
    let n: u64 = y.iter().sum();
    if n == 0 {
        return Err(Error::Degenerate("zero total count".into()));
    }
    let nf = n as f64;
    let x_bar = mean(x);
    let xy = pairwise_sum(&x.iter().zip(y).map(|(a, &b)| a * b as f64).collect::<Vec<_>>());
    let first = pairwise_sum(&x.iter().zip(y).map(|(a, &b)| a * b as f64 / nf).collect::<Vec<_>>());
    let second = pairwise_sum(&x.iter().zip(y).map(|(a, &b)| a * a * b as f64 / nf).collect::<Vec<_>>());
    let var = nf * (second - first * first);
    let scale = nf * second.max(first * first);
    if !(var > DEGENERATE_TOL * scale) {
        return Err(Error::Degenerate(format!(
            "x'Σx = {var} vanishes; counts concentrate on one covariate value"
        )));
    }
    Ok((xy - nf * x_bar) / var.sqrt())
}

fn softmax(beta: f64, x: &[f64]) -> Vec<f64> {
    let top = x.iter().map(|v| beta * v).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (beta * v - top).exp()).collect();
    let s = pairwise_sum(&e);
    e.into_iter().map(|v| v / s).collect()
}

/// `K(β) = Σ x_i(p_i - 1/g) / √(x'[diag(p) - pp']x)` with `p = softmax(βx)`.
pub fn k_from_beta(beta: f64, x: &[f64]) -> Result<f64> {
    if !beta.is_finite() {
        return Err(Error::domain(format!("beta must be finite, got {beta}")));
    }
    check_covariate(x)?;
    let p = softmax(beta, x);
    let g = x.len() as f64;
    let num: f64 = x.iter().zip(&p).map(|(a, b)| a * (b - 1.0 / g)).sum();
    let m1: f64 = x.iter().zip(&p).map(|(a, b)| a * b).sum();
    let m2: f64 = x.iter().zip(&p).map(|(a, b)| a * a * b).sum();
    let var = m2 - m1 * m1;
    if var <= 0.0 {
        return Err(Error::Degenerate(format!("softmax at beta = {beta} has no spread")));
    }
    Ok(num / var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub k_beta: f64,
    pub gamma: Vec<f64>,
    pub achieved_power: f64,
    pub k_star: f64,
    pub profile: WeightProfile,
}

struct PowerEval {
    avg: f64,
    gamma: Vec<f64>,
    profile: WeightProfile,
}

fn average_power(n: &[u64], p: &[f64], alpha: f64, k_beta: f64) -> Result<PowerEval> {
    let gamma: Vec<f64> = n.iter().map(|&v| (v as f64).sqrt() * k_beta).collect();
    let prior = PriorSpec::new(p.to_vec(), gamma.clone())?;
    let model = PowerModel::NormalLocation;
    let profile = asymptotically_optimal_weights(&model, &prior, alpha)?;
    let powers: Vec<f64> = gamma
        .iter()
        .zip(&profile.weights)
        .map(|(&g, &w)| model.power_unchecked(g, (profile.t_bar * w).min(1.0)))
        .collect();
    Ok(PowerEval {
        avg: mean(&powers),
        gamma,
        profile,
    })
}

/// Finds the `K` at which the asymptotically optimally weighted tests have
/// mean posited power `target`, to within `1e-6`.
///
/// Values of `K` for which no weight solution exists are treated as lying
/// below the target.
pub fn calibrate_k(n: &[u64], p_prior: &[f64], alpha: f64, target: f64) -> Result<CalibrationResult> {
    check_len("prior probabilities", n.len(), p_prior.len())?;
    if n.is_empty() {
        return Err(Error::invalid("no features to calibrate"));
    }
    if let Some(i) = n.iter().position(|&v| v == 0) {
        return Err(Error::invalid(format!("feature {i} has zero total count")));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::domain(format!("target power must lie in (0, 1), got {target}")));
    }
    let eval = |k: f64| -> Result<Option<PowerEval>> {
        match average_power(n, p_prior, alpha, k) {
            Ok(e) => Ok(Some(e)),
            Err(Error::NoSolution { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let done = |e: PowerEval, k: f64| CalibrationResult {
        k_beta: k,
        k_star: e.profile.k_star,
        achieved_power: e.avg,
        gamma: e.gamma,
        profile: e.profile,
    };

    let mut hi = 1.0;
    loop {
        match eval(hi)? {
            Some(e) if (e.avg - target).abs() <= POWER_TOLERANCE => return Ok(done(e, hi)),
            Some(e) if e.avg > target => break,
            _ => {}
        }
        hi *= 2.0;
        if hi > K_HI_LIMIT {
            return Err(Error::Degenerate(format!(
                "average power stays below {target} for K up to {K_HI_LIMIT}"
            )));
        }
    }
    let mut lo = hi * 1e-9;
    if let Some(e) = eval(lo)? {
        if e.avg >= target {
            return Err(Error::Degenerate(format!(
                "target power {target} is below the small-effect floor {}",
                e.avg
            )));
        }
    }
    let mut last = None;
    for _ in 0..K_BISECTION_ITER {
        let mid = 0.5 * (lo + hi);
        match eval(mid)? {
            Some(e) if (e.avg - target).abs() <= POWER_TOLERANCE => return Ok(done(e, mid)),
            Some(e) if e.avg > target => {
                last = Some(e.avg);
                hi = mid;
            }
            Some(e) => {
                last = Some(e.avg);
                lo = mid;
            }
            None => lo = mid,
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Err(Error::Degenerate(format!(
        "average power jumps across {target} near K = {hi} (last value {last:?}); \
         the weight solution is discontinuous there"
    )))
}

/// Prior probability of association: one value for all features or one
/// per feature (in dataset order).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PriorProbability {
    Common(f64),
    PerFeature(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisParams {
    pub alpha: f64,
    pub p_prior: PriorProbability,
    pub target_power: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            alpha: 0.05,
            p_prior: PriorProbability::Common(0.5),
            target_power: 0.5,
        }
    }
}

/// Per-feature results. `Q` and the rejection flags refer to the WA
/// procedure unless named otherwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureRow {
    pub feature: String,
    pub n: u64,
    #[serde(rename = "Z")]
    pub z: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub gamma: f64,
    pub w: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    /// `π_γ(t̄)`.
    pub power_unweighted: f64,
    /// `π_γ(t̄ w)`.
    pub power_weighted: f64,
    #[serde(rename = "rejected_WA")]
    pub rejected_wa: bool,
    #[serde(rename = "rejected_UA")]
    pub rejected_ua: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedFeature {
    pub feature: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub calibration: CalibrationResult,
    pub wa: DecisionReport,
    pub ua: DecisionReport,
    pub features: Vec<FeatureRow>,
    pub excluded: Vec<ExcludedFeature>,
}

impl Analysis {
    /// `feature, n, Z, P, gamma, w, Q, rejected_WA, rejected_UA`.
    pub fn write_feature_tsv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        wtr.write_record(["feature", "n", "Z", "P", "gamma", "w", "Q", "rejected_WA", "rejected_UA"])?;
        for r in &self.features {
            wtr.write_record([
                r.feature.clone(),
                r.n.to_string(),
                r.z.to_string(),
                r.p.to_string(),
                r.gamma.to_string(),
                r.w.to_string(),
                r.q.to_string(),
                u8::from(r.rejected_wa).to_string(),
                u8::from(r.rejected_ua).to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<tsv>", e))?;
        Ok(())
    }

    /// Weight/power data: `feature, n, gamma, w, power_unweighted, power_weighted`.
    pub fn write_power_tsv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        wtr.write_record(["feature", "n", "gamma", "w", "power_unweighted", "power_weighted"])?;
        for r in &self.features {
            wtr.write_record([
                r.feature.clone(),
                r.n.to_string(),
                r.gamma.to_string(),
                r.w.to_string(),
                r.power_unweighted.to_string(),
                r.power_weighted.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<tsv>", e))?;
        Ok(())
    }
}

/// Score tests for every feature, `K` calibration, then WA and UA at
/// `λ = t̄(k*)`. Degenerate features are listed and left out.
pub fn analyze(data: &CountDataset, params: &AnalysisParams) -> Result<Analysis> {
    let priors = match &params.p_prior {
        PriorProbability::Common(p) => vec![*p; data.len()],
        PriorProbability::PerFeature(v) => {
            check_len("prior probabilities", data.len(), v.len())?;
            v.clone()
        }
    };
    let stats: Vec<Result<f64>> = data
        .counts
        .par_iter()
        .map(|y| score_statistic(y, &data.x))
        .collect();

    let totals = data.totals();
    let mut keep = Vec::new();
    let mut excluded = Vec::new();
    for (i, s) in stats.into_iter().enumerate() {
        match s {
            Ok(z) => keep.push((i, z)),
            Err(Error::Degenerate(reason)) => excluded.push(ExcludedFeature {
                feature: data.names[i].clone(),
                reason,
            }),
            Err(e) => return Err(e),
        }
    }
    if keep.is_empty() {
        return Err(Error::Degenerate("every feature is degenerate".into()));
    }
    let n: Vec<u64> = keep.iter().map(|&(i, _)| totals[i]).collect();
    let p_prior: Vec<f64> = keep.iter().map(|&(i, _)| priors[i]).collect();
    let p_values: Vec<f64> = keep.iter().map(|&(_, z)| normal::sf(z)).collect();

    let calibration = calibrate_k(&n, &p_prior, params.alpha, params.target_power)?;
    let profile = &calibration.profile;
    let proc = ProcedureParams::new(params.alpha).with_lambda(profile.t_bar);
    let wa = run_procedure(Variant::WA, &p_values, Some(&profile.weights), &proc)?;
    let ua = run_procedure(Variant::UA, &p_values, None, &proc)?;

    let model = PowerModel::NormalLocation;
    let mut features = Vec::with_capacity(keep.len());
    for (j, &(i, z)) in keep.iter().enumerate() {
        let (g, w) = (calibration.gamma[j], profile.weights[j]);
        features.push(FeatureRow {
            feature: data.names[i].clone(),
            n: n[j],
            z,
            p: p_values[j],
            gamma: g,
            w,
            q: p_values[j] / w,
            power_unweighted: model.power_unchecked(g, profile.t_bar),
            power_weighted: model.power_unchecked(g, (profile.t_bar * w).min(1.0)),
            rejected_wa: wa.rejected[j],
            rejected_ua: ua.rejected[j],
        });
    }
    Ok(Analysis {
        calibration,
        wa,
        ua,
        features,
        excluded,
    })
}

/// Seeded synthetic count data with planted associations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub features: usize,
    pub x: Vec<f64>,
    /// Totals are drawn log-uniformly between these bounds.
    pub n_min: u64,
    pub n_max: u64,
    /// Fraction of features with `β₁ = beta`; the rest have `β₁ = 0`.
    pub alt_fraction: f64,
    pub beta: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Five groups at covariate values 0.86 to 3.00,
    /// totals between 6 and 911.
    pub fn default_design(features: usize, alt_fraction: f64, beta: f64, seed: u64) -> Self {
        SynthConfig {
            features,
            x: vec![0.86, 1.34, 1.81, 2.37, 3.00],
            n_min: 6,
            n_max: 911,
            alt_fraction,
            beta,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub dataset: CountDataset,
    /// `true` for features with a planted association.
    pub associated: Vec<bool>,
}

/// Multinomial draw by sequential conditional binomials.
fn multinomial(n: u64, p: &[f64], rng: &mut impl Rng) -> Vec<u64> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(p.len());
    for (i, &pi) in p.iter().enumerate() {
        if i + 1 == p.len() {
            out.push(left);
            break;
        }
        let c = if left == 0 || mass <= 0.0 {
            0
        } else {
            let q = (pi / mass).clamp(0.0, 1.0);
            Binomial::new(left, q).map(|b| b.sample(rng)).unwrap_or(0)
        };
        out.push(c);
        left -= c;
        mass -= pi;
    }
    out
}

pub fn synthesize(config: &SynthConfig) -> Result<SynthData> {
    check_covariate(&config.x)?;
    if config.features == 0 {
        return Err(Error::invalid("need at least one feature"));
    }
    if !(1 <= config.n_min && config.n_min <= config.n_max) {
        return Err(Error::invalid("need 1 <= n_min <= n_max"));
    }
    if !(0.0..=1.0).contains(&config.alt_fraction) {
        return Err(Error::domain("alt_fraction must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (ln_lo, ln_hi) = ((config.n_min as f64).ln(), (config.n_max as f64 + 1.0).ln());
    let p_null = softmax(0.0, &config.x);
    let p_alt = softmax(config.beta, &config.x);
    let mut counts = Vec::with_capacity(config.features);
    let mut associated = Vec::with_capacity(config.features);
    for _ in 0..config.features {
        let n = ((ln_lo + (ln_hi - ln_lo) * rng.gen::<f64>()).exp().floor() as u64)
            .clamp(config.n_min, config.n_max);
        let alt = rng.gen::<f64>() < config.alt_fraction;
        counts.push(multinomial(n, if alt { &p_alt } else { &p_null }, &mut rng));
        associated.push(alt);
    }
    Ok(SynthData {
        dataset: CountDataset::unnamed(counts, config.x.clone())?,
        associated,
    })
}
