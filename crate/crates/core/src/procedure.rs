//! Multiple decision functions on weighted p-values.
//!
//! Rejecting `P_m <= t·w_m` is the same as rejecting `Q_m = P_m/w_m <= t`,
//! so every procedure here reduces to a step-up rule on `Q`. The adaptive
//! variants plug in the estimate `M̂₀ = (M - #{Q <= λ} + 1)/(1 - λ)` of the
//! number of true nulls; the unadaptive variants use `M`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numeric::max;

/// Slack allowed when checking `u·max(w) <= 1`, so that `u = 1/max(w)`
/// passes after rounding.
const BOUND_SLACK: f64 = 1e-12;

/// The four procedures compared throughout: (un)weighted × (un)adaptive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Benjamini-Hochberg.
    UU,
    /// Weighted BH.
    WU,
    /// Adaptive BH on unweighted p-values.
    UA,
    /// Weighted adaptive.
    WA,
}

impl Variant {
    /// Table order: UU, WU, UA, WA.
    pub const ALL: [Variant; 4] = [Variant::UU, Variant::WU, Variant::UA, Variant::WA];

    pub fn is_weighted(self) -> bool {
        matches!(self, Variant::WU | Variant::WA)
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Variant::UA | Variant::WA)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::UU => "UU",
            Variant::WU => "WU",
            Variant::UA => "UA",
            Variant::WA => "WA",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "UU" => Ok(Variant::UU),
            "WU" => Ok(Variant::WU),
            "UA" => Ok(Variant::UA),
            "WA" => Ok(Variant::WA),
            _ => Err(Error::invalid(format!("unknown variant {s:?}; expected UU, WU, UA or WA"))),
        }
    }
}

/// Observed p-values with their weights and weighted p-values.
#[derive(Debug, Clone, PartialEq)]
pub struct TestBattery {
    p_values: Vec<f64>,
    weights: Vec<f64>,
    q_values: Vec<f64>,
}

impl TestBattery {
    pub fn new(p_values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let q_values = weighted_pvalues(&p_values, &weights)?;
        Ok(TestBattery {
            p_values,
            weights,
            q_values,
        })
    }

    pub fn unweighted(p_values: Vec<f64>) -> Result<Self> {
        let m = p_values.len();
        Self::new(p_values, vec![1.0; m])
    }

    pub fn len(&self) -> usize {
        self.p_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_values.is_empty()
    }

    pub fn p_values(&self) -> &[f64] {
        &self.p_values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn q_values(&self) -> &[f64] {
        &self.q_values
    }
}

fn check_pvalues(p: &[f64]) -> Result<()> {
    match p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        Some((i, v)) => Err(Error::domain(format!("p-value P[{i}] = {v} is not in [0, 1]"))),
        None => Ok(()),
    }
}

/// `Q_m = P_m / w_m`. Values above 1 are kept; they can never be rejected.
pub fn weighted_pvalues(p: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_len("weights", p.len(), w.len())?;
    check_pvalues(p)?;
    p.iter()
        .zip(w)
        .enumerate()
        .map(|(i, (&p, &w))| {
            if w > 0.0 && w.is_finite() {
                Ok(p / w)
            } else {
                Err(Error::domain(format!("weight w[{i}] = {w} is not positive")))
            }
        })
        .collect()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("lambda must lie in (0, 1), got {lambda}")))
    }
}

fn count_at_most(q: &[f64], t: f64) -> usize {
    q.iter().filter(|&&x| x <= t).count()
}

/// `M̂₀ = (M - #{Q_m <= λ} + 1) / (1 - λ)`.
pub fn estimate_m0(q: &[f64], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let r = count_at_most(q, lambda);
    Ok((q.len() - r + 1) as f64 / (1.0 - lambda))
}

/// `M̂₀·t / max(#{Q_m <= t}, 1)`.
pub fn adaptive_fdp_estimate(t: f64, q: &[f64], m0_hat: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("threshold must lie in [0, 1], got {t}")));
    }
    let r = count_at_most(q, t).max(1);
    Ok(m0_hat * t / r as f64)
}

/// Result of the step-up threshold search.
#[derive(Debug, Clone, PartialEq)]
pub struct StepUp {
    /// Number of ordered weighted p-values passing the step-up line.
    pub j: usize,
    pub t_hat: f64,
    pub rejected: Vec<bool>,
}

impl StepUp {
    pub fn count(&self) -> usize {
        self.rejected.iter().filter(|&&r| r).count()
    }
}

/// Step-up threshold on weighted p-values:
/// `j = max{m : Q_(m) <= α m / M̂₀}`, `t̂ = min(j α / M̂₀, u)`, reject
/// `Q_m <= t̂`. Ties at the threshold are rejected together.
pub fn step_up_threshold(q: &[f64], m0_hat: f64, alpha: f64, u: f64) -> Result<StepUp> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(m0_hat > 0.0) {
        return Err(Error::domain(format!("M0 estimate must be positive, got {m0_hat}")));
    }
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::domain(format!("upper bound u must lie in (0, 1], got {u}")));
    }
    let mut sorted = q.to_vec();
    sorted.sort_by(f64::total_cmp);
    let level = alpha / m0_hat;
    let j = sorted
        .iter()
        .enumerate()
        .rev()
        .find(|&(i, &qv)| qv <= level * (i + 1) as f64)
        .map_or(0, |(i, _)| i + 1);
    let t_hat = (j as f64 * level).min(u);
    let rejected = if j == 0 {
        vec![false; q.len()]
    } else {
        q.iter().map(|&x| x <= t_hat).collect()
    };
    Ok(StepUp { j, t_hat, rejected })
}

/// How the upper bound `u` and level are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ThresholdMode {
    /// `u` as supplied, defaulting to `1/max(w)`.
    #[default]
    Asymptotic,
    /// `u = λ` and level `α*`, which bounds the FDR by `α` in finite
    /// samples for independent nulls. Adaptive variants only.
    FiniteSample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcedureParams {
    pub alpha: f64,
    /// Tuning parameter for `M̂₀`; required by the adaptive variants.
    pub lambda: Option<f64>,
    /// Upper bound on `t̂`; `None` means `1/max(w)`.
    pub u: Option<f64>,
    pub mode: ThresholdMode,
}

impl ProcedureParams {
    pub fn new(alpha: f64) -> Self {
        ProcedureParams {
            alpha,
            lambda: None,
            u: None,
            mode: ThresholdMode::Asymptotic,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_u(mut self, u: f64) -> Self {
        self.u = Some(u);
        self
    }

    pub fn with_mode(mut self, mode: ThresholdMode) -> Self {
        self.mode = mode;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionReport {
    pub variant: Variant,
    /// Nominal level.
    pub alpha: f64,
    /// Level the step-up rule actually used (`α*` in finite-sample mode).
    pub alpha_effective: f64,
    pub lambda: Option<f64>,
    pub u: f64,
    pub t_hat: f64,
    pub m0_hat: f64,
    pub rejected_indices: Vec<usize>,
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(skip)]
    pub rejected: Vec<bool>,
}

/// Runs one of the four procedures.
///
/// Unweighted variants ignore `weights` entirely. Weighted variants
/// require weights of the same length as `p`.
pub fn run_procedure(
    variant: Variant,
    p: &[f64],
    weights: Option<&[f64]>,
    params: &ProcedureParams,
) -> Result<DecisionReport> {
    if p.is_empty() {
        return Err(Error::invalid("no p-values supplied"));
    }
    let unit;
    let w = if variant.is_weighted() {
        let w = weights
            .ok_or_else(|| Error::invalid(format!("variant {variant} requires weights")))?;
        check_len("weights", p.len(), w.len())?;
        w
    } else {
        unit = vec![1.0; p.len()];
        &unit[..]
    };
    let q = weighted_pvalues(p, w)?;
    let w_max = max(w);

    let lambda = if variant.is_adaptive() {
        let l = params
            .lambda
            .ok_or_else(|| Error::invalid(format!("variant {variant} requires lambda")))?;
        check_lambda(l)?;
        Some(l)
    } else {
        params.lambda
    };

    let (u, alpha_effective) = match params.mode {
        ThresholdMode::Asymptotic => (params.u.unwrap_or(1.0 / w_max), params.alpha),
        ThresholdMode::FiniteSample => {
            let l = lambda
                .filter(|_| variant.is_adaptive())
                .ok_or_else(|| Error::invalid("finite-sample mode requires an adaptive variant"))?;
            (l, alpha_star(params.alpha, l, w_max)?)
        }
    };
    if u * w_max > 1.0 + BOUND_SLACK {
        return Err(Error::domain(format!(
            "u·max(w) = {} exceeds 1; thresholds t·w_m would leave [0, 1]",
            u * w_max
        )));
    }
    if let (Some(l), true) = (lambda, variant.is_adaptive()) {
        if l > u {
            return Err(Error::domain(format!("lambda = {l} exceeds the upper bound u = {u}")));
        }
    }

    let m0_hat = match (variant.is_adaptive(), lambda) {
        (true, Some(l)) => estimate_m0(&q, l)?,
        _ => p.len() as f64,
    };
    let step = step_up_threshold(&q, m0_hat, alpha_effective, u.min(1.0))?;
    let rejected_indices: Vec<usize> = step
        .rejected
        .iter()
        .enumerate()
        .filter_map(|(i, &r)| r.then_some(i))
        .collect();
    Ok(DecisionReport {
        variant,
        alpha: params.alpha,
        alpha_effective,
        lambda: if variant.is_adaptive() { lambda } else { None },
        u,
        t_hat: step.t_hat,
        m0_hat,
        r: rejected_indices.len(),
        rejected_indices,
        rejected: step.rejected,
    })
}

/// `α* = α (1/w_max) (1 - λ w_max) / (1 - λ)`.
pub fn alpha_star(alpha: f64, lambda: f64, w_max: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(w_max > 0.0) {
        return Err(Error::domain(format!("max weight must be positive, got {w_max}")));
    }
    if lambda * w_max >= 1.0 {
        return Err(Error::domain(format!(
            "lambda·max(w) = {} must be below 1",
            lambda * w_max
        )));
    }
    Ok(alpha / w_max * (1.0 - lambda * w_max) / (1.0 - lambda))
}

/// FDR bound `α w̄₀ (1 - λ)/(1 - λ w̄₀) [1 - (λ w̄₀)^M₀]` for the adaptive
/// procedure with `u = λ`, where `w̄₀` is the mean true-null weight.
pub fn fdr_upper_bound(alpha: f64, lambda: f64, w0_bar: f64, m0: usize) -> Result<f64> {
    check_lambda(lambda)?;
    if m0 == 0 {
        return Err(Error::domain("bound requires at least one true null"));
    }
    if !(w0_bar > 0.0) {
        return Err(Error::domain(format!("mean null weight must be positive, got {w0_bar}")));
    }
    let lw = lambda * w0_bar;
    if lw >= 1.0 {
        return Err(Error::domain(format!("lambda·w0_bar = {lw} must be below 1")));
    }
    Ok(alpha * w0_bar * (1.0 - lambda) / (1.0 - lw) * (1.0 - lw.powi(m0 as i32)))
}

/// Reads a p-value CSV with a `p` column and an optional `weight` column.
pub fn read_pvalue_csv<R: Read>(reader: R) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let p_col = col("p").ok_or_else(|| Error::invalid("p-value CSV needs a \"p\" column"))?;
    let w_col = col("weight");
    let (mut p, mut w) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| -> Result<f64> {
            let field = rec.get(c).unwrap_or("");
            field.parse().map_err(|_| {
                Error::invalid(format!("row {}: cannot parse {field:?} as a number", line + 2))
            })
        };
        p.push(parse(p_col)?);
        if let Some(c) = w_col {
            w.push(parse(c)?);
        }
    }
    if p.is_empty() {
        return Err(Error::invalid("p-value file has no rows"));
    }
    check_pvalues(&p)?;
    Ok((p, w_col.map(|_| w)))
}

/// Tab-separated `(index, P, w, Q, rejected)` table.
pub fn write_decision_tsv<W: Write>(out: W, battery: &TestBattery, report: &DecisionReport) -> Result<()> {
    check_len("report", battery.len(), report.rejected.len())?;
    let mut wtr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    wtr.write_record(["index", "P", "w", "Q", "rejected"])?;
    for i in 0..battery.len() {
        wtr.write_record([
            i.to_string(),
            battery.p_values[i].to_string(),
            battery.weights[i].to_string(),
            battery.q_values[i].to_string(),
            u8::from(report.rejected[i]).to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<tsv>", e))?;
    Ok(())
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn extra_weight_never_removes_a_rejection(
            p in prop::collection::vec(0.0f64..1.0, 2..30),
            idx in 0usize..30,
            bump in 1.0f64..3.0,
            m0 in 1.0f64..40.0,
            alpha in 0.01f64..0.3,
        ) {
            let m = p.len();
            let i = idx % m;
            let w = vec![1.0; m];
            let mut w2 = w.clone();
            w2[i] *= bump;
            let before = step_up_threshold(&weighted_pvalues(&p, &w).unwrap(), m0, alpha, 1.0).unwrap();
            let after = step_up_threshold(&weighted_pvalues(&p, &w2).unwrap(), m0, alpha, 1.0).unwrap();
            prop_assert!(!before.rejected[i] || after.rejected[i]);
        }

        #[test]
        fn threshold_consistency(
            q in prop::collection::vec(0.0f64..1.2, 1..40),
            m0 in 1.0f64..60.0,
            alpha in 0.01f64..0.5,
            u in 0.5f64..1.0,
        ) {
            let s = step_up_threshold(&q, m0, alpha, u).unwrap();
            prop_assert!(s.t_hat <= u);
            for (r, &x) in s.rejected.iter().zip(&q) {
                prop_assert_eq!(*r, s.j > 0 && x <= s.t_hat);
            }
            if s.t_hat == 0.0 {
                prop_assert_eq!(s.count(), 0);
            } else {
                prop_assert!(s.count() >= 1);
            }
        }

        #[test]
        fn adaptive_contains_unadaptive_when_m0_hat_at_most_m(
            p in prop::collection::vec(0.0f64..1.0, 1..40),
            lambda in 0.05f64..0.6,
            alpha in 0.01f64..0.3,
        ) {
            let m = p.len();
            let q = p.clone();
            let m0 = estimate_m0(&q, lambda).unwrap();
            prop_assume!(m0 <= m as f64);
            let adaptive = step_up_threshold(&q, m0, alpha, 1.0).unwrap();
            let plain = step_up_threshold(&q, m as f64, alpha, 1.0).unwrap();
            for (a, b) in adaptive.rejected.iter().zip(&plain.rejected) {
                prop_assert!(*a || !*b);
            }
        }
    }
}
