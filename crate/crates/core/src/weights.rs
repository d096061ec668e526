//! Optimal weights for the size thresholds `t_m = t·w_m`.
//!
//! For a multiplier `k > 0`, each hypothesis sits at the threshold where its
//! power slope equals `k/p_m`. The mean threshold `t̄(k)` is continuous and
//! strictly decreasing in `k`, so:
//!
//! * fixing `t̄(k*) = t` gives the optimal fixed-t weights, which maximise
//!   expected correct rejections `Σ p_m π_m(t_m)` subject to `mean(t) = t`;
//! * fixing the FDP approximator at `α` gives the asymptotically optimal
//!   weights used by the weighted adaptive procedure, with the recommended
//!   tuning parameter `λ = t̄(k*)` and upper bound `u = 1/max(w)`.
//!
//! All searches over `k` work in `ln k`.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numeric::{max, mean, pairwise_sum};
use crate::power::{OperatingPoint, PowerModel};

/// Initial search interval for the multiplier.
pub const K_BRACKET: (f64, f64) = (1e-8, 1e8);
/// Points in the log-spaced scan used to locate the smallest crossing.
pub const SCAN_POINTS: usize = 512;
const LN_K_LIMIT: f64 = 690.0;
const BISECTION_ITER: usize = 200;
/// Required `|t̄(k*) - t|` for fixed-t weights.
pub const FIXED_T_TOLERANCE: f64 = 1e-10;
/// Required `|FDP~(k*) - α|` for asymptotically optimal weights.
pub const FDP_TOLERANCE: f64 = 5e-4;

/// Prior probabilities `p_m` that each null is false, with effect sizes `γ_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    p: Vec<f64>,
    gamma: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct PriorRow {
    p: f64,
    gamma: f64,
}

impl PriorSpec {
    pub fn new(p: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        check_len("gamma", p.len(), gamma.len())?;
        if p.is_empty() {
            return Err(Error::invalid("prior must describe at least one hypothesis"));
        }
        if let Some((i, &v)) = p.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v < 1.0)) {
            return Err(Error::domain(format!("p[{i}] = {v} is not in (0, 1)")));
        }
        if let Some((i, &v)) = gamma
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::domain(format!("gamma[{i}] = {v} is not positive")));
        }
        Ok(PriorSpec { p, gamma })
    }

    /// The same `(p, γ)` for all `m` hypotheses.
    pub fn homogeneous(m: usize, p: f64, gamma: f64) -> Result<Self> {
        Self::new(vec![p; m], vec![gamma; m])
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// `p_(M)`, the largest prior probability.
    pub fn max_p(&self) -> f64 {
        max(&self.p)
    }

    /// Reads a CSV with header `p,gamma`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let (mut p, mut gamma) = (Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let row: PriorRow = row?;
            p.push(row.p);
            gamma.push(row.gamma);
        }
        Self::new(p, gamma)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file)
    }
}

/// Weights together with the multiplier and thresholds they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    pub k_star: f64,
    /// Mean threshold `t̄(k*)`; the recommended `λ`.
    pub t_bar: f64,
    /// Upper bound on the data-driven threshold, `1/max(w)`.
    pub u: f64,
    pub weights: Vec<f64>,
    /// Set when the solution exists but its precondition does not hold.
    #[serde(default)]
    pub warning: Option<String>,
}

impl WeightProfile {
    /// All-ones weights, for the unweighted procedures.
    pub fn unit(m: usize) -> Self {
        WeightProfile {
            k_star: f64::NAN,
            t_bar: f64::NAN,
            u: 1.0,
            weights: vec![1.0; m],
            warning: None,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn max_weight(&self) -> f64 {
        max(&self.weights)
    }

    /// Per-hypothesis thresholds `t̄·w_m`.
    pub fn thresholds(&self) -> Vec<f64> {
        self.weights.iter().map(|w| self.t_bar * w).collect()
    }

    pub fn mean_weight(&self) -> f64 {
        mean(&self.weights)
    }
}

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("multiplier k must be positive, got {k}")))
    }
}

fn operating_points(model: &PowerModel, prior: &PriorSpec, k: f64) -> Vec<OperatingPoint> {
    prior
        .p
        .iter()
        .zip(&prior.gamma)
        .map(|(&p, &g)| model.operating_point_unchecked(g, k / p))
        .collect()
}

/// Thresholds `t_m(k/p_m, γ_m)` solving `π'_m(t_m) = k/p_m`.
pub fn solve_thresholds(model: &PowerModel, prior: &PriorSpec, k: f64) -> Result<Vec<f64>> {
    check_k(k)?;
    Ok(operating_points(model, prior, k)
        .into_iter()
        .map(|op| op.threshold)
        .collect())
}

/// `t̄(k)`, the mean of [`solve_thresholds`].
pub fn mean_threshold(model: &PowerModel, prior: &PriorSpec, k: f64) -> Result<f64> {
    Ok(mean(&solve_thresholds(model, prior, k)?))
}

/// Expected number of correct rejections `Σ p_m π_m(t_m)` at the given thresholds.
pub fn expected_correct_rejections(
    model: &PowerModel,
    prior: &PriorSpec,
    thresholds: &[f64],
) -> Result<f64> {
    check_len("thresholds", prior.len(), thresholds.len())?;
    let terms = thresholds
        .iter()
        .zip(prior.p.iter().zip(&prior.gamma))
        .map(|(&t, (&p, &g))| {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::domain(format!("threshold {t} outside [0, 1]")));
            }
            Ok(p * model.power_unchecked(g, t))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&terms))
}

/// Value of the FDP approximator at one multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdpApproximation {
    pub value: f64,
    /// Every threshold underflowed to zero; `value` is reported as 0.
    pub degenerate: bool,
}

/// `[(1 - Ḡ)/(1 - t̄)]·[t̄/Ḡ]` with `G_m = (1 - p_m) t_m + p_m π_m(t_m)`.
pub fn fdp_approximator(model: &PowerModel, prior: &PriorSpec, k: f64) -> Result<FdpApproximation> {
    check_k(k)?;
    Ok(fdp_approx_unchecked(model, prior, k))
}

fn fdp_approx_unchecked(model: &PowerModel, prior: &PriorSpec, k: f64) -> FdpApproximation {
    let m = prior.len();
    let mut t = Vec::with_capacity(m);
    let mut t_c = Vec::with_capacity(m);
    let mut g = Vec::with_capacity(m);
    let mut g_c = Vec::with_capacity(m);
    for (op, &p) in operating_points(model, prior, k).iter().zip(&prior.p) {
        t.push(op.threshold);
        t_c.push(op.threshold_complement);
        g.push((1.0 - p) * op.threshold + p * op.power);
        g_c.push((1.0 - p) * op.threshold_complement + p * op.power_complement);
    }
    let (t, t_c, g, g_c) = (mean(&t), mean(&t_c), mean(&g), mean(&g_c));
    if g <= 0.0 {
        return FdpApproximation {
            value: 0.0,
            degenerate: true,
        };
    }
    FdpApproximation {
        value: (g_c / t_c) * (t / g),
        degenerate: false,
    }
}

fn profile_at(model: &PowerModel, prior: &PriorSpec, k: f64, warning: Option<String>) -> WeightProfile {
    let thresholds: Vec<f64> = operating_points(model, prior, k)
        .into_iter()
        .map(|op| op.threshold)
        .collect();
    let t_bar = mean(&thresholds);
    let weights: Vec<f64> = thresholds.iter().map(|t| t / t_bar).collect();
    let u = 1.0 / max(&weights);
    WeightProfile {
        k_star: k,
        t_bar,
        u,
        weights,
        warning,
    }
}

/// Bisects `f` on `[lo, hi]` in log space, given `f(lo) > 0 >= f(hi)`.
fn bisect_ln(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..BISECTION_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Optimal fixed-t weights: the unique `k*` with `t̄(k*) = t`, and
/// `w_m = t_m(k*/p_m, γ_m) / t̄(k*)`.
pub fn optimal_fixed_t_weights(model: &PowerModel, prior: &PriorSpec, t: f64) -> Result<WeightProfile> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::domain(format!("fixed threshold must lie in (0, 1), got {t}")));
    }
    let excess = |k: f64| mean(&solve_thresholds(model, prior, k).unwrap_or_default()) - t;
    let (mut lo, mut hi) = (K_BRACKET.0.ln(), K_BRACKET.1.ln());
    while excess(lo.exp()) <= 0.0 {
        lo *= 2.0;
        if lo < -LN_K_LIMIT {
            return Err(Error::Bracket {
                lo: lo.exp(),
                hi: hi.exp(),
                reason: format!("mean threshold stays below {t} as k shrinks"),
            });
        }
    }
    while excess(hi.exp()) > 0.0 {
        hi *= 2.0;
        if hi > LN_K_LIMIT {
            return Err(Error::Bracket {
                lo: lo.exp(),
                hi: hi.exp(),
                reason: format!("mean threshold stays above {t} as k grows"),
            });
        }
    }
    let k = bisect_ln(lo, hi, excess);
    let profile = profile_at(model, prior, k, None);
    if (profile.t_bar - t).abs() > FIXED_T_TOLERANCE {
        return Err(Error::Bracket {
            lo: lo.exp(),
            hi: hi.exp(),
            reason: format!(
                "mean threshold {} misses target {t}; is the power curve concave?",
                profile.t_bar
            ),
        });
    }
    Ok(profile)
}

/// Asymptotically optimal weights: `k*_M` is the smallest `k` with
/// `FDP~(k) = α`.
///
/// The approximator need not be monotone in `k`, so a log-spaced scan finds
/// the first downward crossing before bisecting. When `α > 1 - max(p)` but
/// a crossing exists anyway the profile is returned with a warning.
pub fn asymptotically_optimal_weights(
    model: &PowerModel,
    prior: &PriorSpec,
    alpha: f64,
) -> Result<WeightProfile> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let bound = 1.0 - prior.max_p();
    let excess = |k: f64| fdp_approx_unchecked(model, prior, k).value - alpha;
    let no_solution = Error::NoSolution { alpha, bound };

    // First grid point at or below alpha that follows a point above it.
    // `above` carries the last such point across segments.
    let scan = |ln_a: f64, ln_b: f64, above: &mut Option<f64>| -> Option<(f64, f64)> {
        let step = (ln_b - ln_a) / (SCAN_POINTS - 1) as f64;
        for i in 0..SCAN_POINTS {
            let x = ln_a + step * i as f64;
            let e = excess(x.exp());
            if e > 0.0 {
                *above = Some(x);
            } else if e <= 0.0 {
                if let Some(prev) = *above {
                    return Some((prev, x));
                }
            }
        }
        None
    };

    let (mut ln_lo, mut ln_hi) = (K_BRACKET.0.ln(), K_BRACKET.1.ln());
    let mut above = None;
    let mut hit = scan(ln_lo, ln_hi, &mut above);
    // Nothing above alpha yet: look further down.
    while hit.is_none() && above.is_none() && ln_lo * 2.0 >= -LN_K_LIMIT {
        let next = ln_lo * 2.0;
        hit = scan(next, ln_lo, &mut above);
        ln_lo = next;
    }
    // Still above alpha at the top of the grid: look further up.
    while hit.is_none() && above.is_some() && ln_hi * 2.0 <= LN_K_LIMIT {
        let next = ln_hi * 2.0;
        hit = scan(ln_hi, next, &mut above);
        ln_hi = next;
    }
    let (lo, hi) = hit.ok_or(no_solution)?;

    let k = bisect_ln(lo, hi, excess);
    let residual = excess(k).abs();
    if residual > FDP_TOLERANCE {
        return Err(Error::Bracket {
            lo: lo.exp(),
            hi: hi.exp(),
            reason: format!("FDP approximator residual {residual} after bisection"),
        });
    }
    let warning = (alpha > bound).then(|| {
        format!("alpha = {alpha} exceeds 1 - max(p) = {bound}; a crossing exists but the prior is suspect")
    });
    Ok(profile_at(model, prior, k, warning))
}

/// Multiplies weights by positive factors `U_m`. The result is left
/// unnormalised unless `renormalize` is set; `u` is recomputed.
pub fn perturb_weights(
    profile: &WeightProfile,
    multipliers: &[f64],
    renormalize: bool,
) -> Result<WeightProfile> {
    check_len("multipliers", profile.len(), multipliers.len())?;
    let mut weights = Vec::with_capacity(profile.len());
    for (i, (&w, &u)) in profile.weights.iter().zip(multipliers).enumerate() {
        if !(u > 0.0 && u.is_finite()) {
            return Err(Error::domain(format!("multiplier U[{i}] = {u} is not positive")));
        }
        if u * profile.t_bar * w > 1.0 {
            return Err(Error::domain(format!(
                "perturbed threshold U[{i}]·t[{i}] = {} exceeds 1",
                u * profile.t_bar * w
            )));
        }
        weights.push(u * w);
    }
    if renormalize {
        let m = mean(&weights);
        weights.iter_mut().for_each(|w| *w /= m);
    }
    let u = 1.0 / max(&weights);
    Ok(WeightProfile {
        k_star: profile.k_star,
        t_bar: profile.t_bar,
        u,
        weights,
        warning: profile.warning.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const NORMAL: PowerModel = PowerModel::NormalLocation;

    fn worked_example() -> PriorSpec {
        let gamma = [vec![2.0; 5], vec![3.0; 5]].concat();
        PriorSpec::new(vec![0.5; 10], gamma).unwrap()
    }

    fn two_hypotheses() -> PriorSpec {
        PriorSpec::new(vec![0.5, 0.5], vec![1.5, 2.5]).unwrap()
    }

    #[test]
    fn prior_validation() {
        assert!(PriorSpec::new(vec![0.5], vec![1.0, 2.0]).is_err());
        assert!(PriorSpec::new(vec![], vec![]).is_err());
        assert!(PriorSpec::new(vec![1.0], vec![1.0]).is_err());
        assert!(PriorSpec::new(vec![0.0], vec![1.0]).is_err());
        assert!(PriorSpec::new(vec![0.5], vec![0.0]).is_err());
        let p = PriorSpec::from_csv_reader("p,gamma\n0.5,2\n0.25, 3\n".as_bytes()).unwrap();
        assert_eq!(p.p(), &[0.5, 0.25]);
        assert_eq!(p.gamma(), &[2.0, 3.0]);
    }

    #[test]
    fn homogeneous_thresholds_are_equal() {
        let prior = PriorSpec::homogeneous(7, 0.3, 2.2).unwrap();
        let t = solve_thresholds(&NORMAL, &prior, 1.3).unwrap();
        assert!(t.iter().all(|&x| x == t[0]));
    }

    #[test]
    fn worked_example_thresholds() {
        let t = solve_thresholds(&NORMAL, &worked_example(), 2.52).unwrap();
        // 1 - Φ(γ/2 + ln(5.04)/γ)
        for (i, &x) in t.iter().enumerate() {
            let g = if i < 5 { 2.0 } else { 3.0 };
            let expect = normal::sf(0.5 * g + (5.04f64).ln() / g);
            assert!((x - expect).abs() < 1e-15);
        }
        assert!((t[0] - 0.0353).abs() < 1e-4, "{}", t[0]);
        assert!((t[9] - 0.0207).abs() < 1e-4, "{}", t[9]);
        assert!((mean(&t) - 0.028).abs() < 5e-4);
    }

    #[test]
    fn huge_multiplier_sends_thresholds_to_zero() {
        let t = solve_thresholds(&NORMAL, &worked_example(), 1e8).unwrap();
        assert!(t.iter().all(|&x| x < 1e-6));
        assert!(solve_thresholds(&NORMAL, &worked_example(), 0.0).is_err());
    }

    #[test]
    fn fixed_t_homogeneous_gives_unit_weights() {
        let prior = PriorSpec::homogeneous(5, 0.4, 1.7).unwrap();
        for t in [0.001, 0.05, 0.3] {
            let prof = optimal_fixed_t_weights(&NORMAL, &prior, t).unwrap();
            assert!(prof.weights.iter().all(|w| (w - 1.0).abs() < 1e-12));
            assert!((prof.t_bar - t).abs() <= FIXED_T_TOLERANCE);
        }
    }

    #[test]
    fn fixed_t_two_hypotheses_at_five_percent() {
        let prof = optimal_fixed_t_weights(&NORMAL, &two_hypotheses(), 0.05).unwrap();
        assert!((prof.k_star - 1.7).abs() < 0.01, "{}", prof.k_star);
        assert!((prof.weights[0] - 1.18).abs() < 0.005);
        assert!((prof.weights[1] - 0.82).abs() < 0.005);
        assert!((prof.mean_weight() - 1.0).abs() < 1e-10);
    }

    /// Maximise p1 π1(t1) + p2 π2(2t - t1) over a fine grid in t1 directly,
    /// with no reference to multipliers or slopes.
    fn grid_oracle_m2(prior: &PriorSpec, t: f64) -> (f64, f64) {
        let n = 200_000;
        let objective = |t1: f64| {
            let t2 = 2.0 * t - t1;
            prior.p()[0] * NORMAL.power_unchecked(prior.gamma()[0], t1)
                + prior.p()[1] * NORMAL.power_unchecked(prior.gamma()[1], t2)
        };
        let (mut lo, mut hi) = (0.0, 2.0 * t);
        for _ in 0..4 {
            let step = (hi - lo) / n as f64;
            let best = (0..=n)
                .map(|i| lo + step * i as f64)
                .max_by(|a, b| objective(*a).total_cmp(&objective(*b)))
                .unwrap();
            lo = (best - 2.0 * step).max(0.0);
            hi = (best + 2.0 * step).min(2.0 * t);
        }
        let t1 = 0.5 * (lo + hi);
        (t1 / t, (2.0 * t - t1) / t)
    }

    #[test]
    fn fixed_t_two_hypotheses_at_one_percent_matches_grid_oracle() {
        let oracle = grid_oracle_m2(&two_hypotheses(), 0.01);
        let prof = optimal_fixed_t_weights(&NORMAL, &two_hypotheses(), 0.01).unwrap();
        assert!((prof.weights[0] - oracle.0).abs() < 1e-6, "{:?} vs {oracle:?}", prof.weights);
        assert!((prof.weights[1] - oracle.1).abs() < 1e-6);
        assert!((prof.weights[0] - 0.78).abs() < 0.005);
        assert!((prof.weights[1] - 1.22).abs() < 0.005);
    }

    #[test]
    fn fdp_approximator_worked_example() {
        let f = fdp_approximator(&NORMAL, &worked_example(), 2.52).unwrap();
        assert!(!f.degenerate);
        assert!((f.value - 0.05).abs() < 5e-4, "{}", f.value);
    }

    #[test]
    fn fdp_approximator_single_hypothesis_arithmetic() {
        // k = 2.52, p = 1/2 puts the slope at 5.04 and the threshold at 0.0353.
        let prior = PriorSpec::new(vec![0.5], vec![2.0]).unwrap();
        let t = NORMAL.threshold_for_slope(crate::EffectSize::new(2.0).unwrap(), 5.04).unwrap();
        let g = 0.5 * t + 0.5 * NORMAL.power_unchecked(2.0, t);
        let expect = (1.0 - g) / (1.0 - t) * (t / g);
        let f = fdp_approximator(&NORMAL, &prior, 2.52).unwrap().value;
        assert!((f - expect).abs() < 1e-12);
        assert!((t - 0.0353).abs() < 1e-4);
        assert!((g - 0.3057).abs() < 5e-4);
        assert!((f - 0.0831).abs() < 5e-4, "{f}");
    }

    #[test]
    fn fdp_approximator_limits() {
        let prior = PriorSpec::new(vec![0.3, 0.6, 0.8], vec![1.0, 2.0, 3.0]).unwrap();
        let small = fdp_approximator(&NORMAL, &prior, 1e-12).unwrap();
        assert!(small.value >= 1.0 - prior.max_p() - 1e-9, "{}", small.value);
        let huge = fdp_approximator(&NORMAL, &prior, 1e300).unwrap();
        assert!(huge.degenerate && huge.value == 0.0);
    }

    #[test]
    fn asymptotic_worked_example() {
        let prof = asymptotically_optimal_weights(&NORMAL, &worked_example(), 0.05).unwrap();
        assert!((prof.k_star - 2.52).abs() < 0.01, "{}", prof.k_star);
        assert!((prof.t_bar - 0.028).abs() < 5e-4);
        for (i, w) in prof.weights.iter().enumerate() {
            let expect = if i < 5 { 1.26 } else { 0.74 };
            assert!((w - expect).abs() < 0.005, "{w}");
        }
        assert!((prof.u - 0.79).abs() < 0.005);
        assert!(prof.warning.is_none());
        assert!(prof.u * prof.max_weight() <= 1.0 + 1e-15);
    }

    #[test]
    fn asymptotic_homogeneous_matches_scalar_bisection() {
        let (p, g, alpha) = (0.4, 2.5, 0.1);
        let prior = PriorSpec::homogeneous(6, p, g).unwrap();
        let prof = asymptotically_optimal_weights(&NORMAL, &prior, alpha).unwrap();
        assert!(prof.weights.iter().all(|w| (w - 1.0).abs() < 1e-12));
        // Oracle: the largest λ solving [(1 - G)/(1 - λ)]·[λ/G] = α, scanning
        // λ downward from 1 in the threshold domain.
        let f = |l: f64| {
            let gl = (1.0 - p) * l + p * NORMAL.power_unchecked(g, l);
            (1.0 - gl) / (1.0 - l) * l / gl - alpha
        };
        let mut hi = 1.0 - 1e-9;
        let mut lo = hi;
        while f(lo) > 0.0 {
            hi = lo;
            lo *= 0.99;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        assert!((prof.t_bar - lo).abs() < 1e-9, "{} vs {lo}", prof.t_bar);
    }

    #[test]
    fn asymptotic_no_solution() {
        let prior = PriorSpec::new(vec![0.96], vec![2.0]).unwrap();
        match asymptotically_optimal_weights(&NORMAL, &prior, 0.05) {
            Err(Error::NoSolution { bound, .. }) => assert!((bound - 0.04).abs() < 1e-12),
            other => panic!("expected NoSolution, got {other:?}"),
        }
    }

    #[test]
    fn asymptotic_warns_when_precondition_fails_but_crossing_exists() {
        let prior = PriorSpec::new(vec![0.2, 0.97, 0.5], vec![2.0, 3.0, 2.5]).unwrap();
        let prof = asymptotically_optimal_weights(&NORMAL, &prior, 0.05).unwrap();
        assert!(prof.warning.is_some());
        let f = fdp_approximator(&NORMAL, &prior, prof.k_star).unwrap().value;
        assert!((f - 0.05).abs() < FDP_TOLERANCE, "{f} {prof:?}");
    }

    #[test]
    fn weight_increases_with_prior() {
        let gamma = vec![1.5, 2.0, 3.0];
        let mut last = 0.0;
        for p0 in [0.1, 0.2, 0.4, 0.6, 0.8] {
            let prior = PriorSpec::new(vec![p0, 0.5, 0.5], gamma.clone()).unwrap();
            let prof = optimal_fixed_t_weights(&NORMAL, &prior, 0.03).unwrap();
            assert!(prof.weights[0] > last);
            last = prof.weights[0];
        }
    }

    #[test]
    fn perturbation() {
        let prof = asymptotically_optimal_weights(&NORMAL, &worked_example(), 0.05).unwrap();
        let same = perturb_weights(&prof, &vec![1.0; 10], false).unwrap();
        assert_eq!(same, prof);

        let pair = optimal_fixed_t_weights(&NORMAL, &PriorSpec::homogeneous(2, 0.5, 2.0).unwrap(), 0.05).unwrap();
        let eps = 1e-9;
        let out = perturb_weights(&pair, &[2.0, eps], false).unwrap();
        assert!((out.weights[0] - 2.0).abs() < 1e-12);
        assert!((out.weights[1] - eps).abs() < 1e-20);
        assert!((out.u - 0.5).abs() < 1e-12);
        let renorm = perturb_weights(&pair, &[2.0, eps], true).unwrap();
        assert!((renorm.mean_weight() - 1.0).abs() < 1e-12);

        assert!(perturb_weights(&pair, &[0.0, 1.0], false).is_err());
        assert!(perturb_weights(&pair, &[30.0, 1.0], false).is_err());
        assert!(perturb_weights(&pair, &[1.0], false).is_err());
    }

    #[test]
    fn uniform_perturbation_keeps_mean_near_one() {
        let m = 2000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gamma: Vec<f64> = (0..m).map(|_| rng.gen_range(1.0..5.0)).collect();
        let prior = PriorSpec::new(vec![0.5; m], gamma).unwrap();
        let prof = asymptotically_optimal_weights(&NORMAL, &prior, 0.05).unwrap();
        let u: Vec<f64> = (0..m).map(|_| rng.gen_range(f64::EPSILON..2.0)).collect();
        let out = perturb_weights(&prof, &u, false).unwrap();
        assert!((out.mean_weight() - 1.0).abs() < 3.0 / (m as f64).sqrt());
    }

    #[test]
    fn mean_threshold_strictly_decreasing() {
        let prior = PriorSpec::new(vec![0.2, 0.5, 0.9], vec![1.0, 2.5, 4.0]).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let k = 10f64.powf(-3.0 + 6.0 * i as f64 / 199.0);
            let t = mean_threshold(&NORMAL, &prior, k).unwrap();
            assert!(t < prev);
            prev = t;
        }
    }

    #[test]
    fn profile_json_fields() {
        let prof = asymptotically_optimal_weights(&NORMAL, &worked_example(), 0.05).unwrap();
        let v: serde_json::Value = serde_json::to_value(&prof).unwrap();
        for key in ["k_star", "t_bar", "u", "weights"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: WeightProfile = serde_json::from_value(v).unwrap();
        assert_eq!(back, prof);
    }
}
