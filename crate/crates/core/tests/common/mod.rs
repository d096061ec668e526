//! Independent oracles shared by the property and acceptance suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wamdf::normal;
use wamdf::weights::expected_correct_rejections;
use wamdf::{optimal_fixed_t_weights, EffectSize, PowerModel, PriorSpec};

pub const NORMAL: PowerModel = PowerModel::NormalLocation;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Textbook Benjamini-Hochberg.
pub fn bh_oracle(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let k = (1..=m)
        .rev()
        .find(|&j| p[order[j - 1]] <= alpha * j as f64 / m as f64)
        .unwrap_or(0);
    let mut out = vec![false; m];
    for &i in &order[..k] {
        out[i] = true;
    }
    out
}

/// Rejection set at `sup{t <= u : M0 t / max(R(t), 1) <= alpha}`, by scanning
/// the candidates `{Q_m <= u} ∪ {u}`.
pub fn sup_oracle(q: &[f64], m0: f64, alpha: f64, u: f64) -> Vec<bool> {
    let mut best: Option<f64> = None;
    for c in q.iter().copied().filter(|&x| x <= u).chain(std::iter::once(u)) {
        let r = q.iter().filter(|&&x| x <= c).count().max(1);
        if m0 * c / r as f64 <= alpha && best.map_or(true, |b| c > b) {
            best = Some(c);
        }
    }
    match best {
        Some(b) => q.iter().map(|&x| x <= b).collect(),
        None => vec![false; q.len()],
    }
}

/// `(M - #{Q <= λ} + 1) / (1 - λ)`.
pub fn m0_oracle(q: &[f64], lambda: f64) -> f64 {
    (q.len() - q.iter().filter(|&&x| x <= lambda).count() + 1) as f64 / (1.0 - lambda)
}

/// Random weighted step-up instances checked against the sup oracle.
/// Returns `(agreements, instances)`.
pub fn step_up_agreement(seed: u64, instances: usize) -> (usize, usize) {
    let mut r = rng(seed);
    let mut agree = 0;
    for _ in 0..instances {
        let m = r.gen_range(1..=50);
        let w: Vec<f64> = (0..m).map(|_| r.gen_range(0.2..2.0)).collect();
        let p: Vec<f64> = (0..m)
            .map(|_| if r.gen_bool(0.3) { r.gen::<f64>().powi(4) } else { r.gen::<f64>() })
            .collect();
        let q: Vec<f64> = p.iter().zip(&w).map(|(p, w)| p / w).collect();
        let lambda = r.gen_range(0.01..0.4);
        let alpha = r.gen_range(0.01..0.3);
        let w_max = w.iter().cloned().fold(0.0, f64::max);
        let u = 1.0 / w_max;
        let m0 = m0_oracle(&q, lambda);
        let got = wamdf::procedure::step_up_threshold(&q, m0, alpha, u.min(1.0)).unwrap();
        if got.rejected == sup_oracle(&q, m0, alpha, u.min(1.0)) {
            agree += 1;
        }
    }
    (agree, instances)
}

/// Largest relative error of the analytic slope against a central
/// difference over `t ∈ [0.001, 0.999]`, `γ ∈ [0.5, 5]`.
pub fn slope_fd_error() -> f64 {
    let mut worst: f64 = 0.0;
    for gi in 0..=9 {
        let g = 0.5 + 0.5 * gi as f64;
        let gamma = EffectSize::new(g).unwrap();
        for ti in 0..=50 {
            let t = 0.001 + 0.998 * ti as f64 / 50.0;
            let h = 1e-5 * t.min(1.0 - t);
            // Differencing 1 - π keeps precision where π is close to 1.
            let miss = |t: f64| normal::cdf(normal::isf(t) - g);
            let fd = (miss(t - h) - miss(t + h)) / (2.0 * h);
            let s = NORMAL.power_slope(gamma, t).unwrap();
            worst = worst.max(((s - fd) / s).abs());
        }
    }
    worst
}

/// Largest absolute gap between the closed-form and bisection inverses over
/// `γ ∈ {0.5, ..., 5}` and a log grid of slopes in `[0.1, 100]`.
pub fn inversion_error() -> f64 {
    let mut worst: f64 = 0.0;
    for gi in 0..=9 {
        let gamma = EffectSize::new(0.5 + 0.5 * gi as f64).unwrap();
        for si in 0..=30 {
            let s = 10f64.powf(-1.0 + 3.0 * si as f64 / 30.0);
            let a = NORMAL.threshold_for_slope(gamma, s).unwrap();
            let b = NORMAL.threshold_for_slope_bisection(gamma, s).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Objective `Σ p_m π(γ_m, t_m)` by direct evaluation.
fn objective(p: &[f64], g: &[f64], t: &[f64]) -> f64 {
    p.iter()
        .zip(g)
        .zip(t)
        .map(|((p, g), t)| p * normal::sf(normal::isf(*t) - g))
        .sum()
}

/// Brute-force dominance for `M <= 4`: the optimal fixed-t thresholds must
/// beat `draws` random feasible vectors with the same mean on each of
/// `priors` random configurations. Returns `(violations, comparisons)`.
pub fn dominance(seed: u64, priors: usize, draws: usize) -> (usize, usize) {
    let mut r = rng(seed);
    let (mut bad, mut total) = (0, 0);
    for _ in 0..priors {
        let m = r.gen_range(2..=4);
        let p: Vec<f64> = (0..m).map(|_| r.gen_range(0.05..0.95)).collect();
        let g: Vec<f64> = (0..m).map(|_| r.gen_range(0.5..4.0)).collect();
        let t_bar = [0.005, 0.01, 0.05, 0.1][r.gen_range(0..4)];
        let prior = PriorSpec::new(p.clone(), g.clone()).unwrap();
        let profile = optimal_fixed_t_weights(&NORMAL, &prior, t_bar).unwrap();
        let best = expected_correct_rejections(&NORMAL, &prior, &profile.thresholds()).unwrap();
        assert!((best - objective(&p, &g, &profile.thresholds())).abs() < 1e-12);
        let mut done = 0;
        while done < draws {
            let e: Vec<f64> = (0..m).map(|_| -r.gen::<f64>().ln()).collect();
            let s: f64 = e.iter().sum();
            let t: Vec<f64> = e.iter().map(|x| m as f64 * t_bar * x / s).collect();
            if t.iter().any(|&x| x > 1.0) {
                continue;
            }
            done += 1;
            total += 1;
            if objective(&p, &g, &t) > best + 1e-12 {
                bad += 1;
            }
        }
    }
    (bad, total)
}

/// Score statistic from the full covariance matrix, `O(g²)`.
pub fn score_oracle(y: &[u64], x: &[f64]) -> f64 {
    let n: f64 = y.iter().map(|&v| v as f64).sum();
    let p: Vec<f64> = y.iter().map(|&v| v as f64 / n).collect();
    let g = x.len();
    let x_bar = x.iter().sum::<f64>() / g as f64;
    let num: f64 = x.iter().zip(y).map(|(a, &b)| a * b as f64).sum::<f64>() - n * x_bar;
    let mut q = 0.0;
    for i in 0..g {
        for j in 0..g {
            let d = if i == j { p[i] } else { 0.0 };
            q += x[i] * n * (d - p[i] * p[j]) * x[j];
        }
    }
    num / q.sqrt()
}

/// Largest gap between library and oracle score statistics on random tables.
pub fn score_error(seed: u64, tables: usize) -> f64 {
    let mut r = rng(seed);
    let x = [0.86, 1.34, 1.81, 2.37, 3.00];
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < tables {
        let y: Vec<u64> = (0..5).map(|_| r.gen_range(0..40)).collect();
        let Ok(z) = wamdf::score_statistic(&y, &x) else {
            continue;
        };
        worst = worst.max((z - score_oracle(&y, &x)).abs());
        done += 1;
    }
    worst
}

/// Grid search for the best split `(t1, t2)` with `t1 + t2 = 2t`.
pub fn two_point_grid(p: [f64; 2], g: [f64; 2], t: f64, steps: usize) -> (f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 1..steps {
        let t1 = 2.0 * t * i as f64 / steps as f64;
        let t2 = 2.0 * t - t1;
        let v = objective(&p, &g, &[t1, t2]);
        if v > best.0 {
            best = (v, t1);
        }
    }
    (best.1 / t, 2.0 - best.1 / t)
}
