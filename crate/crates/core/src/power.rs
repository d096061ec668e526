//! Concave per-test power curves.
//!
//! A power curve `π_γ(t)` gives the probability of rejecting a false null
//! at size threshold `t` for a test with effect size `γ`. Weight
//! optimisation only needs three queries: the power itself, its slope
//! `π'_γ(t)`, and the inverse of the slope. Curves must be concave with
//! `π(0) = 0`, `π(1) = 1`, so the slope is strictly decreasing and can be
//! inverted by bisection when no closed form is available.

use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::normal;

/// Bracket used when inverting a slope numerically.
pub const SLOPE_BRACKET: (f64, f64) = (1e-15, 1.0 - 1e-15);
const BISECTION_MAX_ITER: usize = 200;
const BISECTION_REL_TOL: f64 = 1e-12;

/// Noncentrality of a test statistic under the alternative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EffectSize(f64);

impl EffectSize {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(EffectSize(gamma))
        } else {
            Err(Error::domain(format!(
                "effect size must be positive and finite, got {gamma}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A power curve family.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerModel {
    /// One-sided test of `N(0,1)` against `N(γ,1)`:
    /// `π_γ(t) = 1 - Φ(Φ⁻¹(1-t) - γ)`.
    NormalLocation,
    /// A single user-supplied curve. The effect size is ignored.
    Tabulated(TabulatedCurve),
}

/// Threshold at a given slope together with the complementary quantities
/// the FDP approximator needs. Complements are computed directly where the
/// model allows, so `1 - t` and `1 - π` do not cancel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub threshold_complement: f64,
    pub power: f64,
    pub power_complement: f64,
}

impl PowerModel {
    /// `π_γ(t)`.
    pub fn power(&self, gamma: EffectSize, t: f64) -> Result<f64> {
        check_unit(t)?;
        Ok(self.power_unchecked(gamma.0, t))
    }

    /// `π'_γ(t)` for `t` strictly inside (0, 1).
    pub fn power_slope(&self, gamma: EffectSize, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::domain(format!(
                "power slope is only defined on the open interval (0, 1), got t = {t}"
            )));
        }
        Ok(self.slope_unchecked(gamma.0, t))
    }

    /// The unique `t` with `π'_γ(t) = slope`.
    pub fn threshold_for_slope(&self, gamma: EffectSize, slope: f64) -> Result<f64> {
        check_slope(slope)?;
        Ok(self.operating_point_unchecked(gamma.0, slope).threshold)
    }

    /// Inverts the slope by bisection regardless of model. For the normal
    /// model this is the cross-check against the closed form.
    pub fn threshold_for_slope_bisection(&self, gamma: EffectSize, slope: f64) -> Result<f64> {
        check_slope(slope)?;
        Ok(invert_decreasing(|t| self.slope_unchecked(gamma.0, t), slope))
    }

    pub fn operating_point(&self, gamma: EffectSize, slope: f64) -> Result<OperatingPoint> {
        check_slope(slope)?;
        Ok(self.operating_point_unchecked(gamma.0, slope))
    }

    pub(crate) fn power_unchecked(&self, gamma: f64, t: f64) -> f64 {
        match self {
            PowerModel::NormalLocation => {
                if t <= 0.0 {
                    0.0
                } else if t >= 1.0 {
                    1.0
                } else {
                    normal::sf(normal::isf(t) - gamma)
                }
            }
            PowerModel::Tabulated(curve) => curve.power(t),
        }
    }

    pub(crate) fn slope_unchecked(&self, gamma: f64, t: f64) -> f64 {
        match self {
            // φ(z - γ)/φ(z) = exp(γz - γ²/2), kept in log space until the end.
            PowerModel::NormalLocation => (gamma * normal::isf(t) - 0.5 * gamma * gamma).exp(),
            PowerModel::Tabulated(curve) => curve.slope(t),
        }
    }

    pub(crate) fn operating_point_unchecked(&self, gamma: f64, slope: f64) -> OperatingPoint {
        match self {
            PowerModel::NormalLocation => {
                // The rejection boundary z solves exp(γz - γ²/2) = slope.
                let z = 0.5 * gamma + slope.ln() / gamma;
                OperatingPoint {
                    threshold: normal::sf(z),
                    threshold_complement: normal::cdf(z),
                    power: normal::sf(z - gamma),
                    power_complement: normal::cdf(z - gamma),
                }
            }
            PowerModel::Tabulated(curve) => {
                let t = invert_decreasing(|t| curve.slope(t), slope);
                let power = curve.power(t);
                OperatingPoint {
                    threshold: t,
                    threshold_complement: 1.0 - t,
                    power,
                    power_complement: 1.0 - power,
                }
            }
        }
    }
}

fn check_unit(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::domain(format!("threshold must lie in [0, 1], got {t}")))
    }
}

fn check_slope(slope: f64) -> Result<()> {
    if slope > 0.0 && slope.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("slope must be positive and finite, got {slope}")))
    }
}

/// Solves `f(t) = target` for a strictly decreasing `f` on [`SLOPE_BRACKET`].
/// Targets outside the range of `f` on the bracket clamp to its ends.
fn invert_decreasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = SLOPE_BRACKET;
    if f(lo) <= target {
        return lo;
    }
    if f(hi) >= target {
        return hi;
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= BISECTION_REL_TOL * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// A strictly concave power curve given as a table of `(t, power)` points.
///
/// Power is linearly interpolated. The slope on each segment is its secant;
/// to keep the slope continuous and strictly decreasing, secants are placed
/// at segment midpoints and interpolated (and extrapolated at both ends)
/// linearly in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCurve {
    t: Vec<f64>,
    power: Vec<f64>,
    mid: Vec<f64>,
    log_secant: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct CurveRow {
    t: f64,
    power: f64,
}

impl TabulatedCurve {
    pub fn new(t: Vec<f64>, power: Vec<f64>) -> Result<Self> {
        crate::error::check_len("power column", t.len(), power.len())?;
        if t.len() < 3 {
            return Err(Error::invalid(
                "tabulated power curve needs at least three points",
            ));
        }
        if t[0] != 0.0 || power[0] != 0.0 {
            return Err(Error::invalid("tabulated power curve must start at (0, 0)"));
        }
        if *t.last().unwrap() != 1.0 || *power.last().unwrap() != 1.0 {
            return Err(Error::invalid("tabulated power curve must end at (1, 1)"));
        }
        let mut mid = Vec::with_capacity(t.len() - 1);
        let mut log_secant = Vec::with_capacity(t.len() - 1);
        for i in 1..t.len() {
            let dt = t[i] - t[i - 1];
            if !(dt > 0.0) {
                return Err(Error::invalid(format!(
                    "t column must be strictly increasing (row {})",
                    i + 1
                )));
            }
            let secant = (power[i] - power[i - 1]) / dt;
            if !(secant > 0.0) {
                return Err(Error::invalid(format!(
                    "power must be strictly increasing (row {})",
                    i + 1
                )));
            }
            if let Some(&prev) = log_secant.last() {
                if !(secant.ln() < prev) {
                    return Err(Error::invalid(format!(
                        "power curve is not strictly concave at row {}",
                        i + 1
                    )));
                }
            }
            mid.push(0.5 * (t[i] + t[i - 1]));
            log_secant.push(secant.ln());
        }
        Ok(TabulatedCurve {
            t,
            power,
            mid,
            log_secant,
        })
    }

    /// Reads a CSV with header `t,power`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "power"] {
            return Err(Error::invalid(format!(
                "power curve CSV must have header \"t,power\", found \"{}\"",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut t, mut power) = (Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let row: CurveRow = row?;
            t.push(row.t);
            power.push(row.power);
        }
        Self::new(t, power)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file)
    }

    fn power(&self, t: f64) -> f64 {
        let i = self.t.partition_point(|&x| x <= t).clamp(1, self.t.len() - 1);
        let (t0, t1) = (self.t[i - 1], self.t[i]);
        let (p0, p1) = (self.power[i - 1], self.power[i]);
        (p0 + (p1 - p0) * (t - t0) / (t1 - t0)).clamp(0.0, 1.0)
    }

    fn slope(&self, t: f64) -> f64 {
        let n = self.mid.len();
        let i = self.mid.partition_point(|&x| x <= t).clamp(1, n - 1);
        let (m0, m1) = (self.mid[i - 1], self.mid[i]);
        let (s0, s1) = (self.log_secant[i - 1], self.log_secant[i]);
        (s0 + (s1 - s0) * (t - m0) / (m1 - m0)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma(g: f64) -> EffectSize {
        EffectSize::new(g).unwrap()
    }

    const NORMAL: PowerModel = PowerModel::NormalLocation;

    #[test]
    fn power_endpoints() {
        assert_eq!(NORMAL.power(gamma(2.0), 0.0).unwrap(), 0.0);
        assert_eq!(NORMAL.power(gamma(2.0), 1.0).unwrap(), 1.0);
    }

    #[test]
    fn power_at_five_percent() {
        // 1 - Φ(Φ⁻¹(0.95) - 2) = 1 - Φ(-0.355146...)
        let p = NORMAL.power(gamma(2.0), 0.05).unwrap();
        assert!((p - 0.638_760_031_312_335).abs() < 1e-12, "{p}");
    }

    #[test]
    fn domain_errors() {
        assert!(NORMAL.power(gamma(2.0), -0.1).is_err());
        assert!(NORMAL.power(gamma(2.0), 1.1).is_err());
        assert!(EffectSize::new(0.0).is_err());
        assert!(EffectSize::new(-1.0).is_err());
        assert!(EffectSize::new(f64::NAN).is_err());
        assert!(NORMAL.power_slope(gamma(2.0), 0.0).is_err());
        assert!(NORMAL.power_slope(gamma(2.0), 1.0).is_err());
        assert!(NORMAL.threshold_for_slope(gamma(2.0), 0.0).is_err());
    }

    #[test]
    fn unit_slope_at_half_gamma() {
        for g in [0.5, 1.0, 2.0, 3.7] {
            let t = normal::sf(g / 2.0);
            let s = NORMAL.power_slope(gamma(g), t).unwrap();
            assert!((s - 1.0).abs() < 1e-12, "gamma {g}: {s}");
            let back = NORMAL.threshold_for_slope(gamma(g), 1.0).unwrap();
            assert!((back - t).abs() < 1e-15);
        }
    }

    #[test]
    fn slope_matches_central_difference() {
        let h = 1e-6;
        let g = gamma(2.0);
        let fd = (NORMAL.power(g, 0.05 + h).unwrap() - NORMAL.power(g, 0.05 - h).unwrap()) / (2.0 * h);
        let s = NORMAL.power_slope(g, 0.05).unwrap();
        assert!(((s - fd) / s).abs() < 1e-6, "{s} vs {fd}");
    }

    #[test]
    fn two_hypothesis_operating_points() {
        // At the t = 0.05 solution for gammas (1.5, 2.5), both slopes equal k*/p = 1.7/0.5.
        let t2 = NORMAL.threshold_for_slope(gamma(2.5), 3.4).unwrap();
        assert!((t2 - 0.041).abs() < 5e-4, "{t2}");
        let s = NORMAL.power_slope(gamma(2.5), 0.041).unwrap();
        assert!((s - 3.4).abs() < 0.01, "{s}");
        // Slope 2.52/0.5 at gamma 2 gives the larger of the two worked-example thresholds.
        let t = NORMAL.threshold_for_slope(gamma(2.0), 5.04).unwrap();
        assert!((t - 0.0353).abs() < 1e-4, "{t}");
    }

    #[test]
    fn extreme_slopes_do_not_overflow() {
        let t = NORMAL.threshold_for_slope(gamma(0.5), 1e300).unwrap();
        assert!(t >= 0.0 && t < 1e-100);
        let t = NORMAL.threshold_for_slope(gamma(5.0), 1e-300).unwrap();
        assert!(t <= 1.0 && t > 1.0 - 1e-10);
    }

    fn square_root_curve() -> TabulatedCurve {
        let t: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let p = t.iter().map(|x| x.sqrt()).collect();
        TabulatedCurve::new(t, p).unwrap()
    }

    #[test]
    fn tabulated_curve_queries() {
        let model = PowerModel::Tabulated(square_root_curve());
        let g = gamma(1.0);
        assert_eq!(model.power(g, 0.0).unwrap(), 0.0);
        assert_eq!(model.power(g, 1.0).unwrap(), 1.0);
        assert!((model.power(g, 0.25).unwrap() - 0.5).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for i in 1..100 {
            let t = i as f64 / 100.0;
            let s = model.power_slope(g, t).unwrap();
            assert!(s < prev);
            prev = s;
            let back = model.threshold_for_slope(g, s).unwrap();
            assert!((back - t).abs() < 1e-10, "{t} -> {s} -> {back}");
        }
    }

    #[test]
    fn tabulated_curve_validation() {
        assert!(TabulatedCurve::new(vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
        // not concave
        assert!(TabulatedCurve::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.2, 1.0]).is_err());
        // not starting at the origin
        assert!(TabulatedCurve::new(vec![0.1, 0.5, 1.0], vec![0.0, 0.8, 1.0]).is_err());
        // t not increasing
        assert!(TabulatedCurve::new(vec![0.0, 0.5, 0.5, 1.0], vec![0.0, 0.8, 0.9, 1.0]).is_err());
        assert!(TabulatedCurve::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.8, 1.0]).is_ok());
    }

    #[test]
    fn tabulated_csv() {
        let csv = "t,power\n0,0\n0.1,0.5\n0.5,0.9\n1,1\n";
        let curve = TabulatedCurve::from_csv_reader(csv.as_bytes()).unwrap();
        assert!((curve.power(0.05) - 0.25).abs() < 1e-12);
        assert!(TabulatedCurve::from_csv_reader("x,y\n0,0\n".as_bytes()).is_err());
    }
}
