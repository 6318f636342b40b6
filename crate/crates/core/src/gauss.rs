//! Closed-form normal-model instances used as analytic oracles: the
//! interval from the point estimator `a x̄ + b`, the refinement of a box
//! interval around `x̄`, the one-sided t case, and the smallest lower limit
//! for a stochastically ordered one-parameter family.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::{std_normal_cdf, std_normal_quantile, t_cdf, t_quantile, z_upper};
use crate::error::{invalid, Result};

/// Normal sample of size `n` with known standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub n: u32,
    pub sigma: f64,
    pub alpha: f64,
}

impl GaussianSpec {
    pub fn new(n: u32, sigma: f64, alpha: f64) -> Result<Self> {
        if n == 0 {
            return invalid("n must be at least 1");
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("sigma = {sigma} must be positive"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return invalid(format!("alpha = {alpha} outside (0, 1)"));
        }
        Ok(Self { n, sigma, alpha })
    }

    /// Standard error `sigma / sqrt(n)`.
    pub fn se(&self) -> f64 {
        self.sigma / f64::from(self.n).sqrt()
    }
}

/// Which regime of the `a x̄ + b` construction produced an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZabCase {
    /// `a > 2`: the whole line.
    I,
    /// `a < 2`: a finite interval around the mode.
    II,
    /// `a = 2`, large `x̄`: finite lower limit, infinite upper.
    III1,
    /// `a = 2`, moderate `x̄`: the whole line.
    III2,
    /// `a = 2`, small `x̄`: infinite lower limit, finite upper.
    III3,
}

impl fmt::Display for ZabCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::I => "i",
            Self::II => "ii",
            Self::III1 => "iii-1",
            Self::III2 => "iii-2",
            Self::III3 => "iii-3",
        })
    }
}

/// A possibly unbounded interval with the regime that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZabInterval {
    pub lower: f64,
    pub upper: f64,
    pub case: ZabCase,
}

fn check_a(a: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return invalid(format!("estimator slope a = {a} must be positive"));
    }
    Ok(())
}

/// `P(|mu0 - a X̄ - b| >= |mu0 - a x̄ - b|)` under `mu = mu0`.
pub fn h_zab(xbar: f64, mu0: f64, a: f64, b: f64, spec: &GaussianSpec) -> Result<f64> {
    check_a(a)?;
    let u = 1.0 / spec.se();
    let mode = a * xbar + b;
    let far = u * ((2.0 - a) * mu0 - 2.0 * b - a * xbar) / a;
    let near = u * (xbar - mu0);
    // 1 - F(w) is evaluated as F(-w) to keep small tails accurate.
    let h = if mu0 >= mode {
        std_normal_cdf(-far) + std_normal_cdf(near)
    } else {
        std_normal_cdf(-near) + std_normal_cdf(far)
    };
    Ok(h.min(1.0))
}

/// Expands a bracket geometrically away from `start` in direction `dir`
/// until `inside` fails, then bisects to `tol`. Returns the outside end.
fn flank(start: f64, dir: f64, scale: f64, tol: f64, inside: impl Fn(f64) -> bool) -> Option<f64> {
    let mut step = scale;
    let mut good = start;
    let mut bad = start + dir * step;
    let mut tries = 0;
    while inside(bad) {
        good = bad;
        step *= 2.0;
        bad = start + dir * step;
        tries += 1;
        if tries > 200 || !bad.is_finite() {
            return None;
        }
    }
    while (bad - good).abs() > tol {
        let mid = 0.5 * (good + bad);
        if mid == good || mid == bad {
            break;
        }
        if inside(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(bad)
}

/// Hull of `{mu0 : h_zab(x̄, mu0) > alpha}`.
pub fn c_zab(xbar: f64, a: f64, b: f64, spec: &GaussianSpec) -> Result<ZabInterval> {
    check_a(a)?;
    let se = spec.se();
    let alpha = spec.alpha;
    if a > 2.0 {
        return Ok(ZabInterval {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            case: ZabCase::I,
        });
    }
    if a == 2.0 {
        let u = 1.0 / se;
        let za = z_upper(alpha)?;
        let tail = std_normal_cdf(-u * (b + xbar));
        return Ok(if xbar > za * se - b {
            ZabInterval {
                lower: xbar - se * std_normal_quantile(1.0 - alpha + tail)?,
                upper: f64::INFINITY,
                case: ZabCase::III1,
            }
        } else if xbar >= -za * se - b {
            ZabInterval {
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
                case: ZabCase::III2,
            }
        } else {
            ZabInterval {
                lower: f64::NEG_INFINITY,
                upper: xbar - se * std_normal_quantile(alpha - 1.0 + tail)?,
                case: ZabCase::III3,
            }
        });
    }
    let mode = a * xbar + b;
    let inside = |m: f64| h_zab(xbar, m, a, b, spec).map(|h| h > alpha).unwrap_or(false);
    let tol = 1e-12 * se;
    let lower = flank(mode, -1.0, se, tol, inside).unwrap_or(f64::NEG_INFINITY);
    let upper = flank(mode, 1.0, se, tol, inside).unwrap_or(f64::INFINITY);
    Ok(ZabInterval {
        lower,
        upper,
        case: ZabCase::II,
    })
}

/// Refinement of the box `[x̄ - a se, x̄ + b se]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRefinement {
    pub lower: f64,
    pub upper: f64,
    /// Endpoints are `x̄ + c1 se` and `x̄ + c2 se`.
    pub c1: f64,
    pub c2: f64,
    /// Normal tail masses beyond each endpoint; they add up to `alpha`.
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Modification of the conservative box interval `[x̄ - a se, x̄ + b se]`
/// with `a, b >= z_{alpha/2}`.
///
/// With `g(δ) = 1 - F(δ) + F(a - b - δ)`, decreasing for `δ >= (a - b)/2`,
/// the endpoints are `c1 = -δ*` and `c2 = δ* - (a - b)` where `g(δ*) = alpha`.
pub fn refine_box(xbar: f64, a: f64, b: f64, spec: &GaussianSpec) -> Result<BoxRefinement> {
    let z = z_upper(spec.alpha / 2.0)?;
    // Allow the caller to pass a quantile that was rounded in the last place.
    let slack = 1e-12 * z;
    if !(a >= z - slack && b >= z - slack) || !a.is_finite() || !b.is_finite() {
        return invalid(format!(
            "box widths a = {a}, b = {b} must be finite and at least z_(alpha/2) = {z}"
        ));
    }
    let g = |d: f64| std_normal_cdf(-d) + std_normal_cdf(a - b - d);
    let mut lo = 0.5 * (a - b);
    let mut hi = lo + 1.0;
    while g(hi) > spec.alpha {
        hi = lo + 2.0 * (hi - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid) > spec.alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let d = 0.5 * (lo + hi);
    let se = spec.se();
    let (c1, c2) = (-d, d - (a - b));
    Ok(BoxRefinement {
        lower: xbar + c1 * se,
        upper: xbar + c2 * se,
        c1,
        c2,
        alpha1: std_normal_cdf(-d),
        alpha2: std_normal_cdf(a - b - d),
    })
}

/// Outcome of modifying the lower interval `[x̄ + c s/sqrt(n), inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TModification {
    /// `c <= -t_{alpha, n-1}`: the interval is kept as is.
    pub keep: bool,
    /// `-t_{alpha, n-1}`.
    pub threshold: f64,
    /// `1 - F_T(-c)`, the h value below the given lower limit.
    pub h_below: f64,
}

/// One-sided t case: the modified interval is the original when
/// `c <= -t_{alpha, n-1}` and the whole line otherwise.
pub fn one_sided_t_modify(c: f64, n: u32, alpha: f64) -> Result<TModification> {
    if n < 2 {
        return invalid("the one-sided t case needs n >= 2");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha = {alpha} outside (0, 1)"));
    }
    if c.is_nan() {
        return invalid("c is NaN");
    }
    let threshold = -t_quantile(1.0 - alpha, n - 1)?;
    Ok(TModification {
        keep: c <= threshold,
        threshold,
        h_below: 1.0 - t_cdf(-c, n - 1)?,
    })
}

/// Smallest exact lower limit `inf{theta0 : 1 - F(x - 1, theta0) > alpha}` for
/// a family whose cdf `F(x, theta)` is nonincreasing in `theta`.
///
/// `cdf(x, theta)` must return `P(X <= x)` and accept `x = -1`. Monotonicity is
/// probed on a grid and a violation is an input error.
pub fn stochastic_lower(
    cdf: impl Fn(i64, f64) -> f64,
    x: i64,
    alpha: f64,
    theta_range: (f64, f64),
) -> Result<f64> {
    let (a, b) = theta_range;
    if !(a < b) {
        return invalid(format!("empty parameter range [{a}, {b}]"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha = {alpha} outside (0, 1)"));
    }
    let probe: Vec<f64> = (0..=200).map(|i| cdf(x - 1, a + (b - a) * f64::from(i) / 200.0)).collect();
    if probe.windows(2).any(|w| w[1] > w[0] + 1e-12) {
        return invalid(format!("F(x - 1, theta) increases in theta at x = {x}"));
    }
    let inside = |t: f64| 1.0 - cdf(x - 1, t) > alpha;
    if inside(a) {
        return Ok(a);
    }
    if !inside(b) {
        return Ok(b);
    }
    let (mut lo, mut hi) = (a, b);
    while hi - lo > 1e-13 * (1.0 + (b - a).abs()) {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if inside(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::binom_cdf;

    fn spec() -> GaussianSpec {
        GaussianSpec::new(4, 1.0, 0.05).unwrap()
    }

    #[test]
    fn h_zab_peak_and_z_case() {
        let s = spec();
        assert!((h_zab(0.3, 0.7 * 0.3 + 0.1, 0.7, 0.1, &s).unwrap() - 1.0).abs() < 1e-15);
        for &m in &[-1.0, -0.2, 0.4, 1.5] {
            let w = 2.0 * (m - 0.25f64).abs();
            let want = 1.0 - std_normal_cdf(w) + std_normal_cdf(-w);
            assert!((h_zab(0.25, m, 1.0, 0.0, &s).unwrap() - want).abs() < 1e-14);
        }
        assert!(h_zab(0.0, 50.0, 1.5, 0.0, &s).unwrap() < 1e-12);
        assert!(h_zab(0.0, 1.0, 0.0, 0.0, &s).is_err());
    }

    #[test]
    fn c_zab_cases() {
        let s = spec();
        let z = c_zab(0.0, 1.0, 0.0, &s).unwrap();
        assert_eq!(z.case, ZabCase::II);
        assert!((z.upper - 0.98).abs() < 1e-4);
        let all = c_zab(0.0, 3.0, 0.0, &s).unwrap();
        assert_eq!((all.lower, all.upper, all.case), (f64::NEG_INFINITY, f64::INFINITY, ZabCase::I));
        let one = GaussianSpec::new(1, 1.0, 0.05).unwrap();
        assert_eq!(c_zab(0.0, 2.0, 0.0, &one).unwrap().case, ZabCase::III2);
        let hi = c_zab(3.0, 2.0, 0.0, &one).unwrap();
        assert_eq!(hi.case, ZabCase::III1);
        assert!(hi.upper.is_infinite() && hi.lower.is_finite());
        let lo = c_zab(-3.0, 2.0, 0.0, &one).unwrap();
        assert_eq!(lo.case, ZabCase::III3);
        assert!(lo.lower.is_infinite() && lo.upper.is_finite());
    }

    #[test]
    fn a_equal_two_limits_solve_h() {
        let one = GaussianSpec::new(1, 1.0, 0.05).unwrap();
        let iv = c_zab(3.0, 2.0, 0.5, &one).unwrap();
        assert!((h_zab(3.0, iv.lower, 2.0, 0.5, &one).unwrap() - 0.05).abs() < 1e-10);
        let iv = c_zab(-3.0, 2.0, 0.5, &one).unwrap();
        assert!((h_zab(-3.0, iv.upper, 2.0, 0.5, &one).unwrap() - 0.05).abs() < 1e-10);
    }

    #[test]
    fn box_refinement() {
        let s = spec();
        let z = z_upper(0.025).unwrap();
        let r = refine_box(1.0, 3.0, 3.0, &s).unwrap();
        assert!((r.lower - (1.0 - z * s.se())).abs() < 1e-9);
        assert!((r.upper - (1.0 + z * s.se())).abs() < 1e-9);
        let r = refine_box(0.0, 2.5, 2.0, &s).unwrap();
        assert!((r.alpha1 + r.alpha2 - 0.05).abs() < 1e-10);
        assert!(r.lower >= -2.5 * s.se() && r.upper <= 2.0 * s.se());
        assert!(refine_box(0.0, 1.5, 3.0, &s).is_err());
    }

    #[test]
    fn t_threshold() {
        let t = t_quantile(0.95, 9).unwrap();
        assert!(one_sided_t_modify(-t, 10, 0.05).unwrap().keep);
        assert!(!one_sided_t_modify(0.0, 10, 0.05).unwrap().keep);
        assert!(one_sided_t_modify(-2.0 * t, 10, 0.05).unwrap().keep);
        assert!(one_sided_t_modify(0.0, 1, 0.05).is_err());
    }

    #[test]
    fn binomial_stochastic_lower() {
        let cdf = |x: i64, p: f64| binom_cdf(x, 10, p).unwrap();
        assert_eq!(stochastic_lower(cdf, 0, 0.05, (0.0, 1.0)).unwrap(), 0.0);
        let l = stochastic_lower(cdf, 10, 0.05, (0.0, 1.0)).unwrap();
        assert!((l - 0.05f64.powf(0.1)).abs() < 1e-12);
        let rising = |x: i64, p: f64| if x < 0 { 0.0 } else { p };
        assert!(stochastic_lower(rising, 3, 0.05, (0.0, 1.0)).is_err());
    }
}
