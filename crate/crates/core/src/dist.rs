//! Probability kernels: binomial, the reduced trinomial of matched pairs,
//! the standard normal and Student's t.
//!
//! Masses are formed in log space from log-gamma factorials and exponentiated
//! last. Tail probabilities are direct sums from the far end of the support,
//! never `1 - cdf`.

use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};

/// A binomial distribution `Bino(n, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialSpec {
    pub n: u32,
    pub p: f64,
}

impl BinomialSpec {
    pub fn new(n: u32, p: f64) -> Result<Self> {
        if n == 0 {
            return invalid("binomial trial count must be positive");
        }
        check_prob(p)?;
        Ok(Self { n, p })
    }
}

/// Parameters of the reduced matched-pair model: `n` pairs, difference of
/// marginals `d_m` and concordance probability `p_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPairSpec {
    pub n: u32,
    pub d_m: f64,
    pub p_t: f64,
}

impl MatchedPairSpec {
    pub fn new(n: u32, d_m: f64, p_t: f64) -> Result<Self> {
        if n == 0 {
            return invalid("matched-pair trial count must be positive");
        }
        check_matched_pair_params(d_m, p_t)?;
        Ok(Self { n, d_m, p_t })
    }

    /// Cell probabilities `(p10, p_t, p01)`.
    pub fn cell_probs(&self) -> (f64, f64, f64) {
        matched_pair_cells(self.d_m, self.p_t)
    }
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("probability {p} outside [0, 1]"));
    }
    Ok(())
}

fn check_matched_pair_params(d_m: f64, p_t: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&d_m) {
        return invalid(format!("d_m = {d_m} outside [-1, 1]"));
    }
    if p_t < 0.0 || p_t > 1.0 - d_m.abs() + 1e-12 {
        return invalid(format!("p_t = {p_t} outside [0, 1 - |d_m|] for d_m = {d_m}"));
    }
    Ok(())
}

pub(crate) fn matched_pair_cells(d_m: f64, p_t: f64) -> (f64, f64, f64) {
    let p10 = ((1.0 + d_m - p_t) / 2.0).clamp(0.0, 1.0);
    let p01 = ((1.0 - d_m - p_t) / 2.0).clamp(0.0, 1.0);
    (p10, p_t.clamp(0.0, 1.0), p01)
}

/// `ln n!`
pub(crate) fn ln_factorial(n: u32) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(f64::from(n) + 1.0)
    }
}

/// `ln C(n, x)`, symmetric in `x <-> n - x` bit for bit.
pub(crate) fn ln_choose(n: u32, x: u32) -> f64 {
    ln_factorial(n) - (ln_factorial(x) + ln_factorial(n - x))
}

/// `count * ln(prob)` with `0 * ln 0 = 0`.
#[inline]
pub(crate) fn xlogy(count: f64, ln_prob: f64) -> f64 {
    if count == 0.0 {
        0.0
    } else {
        count * ln_prob
    }
}

/// Log of the binomial mass `p_B(x, n, p)`.
pub fn log_binom_pmf(x: u32, n: u32, p: f64) -> Result<f64> {
    check_prob(p)?;
    if x > n {
        return invalid(format!("x = {x} exceeds n = {n}"));
    }
    Ok(log_binom_pmf_unchecked(x, n, p, ln_choose(n, x)))
}

#[inline]
fn log_binom_pmf_unchecked(x: u32, n: u32, p: f64, ln_c: f64) -> f64 {
    let lp = p.ln();
    let lq = (1.0 - p).ln();
    ln_c + (xlogy(f64::from(x), lp) + xlogy(f64::from(n - x), lq))
}

/// Binomial mass `p_B(x, n, p)`.
pub fn binom_pmf(x: u32, n: u32, p: f64) -> Result<f64> {
    log_binom_pmf(x, n, p).map(f64::exp)
}

/// Precomputed log binomial coefficients for repeated mass vectors at a fixed `n`.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    n: u32,
    ln_choose: Vec<f64>,
}

impl BinomialTable {
    pub fn new(n: u32) -> Self {
        let ln_choose = (0..=n).map(|x| ln_choose(n, x)).collect();
        Self { n, ln_choose }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Fills `out[x] = p_B(x, n, p)` for `x = 0..=n`. `p` is clamped to [0, 1].
    pub fn pmf_into(&self, p: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n as usize + 1);
        let p = p.clamp(0.0, 1.0);
        let lp = p.ln();
        let lq = (1.0 - p).ln();
        let n = self.n;
        for (x, slot) in out.iter_mut().enumerate() {
            let xf = x as f64;
            let log_mass =
                self.ln_choose[x] + (xlogy(xf, lp) + xlogy(f64::from(n) - xf, lq));
            *slot = log_mass.exp();
        }
    }

    pub fn pmf_vec(&self, p: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n as usize + 1];
        self.pmf_into(p, &mut out);
        out
    }
}

/// Lower tails `P(X <= x)` summed from `x = 0` upward.
pub(crate) fn lower_tails(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    pmf.iter()
        .map(|m| {
            acc += m;
            acc.min(1.0)
        })
        .collect()
}

/// Upper tails `P(X >= x)` summed from `x = n` downward.
pub(crate) fn upper_tails(pmf: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; pmf.len()];
    let mut acc = 0.0;
    for x in (0..pmf.len()).rev() {
        acc += pmf[x];
        out[x] = acc.min(1.0);
    }
    out
}

/// `P(X <= x)` for `X ~ Bino(n, p)`; `x = -1` gives 0.
pub fn binom_cdf(x: i64, n: u32, p: f64) -> Result<f64> {
    check_prob(p)?;
    if x < -1 || x > i64::from(n) {
        return invalid(format!("x = {x} outside [-1, {n}]"));
    }
    if x < 0 {
        return Ok(0.0);
    }
    let table = BinomialTable::new(n);
    let pmf = table.pmf_vec(p);
    let sum: f64 = pmf[..=x as usize].iter().sum();
    Ok(sum.min(1.0))
}

/// `P(X >= x)` for `X ~ Bino(n, p)`; `x = n + 1` gives 0.
pub fn binom_sf(x: i64, n: u32, p: f64) -> Result<f64> {
    check_prob(p)?;
    if x < 0 || x > i64::from(n) + 1 {
        return invalid(format!("x = {x} outside [0, {}]", n + 1));
    }
    if x > i64::from(n) {
        return Ok(0.0);
    }
    let table = BinomialTable::new(n);
    let pmf = table.pmf_vec(p);
    let sum: f64 = pmf[x as usize..].iter().rev().sum();
    Ok(sum.min(1.0))
}

/// Mass of the reduced matched-pair model at `(n10, t)`:
/// `n!/(n10! t! n01!) p10^n10 p_t^t p01^n01` with `n01 = n - n10 - t`,
/// `p10 = (1 + d_m - p_t)/2` and `p01 = (1 - d_m - p_t)/2`.
pub fn mpair_pmf(n10: u32, t: u32, n: u32, d_m: f64, p_t: f64) -> Result<f64> {
    if n10 + t > n {
        return invalid(format!("(n10, t) = ({n10}, {t}) outside S_M for n = {n}"));
    }
    check_matched_pair_params(d_m, p_t)?;
    let (p10, pt, p01) = matched_pair_cells(d_m, p_t);
    Ok(mpair_log_pmf(n10, t, n, p10.ln(), pt.ln(), p01.ln()).exp())
}

#[inline]
pub(crate) fn mpair_log_coef(n10: u32, t: u32, n: u32) -> f64 {
    let n01 = n - n10 - t;
    ln_factorial(n) - (ln_factorial(n10) + ln_factorial(t) + ln_factorial(n01))
}

#[inline]
fn mpair_log_pmf(n10: u32, t: u32, n: u32, l10: f64, lt: f64, l01: f64) -> f64 {
    let n01 = n - n10 - t;
    mpair_log_coef(n10, t, n)
        + (xlogy(f64::from(n10), l10) + xlogy(f64::from(t), lt) + xlogy(f64::from(n01), l01))
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Bisection on a nondecreasing CDF until the bracket is narrower than `width`.
fn bisect_cdf(cdf: impl Fn(f64) -> f64, q: f64, mut lo: f64, mut hi: f64, width: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= width * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Inverse of [`std_normal_cdf`] by bisection.
pub fn std_normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return invalid(format!("quantile level {q} outside (0, 1)"));
    }
    if q == 0.5 {
        return Ok(0.0);
    }
    Ok(bisect_cdf(std_normal_cdf, q, -40.0, 40.0, 1e-15))
}

/// Upper `a`-th percentile `z_a` of the standard normal.
pub fn z_upper(a: f64) -> Result<f64> {
    std_normal_quantile(1.0 - a)
}

/// Student-t CDF with `df` degrees of freedom.
pub fn t_cdf(x: f64, df: u32) -> Result<f64> {
    if df < 1 {
        return invalid("t distribution needs df >= 1");
    }
    if x.is_nan() {
        return invalid("t_cdf argument is NaN");
    }
    if x.is_infinite() {
        return Ok(if x > 0.0 { 1.0 } else { 0.0 });
    }
    let nu = f64::from(df);
    let tail = 0.5 * beta_reg(nu / 2.0, 0.5, nu / (nu + x * x));
    Ok(if x >= 0.0 { 1.0 - tail } else { tail })
}

/// Inverse of [`t_cdf`] by bisection.
pub fn t_quantile(q: f64, df: u32) -> Result<f64> {
    if df < 1 {
        return invalid("t distribution needs df >= 1");
    }
    if !(q > 0.0 && q < 1.0) {
        return invalid(format!("quantile level {q} outside (0, 1)"));
    }
    if q == 0.5 {
        return Ok(0.0);
    }
    let cdf = |x: f64| t_cdf(x, df).unwrap_or(f64::NAN);
    let mut hi = 1.0;
    while cdf(hi) < q && hi < 1e300 {
        hi *= 2.0;
    }
    let mut lo = -1.0;
    while cdf(lo) > q && lo > -1e300 {
        lo *= 2.0;
    }
    Ok(bisect_cdf(cdf, q, lo, hi, 1e-15))
}
