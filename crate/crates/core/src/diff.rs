//! Difference `d = p1 - p2` of two independent binomial proportions.
//!
//! Under `d = d0` the nuisance parameter is `p2` on
//! `D(d0) = [max(0, -d0), min(1, 1 - d0)]` and `p1 = p2 + d0`.
//! Sample points `(x, y)` are indexed as `x * (n2 + 1) + y`.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{self, xlogy, BinomialTable};
use crate::error::{invalid, Error, Result};
use crate::hcore::{h_eval, invert_all, invert_h, FiniteModel, GridPolicy, NullKind, Statistic, StatisticH};
use crate::limits::{CoverageReport, LimitsTable};

/// Group sizes and level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffDesign {
    pub n1: u32,
    pub n2: u32,
    pub alpha: f64,
}

impl DiffDesign {
    pub fn new(n1: u32, n2: u32, alpha: f64) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return invalid("group sizes must be at least 1");
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return invalid(format!("alpha = {alpha} outside (0, 1)"));
        }
        Ok(Self { n1, n2, alpha })
    }

    pub fn num_points(&self) -> usize {
        (self.n1 as usize + 1) * (self.n2 as usize + 1)
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        x as usize * (self.n2 as usize + 1) + y as usize
    }

    pub fn point(&self, s: usize) -> (u32, u32) {
        let w = self.n2 as usize + 1;
        ((s / w) as u32, (s % w) as u32)
    }

    fn check_point(&self, x: u32, y: u32) -> Result<()> {
        if x > self.n1 || y > self.n2 {
            return invalid(format!("({x}, {y}) outside the sample space"));
        }
        Ok(())
    }
}

/// `D(d0)`, the admissible values of `p2` under `p1 - p2 = d0`.
pub fn nuisance_domain(d0: f64) -> (f64, f64) {
    if d0 >= 0.0 {
        (0.0, 1.0 - d0)
    } else {
        (-d0, 1.0)
    }
}

/// Product-binomial model with `theta = p1 - p2` and nuisance `p2`.
#[derive(Debug, Clone)]
pub struct DiffModel {
    design: DiffDesign,
    t1: BinomialTable,
    t2: BinomialTable,
}

impl DiffModel {
    pub fn new(design: DiffDesign) -> Self {
        Self {
            design,
            t1: BinomialTable::new(design.n1),
            t2: BinomialTable::new(design.n2),
        }
    }

    pub fn design(&self) -> &DiffDesign {
        &self.design
    }

    /// Masses at arbitrary `(p1, p2)`.
    pub fn masses_at(&self, p1: f64, p2: f64, out: &mut [f64]) {
        let a = self.t1.pmf_vec(p1);
        let b = self.t2.pmf_vec(p2);
        let w = b.len();
        for (x, ax) in a.iter().enumerate() {
            for (y, by) in b.iter().enumerate() {
                out[x * w + y] = ax * by;
            }
        }
    }
}

impl FiniteModel for DiffModel {
    fn num_points(&self) -> usize {
        self.design.num_points()
    }

    fn point_label(&self, index: usize) -> Vec<u32> {
        let (x, y) = self.design.point(index);
        vec![x, y]
    }

    fn point_index(&self, label: &[u32]) -> Option<usize> {
        match label {
            [x, y] if *x <= self.design.n1 && *y <= self.design.n2 => Some(self.design.index(*x, *y)),
            _ => None,
        }
    }

    fn theta_range(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    fn nuisance_domain(&self, theta: f64) -> Option<(f64, f64)> {
        Some(nuisance_domain(theta))
    }

    fn masses(&self, theta: f64, eta: f64, out: &mut [f64]) {
        let p1 = (eta + theta).clamp(0.0, 1.0);
        self.masses_at(p1, eta, out)
    }
}

fn check_d0(d0: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&d0) {
        return invalid(format!("d0 = {d0} outside [-1, 1]"));
    }
    Ok(())
}

/// Derivative of the constrained log-likelihood in `p2`; zero-count terms vanish.
fn score_p2(x: f64, n1: f64, y: f64, n2: f64, d0: f64, p2: f64) -> f64 {
    let p1 = (p2 + d0).clamp(0.0, 1.0);
    let term = |c: f64, denom: f64, sign: f64| if c == 0.0 { 0.0 } else { sign * c / denom };
    term(x, p1, 1.0) + term(n1 - x, 1.0 - p1, -1.0) + term(y, p2, 1.0) + term(n2 - y, 1.0 - p2, -1.0)
}

/// Maximiser of `p_B(x, n1, p2 + d0) p_B(y, n2, p2)` over `p2` in `D(d0)`.
///
/// The log-likelihood is concave in `p2`, so its derivative is decreasing
/// and the maximiser is found by bisection on the sign of the derivative.
pub fn constrained_mle_p2(x: u32, y: u32, d0: f64, design: &DiffDesign) -> Result<f64> {
    design.check_point(x, y)?;
    check_d0(d0)?;
    Ok(mle_p2_unchecked(x, y, d0, design))
}

fn mle_p2_unchecked(x: u32, y: u32, d0: f64, design: &DiffDesign) -> f64 {
    let (n1, n2) = (f64::from(design.n1), f64::from(design.n2));
    let (xf, yf) = (f64::from(x), f64::from(y));
    if d0 == 0.0 {
        return (xf + yf) / (n1 + n2);
    }
    let (mut lo, mut hi) = nuisance_domain(d0);
    if hi <= lo {
        return lo;
    }
    if score_p2(xf, n1, yf, n2, d0, lo) <= 0.0 {
        return lo;
    }
    if score_p2(xf, n1, yf, n2, d0, hi) >= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if score_p2(xf, n1, yf, n2, d0, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn loglik(x: f64, n1: f64, y: f64, n2: f64, p1: f64, p2: f64) -> f64 {
    xlogy(x, p1.ln()) + xlogy(n1 - x, (1.0 - p1).ln()) + xlogy(y, p2.ln()) + xlogy(n2 - y, (1.0 - p2).ln())
}

/// Log of the likelihood ratio statistic (constrained over unconstrained maximum).
pub fn lrt_stat_d(x: u32, y: u32, d0: f64, design: &DiffDesign) -> Result<f64> {
    design.check_point(x, y)?;
    check_d0(d0)?;
    Ok(lrt_unchecked(x, y, d0, design))
}

fn lrt_unchecked(x: u32, y: u32, d0: f64, design: &DiffDesign) -> f64 {
    let (n1, n2) = (f64::from(design.n1), f64::from(design.n2));
    let (xf, yf) = (f64::from(x), f64::from(y));
    let p2 = mle_p2_unchecked(x, y, d0, design);
    let p1 = (p2 + d0).clamp(0.0, 1.0);
    let v = loglik(xf, n1, yf, n2, p1, p2) - loglik(xf, n1, yf, n2, xf / n1, yf / n2);
    v.min(0.0)
}

/// Score statistic `-|p̂1 - p̂2 - d0| / sqrt(v)` with `v` at the constrained MLE.
///
/// A zero numerator gives 0, which covers the two 0/0 corners; a zero
/// variance with a nonzero numerator gives negative infinity.
pub fn score_stat_d(x: u32, y: u32, d0: f64, design: &DiffDesign) -> Result<f64> {
    design.check_point(x, y)?;
    check_d0(d0)?;
    Ok(score_unchecked(x, y, d0, design))
}

fn score_unchecked(x: u32, y: u32, d0: f64, design: &DiffDesign) -> f64 {
    let (n1, n2) = (f64::from(design.n1), f64::from(design.n2));
    let num = f64::from(x) / n1 - f64::from(y) / n2 - d0;
    if num == 0.0 {
        return 0.0;
    }
    let p2 = mle_p2_unchecked(x, y, d0, design);
    let p1 = (p2 + d0).clamp(0.0, 1.0);
    let v = p1 * (1.0 - p1) / n1 + p2 * (1.0 - p2) / n2;
    if v <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -num.abs() / v.sqrt()
}

/// Statistics that order the two-proportion sample space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffStatKind {
    Lrt,
    Score,
}

/// A statistic over all `(x, y)`.
pub struct DiffStatistic {
    pub design: DiffDesign,
    pub kind: DiffStatKind,
}

impl Statistic for DiffStatistic {
    fn eval_all(&self, d0: f64, out: &mut [f64]) {
        for (s, o) in out.iter_mut().enumerate() {
            let (x, y) = self.design.point(s);
            *o = match self.kind {
                DiffStatKind::Lrt => lrt_unchecked(x, y, d0, &self.design),
                DiffStatKind::Score => score_unchecked(x, y, d0, &self.design),
            };
        }
    }
}

/// `h_d(x, y, d0) = sup_{p2 in D(d0)} P(T(X, Y, d0) <= T(x, y, d0))`.
pub fn h_d(kind: DiffStatKind, x: u32, y: u32, d0: f64, design: &DiffDesign, grid: &GridPolicy) -> Result<f64> {
    design.check_point(x, y)?;
    let model = DiffModel::new(*design);
    let stat = DiffStatistic { design: *design, kind };
    h_eval(&model, &stat, NullKind::Point, design.index(x, y), d0, grid)
}

/// Interval constructions for a difference of proportions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffMethod {
    Lrt,
    Score,
    Wald,
    /// The zero-length estimator `p̂1 - p̂2`.
    Mle,
}

impl DiffMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Lrt => "lrt",
            Self::Score => "score",
            Self::Wald => "wald",
            Self::Mle => "mle",
        }
    }

    fn stat(&self) -> Option<DiffStatKind> {
        match self {
            Self::Lrt => Some(DiffStatKind::Lrt),
            Self::Score => Some(DiffStatKind::Score),
            _ => None,
        }
    }
}

impl FromStr for DiffMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lrt" => Self::Lrt,
            "score" => Self::Score,
            "wald" => Self::Wald,
            "mle" => Self::Mle,
            other => return invalid(format!("unknown difference method '{other}'")),
        })
    }
}

/// Wald interval `p̂1 - p̂2 ∓ z sqrt(p̂1(1-p̂1)/n1 + p̂2(1-p̂2)/n2)` before clipping.
pub fn wald_interval_d_raw(x: u32, y: u32, design: &DiffDesign) -> Result<(f64, f64)> {
    design.check_point(x, y)?;
    let z = dist::z_upper(design.alpha / 2.0)?;
    let p1 = f64::from(x) / f64::from(design.n1);
    let p2 = f64::from(y) / f64::from(design.n2);
    let half = z * (p1 * (1.0 - p1) / f64::from(design.n1) + p2 * (1.0 - p2) / f64::from(design.n2)).sqrt();
    Ok((p1 - p2 - half, p1 - p2 + half))
}

/// Wald interval clipped to `[-1, 1]`.
pub fn wald_interval_d(x: u32, y: u32, design: &DiffDesign) -> Result<(f64, f64)> {
    let (l, u) = wald_interval_d_raw(x, y, design)?;
    Ok((l.clamp(-1.0, 1.0), u.clamp(-1.0, 1.0)))
}

/// The point `[p̂1 - p̂2, p̂1 - p̂2]`.
pub fn mle_point_d(x: u32, y: u32, design: &DiffDesign) -> Result<(f64, f64)> {
    design.check_point(x, y)?;
    let d = f64::from(x) / f64::from(design.n1) - f64::from(y) / f64::from(design.n2);
    Ok((d, d))
}

/// Exact interval at one sample point by inverting `h_d`.
pub fn h_interval_d(kind: DiffStatKind, x: u32, y: u32, design: &DiffDesign, grid: &GridPolicy) -> Result<(f64, f64)> {
    design.check_point(x, y)?;
    let model = DiffModel::new(*design);
    let stat = DiffStatistic { design: *design, kind };
    let h = StatisticH::new(&model, &stat, NullKind::Point, *grid);
    let inv = invert_h(&h, design.index(x, y), design.alpha, grid)?;
    Ok((inv.lower, inv.upper))
}

/// Limits over the whole sample space; the Wald table is left unclipped.
pub fn diff_limits(design: &DiffDesign, method: DiffMethod, grid: &GridPolicy) -> Result<LimitsTable> {
    if let Some(kind) = method.stat() {
        let model = DiffModel::new(*design);
        let stat = DiffStatistic { design: *design, kind };
        let h = StatisticH::new(&model, &stat, NullKind::Point, *grid);
        let inv = invert_all(&h, design.alpha, grid)?;
        return LimitsTable::new(
            inv.iter().map(|i| i.lower).collect(),
            inv.iter().map(|i| i.upper).collect(),
        );
    }
    let mut lower = Vec::with_capacity(design.num_points());
    let mut upper = Vec::with_capacity(design.num_points());
    for s in 0..design.num_points() {
        let (x, y) = design.point(s);
        let (l, u) = match method {
            DiffMethod::Wald => wald_interval_d_raw(x, y, design)?,
            _ => mle_point_d(x, y, design)?,
        };
        lower.push(l);
        upper.push(u);
    }
    LimitsTable::new(lower, upper)
}

/// Replaces every upper limit by `-L(n1 - x, n2 - y)`.
pub fn complete_by_symmetry_d(limits: &LimitsTable, design: &DiffDesign) -> Result<LimitsTable> {
    limits.check_len(design.num_points())?;
    let upper = (0..limits.len())
        .map(|s| {
            let (x, y) = design.point(s);
            -limits.lower[design.index(design.n1 - x, design.n2 - y)]
        })
        .collect();
    Ok(LimitsTable {
        lower: limits.lower.clone(),
        upper,
    })
}

/// Options for [`icp_grid_d`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpGridOptions {
    /// Grid points per axis on `[0, 1]`.
    pub points: usize,
    /// Re-scan a finer grid around the minimiser.
    pub local_rescan: bool,
}

impl Default for IcpGridOptions {
    fn default() -> Self {
        Self {
            points: 201,
            local_rescan: false,
        }
    }
}

/// Coverage of the table at `(p1, p2)`, approached along `d` from one side:
/// `side < 0` counts `L < d <= U`, `side > 0` counts `L <= d < U`, `0` counts `L <= d <= U`.
pub fn coverage_d(limits: &LimitsTable, a: &[f64], b: &[f64], d: f64, side: i8) -> f64 {
    let w = b.len();
    let mut acc = 0.0;
    for (x, ax) in a.iter().enumerate() {
        let mut row = 0.0;
        for (y, by) in b.iter().enumerate() {
            let (l, u) = limits.interval(x * w + y);
            let inside = match side {
                s if s < 0 => l < d && d <= u,
                s if s > 0 => l <= d && d < u,
                _ => l <= d && d <= u,
            };
            if inside {
                row += by;
            }
        }
        acc += ax * row;
    }
    acc
}

/// Minimum coverage over a `points x points` grid of `(p1, p2)` in `[0, 1]^2`.
///
/// At every grid pair the coverage is evaluated at the pair and as the two
/// one-sided limits in `d`, so boundary discontinuities of the table count.
pub fn icp_grid_d(limits: &LimitsTable, design: &DiffDesign, options: &IcpGridOptions) -> Result<CoverageReport> {
    limits.check_len(design.num_points())?;
    if options.points < 2 {
        return invalid("ICP grid needs at least 2 points per axis");
    }
    let m = options.points - 1;
    let denom = m as f64;
    let t1 = BinomialTable::new(design.n1);
    let t2 = BinomialTable::new(design.n2);
    let pmf1: Vec<Vec<f64>> = (0..=m).map(|i| t1.pmf_vec(i as f64 / denom)).collect();
    let pmf2: Vec<Vec<f64>> = (0..=m).map(|j| t2.pmf_vec(j as f64 / denom)).collect();
    let rows: Vec<(f64, usize, i8)> = (0..=m)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, 0usize, 0i8);
            for j in 0..=m {
                let d = (i as f64 - j as f64) / denom;
                for side in [-1i8, 1] {
                    // d can only be approached from inside [-1, 1].
                    if (side < 0 && d <= -1.0) || (side > 0 && d >= 1.0) {
                        continue;
                    }
                    let c = coverage_d(limits, &pmf1[i], &pmf2[j], d, side);
                    if c < best.0 {
                        best = (c, j, side);
                    }
                }
            }
            best
        })
        .collect();
    let mut bi = 0;
    for i in 1..rows.len() {
        if rows[i].0 < rows[bi].0 {
            bi = i;
        }
    }
    let (mut icp, bj, mut side) = rows[bi];
    let mut at = vec![bi as f64 / denom, bj as f64 / denom];
    if options.local_rescan {
        let step = 1.0 / (denom * 20.0);
        for di in -20i32..=20 {
            for dj in -20i32..=20 {
                let p1 = at[0] + f64::from(di) * step;
                let p2 = at[1] + f64::from(dj) * step;
                if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) {
                    continue;
                }
                let a = t1.pmf_vec(p1);
                let b = t2.pmf_vec(p2);
                for s in [-1i8, 0, 1] {
                    let d = p1 - p2;
                    if (s < 0 && d <= -1.0) || (s > 0 && d >= 1.0) {
                        continue;
                    }
                    let c = coverage_d(limits, &a, &b, d, s);
                    if c < icp {
                        icp = c;
                        side = s;
                        at = vec![p1, p2];
                    }
                }
            }
        }
    }
    Ok(CoverageReport {
        icp,
        at,
        side,
        til: limits.til(),
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d810() -> DiffDesign {
        DiffDesign::new(8, 10, 0.05).unwrap()
    }

    #[test]
    fn nuisance_domains() {
        assert_eq!(nuisance_domain(0.3), (0.0, 0.7));
        assert_eq!(nuisance_domain(-0.4), (0.4, 1.0));
        assert_eq!(nuisance_domain(1.0), (0.0, 0.0));
    }

    #[test]
    fn mle_special_cases() {
        let d = d810();
        assert_eq!(constrained_mle_p2(3, 4, 0.0, &d).unwrap(), 7.0 / 18.0);
        assert_eq!(constrained_mle_p2(3, 4, 1.0, &d).unwrap(), 0.0);
        assert_eq!(constrained_mle_p2(3, 4, -1.0, &d).unwrap(), 1.0);
        assert!(constrained_mle_p2(9, 4, 0.1, &d).is_err());
    }

    #[test]
    fn mle_matches_dense_grid() {
        let d = d810();
        let (x, y, d0) = (3u32, 4u32, 0.2);
        let got = constrained_mle_p2(x, y, d0, &d).unwrap();
        let (lo, hi) = nuisance_domain(d0);
        let mut best = (f64::NEG_INFINITY, lo);
        for i in 0..=100_000 {
            let p2 = lo + (hi - lo) * f64::from(i) / 100_000.0;
            let v = loglik(3.0, 8.0, 4.0, 10.0, p2 + d0, p2);
            if v > best.0 {
                best = (v, p2);
            }
        }
        assert!((got - best.1).abs() <= 1e-5, "{got} vs {}", best.1);
    }

    #[test]
    fn statistics_at_the_estimate() {
        let d = d810();
        assert_eq!(score_stat_d(8, 0, 1.0, &d).unwrap(), 0.0);
        assert_eq!(score_stat_d(0, 10, -1.0, &d).unwrap(), 0.0);
        assert_eq!(score_stat_d(4, 5, 0.0, &d).unwrap(), 0.0);
        assert_eq!(lrt_stat_d(4, 5, 0.0, &d).unwrap(), 0.0);
        assert!(lrt_stat_d(4, 5, 0.3, &d).unwrap() < 0.0);
        assert!((score_stat_d(8, 0, 0.5, &d).unwrap() + 6f64.sqrt()).abs() < 1e-9);
        assert_eq!(score_stat_d(4, 5, 1.0, &d).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn wald_and_point() {
        let d = DiffDesign::new(23, 32, 0.05).unwrap();
        let (l, u) = wald_interval_d(21, 19, &d).unwrap();
        assert!((l - 0.1138).abs() < 1e-4 && (u - 0.5248).abs() < 1e-4);
        let d = d810();
        assert_eq!(mle_point_d(0, 0, &d).unwrap(), (0.0, 0.0));
        assert_eq!(mle_point_d(4, 5, &d).unwrap(), (0.0, 0.0));
        assert_eq!(mle_point_d(8, 10, &d).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn masses_normalize() {
        let m = DiffModel::new(d810());
        let mut out = vec![0.0; m.num_points()];
        m.masses(0.3, 0.2, &mut out);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(m.point_index(&[2, 3]), Some(25));
        assert_eq!(m.point_label(25), vec![2, 3]);
    }

    #[test]
    fn symmetry_completion_d() {
        let d = DiffDesign::new(2, 3, 0.05).unwrap();
        let t = LimitsTable::constant(d.num_points(), -1.0, 0.0);
        let c = complete_by_symmetry_d(&t, &d).unwrap();
        assert!(c.upper.iter().all(|&u| u == 1.0));
        assert_eq!(complete_by_symmetry_d(&c, &d).unwrap(), c);
    }

    #[test]
    fn full_table_has_full_coverage() {
        let d = DiffDesign::new(3, 4, 0.05).unwrap();
        let t = LimitsTable::constant(d.num_points(), -1.0, 1.0);
        let r = icp_grid_d(&t, &d, &IcpGridOptions { points: 21, local_rescan: true }).unwrap();
        assert!((r.icp - 1.0).abs() < 1e-12);
    }
}
