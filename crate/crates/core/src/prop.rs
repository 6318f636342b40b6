//! A single binomial proportion: exact h-function intervals, approximate
//! baselines, symmetry completion and exact coverage.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{self, lower_tails, upper_tails, xlogy, BinomialTable};
use crate::error::{invalid, Error, Result};
use crate::hcore::{invert_all, FiniteModel, GridPolicy, HFunction, NullKind, Statistic, StatisticH};
use crate::limits::{CoverageReport, LimitsTable};

/// Sample size and level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropDesign {
    pub n: u32,
    pub alpha: f64,
}

impl PropDesign {
    pub fn new(n: u32, alpha: f64) -> Result<Self> {
        if n == 0 {
            return invalid("n must be at least 1");
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return invalid(format!("alpha = {alpha} outside (0, 1)"));
        }
        Ok(Self { n, alpha })
    }
}

/// `X ~ Bino(n, p)` with sample space `{0, ..., n}` and `p` in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct BinomialModel {
    table: BinomialTable,
}

impl BinomialModel {
    pub fn new(n: u32) -> Self {
        Self {
            table: BinomialTable::new(n),
        }
    }

    pub fn n(&self) -> u32 {
        self.table.n()
    }

    pub fn table(&self) -> &BinomialTable {
        &self.table
    }
}

impl FiniteModel for BinomialModel {
    fn num_points(&self) -> usize {
        self.n() as usize + 1
    }

    fn point_label(&self, index: usize) -> Vec<u32> {
        vec![index as u32]
    }

    fn point_index(&self, label: &[u32]) -> Option<usize> {
        match label {
            [x] if *x <= self.n() => Some(*x as usize),
            _ => None,
        }
    }

    fn theta_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn nuisance_domain(&self, _theta: f64) -> Option<(f64, f64)> {
        None
    }

    fn masses(&self, theta: f64, _eta: f64, out: &mut [f64]) {
        self.table.pmf_into(theta, out)
    }

    fn monotone_in_theta(&self) -> bool {
        true
    }
}

/// Interval constructions for a single proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PropMethod {
    /// Clopper-Pearson, the doubled smaller tail.
    Cp,
    /// Blaker, ordering by the smaller tail probability.
    Blaker,
    /// Likelihood ratio ordering.
    Lrt,
    Wald,
    Wilson,
    /// The zero-length estimator `x / n`.
    SampleProp,
    /// A zero-length estimator given by one value per `x`.
    CustomPoint(Vec<f64>),
}

impl PropMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Cp => "cp",
            Self::Blaker => "blaker",
            Self::Lrt => "lrt",
            Self::Wald => "wald",
            Self::Wilson => "wilson",
            Self::SampleProp => "sample_prop",
            Self::CustomPoint(_) => "custom_point",
        }
    }

    pub fn is_exact_h(&self) -> bool {
        matches!(self, Self::Cp | Self::Blaker | Self::Lrt)
    }
}

impl FromStr for PropMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cp" | "clopper-pearson" => Self::Cp,
            "blaker" => Self::Blaker,
            "lrt" => Self::Lrt,
            "wald" => Self::Wald,
            "wilson" => Self::Wilson,
            "sample_prop" | "sample-prop" => Self::SampleProp,
            other => return invalid(format!("unknown proportion method '{other}'")),
        })
    }
}

fn check_point(n: u32, x: u32, p0: f64) -> Result<()> {
    if x > n {
        return invalid(format!("x = {x} outside [0, {n}]"));
    }
    if !(0.0..=1.0).contains(&p0) {
        return invalid(format!("p0 = {p0} outside [0, 1]"));
    }
    Ok(())
}

/// Clopper-Pearson h-function `min{2 min{P(X <= x), P(X >= x)}, 1}`.
pub fn cp_h(n: u32, x: u32, p0: f64) -> Result<f64> {
    check_point(n, x, p0)?;
    let lo = dist::binom_cdf(i64::from(x), n, p0)?;
    let hi = dist::binom_sf(i64::from(x), n, p0)?;
    Ok((2.0 * lo.min(hi)).min(1.0))
}

/// Blaker's statistic `min{P(X <= y), P(X >= y)}` for every `y`.
pub struct BlakerStatistic<'a> {
    pub table: &'a BinomialTable,
}

impl Statistic for BlakerStatistic<'_> {
    fn eval_all(&self, p0: f64, out: &mut [f64]) {
        let pmf = self.table.pmf_vec(p0);
        let lo = lower_tails(&pmf);
        let hi = upper_tails(&pmf);
        for y in 0..out.len() {
            out[y] = lo[y].min(hi[y]);
        }
    }
}

/// Log of the likelihood ratio `(p0/p̂)^y ((1-p0)/(1-p̂))^(n-y)`, with `0 log 0 = 0`.
pub struct LrtStatistic {
    pub n: u32,
}

impl LrtStatistic {
    pub fn log_ratio(&self, y: u32, p0: f64) -> f64 {
        let n = f64::from(self.n);
        let yf = f64::from(y);
        let phat = yf / n;
        let num = xlogy(yf, p0.ln()) + xlogy(n - yf, (1.0 - p0).ln());
        let den = xlogy(yf, phat.ln()) + xlogy(n - yf, (1.0 - phat).ln());
        let v = num - den;
        // Exact likelihood maximum; guards against a rounding excess over 0.
        v.min(0.0)
    }
}

impl Statistic for LrtStatistic {
    fn eval_all(&self, p0: f64, out: &mut [f64]) {
        for (y, o) in out.iter_mut().enumerate() {
            *o = self.log_ratio(y as u32, p0);
        }
    }
}

fn point_h<S: Statistic>(n: u32, stat: &S, x: u32, p0: f64) -> f64 {
    let model = BinomialModel::new(n);
    StatisticH::new(&model, stat, NullKind::Point, GridPolicy::default()).eval(x as usize, p0)
}

/// Blaker h-function at one point.
pub fn blaker_h(n: u32, x: u32, p0: f64) -> Result<f64> {
    check_point(n, x, p0)?;
    let table = BinomialTable::new(n);
    Ok(point_h(n, &BlakerStatistic { table: &table }, x, p0))
}

/// Likelihood ratio h-function at one point.
pub fn lrt_h(n: u32, x: u32, p0: f64) -> Result<f64> {
    check_point(n, x, p0)?;
    Ok(point_h(n, &LrtStatistic { n }, x, p0))
}

/// One of the three exact proportion h-functions over the whole sample space.
pub struct PropH {
    model: BinomialModel,
    kind: PropHKind,
}

#[derive(Clone, Copy)]
enum PropHKind {
    Cp,
    Blaker,
    Lrt,
}

impl PropH {
    pub fn new(n: u32, method: &PropMethod) -> Result<Self> {
        let kind = match method {
            PropMethod::Cp => PropHKind::Cp,
            PropMethod::Blaker => PropHKind::Blaker,
            PropMethod::Lrt => PropHKind::Lrt,
            other => return invalid(format!("'{}' has no h-function", other.tag())),
        };
        Ok(Self {
            model: BinomialModel::new(n),
            kind,
        })
    }

    pub fn model(&self) -> &BinomialModel {
        &self.model
    }
}

impl HFunction for PropH {
    fn num_points(&self) -> usize {
        self.model.num_points()
    }

    fn theta_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn eval_all(&self, p0: f64) -> Vec<f64> {
        let grid = GridPolicy::default();
        match self.kind {
            PropHKind::Cp => {
                let pmf = self.model.table.pmf_vec(p0);
                let lo = lower_tails(&pmf);
                let hi = upper_tails(&pmf);
                lo.iter()
                    .zip(&hi)
                    .map(|(a, b)| (2.0 * a.min(*b)).min(1.0))
                    .collect()
            }
            PropHKind::Blaker => {
                let stat = BlakerStatistic {
                    table: &self.model.table,
                };
                StatisticH::new(&self.model, &stat, NullKind::Point, grid).eval_all(p0)
            }
            PropHKind::Lrt => {
                let stat = LrtStatistic { n: self.model.n() };
                StatisticH::new(&self.model, &stat, NullKind::Point, grid).eval_all(p0)
            }
        }
    }
}

/// Exact interval table from inverting one of the proportion h-functions.
pub fn h_limits(design: &PropDesign, method: &PropMethod, grid: &GridPolicy) -> Result<LimitsTable> {
    let h = PropH::new(design.n, method)?;
    let inv = invert_all(&h, design.alpha, grid)?;
    LimitsTable::new(
        inv.iter().map(|i| i.lower).collect(),
        inv.iter().map(|i| i.upper).collect(),
    )
}

/// Closed-form baseline limits before clipping; Wald may leave `[0, 1]`.
pub fn baseline_limits_raw(design: &PropDesign, method: &PropMethod) -> Result<LimitsTable> {
    let n = f64::from(design.n);
    let points = design.n as usize + 1;
    let mut lower = Vec::with_capacity(points);
    let mut upper = Vec::with_capacity(points);
    match method {
        PropMethod::Wald => {
            let z = dist::z_upper(design.alpha / 2.0)?;
            for x in 0..points {
                let p = x as f64 / n;
                let half = z * (p * (1.0 - p) / n).sqrt();
                lower.push(p - half);
                upper.push(p + half);
            }
        }
        PropMethod::Wilson => {
            let z = dist::z_upper(design.alpha / 2.0)?;
            let z2 = z * z;
            for x in 0..points {
                let xf = x as f64;
                let center = (xf + z2 / 2.0) / (n + z2);
                let half = z / (n + z2) * (xf * (n - xf) / n + z2 / 4.0).sqrt();
                lower.push(center - half);
                upper.push(center + half);
            }
        }
        PropMethod::SampleProp => {
            for x in 0..points {
                lower.push(x as f64 / n);
                upper.push(x as f64 / n);
            }
        }
        PropMethod::CustomPoint(values) => {
            if values.len() != points {
                return Err(Error::TableMismatch(format!(
                    "custom estimator has {} values, expected {points}",
                    values.len()
                )));
            }
            lower.extend_from_slice(values);
            upper.extend_from_slice(values);
        }
        other => return invalid(format!("'{}' is not a closed-form baseline", other.tag())),
    }
    LimitsTable::new(lower, upper)
}

/// Closed-form baseline limits clipped to `[0, 1]`.
pub fn baseline_limits(design: &PropDesign, method: &PropMethod) -> Result<LimitsTable> {
    Ok(baseline_limits_raw(design, method)?.clipped(0.0, 1.0))
}

/// Limits for any method: exact h inversion or closed-form baseline (unclipped).
pub fn method_limits(design: &PropDesign, method: &PropMethod, grid: &GridPolicy) -> Result<LimitsTable> {
    if method.is_exact_h() {
        h_limits(design, method, grid)
    } else {
        baseline_limits_raw(design, method)
    }
}

/// Replaces every upper limit by `1 - L(n - x)`.
pub fn complete_by_symmetry(limits: &LimitsTable) -> LimitsTable {
    let m = limits.len();
    let upper = (0..m).map(|x| 1.0 - limits.lower[m - 1 - x]).collect();
    LimitsTable {
        lower: limits.lower.clone(),
        upper,
    }
}

/// Total interval length.
pub fn til(limits: &LimitsTable) -> f64 {
    limits.til()
}

fn is_nondecreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

/// Exact coverage approached from one side of `p`: `side < 0` counts points
/// with `L < p <= U`, `side > 0` those with `L <= p < U`, `0` uses `L <= p <= U`.
pub fn coverage_at(limits: &LimitsTable, table: &BinomialTable, p: f64, side: i8) -> f64 {
    let pmf = table.pmf_vec(p);
    let mut acc = 0.0;
    for (y, m) in pmf.iter().enumerate() {
        let (l, u) = limits.interval(y);
        let inside = match side {
            s if s < 0 => l < p && p <= u,
            s if s > 0 => l <= p && p < u,
            _ => l <= p && p <= u,
        };
        if inside {
            acc += m;
        }
    }
    acc
}

/// Infimum coverage over `p` in `[0, 1]`, evaluated exactly.
///
/// Between consecutive limit values the covered set is fixed. With
/// nondecreasing limits it is a run of consecutive `y`, whose binomial mass
/// is unimodal in `p`, so the infimum is a one-sided limit at some `L(y)` or
/// `U(y)`. Non-monotone tables add a dense grid scan and a warning.
pub fn icp_single_prop(limits: &LimitsTable, n: u32) -> Result<CoverageReport> {
    limits.check_len(n as usize + 1)?;
    let table = BinomialTable::new(n);
    let mut candidates: Vec<(f64, i8)> = Vec::new();
    let mut push = |a: f64| {
        if a > 0.0 && a <= 1.0 {
            candidates.push((a, -1));
        }
        if (0.0..1.0).contains(&a) {
            candidates.push((a, 1));
        }
    };
    push(0.0);
    push(1.0);
    for y in 0..limits.len() {
        push(limits.lower[y]);
        push(limits.upper[y]);
    }
    let mut warnings = Vec::new();
    if !is_nondecreasing(&limits.lower) || !is_nondecreasing(&limits.upper) {
        warnings.push("limits are not monotone in x; added a dense grid scan".to_string());
        for i in 0..=20_000 {
            candidates.push((i as f64 / 20_000.0, 0));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates.dedup();
    let values: Vec<f64> = candidates
        .par_iter()
        .map(|&(a, side)| coverage_at(limits, &table, a, side))
        .collect();
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] < values[best] {
            best = i;
        }
    }
    Ok(CoverageReport {
        icp: values[best],
        at: vec![candidates[best].0],
        side: candidates[best].1,
        til: limits.til(),
        warnings,
    })
}
