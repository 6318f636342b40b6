//! Matched pairs: difference `d_m = p10 - p01` of the two discordant cell
//! probabilities, on the reduced sample space of `(n10, t)` where
//! `t = n11 + n00` counts the concordant pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{matched_pair_cells, mpair_log_coef, xlogy};
use crate::error::{invalid, Result};
use crate::hcore::{h_eval, FiniteModel, GridPolicy, NullKind};
use crate::limits::{CoverageReport, LimitsTable};
use crate::refine::T2Statistic;

/// Number of pairs and level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MPairDesign {
    pub n: u32,
    pub alpha: f64,
}

impl MPairDesign {
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

/// Trinomial model for `(N10, T, N01)` with `theta = d_m` and nuisance `p_t`.
///
/// Points are enumerated with `n10` outer and `t` inner, so
/// `(0,0), (0,1), ..., (0,n), (1,0), ...`.
#[derive(Debug, Clone)]
pub struct MPairModel {
    n: u32,
    points: Vec<(u32, u32)>,
    log_coef: Vec<f64>,
}

impl MPairModel {
    pub fn new(n: u32) -> Self {
        let mut points = Vec::with_capacity((n as usize + 1) * (n as usize + 2) / 2);
        for n10 in 0..=n {
            for t in 0..=(n - n10) {
                points.push((n10, t));
            }
        }
        let log_coef = points.iter().map(|&(a, t)| mpair_log_coef(a, t, n)).collect();
        Self { n, points, log_coef }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn points(&self) -> &[(u32, u32)] {
        &self.points
    }

    pub fn index(&self, n10: u32, t: u32) -> Option<usize> {
        if n10 + t > self.n {
            return None;
        }
        // Rows before n10 hold (n+1) + n + ... + (n+2-n10) points.
        let (n, a) = (self.n as usize, n10 as usize);
        Some(a * (n + 1) - a * a.saturating_sub(1) / 2 + t as usize)
    }

    /// `(n10 - n01) / n`, the estimate of `d_m`.
    pub fn estimate(&self, s: usize) -> f64 {
        let (n10, t) = self.points[s];
        let n01 = self.n - n10 - t;
        (f64::from(n10) - f64::from(n01)) / f64::from(self.n)
    }
}

impl FiniteModel for MPairModel {
    fn num_points(&self) -> usize {
        self.points.len()
    }

    fn point_label(&self, index: usize) -> Vec<u32> {
        let (a, t) = self.points[index];
        vec![a, t]
    }

    fn point_index(&self, label: &[u32]) -> Option<usize> {
        match label {
            [a, t] => self.index(*a, *t),
            _ => None,
        }
    }

    fn theta_range(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    fn nuisance_domain(&self, theta: f64) -> Option<(f64, f64)> {
        Some((0.0, (1.0 - theta.abs()).max(0.0)))
    }

    fn masses(&self, theta: f64, eta: f64, out: &mut [f64]) {
        let (p10, pt, p01) = matched_pair_cells(theta, eta);
        let (l10, lt, l01) = (p10.ln(), pt.ln(), p01.ln());
        for (s, &(a, t)) in self.points.iter().enumerate() {
            let b = self.n - a - t;
            out[s] = (self.log_coef[s]
                + (xlogy(f64::from(a), l10) + xlogy(f64::from(t), lt) + xlogy(f64::from(b), l01)))
            .exp();
        }
    }
}

/// Builds the reduced matched-pair model for a design.
pub fn build_mpair_model(design: &MPairDesign) -> MPairModel {
    MPairModel::new(design.n)
}

/// h-function of the interval statistic induced by `baseline`, at `(n10, t)`.
pub fn h_m(
    baseline: &LimitsTable,
    n10: u32,
    t: u32,
    d_m: f64,
    design: &MPairDesign,
    grid: &GridPolicy,
) -> Result<f64> {
    let model = MPairModel::new(design.n);
    baseline.check_len(model.num_points())?;
    baseline.check_finite()?;
    let Some(s) = model.index(n10, t) else {
        return invalid(format!("({n10}, {t}) outside the sample space for n = {}", design.n));
    };
    let stat = T2Statistic { limits: baseline };
    h_eval(&model, &stat, NullKind::Point, s, d_m, grid)
}

/// The zero-length estimator `[(n10 - n01)/n, (n10 - n01)/n]`.
pub fn mle_point_limits(design: &MPairDesign) -> LimitsTable {
    let model = MPairModel::new(design.n);
    let est: Vec<f64> = (0..model.num_points()).map(|s| model.estimate(s)).collect();
    LimitsTable {
        lower: est.clone(),
        upper: est,
    }
}

/// Minimum coverage over `(d_m, p_t)` on multiples of `1/steps` in the
/// parameter triangle, including one-sided limits in `d_m` at each node.
pub fn icp_grid_m(limits: &LimitsTable, design: &MPairDesign, steps: u32) -> Result<CoverageReport> {
    let model = MPairModel::new(design.n);
    limits.check_len(model.num_points())?;
    if steps == 0 {
        return invalid("ICP grid needs at least one step");
    }
    let m = steps as i64;
    let denom = f64::from(steps);
    let nodes: Vec<(i64, i64)> = (-m..=m)
        .flat_map(|i| (0..=(m - i.abs())).map(move |j| (i, j)))
        .collect();
    let vals: Vec<(f64, i8)> = nodes
        .par_iter()
        .map(|&(i, j)| {
            let d = i as f64 / denom;
            let pt = j as f64 / denom;
            let mut masses = vec![0.0; model.num_points()];
            model.masses(d, pt, &mut masses);
            let mut best = (f64::INFINITY, 0i8);
            for side in [-1i8, 1] {
                // Moving d_m with p_t fixed must stay inside |d_m| + p_t <= 1.
                if (side < 0 && i <= -(m - j)) || (side > 0 && i >= m - j) {
                    continue;
                }
                let mut acc = 0.0;
                for (s, w) in masses.iter().enumerate() {
                    let (l, u) = limits.interval(s);
                    let inside = if side < 0 { l < d && d <= u } else { l <= d && d < u };
                    if inside {
                        acc += w;
                    }
                }
                if acc < best.0 {
                    best = (acc, side);
                }
            }
            if best.0.is_infinite() {
                // Corner nodes admit no one-sided approach; use the node itself.
                let acc: f64 = masses
                    .iter()
                    .enumerate()
                    .filter(|(s, _)| limits.contains(*s, d))
                    .map(|(_, w)| w)
                    .sum();
                best = (acc, 0);
            }
            best
        })
        .collect();
    let mut bi = 0;
    for k in 1..vals.len() {
        if vals[k].0 < vals[bi].0 {
            bi = k;
        }
    }
    let (i, j) = nodes[bi];
    Ok(CoverageReport {
        icp: vals[bi].0,
        at: vec![i as f64 / denom, j as f64 / denom],
        side: vals[bi].1,
        til: limits.til(),
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_and_index() {
        let m = MPairModel::new(21);
        assert_eq!(m.num_points(), 253);
        for (s, &(a, t)) in m.points().iter().enumerate() {
            assert_eq!(m.index(a, t), Some(s));
        }
        assert_eq!(m.index(3, 19), None);
        assert_eq!(m.nuisance_domain(-0.4), Some((0.0, 0.6)));
    }

    #[test]
    fn masses_normalize() {
        let m = MPairModel::new(5);
        let mut out = vec![0.0; m.num_points()];
        m.masses(0.2, 0.3, &mut out);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        m.masses(-1.0, 0.0, &mut out);
        let s = m.index(0, 0).unwrap();
        assert!((out[s] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn h_is_one_at_the_centre_of_the_widest_statistic() {
        let d = MPairDesign::new(4, 0.05).unwrap();
        let model = MPairModel::new(4);
        // Every point gets the same interval, so T2 is constant across points.
        let base = LimitsTable::constant(model.num_points(), -0.5, 0.5);
        let v = h_m(&base, 1, 2, 0.0, &d, &GridPolicy::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let short = LimitsTable::constant(3, -0.5, 0.5);
        assert!(h_m(&short, 1, 2, 0.0, &d, &GridPolicy::default()).is_err());
        assert!(h_m(&base, 3, 2, 0.0, &d, &GridPolicy::default()).is_err());
    }

    #[test]
    fn point_estimator_limits() {
        let d = MPairDesign::new(4, 0.05).unwrap();
        let t = mle_point_limits(&d);
        let m = MPairModel::new(4);
        assert_eq!(t.lower[m.index(4, 0).unwrap()], 1.0);
        assert_eq!(t.lower[m.index(0, 0).unwrap()], -1.0);
        assert_eq!(t.til(), 0.0);
        assert_eq!(icp_grid_m(&t, &d, 10).unwrap().icp, 0.0);
        let full = LimitsTable::constant(m.num_points(), -1.0, 1.0);
        assert!((icp_grid_m(&full, &d, 10).unwrap().icp - 1.0).abs() < 1e-12);
    }
}
