//! The generic h-function engine.
//!
//! An h-function assigns to every sample point `x` and hypothesised value
//! `theta0` the p-value `sup_{H0} P(T(X, theta0) <= T(x, theta0))`, where the
//! supremum runs over the null parameter set (including nuisance values).
//! Its super-level set `{theta0 : h(x, theta0) > alpha}` closed to its hull is
//! the confidence interval; the super-level set in `x` is the acceptance region.
//!
//! All sample spaces are finite and every probability is an exact sum over
//! the enumerated points. Suprema over nuisance parameters are a grid scan
//! followed by an optional golden-section polish of the best grid cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Relative tolerance under which two statistic values count as tied.
pub const TIE_REL_TOL: f64 = 1e-10;
const TIE_ABS_TOL: f64 = 1e-13;

/// Groups whose grid supremum falls more than this below `alpha` are not
/// polished when only the indicator `h > alpha` is needed. Within one grid
/// cell the polish gain of a smooth mass sum is second order in the cell width.
const POLISH_BAND: f64 = 1e-3;

/// Accuracy knobs shared by every supremum and every inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPolicy {
    /// Number of equally spaced `theta0` values scanned by an inversion.
    pub theta_points: usize,
    /// Number of equally spaced nuisance values scanned by a supremum.
    pub nuisance_points: usize,
    /// Width at which flank bisection of an interval endpoint stops.
    pub bisection_tol: f64,
    /// Golden-section refinement around the best nuisance grid point.
    pub polish: bool,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self {
            theta_points: 2000,
            nuisance_points: 1001,
            bisection_tol: 1e-10,
            polish: true,
        }
    }
}

impl GridPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.theta_points < 2 || self.nuisance_points < 2 {
            return invalid("grid point counts must be at least 2");
        }
        if !(self.bisection_tol > 0.0) {
            return invalid("bisection tolerance must be positive");
        }
        Ok(())
    }
}

/// Form of the null hypothesis for a given `theta0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NullKind {
    /// `theta = theta0`
    Point,
    /// `theta <= theta0`
    Lower,
    /// `theta >= theta0`
    Upper,
}

/// A discrete model with an enumerated sample space.
pub trait FiniteModel: Sync {
    fn num_points(&self) -> usize;

    /// Coordinates of a sample point, e.g. `[x]` or `[x, y]`.
    fn point_label(&self, index: usize) -> Vec<u32>;

    /// Index of the sample point with the given coordinates.
    fn point_index(&self, label: &[u32]) -> Option<usize>;

    /// Closed range `[A, B]` of the parameter of interest.
    fn theta_range(&self) -> (f64, f64);

    /// Admissible nuisance values `D(theta)` as a closed interval, or `None`
    /// when the model has no nuisance parameter.
    fn nuisance_domain(&self, theta: f64) -> Option<(f64, f64)>;

    /// Fills `out[s]` with the mass of every sample point at `(theta, eta)`.
    /// `eta` is ignored by models without a nuisance parameter.
    fn masses(&self, theta: f64, eta: f64, out: &mut [f64]);

    /// Whether the family is stochastically monotone in `theta`, so that
    /// one-sided suprema are attained on the boundary `theta = theta0`.
    fn monotone_in_theta(&self) -> bool {
        false
    }
}

/// A test statistic `T(s, theta0)`; small values favour the alternative.
pub trait Statistic: Sync {
    fn eval_all(&self, theta0: f64, out: &mut [f64]);
}

impl<F> Statistic for F
where
    F: Fn(f64, &mut [f64]) + Sync,
{
    fn eval_all(&self, theta0: f64, out: &mut [f64]) {
        self(theta0, out)
    }
}

/// Anything that can be evaluated as `h(x, theta0)` over a finite sample space.
pub trait HFunction: Sync {
    fn num_points(&self) -> usize;

    fn theta_range(&self) -> (f64, f64);

    /// `h(s, theta0)` for every sample point.
    fn eval_all(&self, theta0: f64) -> Vec<f64>;

    /// `h(point, theta0)`; must agree with `eval_all(theta0)[point]`.
    fn eval(&self, point: usize, theta0: f64) -> f64 {
        self.eval_all(theta0)[point]
    }

    /// Indicator `h(s, theta0) > alpha` for every sample point.
    fn exceeds_all(&self, theta0: f64, alpha: f64) -> Vec<bool> {
        self.eval_all(theta0).into_iter().map(|h| h > alpha).collect()
    }

    /// Indicator `h(point, theta0) > alpha`.
    fn exceeds(&self, point: usize, theta0: f64, alpha: f64) -> bool {
        self.eval(point, theta0) > alpha
    }
}

/// Equally spaced grid on `[lo, hi]` with both endpoints included exactly.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 || hi <= lo {
        return vec![lo];
    }
    let last = points - 1;
    (0..points)
        .map(|i| {
            if i == last {
                hi
            } else {
                lo + (hi - lo) * (i as f64) / (last as f64)
            }
        })
        .collect()
}

fn tie_tol(t: f64) -> f64 {
    TIE_REL_TOL * t.abs() + TIE_ABS_TOL
}

/// Partition of the sample space into tie classes of the statistic, ordered
/// by increasing statistic value. Members of a class are in index order.
#[derive(Debug, Clone)]
pub(crate) struct TieGroups {
    pub members: Vec<usize>,
    pub starts: Vec<usize>,
    pub group_of: Vec<usize>,
}

impl TieGroups {
    pub fn new(values: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let mut starts = Vec::with_capacity(values.len() + 1);
        let mut group_of = vec![0; values.len()];
        let mut leader = f64::NAN;
        for (pos, &s) in order.iter().enumerate() {
            let v = values[s];
            let same = pos > 0
                && (v == leader || (leader.is_finite() && v.is_finite() && v - leader <= tie_tol(leader)));
            if !same {
                starts.push(pos);
                leader = v;
            }
            group_of[s] = starts.len() - 1;
        }
        starts.push(order.len());
        for g in 0..starts.len() - 1 {
            order[starts[g]..starts[g + 1]].sort_unstable();
        }
        Self {
            members: order,
            starts,
            group_of,
        }
    }

    pub fn len(&self) -> usize {
        self.starts.len() - 1
    }

    /// Cumulative masses `P(group <= g)` for every group, accumulated group by
    /// group in member order.
    pub fn cumulative(&self, masses: &[f64], out: &mut [f64]) {
        let mut acc = 0.0;
        for g in 0..self.len() {
            let mut s = 0.0;
            for &m in &self.members[self.starts[g]..self.starts[g + 1]] {
                s += masses[m];
            }
            acc += s;
            out[g] = acc;
        }
    }

    /// `P(group <= g)` with the same summation order as [`Self::cumulative`].
    pub fn cumulative_at(&self, masses: &[f64], g: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..=g {
            let mut s = 0.0;
            for &m in &self.members[self.starts[k]..self.starts[k + 1]] {
                s += masses[m];
            }
            acc += s;
        }
        acc
    }
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
/// Returns the best probe `(x, f(x))`; ties keep the smaller `x`.
pub(crate) fn golden_max(f: &mut dyn FnMut(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let (mut best_x, mut best_f) = if f2 > f1 { (x2, f2) } else { (x1, f1) };
    for _ in 0..60 {
        if b - a <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
            if f1 > best_f || (f1 == best_f && x1 < best_x) {
                best_x = x1;
                best_f = f1;
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
            if f2 > best_f || (f2 == best_f && x2 < best_x) {
                best_x = x2;
                best_f = f2;
            }
        }
    }
    (best_x, best_f)
}

/// Supremum of `f` over the closed interval `domain` by a grid scan of
/// `grid.nuisance_points` values (ties toward the smaller argument), then,
/// when `grid.polish` is set, golden-section refinement on the cell around
/// the best grid point. The result is never below the plain grid maximum.
pub fn sup_over_nuisance(
    mut f: impl FnMut(f64) -> f64,
    domain: (f64, f64),
    grid: &GridPolicy,
) -> Result<(f64, f64)> {
    let (lo, hi) = domain;
    if !(lo <= hi) {
        return invalid(format!("empty nuisance domain [{lo}, {hi}]"));
    }
    let pts = linear_grid(lo, hi, grid.nuisance_points);
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, &e) in pts.iter().enumerate() {
        let v = f(e);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut arg = pts[best_i];
    if grid.polish && pts.len() > 1 {
        let a = pts[best_i.saturating_sub(1)];
        let b = pts[(best_i + 1).min(pts.len() - 1)];
        let (x, v) = golden_max(&mut f, a, b);
        if v > best {
            best = v;
            arg = x;
        }
    }
    Ok((arg, best))
}

/// The h-function of a statistic over a finite model.
pub struct StatisticH<'a, M: ?Sized, S: ?Sized> {
    pub model: &'a M,
    pub stat: &'a S,
    pub null: NullKind,
    pub grid: GridPolicy,
}

/// One `(theta, eta)` value of the null parameter set.
#[derive(Clone, Copy)]
struct NullParam {
    theta: f64,
    /// Index into the eta grid of `theta`, for polishing.
    eta_idx: usize,
}

impl<'a, M, S> StatisticH<'a, M, S>
where
    M: FiniteModel + ?Sized,
    S: Statistic + ?Sized,
{
    pub fn new(model: &'a M, stat: &'a S, null: NullKind, grid: GridPolicy) -> Self {
        Self {
            model,
            stat,
            null,
            grid,
        }
    }

    fn null_thetas(&self, theta0: f64) -> Vec<f64> {
        let (a, b) = self.model.theta_range();
        let side_points = self.grid.theta_points.min(201);
        match self.null {
            NullKind::Point => vec![theta0],
            _ if self.model.monotone_in_theta() => vec![theta0],
            NullKind::Lower => linear_grid(a, theta0, side_points),
            NullKind::Upper => linear_grid(theta0, b, side_points),
        }
    }

    fn eta_grid(&self, theta: f64) -> Vec<f64> {
        match self.model.nuisance_domain(theta) {
            None => vec![0.0],
            Some((lo, hi)) => linear_grid(lo, hi, self.grid.nuisance_points),
        }
    }

    fn groups(&self, theta0: f64) -> TieGroups {
        let mut stats = vec![0.0; self.model.num_points()];
        self.stat.eval_all(theta0, &mut stats);
        debug_assert!(stats.iter().all(|v| !v.is_nan()), "statistic produced NaN");
        TieGroups::new(&stats)
    }

    /// Grid suprema of `P(group <= g)` for the listed groups (all when `None`),
    /// with the maximising null parameter of each.
    fn grid_sup(
        &self,
        theta0: f64,
        groups: &TieGroups,
        only: Option<usize>,
    ) -> (Vec<f64>, Vec<NullParam>, Vec<Vec<f64>>) {
        let ng = groups.len();
        let mut best = vec![f64::NEG_INFINITY; ng];
        let mut arg = vec![
            NullParam {
                theta: theta0,
                eta_idx: 0
            };
            ng
        ];
        let mut masses = vec![0.0; self.model.num_points()];
        let mut cum = vec![0.0; ng];
        let thetas = self.null_thetas(theta0);
        let mut eta_grids = Vec::with_capacity(thetas.len());
        for &theta in &thetas {
            let etas = self.eta_grid(theta);
            for (j, &eta) in etas.iter().enumerate() {
                self.model.masses(theta, eta, &mut masses);
                match only {
                    Some(g) => {
                        let v = groups.cumulative_at(&masses, g);
                        if v > best[g] {
                            best[g] = v;
                            arg[g] = NullParam { theta, eta_idx: j };
                        }
                    }
                    None => {
                        groups.cumulative(&masses, &mut cum);
                        for g in 0..ng {
                            if cum[g] > best[g] {
                                best[g] = cum[g];
                                arg[g] = NullParam { theta, eta_idx: j };
                            }
                        }
                    }
                }
            }
            eta_grids.push(etas);
        }
        let etas_by_theta = eta_grids;
        (best, arg, etas_by_theta)
    }

    fn polish_group(
        &self,
        groups: &TieGroups,
        g: usize,
        at: NullParam,
        thetas: &[f64],
        etas_by_theta: &[Vec<f64>],
        grid_value: f64,
    ) -> f64 {
        if !self.grid.polish {
            return grid_value;
        }
        let ti = thetas
            .iter()
            .position(|&t| t == at.theta)
            .unwrap_or(0);
        let etas = &etas_by_theta[ti];
        if etas.len() < 2 {
            return grid_value;
        }
        let a = etas[at.eta_idx.saturating_sub(1)];
        let b = etas[(at.eta_idx + 1).min(etas.len() - 1)];
        let mut masses = vec![0.0; self.model.num_points()];
        let mut f = |eta: f64| {
            self.model.masses(at.theta, eta, &mut masses);
            groups.cumulative_at(&masses, g)
        };
        let (_, v) = golden_max(&mut f, a, b);
        grid_value.max(v)
    }

    /// Group-level h values; `alpha` restricts polishing to groups whose
    /// grid value sits just below it.
    fn group_values(&self, theta0: f64, groups: &TieGroups, alpha: Option<f64>) -> Vec<f64> {
        let (mut best, arg, etas) = self.grid_sup(theta0, groups, None);
        let thetas = self.null_thetas(theta0);
        for g in 0..groups.len() {
            let needs = match alpha {
                None => true,
                Some(a) => best[g] <= a && best[g] > a - POLISH_BAND,
            };
            if needs {
                best[g] = self.polish_group(groups, g, arg[g], &thetas, &etas, best[g]);
            }
        }
        best.iter().map(|v| v.clamp(0.0, 1.0)).collect()
    }

    fn point_value(&self, point: usize, theta0: f64, alpha: Option<f64>) -> f64 {
        let groups = self.groups(theta0);
        let g = groups.group_of[point];
        let (best, arg, etas) = self.grid_sup(theta0, &groups, Some(g));
        let needs = match alpha {
            None => true,
            Some(a) => best[g] <= a && best[g] > a - POLISH_BAND,
        };
        let v = if needs {
            let thetas = self.null_thetas(theta0);
            self.polish_group(&groups, g, arg[g], &thetas, &etas, best[g])
        } else {
            best[g]
        };
        v.clamp(0.0, 1.0)
    }
}

impl<'a, M, S> HFunction for StatisticH<'a, M, S>
where
    M: FiniteModel + ?Sized,
    S: Statistic + ?Sized,
{
    fn num_points(&self) -> usize {
        self.model.num_points()
    }

    fn theta_range(&self) -> (f64, f64) {
        self.model.theta_range()
    }

    fn eval_all(&self, theta0: f64) -> Vec<f64> {
        let groups = self.groups(theta0);
        let vals = self.group_values(theta0, &groups, None);
        groups.group_of.iter().map(|&g| vals[g]).collect()
    }

    fn eval(&self, point: usize, theta0: f64) -> f64 {
        self.point_value(point, theta0, None)
    }

    fn exceeds_all(&self, theta0: f64, alpha: f64) -> Vec<bool> {
        let groups = self.groups(theta0);
        let vals = self.group_values(theta0, &groups, Some(alpha));
        groups.group_of.iter().map(|&g| vals[g] > alpha).collect()
    }

    fn exceeds(&self, point: usize, theta0: f64, alpha: f64) -> bool {
        self.point_value(point, theta0, Some(alpha)) > alpha
    }
}

fn check_theta(range: (f64, f64), theta0: f64) -> Result<()> {
    if !(theta0 >= range.0 && theta0 <= range.1) {
        return invalid(format!(
            "theta0 = {theta0} outside parameter range [{}, {}]",
            range.0, range.1
        ));
    }
    Ok(())
}

/// `h(x, theta0)` for the statistic `stat` on `model`.
pub fn h_eval<M, S>(
    model: &M,
    stat: &S,
    null: NullKind,
    x: usize,
    theta0: f64,
    grid: &GridPolicy,
) -> Result<f64>
where
    M: FiniteModel + ?Sized,
    S: Statistic + ?Sized,
{
    check_theta(model.theta_range(), theta0)?;
    if x >= model.num_points() {
        return invalid(format!("sample point index {x} out of range"));
    }
    Ok(StatisticH::new(model, stat, null, *grid).eval(x, theta0))
}

/// A closed interval produced by inverting an h-function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub lower: f64,
    pub upper: f64,
    /// No grid value of `theta0` had `h > alpha`; the interval is the
    /// degenerate point at the grid argmax of `h` and the grid is too coarse.
    pub empty: bool,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha = {alpha} outside (0, 1)"));
    }
    Ok(())
}

/// Smallest closed interval containing `{theta0 : h(x, theta0) > alpha}` for
/// one sample point.
pub fn invert_h<H: HFunction + ?Sized>(
    h: &H,
    x: usize,
    alpha: f64,
    grid: &GridPolicy,
) -> Result<Inversion> {
    check_alpha(alpha)?;
    grid.validate()?;
    let (a, b) = h.theta_range();
    let thetas = linear_grid(a, b, grid.theta_points);
    let inside: Vec<bool> = thetas
        .par_iter()
        .map(|&t| h.exceeds(x, t, alpha))
        .collect();
    Ok(close_flanks(h, x, alpha, grid, &thetas, |i| inside[i]))
}

/// [`invert_h`] for every sample point, sharing the `theta0` scan.
pub fn invert_all<H: HFunction + ?Sized>(
    h: &H,
    alpha: f64,
    grid: &GridPolicy,
) -> Result<Vec<Inversion>> {
    check_alpha(alpha)?;
    grid.validate()?;
    let (a, b) = h.theta_range();
    let thetas = linear_grid(a, b, grid.theta_points);
    let scan: Vec<Vec<bool>> = thetas
        .par_iter()
        .map(|&t| h.exceeds_all(t, alpha))
        .collect();
    let out = (0..h.num_points())
        .into_par_iter()
        .map(|x| close_flanks(h, x, alpha, grid, &thetas, |i| scan[i][x]))
        .collect();
    Ok(out)
}

fn close_flanks<H: HFunction + ?Sized>(
    h: &H,
    x: usize,
    alpha: f64,
    grid: &GridPolicy,
    thetas: &[f64],
    inside: impl Fn(usize) -> bool,
) -> Inversion {
    let n = thetas.len();
    let first = (0..n).find(|&i| inside(i));
    let last = (0..n).rev().find(|&i| inside(i));
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            // Degenerate: report the grid argmax of h.
            let mut best = f64::NEG_INFINITY;
            let mut at = thetas[0];
            for &t in thetas {
                let v = h.eval(x, t);
                if v > best {
                    best = v;
                    at = t;
                }
            }
            return Inversion {
                lower: at,
                upper: at,
                empty: true,
            };
        }
    };
    let lower = if first == 0 {
        thetas[0]
    } else {
        bisect_flank(thetas[first - 1], thetas[first], grid.bisection_tol, |t| {
            h.exceeds(x, t, alpha)
        })
    };
    let upper = if last == n - 1 {
        thetas[n - 1]
    } else {
        bisect_flank(thetas[last + 1], thetas[last], grid.bisection_tol, |t| {
            h.exceeds(x, t, alpha)
        })
    };
    Inversion {
        lower,
        upper,
        empty: false,
    }
}

/// Bisection on a boolean indicator with `inside(outside) == false` and
/// `inside(inside) == true`. Returns the final outside point, so the closed
/// hull is never understated.
fn bisect_flank(mut outside: f64, mut inside_pt: f64, tol: f64, inside: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..200 {
        if (inside_pt - outside).abs() <= tol {
            break;
        }
        let mid = 0.5 * (outside + inside_pt);
        if mid == outside || mid == inside_pt {
            break;
        }
        if inside(mid) {
            inside_pt = mid;
        } else {
            outside = mid;
        }
    }
    outside
}

/// Sample points with `h(s, theta0) > alpha`.
pub fn acceptance_region<H: HFunction + ?Sized>(h: &H, theta0: f64, alpha: f64) -> Result<Vec<usize>> {
    check_theta(h.theta_range(), theta0)?;
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("alpha = {alpha} outside [0, 1]"));
    }
    Ok(h
        .eval_all(theta0)
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > alpha)
        .map(|(s, _)| s)
        .collect())
}

/// Worst-case size `sup P(h(X, theta0) <= alpha)` over every `theta0` on
/// `theta_grid` and every null parameter on the nuisance grid, computed by
/// exhaustive enumeration. A valid h-function gives at most `alpha`.
pub fn validate_p_value<M, H>(
    model: &M,
    h: &H,
    null: NullKind,
    alpha: f64,
    theta_grid: &[f64],
    grid: &GridPolicy,
) -> Result<f64>
where
    M: FiniteModel + ?Sized,
    H: HFunction + ?Sized,
{
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("alpha = {alpha} outside [0, 1]"));
    }
    let range = model.theta_range();
    for &t in theta_grid {
        check_theta(range, t)?;
    }
    let sizes: Vec<f64> = theta_grid
        .par_iter()
        .map(|&theta0| {
            let reject: Vec<usize> = h
                .eval_all(theta0)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v <= alpha)
                .map(|(s, _)| s)
                .collect();
            if reject.is_empty() {
                return 0.0;
            }
            let thetas = match null {
                NullKind::Point => vec![theta0],
                NullKind::Lower => linear_grid(range.0, theta0, 41),
                NullKind::Upper => linear_grid(theta0, range.1, 41),
            };
            let mut masses = vec![0.0; model.num_points()];
            let mut worst: f64 = 0.0;
            for theta in thetas {
                let etas = match model.nuisance_domain(theta) {
                    None => vec![0.0],
                    Some((lo, hi)) => linear_grid(lo, hi, grid.nuisance_points),
                };
                for eta in etas {
                    model.masses(theta, eta, &mut masses);
                    let p: f64 = reject.iter().map(|&s| masses[s]).sum();
                    worst = worst.max(p);
                }
            }
            worst
        })
        .collect();
    Ok(sizes.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::BinomialTable;

    /// Binomial(n, p) with no nuisance parameter.
    struct Bin {
        table: BinomialTable,
    }

    impl FiniteModel for Bin {
        fn num_points(&self) -> usize {
            self.table.n() as usize + 1
        }
        fn point_label(&self, i: usize) -> Vec<u32> {
            vec![i as u32]
        }
        fn point_index(&self, label: &[u32]) -> Option<usize> {
            label.first().map(|&x| x as usize)
        }
        fn theta_range(&self) -> (f64, f64) {
            (0.0, 1.0)
        }
        fn nuisance_domain(&self, _: f64) -> Option<(f64, f64)> {
            None
        }
        fn masses(&self, theta: f64, _: f64, out: &mut [f64]) {
            self.table.pmf_into(theta, out)
        }
        fn monotone_in_theta(&self) -> bool {
            true
        }
    }

    /// Two-parameter toy: X ~ Bin(n, theta * eta) on [0,1] x [0,1].
    struct Scaled {
        table: BinomialTable,
    }

    impl FiniteModel for Scaled {
        fn num_points(&self) -> usize {
            self.table.n() as usize + 1
        }
        fn point_label(&self, i: usize) -> Vec<u32> {
            vec![i as u32]
        }
        fn point_index(&self, label: &[u32]) -> Option<usize> {
            label.first().map(|&x| x as usize)
        }
        fn theta_range(&self) -> (f64, f64) {
            (0.0, 1.0)
        }
        fn nuisance_domain(&self, _: f64) -> Option<(f64, f64)> {
            Some((0.5, 1.0))
        }
        fn masses(&self, theta: f64, eta: f64, out: &mut [f64]) {
            self.table.pmf_into(theta * eta, out)
        }
    }

    fn distance_stat(n: u32) -> impl Fn(f64, &mut [f64]) + Sync {
        move |theta0: f64, out: &mut [f64]| {
            for (x, o) in out.iter_mut().enumerate() {
                *o = -(x as f64 / f64::from(n) - theta0).abs();
            }
        }
    }

    #[test]
    fn tie_groups_order_and_membership() {
        let g = TieGroups::new(&[0.3, -1.0, 0.3, 0.3 + 1e-14, f64::NEG_INFINITY, 2.0]);
        assert_eq!(g.len(), 4);
        assert_eq!(g.members, vec![4, 1, 0, 2, 3, 5]);
        assert_eq!(g.group_of, vec![2, 1, 2, 2, 0, 3]);
    }

    #[test]
    fn golden_finds_quadratic_max() {
        let mut f = |x: f64| -(x - 0.3712).powi(2) + 2.0;
        let (x, v) = golden_max(&mut f, 0.0, 1.0);
        assert!((x - 0.3712).abs() < 1e-6);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sup_over_nuisance_cases() {
        let g = GridPolicy::default();
        let (arg, v) = sup_over_nuisance(|_| 0.25, (0.1, 0.9), &g).unwrap();
        assert_eq!(arg, 0.1);
        assert_eq!(v, 0.25);
        let (arg, v) = sup_over_nuisance(|e| e * 2.0, (0.4, 0.4), &g).unwrap();
        assert_eq!((arg, v), (0.4, 0.8));
        // Interior maximum at an off-grid point; analytic max 1.5.
        let c = 0.123_456_789;
        let (arg, v) = sup_over_nuisance(|e| 1.5 - 3.0 * (e - c).powi(2), (0.0, 1.0), &g).unwrap();
        assert!((v - 1.5).abs() < 1e-8);
        assert!((arg - c).abs() < 1e-4);
        let plain = GridPolicy { polish: false, ..g };
        let (_, vg) = sup_over_nuisance(|e| 1.5 - 3.0 * (e - c).powi(2), (0.0, 1.0), &plain).unwrap();
        assert!(v >= vg);
        assert!(sup_over_nuisance(|e| e, (1.0, 0.0), &g).is_err());
    }

    #[test]
    fn h_is_one_when_k_is_whole_space() {
        let m = Bin { table: BinomialTable::new(8) };
        let stat = distance_stat(8);
        // x = 4 at theta0 = 0.5 has the largest statistic.
        let v = h_eval(&m, &stat, NullKind::Point, 4, 0.5, &GridPolicy::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        assert!(h_eval(&m, &stat, NullKind::Point, 4, 1.5, &GridPolicy::default()).is_err());
    }

    #[test]
    fn eval_and_eval_all_agree() {
        let m = Scaled { table: BinomialTable::new(7) };
        let stat = distance_stat(7);
        let h = StatisticH::new(&m, &stat, NullKind::Point, GridPolicy { nuisance_points: 51, ..Default::default() });
        for &t in &[0.0, 0.13, 0.5, 0.77, 1.0] {
            let all = h.eval_all(t);
            for x in 0..8 {
                assert_eq!(all[x].to_bits(), h.eval(x, t).to_bits());
                assert!((0.0..=1.0).contains(&all[x]));
            }
        }
    }

    #[test]
    fn sup_dominates_any_single_nuisance_value() {
        let m = Scaled { table: BinomialTable::new(6) };
        let stat = distance_stat(6);
        let h = StatisticH::new(&m, &stat, NullKind::Point, GridPolicy { nuisance_points: 101, ..Default::default() });
        let mut masses = vec![0.0; 7];
        for &t in &[0.2, 0.45, 0.9] {
            let mut stats = vec![0.0; 7];
            stat(t, &mut stats);
            let hv = h.eval_all(t);
            for eta in [0.5, 0.61, 0.83, 0.97] {
                m.masses(t, eta, &mut masses);
                for x in 0..7 {
                    let p: f64 = (0..7).filter(|&y| stats[y] <= stats[x]).map(|y| masses[y]).sum();
                    assert!(hv[x] >= p - 1e-12);
                }
            }
        }
    }

    #[test]
    fn duality_between_region_and_h() {
        let m = Bin { table: BinomialTable::new(10) };
        let stat = distance_stat(10);
        let h = StatisticH::new(&m, &stat, NullKind::Point, GridPolicy::default());
        for &t in &[0.05, 0.3, 0.62] {
            let region = acceptance_region(&h, t, 0.05).unwrap();
            let vals = h.eval_all(t);
            for x in 0..11 {
                assert_eq!(region.contains(&x), vals[x] > 0.05);
            }
            assert_eq!(acceptance_region(&h, t, 0.0).unwrap().len(), 11);
            assert!(acceptance_region(&h, t, 1.0).unwrap().is_empty());
        }
    }

    #[test]
    fn inversion_of_single_peak_is_degenerate_point() {
        struct Peak;
        impl HFunction for Peak {
            fn num_points(&self) -> usize {
                1
            }
            fn theta_range(&self) -> (f64, f64) {
                (0.0, 1.0)
            }
            fn eval_all(&self, t: f64) -> Vec<f64> {
                vec![if t == 0.5 { 1.0 } else { 0.01 }]
            }
        }
        let g = GridPolicy { theta_points: 3, ..Default::default() };
        let inv = invert_h(&Peak, 0, 0.05, &g).unwrap();
        assert!(!inv.empty);
        assert!((inv.lower - 0.5).abs() < 1e-9 && (inv.upper - 0.5).abs() < 1e-9);
        assert!(inv.lower < 0.5 && inv.upper > 0.5);
        let g = GridPolicy { theta_points: 4, ..Default::default() };
        let inv = invert_h(&Peak, 0, 0.05, &g).unwrap();
        assert!(inv.empty);
    }

    #[test]
    fn inversion_nests_in_alpha_and_brackets_boundary() {
        let m = Bin { table: BinomialTable::new(12) };
        let stat = distance_stat(12);
        let g = GridPolicy::default();
        let h = StatisticH::new(&m, &stat, NullKind::Point, g);
        let wide = invert_all(&h, 0.01, &g).unwrap();
        let narrow = invert_all(&h, 0.1, &g).unwrap();
        for (w, n) in wide.iter().zip(&narrow) {
            assert!(w.lower <= n.lower && n.upper <= w.upper);
        }
        // Each endpoint sits within the tolerance just outside the set.
        for (x, inv) in wide.iter().enumerate() {
            if inv.lower > 0.0 {
                assert!(!h.exceeds(x, inv.lower, 0.01));
                assert!(h.exceeds(x, inv.lower + 2.0 * g.bisection_tol, 0.01));
            }
            let single = invert_h(&h, x, 0.01, &g).unwrap();
            assert_eq!(single, *inv);
        }
    }

    #[test]
    fn validity_of_distance_test() {
        let m = Scaled { table: BinomialTable::new(6) };
        let stat = distance_stat(6);
        let g = GridPolicy { nuisance_points: 101, ..Default::default() };
        let h = StatisticH::new(&m, &stat, NullKind::Point, g);
        let thetas = linear_grid(0.0, 1.0, 41);
        for alpha in [0.01, 0.05, 0.1] {
            let size = validate_p_value(&m, &h, NullKind::Point, alpha, &thetas, &g).unwrap();
            assert!(size <= alpha + 1e-9, "alpha {alpha}: size {size}");
        }
        assert_eq!(validate_p_value(&m, &h, NullKind::Point, 0.0, &thetas, &g).unwrap(), 0.0);
    }

    #[test]
    fn relabeling_tied_points_leaves_h_unchanged() {
        let m = Bin { table: BinomialTable::new(9) };
        let base = |t: f64, out: &mut [f64]| {
            for (x, o) in out.iter_mut().enumerate() {
                *o = ((x as f64) - 9.0 * t).abs().floor() * -1.0;
            }
        };
        let h = StatisticH::new(&m, &base, NullKind::Point, GridPolicy::default());
        for &t in &[0.2, 0.5, 0.71] {
            let mut s = vec![0.0; 10];
            base(t, &mut s);
            // Add sub-tolerance noise that changes the order inside tie classes.
            let noisy = move |tt: f64, out: &mut [f64]| {
                base(tt, out);
                for (x, o) in out.iter_mut().enumerate() {
                    *o += (x as f64) * 1e-15 * if x % 2 == 0 { 1.0 } else { -1.0 };
                }
            };
            let h2 = StatisticH::new(&m, &noisy, NullKind::Point, GridPolicy::default());
            assert_eq!(h.eval_all(t), h2.eval_all(t));
        }
    }
}
