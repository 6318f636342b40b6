//! The modification operator, its iteration to a fixed point, and the
//! smallest one-sided intervals for a given ordering.
//!
//! Any interval table `[L, U]` induces the statistic
//! `T2(x, theta0) = min{theta0 - L(x), U(x) - theta0}`, which is nonnegative
//! exactly when `theta0` lies in the interval. Inverting the h-function of
//! `T2` gives an exact interval; starting from an exact one it never grows.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hcore::{invert_all, FiniteModel, GridPolicy, NullKind, Statistic, StatisticH};
use crate::limits::LimitsTable;

/// Tolerance on `|TIL ratio - 1|` for declaring a fixed point.
pub const TIL_RATIO_TOL: f64 = 1e-7;

/// Default cap on the number of iterations.
pub const DEFAULT_MAX_K: usize = 50;

/// `min{theta0 - L(s), U(s) - theta0}`.
pub fn t2_stat(limits: &LimitsTable, s: usize, theta0: f64) -> f64 {
    let (l, u) = limits.interval(s);
    (theta0 - l).min(u - theta0)
}

/// The interval-induced statistic over a whole table.
pub struct T2Statistic<'a> {
    pub limits: &'a LimitsTable,
}

impl Statistic for T2Statistic<'_> {
    fn eval_all(&self, theta0: f64, out: &mut [f64]) {
        for (s, o) in out.iter_mut().enumerate() {
            *o = t2_stat(self.limits, s, theta0);
        }
    }
}

/// Output of one modification pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modification {
    pub limits: LimitsTable,
    /// Points whose super-level set missed every grid value of `theta0`.
    pub degenerate: Vec<usize>,
}

/// One application of the modification operator.
pub fn modify<M: FiniteModel + ?Sized>(
    model: &M,
    limits: &LimitsTable,
    alpha: f64,
    grid: &GridPolicy,
) -> Result<Modification> {
    limits.check_len(model.num_points())?;
    limits.check_finite()?;
    let stat = T2Statistic { limits };
    let h = StatisticH::new(model, &stat, NullKind::Point, *grid);
    let inv = invert_all(&h, alpha, grid)?;
    let degenerate = inv
        .iter()
        .enumerate()
        .filter(|(_, i)| i.empty)
        .map(|(s, _)| s)
        .collect();
    Ok(Modification {
        limits: LimitsTable::new(
            inv.iter().map(|i| i.lower).collect(),
            inv.iter().map(|i| i.upper).collect(),
        )?,
        degenerate,
    })
}

/// The sequence `C^{M1}, C^{M2}, ...` up to the first repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    /// Smallest `k` with `C^{Mk} = C^{M(k+1)}`; `0` means the input is
    /// already a fixed point. Equal to `max_k` when not converged.
    pub k: usize,
    /// TIL of `C^{M0}` (the input), `C^{M1}`, ..., `C^{M(k+1)}`.
    pub til_sequence: Vec<f64>,
    /// `TIL(C^{M(j+1)}) / TIL(C^{Mj})` for `j >= 1`.
    pub ratio_sequence: Vec<f64>,
    pub converged: bool,
    /// Each iterate from `C^{M1}` on lies inside its predecessor.
    pub nested: bool,
    /// `C^{Mk}`, the fixed point when converged.
    pub final_limits: LimitsTable,
    /// The first modification `C^{M1}`.
    pub first: LimitsTable,
    /// Points that hit a degenerate inversion in any pass.
    pub degenerate: Vec<usize>,
}

fn ratio(new: f64, old: f64) -> f64 {
    if old == 0.0 {
        if new == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        new / old
    }
}

fn same(a: &LimitsTable, b: &LimitsTable) -> bool {
    a.same_at_report_precision(b) && (ratio(b.til(), a.til()) - 1.0).abs() <= TIL_RATIO_TOL
}

/// Iterates the modification operator until two consecutive iterates agree
/// pointwise at reporting precision and their TIL ratio is 1 within
/// [`TIL_RATIO_TOL`].
pub fn refine_fixed_point<M: FiniteModel + ?Sized>(
    model: &M,
    limits: &LimitsTable,
    alpha: f64,
    grid: &GridPolicy,
    max_k: usize,
) -> Result<RefinementTrace> {
    if max_k == 0 {
        return invalid("max_k must be at least 1");
    }
    let mut degenerate = Vec::new();
    let first = modify(model, limits, alpha, grid)?;
    degenerate.extend(first.degenerate.iter().copied());
    let first = first.limits;
    let mut til_sequence = vec![limits.til(), first.til()];
    let mut ratio_sequence = Vec::new();
    let mut nested = true;

    if same(&limits.rounded(), &first) {
        return Ok(RefinementTrace {
            k: 0,
            til_sequence,
            ratio_sequence,
            converged: true,
            nested,
            final_limits: limits.clone(),
            first: first.clone(),
            degenerate,
        });
    }

    let mut current = first.clone();
    for k in 1..=max_k {
        let next = modify(model, &current, alpha, grid)?;
        degenerate.extend(next.degenerate.iter().copied());
        let next = next.limits;
        til_sequence.push(next.til());
        ratio_sequence.push(ratio(next.til(), current.til()));
        nested &= next.is_subset_of(&current, 1e-9);
        if same(&current, &next) {
            degenerate.sort_unstable();
            degenerate.dedup();
            return Ok(RefinementTrace {
                k,
                til_sequence,
                ratio_sequence,
                converged: true,
                nested,
                final_limits: current,
                first,
                degenerate,
            });
        }
        current = next;
    }
    degenerate.sort_unstable();
    degenerate.dedup();
    Ok(RefinementTrace {
        k: max_k,
        til_sequence,
        ratio_sequence,
        converged: false,
        nested,
        final_limits: current,
        first,
        degenerate,
    })
}

/// Direction of a one-sided construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OneSided {
    /// Intervals `[L(x), B]`.
    Lower,
    /// Intervals `[A, U(x)]`.
    Upper,
}

struct OrderStatistic<'a> {
    order: &'a [f64],
    side: OneSided,
}

impl Statistic for OrderStatistic<'_> {
    fn eval_all(&self, theta0: f64, out: &mut [f64]) {
        for (s, o) in out.iter_mut().enumerate() {
            *o = match self.side {
                OneSided::Lower => theta0 - self.order[s],
                OneSided::Upper => self.order[s] - theta0,
            };
        }
    }
}

/// Smallest one-sided exact interval among those ordered like `order`.
///
/// For [`OneSided::Lower`], `h(x, theta0) = sup_{theta <= theta0} P(order(X) >= order(x))`
/// and the result is `[inf{theta0 : h > alpha}, B]`. The upper case mirrors it.
/// `order` may be any real score per sample point, such as given lower limits
/// or the identity `x`.
pub fn modify_one_sided<M: FiniteModel + ?Sized>(
    model: &M,
    order: &[f64],
    side: OneSided,
    alpha: f64,
    grid: &GridPolicy,
) -> Result<LimitsTable> {
    if order.len() != model.num_points() {
        return invalid(format!(
            "ordering has {} values but the sample space has {} points",
            order.len(),
            model.num_points()
        ));
    }
    if order.iter().any(|v| v.is_nan()) {
        return invalid("ordering contains NaN");
    }
    let stat = OrderStatistic { order, side };
    let null = match side {
        OneSided::Lower => NullKind::Lower,
        OneSided::Upper => NullKind::Upper,
    };
    let (a, b) = model.theta_range();
    let h = StatisticH::new(model, &stat, null, *grid);
    let inv = invert_all(&h, alpha, grid)?;
    let (lower, upper) = match side {
        OneSided::Lower => (inv.iter().map(|i| i.lower).collect(), vec![b; inv.len()]),
        OneSided::Upper => (vec![a; inv.len()], inv.iter().map(|i| i.upper).collect()),
    };
    LimitsTable::new(lower, upper)
}

/// [`modify_one_sided`] ordered by given lower limits.
pub fn modify_lower_one_sided<M: FiniteModel + ?Sized>(
    model: &M,
    lower_limits: &[f64],
    alpha: f64,
    grid: &GridPolicy,
) -> Result<LimitsTable> {
    modify_one_sided(model, lower_limits, OneSided::Lower, alpha, grid)
}

/// [`modify_one_sided`] ordered by given upper limits.
pub fn modify_upper_one_sided<M: FiniteModel + ?Sized>(
    model: &M,
    upper_limits: &[f64],
    alpha: f64,
    grid: &GridPolicy,
) -> Result<LimitsTable> {
    modify_one_sided(model, upper_limits, OneSided::Upper, alpha, grid)
}
