//! Structural properties: reflection identities, the subset and fixed-point
//! behaviour of the modification operator, one-sided idempotence, tie
//! coherence, file round trips and outward rounding.

use proptest::prelude::*;

use exactci::diff::{self, DiffDesign, DiffMethod, DiffModel, DiffStatKind, DiffStatistic};
use exactci::dist::binom_cdf;
use exactci::gauss::{self, GaussianSpec};
use exactci::hcore::{acceptance_region, linear_grid, FiniteModel, GridPolicy, HFunction, NullKind, StatisticH};
use exactci::io::{LimitsFile, SampleSpace};
use exactci::limits::{round_lower, round_upper, LimitsTable};
use exactci::prop::{self, BinomialModel, PropDesign, PropH, PropMethod};
use exactci::refine::{self, modify, refine_fixed_point};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn proportion_reflection(n in 1u32..=16, p0 in 0.0f64..=1.0, which in 0usize..3) {
        let method = [PropMethod::Cp, PropMethod::Blaker, PropMethod::Lrt][which].clone();
        let h = PropH::new(n, &method).unwrap();
        let a = h.eval_all(p0);
        let b = h.eval_all(1.0 - p0);
        for x in 0..=n as usize {
            prop_assert!((a[x] - b[n as usize - x]).abs() < 1e-12, "x={} {} vs {}", x, a[x], b[n as usize - x]);
            prop_assert!((0.0..=1.0).contains(&a[x]));
        }
    }

    #[test]
    fn rounding_brackets(x in -2.0f64..2.0) {
        let (l, u) = (round_lower(x), round_upper(x));
        prop_assert!(l <= x + 1e-9 && u >= x - 1e-9);
        prop_assert!(x - l < 1e-4 + 1e-9 && u - x < 1e-4 + 1e-9);
        prop_assert_eq!((l * 1e4).round() / 1e4, l);
        prop_assert_eq!((u * 1e4).round() / 1e4, u);
    }

    #[test]
    fn limits_file_round_trip(
        n in 1u32..6,
        kind in 0usize..3,
        seed in proptest::collection::vec((-1e3f64..1e3, 0.0f64..1e3), 64),
        infinite in any::<bool>(),
    ) {
        let space = match kind {
            0 => SampleSpace::Prop { n },
            1 => SampleSpace::Diff { n1: n, n2: n + 1 },
            _ => SampleSpace::Mpair { n },
        };
        let points = space.num_points();
        let mut lower: Vec<f64> = seed.iter().cycle().take(points).map(|p| p.0 / 7.0).collect();
        let mut upper: Vec<f64> = seed.iter().cycle().take(points).map(|p| p.0 / 7.0 + p.1 / 3.0).collect();
        if infinite {
            lower[0] = f64::NEG_INFINITY;
            upper[points - 1] = f64::INFINITY;
        }
        let mut file = LimitsFile::new(space, LimitsTable::new(lower, upper).unwrap()).unwrap();
        file.alpha = Some(0.05);
        file.method = Some("custom".into());
        file.rounded = kind == 2;
        let back = LimitsFile::parse(&file.to_text(), None).unwrap();
        prop_assert_eq!(back, file);
    }

    #[test]
    fn difference_h_dominates_any_single_nuisance(x in 0u32..=4, y in 0u32..=5, d0 in -0.95f64..0.95, t in 0.0f64..=1.0) {
        let design = DiffDesign::new(4, 5, 0.05).unwrap();
        let model = DiffModel::new(design);
        let stat = DiffStatistic { design, kind: DiffStatKind::Score };
        let grid = GridPolicy { nuisance_points: 201, ..GridPolicy::default() };
        let h = diff::h_d(DiffStatKind::Score, x, y, d0, &design, &grid).unwrap();
        let (lo, hi) = model.nuisance_domain(d0).unwrap();
        let eta = lo + t * (hi - lo);
        let mut masses = vec![0.0; model.num_points()];
        model.masses(d0, eta, &mut masses);
        let mut tvals = vec![0.0; model.num_points()];
        use exactci::hcore::Statistic;
        stat.eval_all(d0, &mut tvals);
        let me = tvals[design.index(x, y)];
        let p: f64 = (0..masses.len()).filter(|&s| tvals[s] <= me + 1e-10 * me.abs() + 1e-13).map(|s| masses[s]).sum();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&h));
        prop_assert!(h >= p - 1e-9, "h {} below single-eta value {}", h, p);
    }

    #[test]
    fn acceptance_duality(n in 1u32..=14, p0 in 0.0f64..=1.0, alpha in 0.01f64..0.2) {
        let h = PropH::new(n, &PropMethod::Blaker).unwrap();
        let region = acceptance_region(&h, p0, alpha).unwrap();
        let vals = h.eval_all(p0);
        for (x, v) in vals.iter().enumerate() {
            prop_assert_eq!(region.contains(&x), *v > alpha);
        }
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn modification_of_exact_interval_is_a_subset(n in 3u32..=20, which in 0usize..3, alpha in prop_oneof![Just(0.05), Just(0.1)]) {
        let method = [PropMethod::Cp, PropMethod::Blaker, PropMethod::Lrt][which].clone();
        let grid = GridPolicy::default();
        let design = PropDesign::new(n, alpha).unwrap();
        let exact = prop::method_limits(&design, &method, &grid).unwrap();
        let m = modify(&BinomialModel::new(n), &exact, alpha, &grid).unwrap();
        prop_assert!(m.limits.is_subset_of(&exact, 1e-9));
    }

    #[test]
    fn iterates_shrink_and_the_fixed_point_is_stable(n in 4u32..=14, which in 0usize..3) {
        let method = [PropMethod::Wald, PropMethod::Wilson, PropMethod::SampleProp][which].clone();
        let grid = GridPolicy::default();
        let design = PropDesign::new(n, 0.05).unwrap();
        let model = BinomialModel::new(n);
        let start = prop::method_limits(&design, &method, &grid).unwrap();
        let trace = refine_fixed_point(&model, &start, 0.05, &grid, 60).unwrap();
        prop_assert!(trace.converged);
        prop_assert!(trace.nested);
        for w in trace.til_sequence[1..].windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
        for r in &trace.ratio_sequence {
            prop_assert!(*r <= 1.0 + 1e-12);
        }
        let once = modify(&model, &trace.final_limits, 0.05, &grid).unwrap().limits;
        let twice = modify(&model, &once, 0.05, &grid).unwrap().limits;
        prop_assert!(once.same_at_report_precision(&trace.final_limits));
        prop_assert!(twice.same_at_report_precision(&trace.final_limits));
    }

    #[test]
    fn tied_points_get_tied_intervals(
        n in 4u32..=12,
        cuts in proptest::collection::vec(0.0f64..1.0, 26),
        dup in 0usize..12,
    ) {
        let pts = n as usize + 1;
        let mut lower: Vec<f64> = cuts[..pts].iter().map(|c| c * 0.5).collect();
        let mut upper: Vec<f64> = cuts[13..13 + pts].iter().map(|c| 0.5 + c * 0.5).collect();
        let i = dup % pts;
        let j = (i + 1 + dup / pts) % pts;
        lower[j] = lower[i];
        upper[j] = upper[i];
        let table = LimitsTable::new(lower, upper).unwrap();
        let out = modify(&BinomialModel::new(n), &table, 0.05, &GridPolicy::default()).unwrap().limits;
        prop_assert_eq!(out.interval(i), out.interval(j));
    }

    #[test]
    fn one_sided_operator_is_idempotent(n in 2u32..=15, upper_side in any::<bool>(), noise in proptest::collection::vec(0.0f64..1.0, 16)) {
        let model = BinomialModel::new(n);
        let grid = GridPolicy::default();
        // Any nondecreasing ordering of the sample space.
        let mut order: Vec<f64> = noise[..=n as usize].to_vec();
        order.sort_by(f64::total_cmp);
        let side = if upper_side { refine::OneSided::Upper } else { refine::OneSided::Lower };
        let first = refine::modify_one_sided(&model, &order, side, 0.05, &grid).unwrap();
        let again_order = if upper_side { &first.upper } else { &first.lower };
        let second = refine::modify_one_sided(&model, again_order, side, 0.05, &grid).unwrap();
        prop_assert!(second.is_subset_of(&first, 1e-9) && first.is_subset_of(&second, 1e-9));
    }
}

#[test]
fn stochastic_lower_equals_one_sided_modification() {
    let grid = GridPolicy::default();
    for n in 1..=15u32 {
        let model = BinomialModel::new(n);
        let order: Vec<f64> = (0..=n).map(f64::from).collect();
        let table = refine::modify_lower_one_sided(&model, &order, 0.05, &grid).unwrap();
        for x in 0..=n {
            let l = gauss::stochastic_lower(|k, p| binom_cdf(k, n, p).unwrap(), i64::from(x), 0.05, (0.0, 1.0)).unwrap();
            assert!((l - table.lower[x as usize]).abs() < 1e-9, "n={n} x={x}: {l} vs {}", table.lower[x as usize]);
        }
    }
}

#[test]
fn difference_reflection_exhaustive() {
    let design = DiffDesign::new(4, 5, 0.05).unwrap();
    let model = DiffModel::new(design);
    let grid = GridPolicy::default();
    for kind in [DiffStatKind::Lrt, DiffStatKind::Score] {
        let stat = DiffStatistic { design, kind };
        let h = StatisticH::new(&model, &stat, NullKind::Point, grid);
        for d0 in linear_grid(-1.0, 1.0, 41) {
            let a = h.eval_all(d0);
            let b = h.eval_all(-d0);
            for x in 0..=4 {
                for y in 0..=5 {
                    let (p, q) = (a[design.index(x, y)], b[design.index(4 - x, 5 - y)]);
                    assert!((p - q).abs() < 1e-9, "{kind:?} d0={d0} ({x},{y}): {p} vs {q}");
                }
            }
        }
    }
}

#[test]
fn difference_limits_satisfy_the_reflection_identity() {
    let design = DiffDesign::new(4, 5, 0.05).unwrap();
    let grid = GridPolicy::default();
    for method in [DiffMethod::Lrt, DiffMethod::Score, DiffMethod::Wald] {
        let t = diff::diff_limits(&design, method, &grid).unwrap();
        for x in 0..=4 {
            for y in 0..=5 {
                let s = design.index(x, y);
                let r = design.index(4 - x, 5 - y);
                assert!((t.upper[s] + t.lower[r]).abs() < 1e-8, "{} ({x},{y})", method.tag());
            }
        }
    }
}

#[test]
fn difference_modification_is_a_subset() {
    let design = DiffDesign::new(4, 5, 0.05).unwrap();
    let grid = GridPolicy::default();
    let model = DiffModel::new(design);
    for method in [DiffMethod::Lrt, DiffMethod::Score] {
        let t = diff::diff_limits(&design, method, &grid).unwrap();
        let m = modify(&model, &t, 0.05, &grid).unwrap();
        assert!(m.limits.is_subset_of(&t, 1e-9), "{}", method.tag());
    }
}

#[test]
fn proportion_limits_satisfy_the_reflection_identity() {
    let grid = GridPolicy::default();
    for n in [5u32, 16] {
        let design = PropDesign::new(n, 0.05).unwrap();
        for method in [PropMethod::Cp, PropMethod::Blaker, PropMethod::Lrt] {
            let t = prop::method_limits(&design, &method, &grid).unwrap();
            for x in 0..=n as usize {
                assert!((t.upper[x] - (1.0 - t.lower[n as usize - x])).abs() < 1e-8, "{} n={n} x={x}", method.tag());
            }
        }
    }
}

#[test]
fn normal_h_is_unimodal_below_two() {
    let spec = GaussianSpec::new(5, 2.0, 0.05).unwrap();
    for (a, b) in [(0.5, 0.3), (1.0, 0.0), (1.7, -1.0), (1.99, 0.5)] {
        let xbar = 0.4;
        let mode = a * xbar + b;
        let mut prev_left = 0.0;
        let mut prev_right = f64::INFINITY;
        for i in 0..=10_000 {
            let mu = mode - 20.0 + 40.0 * f64::from(i) / 10_000.0;
            let h = gauss::h_zab(xbar, mu, a, b, &spec).unwrap();
            if mu <= mode {
                assert!(h >= prev_left - 1e-12, "rise failed at mu={mu}");
                prev_left = h;
            } else {
                assert!(h <= prev_right.min(1.0) + 1e-12, "decay failed at mu={mu}");
                prev_right = h;
            }
        }
    }
}
