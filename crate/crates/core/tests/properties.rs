use optratio::design::{final_test, optimal_ratio, power_at, required_sizes, split_total};
use optratio::roc::{delong_difference, delta_statistic, weighted_summary};
use optratio::two_stage::second_stage_sizes;
use optratio::variance::{delong_components, delta_components};
use optratio::{DesignParams, Estimator, Marker, PairedSample, SmoothingSpec, TwoStageState, VarianceComponents, WeightMeasure};
use proptest::prelude::*;

fn arm(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec([-3.0f64..3.0, -3.0f64..3.0], len)
}

fn paired_sample() -> impl Strategy<Value = PairedSample> {
    (arm(2..=25), arm(2..=25)).prop_map(|(x, y)| PairedSample::new(x, y).unwrap())
}

fn weight() -> impl Strategy<Value = WeightMeasure> {
    prop_oneof![
        Just(WeightMeasure::FullAuc),
        (0.0f64..0.5, 0.5f64..1.0).prop_map(|(lo, hi)| WeightMeasure::Partial { lo, hi }),
        (0.05f64..0.95).prop_map(WeightMeasure::PointMass),
    ]
}

fn components() -> impl Strategy<Value = VarianceComponents> {
    (1e-3f64..1.0, 1e-3f64..1.0).prop_map(|(a, b)| VarianceComponents::new(a, b))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn delong_is_invariant_under_monotone_transforms(s in paired_sample()) {
        let t = s
            .map_marker(Marker::First, |v| v.exp())
            .map_marker(Marker::Second, |v| v * v * v + 2.0 * v);
        prop_assert_eq!(delong_difference(&s).unwrap(), delong_difference(&t).unwrap());
        let (a, b) = (delong_components(&s).unwrap(), delong_components(&t).unwrap());
        prop_assert_eq!((a.v_x, a.v_y), (b.v_x, b.v_y));
        let smoothing = SmoothingSpec::silverman();
        let fa = final_test(&s, &Estimator::DeLong, &smoothing, 0.05);
        let fb = final_test(&t, &Estimator::DeLong, &smoothing, 0.05);
        if let (Ok(fa), Ok(fb)) = (fa, fb) {
            prop_assert_eq!(fa.reject, fb.reject);
        }
    }

    #[test]
    fn delta_statistic_is_rank_based(s in paired_sample(), w in weight()) {
        let t = s.map_marker(Marker::First, |v| 5.0 * v - 1.0).map_marker(Marker::Second, f64::atan);
        prop_assert_eq!(delta_statistic(&s, &w).unwrap(), delta_statistic(&t, &w).unwrap());
        let smoothing = SmoothingSpec::silverman();
        if let Ok(a) = delta_components(&s, &w, &smoothing) {
            let b = delta_components(&t, &w, &smoothing).unwrap();
            prop_assert_eq!((a.v_x, a.v_y), (b.v_x, b.v_y));
        }
    }

    #[test]
    fn statistics_ignore_subject_order(s in paired_sample(), w in weight(), k in 0usize..50) {
        let rotate = |v: &[[f64; 2]]| {
            let mut v = v.to_vec();
            let len = v.len();
            v.rotate_left(k % len);
            v.reverse();
            v
        };
        let t = PairedSample::new(rotate(s.cases()), rotate(s.controls())).unwrap();
        prop_assert_eq!(delta_statistic(&s, &w).unwrap(), delta_statistic(&t, &w).unwrap());
        prop_assert_eq!(delong_difference(&s).unwrap(), delong_difference(&t).unwrap());
        let (a, b) = (delong_components(&s).unwrap(), delong_components(&t).unwrap());
        prop_assert!(close(a.v_x, b.v_x) && close(a.v_y, b.v_y), "{:?} {:?}", a, b);
    }

    #[test]
    fn summaries_stay_within_weight_mass(s in paired_sample(), w in weight()) {
        for marker in Marker::BOTH {
            let v = weighted_summary(&s, &w, marker).unwrap();
            prop_assert!(v >= 0.0 && v <= w.mass() + 1e-12, "{}", v);
        }
    }

    #[test]
    fn optimal_ratio_is_scale_free(c in components(), k in 1e-3f64..1e3) {
        let scaled = VarianceComponents::new(c.v_x * k, c.v_y * k);
        prop_assert!(close(optimal_ratio(&c).unwrap(), optimal_ratio(&scaled).unwrap()));
    }

    #[test]
    fn optimal_ratio_minimizes_required_total(c in components(), r in 0.05f64..20.0, delta in 0.02f64..0.3) {
        let params = DesignParams { delta1: delta, ..Default::default() };
        let best = required_sizes(&c, optimal_ratio(&c).unwrap(), &params).unwrap();
        let other = required_sizes(&c, r, &params).unwrap();
        prop_assert!(best.total_exact() <= other.total_exact() * (1.0 + 1e-12));
    }

    #[test]
    fn power_rises_with_total(c in components(), r in 0.2f64..5.0, n in 20usize..2000, extra in 1usize..500) {
        let params = DesignParams::default();
        let low = power_at(&c, r, n, &params).unwrap();
        let high = power_at(&c, r, n + extra, &params).unwrap();
        prop_assert!(high >= low);
    }

    #[test]
    fn required_sizes_achieve_target_power(c in components(), r in 0.2f64..5.0, power in 0.5f64..0.99) {
        let params = DesignParams { power: Some(power), ..Default::default() };
        let plan = required_sizes(&c, r, &params).unwrap();
        prop_assert_eq!(plan.cases + plan.controls, plan.total);
        prop_assert!(power_at(&c, r, plan.total, &params).unwrap() >= power - 1e-9);
    }

    #[test]
    fn split_conserves_total(total in 2usize..100_000, r in 0.01f64..100.0) {
        let (cases, controls) = split_total(total, r);
        prop_assert_eq!(cases + controls, total);
        prop_assert!((cases as f64 - total as f64 * r / (1.0 + r)).abs() <= 0.5 + 1e-9);
    }

    #[test]
    fn second_stage_conserves_budget(total in 10usize..5000, r in 0.05f64..20.0, f1 in 0.0f64..0.5, f2 in 0.0f64..0.5) {
        let m1 = (total as f64 * f1) as usize;
        let n1 = (total as f64 * f2) as usize;
        let (m2, n2) = second_stage_sizes(total, r, (m1, n1)).unwrap();
        prop_assert_eq!(m1 + n1 + m2 + n2, total);
    }

    #[test]
    fn two_stage_state_round_trips_through_text(c in components(), total in 100usize..3000) {
        let params = DesignParams { total_n: Some(total), ..Default::default() };
        let state = optratio::two_stage::plan_initial(&c, &params).unwrap();
        let (m1, n1) = optratio::two_stage::default_stage1(total);
        let state = state.begin_stage1(m1, n1).unwrap().update_with_components(&c, (m1, n1)).unwrap();
        let text = state.to_text();
        prop_assert_eq!(TwoStageState::from_text(&text).unwrap(), state);
    }
}
