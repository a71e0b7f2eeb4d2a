use optratio::design::{optimal_ratio, required_sizes};
use optratio::models::{self, calibrated_model, theoretical_components, Family, ModelSpec, TargetSummary};
use optratio::numeric::integrate;
use optratio::roc::{auc_tie_corrected, weighted_summary};
use optratio::variance::auc_moment_components;
use optratio::{DesignParams, Marker, WeightMeasure};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pearson(pairs: &[[f64; 2]]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p[1]).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p[0] - mx) * (p[1] - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p[0] - mx).powi(2)).sum();
    let syy: f64 = pairs.iter().map(|p| (p[1] - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn binormal_pauc_calibration_against_fpr_quadrature() {
    // independent route: integrate R(u) = Φ(μ + Φ⁻¹(u)) over u directly
    let t = TargetSummary::pauc(0.0, 0.6, [0.30, 0.40]).unwrap();
    let mu = models::calibrate_binormal(&t).unwrap();
    for (l, target) in t.values.iter().enumerate() {
        let area = integrate(
            |u| optratio::normal::cdf(mu[l] + optratio::normal::quantile(u.max(1e-300)).unwrap()),
            1e-300,
            0.6,
            1e-13,
        )
        .unwrap();
        assert!((area - target).abs() < 1e-9, "marker {l}: {area}");
    }
    assert!((mu[0] - 0.613849).abs() < 1e-5);
    assert!((mu[1] - 1.130846).abs() < 1e-5);
}

#[test]
fn calibration_round_trip_all_families() {
    let cases = [
        TargetSummary::auc([0.70, 0.80]).unwrap(),
        TargetSummary::pauc(0.0, 0.6, [0.30, 0.35]).unwrap(),
        TargetSummary::pauc(0.1, 0.5, [0.15, 0.25]).unwrap(),
        TargetSummary::new(WeightMeasure::PointMass(0.2), [0.5, 0.7]).unwrap(),
    ];
    for family in [Family::Binormal, Family::Bilognormal, Family::BiExponential] {
        for t in &cases {
            let model = calibrated_model(family, t, 0.2).unwrap();
            for l in 0..2 {
                let got = model.summary(&t.statistic, l).unwrap();
                assert!((got - t.values[l]).abs() < 1e-8, "{family:?} {t:?}: {got}");
            }
        }
    }
}

#[test]
fn exponential_pauc_calibration_matches_closed_form() {
    let t = TargetSummary::pauc(0.0, 0.6, [0.30, 0.35]).unwrap();
    let b = models::calibrate_biexponential(&t).unwrap();
    for (beta, p) in b.iter().zip(t.values) {
        let k = 1.0 + 1.0 / beta;
        assert!((0.6f64.powf(k) / k - p).abs() < 1e-10);
    }
}

#[test]
fn samplers_reproduce_target_aucs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = TargetSummary::auc([0.70, 0.70]).unwrap();
    for family in [Family::Binormal, Family::BiExponential] {
        let model = calibrated_model(family, &t, 0.2).unwrap();
        let s = models::sample(&model, 20_000, 20_000, &mut rng);
        for marker in Marker::BOTH {
            let auc = auc_tie_corrected(&s, marker).unwrap();
            assert!((auc - 0.70).abs() < 0.01, "{family:?}: {auc}");
        }
    }
}

#[test]
fn fgm_independence_and_joint_cdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let indep = ModelSpec::biexponential([2.0, 3.0], 0.0).unwrap();
    let draws = indep.sample_controls(100_000, &mut rng);
    assert!(pearson(&draws).abs() < 0.03);

    let rho = 0.25;
    let model = ModelSpec::biexponential([1.5, 2.5], rho).unwrap();
    let draws = model.sample_controls(100_000, &mut rng);
    let theta = 4.0 * rho;
    let mut worst: f64 = 0.0;
    for i in 1..20 {
        for j in 1..20 {
            let (p, q) = (i as f64 / 20.0, j as f64 / 20.0);
            let x = -(1.0 - p).ln() / 1.5;
            let y = -(1.0 - q).ln() / 2.5;
            let empirical = draws.iter().filter(|d| d[0] <= x && d[1] <= y).count() as f64 / draws.len() as f64;
            let h = p * q * (1.0 + theta * (1.0 - p) * (1.0 - q));
            worst = worst.max((empirical - h).abs());
        }
    }
    assert!(worst < 0.01, "Kolmogorov distance {worst}");
}

#[test]
fn lognormal_and_normal_give_identical_rank_statistics() {
    let bn = ModelSpec::binormal([0.7, 0.9], 0.4).unwrap();
    let ln = ModelSpec::bilognormal([0.7, 0.9], 0.4).unwrap();
    let a = models::sample(&bn, 300, 250, &mut ChaCha8Rng::seed_from_u64(8));
    let b = models::sample(&ln, 300, 250, &mut ChaCha8Rng::seed_from_u64(8));
    let w = WeightMeasure::Partial { lo: 0.0, hi: 0.6 };
    for marker in Marker::BOTH {
        assert_eq!(auc_tie_corrected(&a, marker).unwrap(), auc_tie_corrected(&b, marker).unwrap());
        assert_eq!(weighted_summary(&a, &w, marker).unwrap(), weighted_summary(&b, &w, marker).unwrap());
    }
}

#[test]
fn binormal_auc_components_and_plan() {
    let t = TargetSummary::auc([0.70, 0.75]).unwrap();
    let model = calibrated_model(Family::Binormal, &t, 0.1).unwrap();
    let c = theoretical_components(&model, &WeightMeasure::FullAuc).unwrap();
    assert!((c.v_x - 0.113394).abs() < 1e-6 && (c.v_y - 0.113394).abs() < 1e-6, "{c:?}");
    let r = optimal_ratio(&c).unwrap();
    let plan = required_sizes(&c, r, &DesignParams::default()).unwrap();
    assert!((plan.total as f64 / 1421.0 - 1.0).abs() < 0.02, "{plan:?}");
}

#[test]
fn theory_matches_monte_carlo_moment_components() {
    let t = TargetSummary::auc([0.70, 0.80]).unwrap();
    for family in [Family::Binormal, Family::BiExponential] {
        let model = calibrated_model(family, &t, 0.2).unwrap();
        let theory = theoretical_components(&model, &WeightMeasure::FullAuc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let reps = 200;
        let draws: Vec<_> = (0..reps)
            .map(|_| auc_moment_components(&models::sample(&model, 200, 200, &mut rng)).unwrap())
            .collect();
        for (get, want) in [
            (Box::new(|c: &optratio::VarianceComponents| c.v_x) as Box<dyn Fn(&_) -> f64>, theory.v_x),
            (Box::new(|c: &optratio::VarianceComponents| c.v_y), theory.v_y),
        ] {
            let vals: Vec<f64> = draws.iter().map(|c| get(c)).collect();
            let mean = vals.iter().sum::<f64>() / reps as f64;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
            let se = sd / (reps as f64).sqrt();
            assert!((mean - want).abs() < 3.0 * se, "{family:?}: mean {mean} theory {want} se {se}");
        }
    }
}

#[test]
fn exponential_auc_ratio_near_one_and_a_half() {
    let t = TargetSummary::auc([0.70, 0.75]).unwrap();
    let sweep = models::ratio_sweep(Family::BiExponential, &t, &[-0.25, 0.0, 0.1, 0.25]).unwrap();
    for (rho, r) in sweep {
        assert!((1.3..=1.7).contains(&r), "rho {rho}: {r}");
    }
}

#[test]
fn binormal_auc_ratio_is_one() {
    let t = TargetSummary::auc([0.70, 0.80]).unwrap();
    let sweep = models::ratio_sweep(Family::Binormal, &t, &[-0.9, -0.5, 0.0, 0.5, 0.9]).unwrap();
    for (rho, r) in sweep {
        assert!((r - 1.0).abs() < 0.05, "rho {rho}: {r}");
    }
}

#[test]
fn point_mass_components_match_integral_limit() {
    // a narrow partial band, rescaled by its width², approaches the point-mass form
    let model = ModelSpec::binormal([0.8, 1.1], 0.3).unwrap();
    let point = theoretical_components(&model, &WeightMeasure::PointMass(0.3)).unwrap();
    let eps = 1e-3;
    let band = theoretical_components(&model, &WeightMeasure::Partial { lo: 0.3 - eps, hi: 0.3 + eps }).unwrap();
    let scale = (2.0 * eps) * (2.0 * eps);
    assert!((band.v_x / scale - point.v_x).abs() < 1e-2 * point.v_x, "{band:?} {point:?}");
    assert!((band.v_y / scale - point.v_y).abs() < 1e-2 * point.v_y, "{band:?} {point:?}");
}
