use nonreg_core::analysis::{cumulative, fisher_information, hellinger_sq, kl_objective, QuadratureRule};
use nonreg_core::estimators::{bayes, mle, EstimatorSettings};
use nonreg_core::intensity::ContaminationPiece;
use nonreg_core::likelihood::{log_likelihood, normalized_lr};
use nonreg_core::simulate::simulate_sample;
use nonreg_core::windows::optimal_window;
use nonreg_core::{CatalogId, IntensityModel, RngStream, TrueIntensity, Window};
use proptest::prelude::*;

fn model(id: CatalogId) -> IntensityModel {
    IntensityModel::default_for(id).unwrap()
}

fn rule() -> QuadratureRule {
    QuadratureRule::default()
}

/// Interior point of Θ from a unit fraction.
fn interior(m: &IntensityModel, f: f64) -> f64 {
    let iv = m.theta_interval();
    iv.alpha() + (0.02 + 0.96 * f) * iv.width()
}

fn near_any(x: f64, points: &[f64], gap: f64) -> bool {
    points.iter().any(|p| (x - p).abs() < gap)
}

#[test]
fn first_derivative_matches_central_difference() {
    const STEP: f64 = 1e-5;
    for id in CatalogId::ALL {
        let m = model(id);
        if m.smoothness_order() < 1 {
            continue;
        }
        let theta_breaks: Vec<f64> = m.static_theta_breaks().iter().map(|b| b.theta).collect();
        for i in 0..50 {
            let theta = interior(&m, (i as f64 + 0.5) / 50.0);
            if near_any(theta, &theta_breaks, 1e-3) {
                continue;
            }
            let t_breaks = m.time_breakpoints(theta);
            for j in 0..50 {
                let t = m.horizon() * (j as f64 + 0.5) / 50.0;
                if near_any(t, &t_breaks, 1e-3) {
                    continue;
                }
                let d = m.theta_derivative(theta, t, 1, None).unwrap();
                let fd = (m.evaluate(theta + STEP, t).unwrap() - m.evaluate(theta - STEP, t).unwrap()) / (2.0 * STEP);
                assert!(
                    (d - fd).abs() <= 1e-6 * (1.0 + d.abs()),
                    "{id:?} theta={theta} t={t}: {d} vs {fd}"
                );
            }
        }
    }
}

#[test]
fn intensity_stays_below_its_bound() {
    for id in CatalogId::ALL {
        let m = model(id);
        let bound = m.lambda_max();
        for theta in m.theta_interval().grid(100) {
            for j in 0..100 {
                let t = m.horizon() * j as f64 / 99.0;
                let v = m.evaluate(theta, t).unwrap();
                assert!(v <= bound, "{id:?} theta={theta} t={t}: {v} > {bound}");
            }
        }
    }
}

fn catalog_id() -> impl Strategy<Value = CatalogId> {
    prop::sample::select(CatalogId::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cumulative_is_monotone(id in catalog_id(), f in 0.0..1.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let m = model(id);
        let theta = interior(&m, f);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let c1 = cumulative(&m, theta, lo * m.horizon(), &rule()).unwrap();
        let c2 = cumulative(&m, theta, hi * m.horizon(), &rule()).unwrap();
        prop_assert!(c2 - c1 >= -1e-12 * (1.0 + c2.abs()));
    }

    #[test]
    fn hellinger_is_symmetric(id in catalog_id(), f1 in 0.0..1.0f64, f2 in 0.0..1.0f64) {
        let m = model(id);
        let (t1, t2) = (interior(&m, f1), interior(&m, f2));
        let a = hellinger_sq(&m, t1, t2, &rule()).unwrap();
        let b = hellinger_sq(&m, t2, t1, &rule()).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{} vs {}", a, b);
    }

    #[test]
    fn kl_is_nonnegative(f0 in 0.0..1.0f64, f in 0.0..1.0f64, bump in 0.0..2.0f64) {
        let m = model(CatalogId::RegularExp);
        let theta0 = interior(&m, f0);
        let truth = TrueIntensity::contaminated(
            m.clone(),
            theta0,
            vec![ContaminationPiece { lo: 0.2, hi: 0.6, coefficients: vec![bump] }],
        ).unwrap();
        let v = kl_objective(&truth, &m, interior(&m, f), &rule()).unwrap();
        prop_assert!(v >= -1e-12);
        let well = TrueIntensity::well_specified(m.clone(), theta0).unwrap();
        prop_assert_eq!(kl_objective(&well, &m, theta0, &rule()).unwrap(), 0.0);
    }

    #[test]
    fn log_likelihood_adds_over_complementary_windows(
        id in prop::sample::select(vec![CatalogId::RegularExp, CatalogId::DiscfiKink, CatalogId::Changepoint, CatalogId::WindowSine]),
        f in 0.0..1.0f64,
        a in 0.0..1.0f64,
        b in 0.0..1.0f64,
        seed in 0u64..1000,
    ) {
        let m = model(id);
        let theta = interior(&m, f);
        let truth = TrueIntensity::well_specified(m.clone(), interior(&m, 0.5)).unwrap();
        let sample = simulate_sample(&truth, 5, RngStream::new(seed, 0)).unwrap();
        let tau = m.horizon();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-3);
        let w = Window::new(vec![(lo * tau, hi * tau)]).unwrap();
        let whole = log_likelihood(&m, theta, &sample, None).unwrap();
        let part = log_likelihood(&m, theta, &sample, Some(&w)).unwrap();
        let rest = log_likelihood(&m, theta, &sample, Some(&w.complement(tau))).unwrap();
        prop_assert!((whole - part - rest).abs() <= 1e-10 * (1.0 + whole.abs()), "{} vs {}", whole, part + rest);
    }

    #[test]
    fn optimal_windows_are_nested(f in 0.0..1.0f64, m1 in 0.05..0.95f64, m2 in 0.05..0.95f64) {
        let m = model(CatalogId::WindowSine);
        let theta = interior(&m, f);
        let (small, large) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        let tau = m.horizon();
        let a = optimal_window(&m, theta, small * tau).unwrap();
        let b = optimal_window(&m, theta, large * tau).unwrap();
        prop_assert!((a.measure() - small * tau).abs() < 1e-5);
        prop_assert!(a.is_subset_of(&b, 1e-6));
        let ia = fisher_information(&m, theta, Some(&a), None, &rule()).unwrap();
        let ib = fisher_information(&m, theta, Some(&b), None, &rule()).unwrap();
        prop_assert!(ib >= ia - 1e-9);
    }

    #[test]
    fn estimates_stay_in_the_parameter_set(
        id in prop::sample::select(vec![CatalogId::RegularExp, CatalogId::DiscfiKink, CatalogId::JumpShift, CatalogId::Changepoint]),
        f in 0.0..1.0f64,
        seed in 0u64..1000,
    ) {
        let m = model(id);
        let truth = TrueIntensity::well_specified(m.clone(), interior(&m, f)).unwrap();
        let sample = simulate_sample(&truth, 3, RngStream::new(seed, 0)).unwrap();
        let settings = EstimatorSettings { grid_size: 101, bayes_panels: 200, ..EstimatorSettings::default() };
        let iv = m.theta_interval();
        for v in [mle(&m, &sample, &settings, None).unwrap().value, bayes(&m, &sample, &settings, None).unwrap().value] {
            prop_assert!(v >= iv.alpha() && v <= iv.beta(), "{} outside [{}, {}]", v, iv.alpha(), iv.beta());
        }
    }

    #[test]
    fn likelihood_ratio_is_one_at_zero(f in 0.0..1.0f64, seed in 0u64..1000) {
        let m = model(CatalogId::RegularExp);
        let theta0 = interior(&m, f);
        let truth = TrueIntensity::well_specified(m.clone(), theta0).unwrap();
        let sample = simulate_sample(&truth, 4, RngStream::new(seed, 0)).unwrap();
        prop_assert_eq!(normalized_lr(&m, theta0, 0.0, 0.5, &sample).unwrap(), 1.0);
    }
}
