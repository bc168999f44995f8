use extremis_core::env::*;
use extremis_core::rng::{open01, stream, Purpose};
use proptest::prelude::*;

fn weibull_indep() -> EnvModel {
    // ln σ ~ N(0, 1) independent of u.
    EnvModel::new(
        MarginalSpec::Weibull { shape: 2.0, scale: 10.0, location: 0.0 },
        ConditionalSpec::LognormalGivenU { mu_coeffs: vec![0.0], sigma_coeffs: vec![1.0] },
        TEN_MINUTES_HOURS,
    )
    .unwrap()
}

fn hybrid_model() -> EnvModel {
    EnvModel::new(
        MarginalSpec::HybridWeibullGpd { weibull_shape: 1.9, weibull_scale: 9.0, threshold: 18.0, gpd_shape: -0.1, gpd_scale: 2.5, tail_prob: None },
        ConditionalSpec::LognormalGivenU { mu_coeffs: vec![-0.2, 0.06], sigma_coeffs: vec![0.25] },
        1.0,
    )
    .unwrap()
}

// Standard normal CDF via erfc, independent of the crate's quantile routine.
fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn joint_pdf_matches_closed_forms() {
    let m = weibull_indep();
    let (u, s) = (10.0f64, 1.0f64);
    let f_w = 2.0 / 10.0 * (u / 10.0) * (-(u / 10.0f64).powi(2)).exp();
    let f_ln = (-(s.ln()).powi(2) / 2.0).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let got = m.joint_pdf(Condition::new(u, s));
    assert!((got - f_w * f_ln).abs() < 1e-14, "{got} vs {}", f_w * f_ln);
    assert!(m.joint_pdf(Condition::new(7.07, 1.0)) > 0.0);
    assert_eq!(m.joint_pdf(Condition::new(-1.0, 1.0)), 0.0);
}

#[test]
fn weibull_sample_mean() {
    let m = weibull_indep();
    let n = 1_000_000;
    let xs = m.sample_conditions(n, &mut stream(1, Purpose::EnvSample, &[]));
    let mean = xs.iter().map(|c| c.u).sum::<f64>() / n as f64;
    // Γ(1.5) = √π/2; Var = 100·(Γ(2) − Γ(1.5)²).
    let g15 = std::f64::consts::PI.sqrt() / 2.0;
    let expect = 10.0 * g15;
    let se = (100.0 * (1.0 - g15 * g15) / n as f64).sqrt();
    assert!((mean - expect).abs() < 3.0 * se, "{mean} vs {expect}");
    assert!(m.sample_conditions(0, &mut stream(1, Purpose::EnvSample, &[])).is_empty());
}

#[test]
fn sampled_u_passes_kolmogorov_smirnov() {
    let m = weibull_indep();
    let n = 1_000_000;
    let mut u: Vec<f64> = m.sample_conditions(n, &mut stream(2, Purpose::EnvSample, &[])).iter().map(|c| c.u).collect();
    u.sort_by(f64::total_cmp);
    let cdf = |x: f64| 1.0 - (-(x / 10.0f64).powi(2)).exp();
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.628 / (n as f64).sqrt(), "D = {d}");
}

#[test]
fn joint_density_integrates_to_one() {
    for m in [weibull_indep(), hybrid_model()] {
        let (umax, smax) = (60.0, 25.0);
        let n = 1_000_000;
        let mut rng = stream(3, Purpose::Verification, &[]);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += m.joint_pdf(Condition::new(umax * open01(&mut rng), smax * open01(&mut rng)));
        }
        let integral = sum / n as f64 * umax * smax;
        assert!((integral - 1.0).abs() < 0.01, "{integral}");
    }
}

#[test]
fn weibull_median_maps_to_zero() {
    let m = weibull_indep();
    let median = 10.0 * 2f64.ln().sqrt();
    let p = m.rosenblatt(Condition::new(median, 1.0)).unwrap();
    assert!(p.u1.abs() < 1e-12 && p.u2.abs() < 1e-12, "{p:?}");
}

#[test]
fn rosenblatt_roundtrip_on_random_points() {
    for m in [weibull_indep(), hybrid_model()] {
        let mut rng = stream(4, Purpose::Verification, &[]);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let x = m.sample_one(&mut rng);
            let back = m.inverse_rosenblatt(m.rosenblatt(x).unwrap()).unwrap();
            worst = worst.max(((back.u - x.u) / x.u).abs()).max(((back.sigma_u - x.sigma_u) / x.sigma_u).abs());
        }
        assert!(worst < 1e-8, "{worst}");
    }
}

#[test]
fn extreme_fractile_matches_bisection() {
    let beta = 4.9452;
    let target = phi(beta);
    for m in [weibull_indep(), hybrid_model()] {
        let got = m.inverse_rosenblatt(NormalPoint { u1: beta, u2: 0.0 }).unwrap().u;
        let want = bisect(|u| m.marginal_u.cdf(u), target, 0.0, 200.0);
        assert!((got - want).abs() < 1e-6 * want, "{got} vs {want}");
    }
}

#[test]
fn brittany_structure_config_loads_hourly() {
    let json = r#"{
        "marginal_u": {"kind": "hybrid_weibull_gpd", "weibull_shape": 1.9, "weibull_scale": 9.0, "threshold": 18.0, "gpd_shape": -0.1, "gpd_scale": 2.5},
        "conditional_sigma": {"kind": "lognormal_given_u", "mu_coeffs": [-0.2, 0.06], "sigma_coeffs": [0.25]},
        "state_duration_hours": 1.0
    }"#;
    let m: EnvModel = serde_json::from_str(json).unwrap();
    m.validate().unwrap();
    assert_eq!(m.state_duration_hours, 1.0);
    let minimal = r#"{
        "marginal_u": {"kind": "weibull", "shape": 2.0, "scale": 10.0},
        "conditional_sigma": {"kind": "lognormal_given_u", "mu_coeffs": [0.0], "sigma_coeffs": [1.0]}
    }"#;
    let m: EnvModel = serde_json::from_str(minimal).unwrap();
    assert_eq!(m.state_duration_hours, TEN_MINUTES_HOURS);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn inverse_rosenblatt_monotone_in_first_coordinate(a in -5.0f64..5.0, d in 1e-3f64..2.0, p2 in -4.0f64..4.0) {
        for m in [weibull_indep(), hybrid_model()] {
            let lo = m.inverse_rosenblatt(NormalPoint { u1: a, u2: p2 }).unwrap();
            let hi = m.inverse_rosenblatt(NormalPoint { u1: a + d, u2: p2 }).unwrap();
            prop_assert!(lo.u < hi.u);
        }
    }

    #[test]
    fn joint_pdf_is_nonnegative(u in -5.0f64..80.0, s in -1.0f64..30.0) {
        prop_assert!(hybrid_model().joint_pdf(Condition::new(u, s)) >= 0.0);
        prop_assert!(weibull_indep().joint_pdf(Condition::new(u, s)) >= 0.0);
    }
}
