use extremis_core::brute::*;
use extremis_core::presets::{brittany_like_env, site_a_like_env, site_a_like_sim};
use extremis_core::response::ConstantSim;
use extremis_core::rng::{std_normal, stream, Purpose, Serial};

fn opts() -> BruteOptions {
    BruteOptions { bootstrap_resamples: 200, ..BruteOptions::default() }
}

#[test]
fn constant_simulator_returns_constant() {
    let sim = ConstantSim { value: 7.5, cut_in: 3.0, cut_out: 25.0 };
    let r = brute_force_return_values(&brittany_like_env(), &sim, 100, TruncationSpec::NONE, BruteOptions { blocks_per_state: 6, ..opts() }, 1, &Serial).unwrap();
    assert_eq!(r.rv50.estimate, 7.5);
    assert_eq!(r.rv100.estimate, 7.5);
    assert_eq!(r.rv50.se, 0.0);
}

#[test]
fn too_few_years_is_rejected() {
    let sim = ConstantSim { value: 1.0, cut_in: 3.0, cut_out: 25.0 };
    let err = brute_force_return_values(&site_a_like_env(), &sim, 99, TruncationSpec::NONE, opts(), 1, &Serial).unwrap_err();
    assert_eq!(err, BruteError::TooFewYears(99));
}

#[test]
fn negligible_truncation_leaves_return_values_unchanged() {
    let env = site_a_like_env();
    let sim = site_a_like_sim();
    let full = brute_force_return_values(&env, &sim, 100, TruncationSpec::NONE, opts(), 5, &Serial).unwrap();
    // Below 4 m/s or 0.2 m/s turbulence the response is far below any annual maximum.
    let cut = brute_force_return_values(&env, &sim, 100, TruncationSpec { cutoff_u: 4.0, cutoff_sigma: 0.2 }, opts(), 5, &Serial).unwrap();
    assert_eq!(full.annual_maxima, cut.annual_maxima);
    assert_eq!(full.rv100.estimate, cut.rv100.estimate);
    assert!(cut.fraction_simulated < full.fraction_simulated);
}

#[test]
fn tightening_cutoffs_never_raises_return_values() {
    let env = site_a_like_env();
    let sim = site_a_like_sim();
    let ladder = [(0.0, 0.0), (5.0, 1.0), (8.0, 2.0), (10.0, 3.0), (12.0, 3.5), (14.0, 4.5)];
    let runs: Vec<_> = ladder
        .iter()
        .map(|&(u, s)| brute_force_return_values(&env, &sim, 100, TruncationSpec { cutoff_u: u, cutoff_sigma: s }, opts(), 9, &Serial).unwrap())
        .collect();
    for w in runs.windows(2) {
        assert!(w[1].rv50.estimate <= w[0].rv50.estimate);
        assert!(w[1].rv100.estimate <= w[0].rv100.estimate);
        assert!(w[1].fraction_simulated < w[0].fraction_simulated);
        assert!(w[0].annual_maxima.iter().zip(&w[1].annual_maxima).all(|(a, b)| b <= a));
    }
}

#[test]
fn exceedances_lie_above_fifty_year_value() {
    let r = brute_force_return_values(&site_a_like_env(), &site_a_like_sim(), 200, TruncationSpec::NONE, opts(), 3, &Serial).unwrap();
    assert!(!r.exceed_conditions.is_empty());
    assert!(r.exceed_responses.iter().all(|&y| y > r.rv50.estimate));
    // 200 years, 50-year level: the strict exceedances number at most 4.
    assert!(r.exceed_responses.len() <= 4);
}

#[test]
fn block_bootstrap_se_tracks_order_statistic_spread() {
    // iid N(0,1) "maxima": compare the bootstrap SE of the 0.98 quantile to
    // the spread over fresh replicate samples.
    let draw = |seed: u64| -> Vec<f64> {
        let mut rng = stream(seed, Purpose::Verification, &[]);
        (0..2000).map(|_| std_normal(&mut rng)).collect()
    };
    let reps: Vec<f64> = (0..200).map(|s| extremis_core::seq::return_value(&draw(100 + s), 50.0)).collect();
    let m = reps.iter().sum::<f64>() / reps.len() as f64;
    let true_se = (reps.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt();
    let b = block_bootstrap(&draw(1), &[50.0], 10, 2000, &mut stream(2, Purpose::Bootstrap, &[]));
    assert!((b[0].se / true_se - 1.0).abs() < 0.35, "{} vs {true_se}", b[0].se);
    assert!(b[0].ci95.0 <= b[0].estimate && b[0].estimate <= b[0].ci95.1);
}
