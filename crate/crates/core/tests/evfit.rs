use extremis_core::evfit::*;
use extremis_core::linalg::{Cholesky, Matrix};
use extremis_core::rng::{stream, Purpose};
use proptest::prelude::*;

fn gumbel_draws(alpha: f64, beta: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Verification, &[n as u64]);
    (0..n).map(|_| ev_sample(EvFamily::Gumbel, &[alpha, beta], &mut rng)).collect()
}

// Independent log-likelihood: textbook Gumbel density, no shared code.
fn gumbel_ll(ys: &[f64], a: f64, b: f64) -> f64 {
    ys.iter()
        .map(|y| {
            let z = (y - a) / b;
            -b.ln() - z - (-z).exp()
        })
        .sum()
}

#[test]
fn gumbel_mle_recovers_generating_parameters() {
    let ys = gumbel_draws(10.0, 2.0, 100_000, 11);
    let fit = fit_mle(&ys, EvFamily::Gumbel).unwrap();
    assert!((fit.params[0] / 10.0 - 1.0).abs() < 0.01, "{:?}", fit.params);
    assert!((fit.params[1] / 2.0 - 1.0).abs() < 0.01, "{:?}", fit.params);
    assert!(fit.grad_norm < 1e-6);
}

#[test]
fn gev_on_gumbel_data_has_near_zero_shape() {
    let ys = gumbel_draws(0.0, 1.0, 100_000, 12);
    let fit = fit_mle(&ys, EvFamily::Gev).unwrap();
    assert!(fit.params[2].abs() < 0.05, "{:?}", fit.params);
}

#[test]
fn gev_mle_recovers_positive_shape() {
    let mut rng = stream(5, Purpose::Verification, &[]);
    let ys: Vec<f64> = (0..50_000).map(|_| ev_sample(EvFamily::Gev, &[3.0, 0.5, 0.1], &mut rng)).collect();
    let fit = fit_mle(&ys, EvFamily::Gev).unwrap();
    assert!((fit.params[2] - 0.1).abs() < 0.02, "{:?}", fit.params);
    assert!((fit.params[1] - 0.5).abs() < 0.01);
}

#[test]
fn mle_is_a_stationary_point_of_independent_likelihood() {
    let ys = gumbel_draws(4.0, 0.7, 500, 13);
    let fit = fit_mle(&ys, EvFamily::Gumbel).unwrap();
    let (a, b) = (fit.params[0], fit.params[1]);
    let best = gumbel_ll(&ys, a, b);
    for (da, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
        assert!(gumbel_ll(&ys, a + da, b + db) < best);
    }
    assert!((fit.log_likelihood - best).abs() < 1e-8 * best.abs());
}

#[test]
fn gumbel_sample_mean_is_euler_gamma() {
    let n = 1_000_000;
    let ys = gumbel_draws(0.0, 1.0, n, 14);
    let mean = ys.iter().sum::<f64>() / n as f64;
    let se = (std::f64::consts::PI.powi(2) / 6.0 / n as f64).sqrt();
    assert!((mean - 0.577_215_664_901_532_9).abs() < 3.0 * se, "{mean}");
}

#[test]
fn posterior_cloud_centres_on_mle() {
    let ys = gumbel_draws(10.0, 2.0, 5000, 15);
    let mle = fit_mle(&ys, EvFamily::Gumbel).unwrap();
    let draws = mcmc_posterior_samples(&ys, EvFamily::Gumbel, 4000, McmcOptions::default(), &mut stream(1, Purpose::Mcmc, &[])).unwrap();
    for k in 0..2 {
        let v: Vec<f64> = draws.draws.iter().map(|d| d[k]).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        // Standard error of the chain mean, allowing for autocorrelation.
        let se = 3.0 * sd / (v.len() as f64).sqrt();
        assert!((m - mle.params[k]).abs() < 2.0 * se.max(0.05 * sd), "k={k} {m} vs {}", mle.params[k]);
    }
}

// Flat prior on ln β: compare in the chain's (α, ln β) coordinates, where
// the n=20 posterior is close to Gaussian.
#[test]
fn small_sample_posterior_matches_inverse_fisher_information() {
    let ys = gumbel_draws(10.0, 2.0, 20, 16);
    let mle = fit_mle(&ys, EvFamily::Gumbel).unwrap();
    let (a, l) = (mle.params[0], mle.params[1].ln());
    let h = 1e-4;
    let f = |da: f64, dl: f64| gumbel_ll(&ys, a + da, (l + dl).exp());
    let haa = (f(h, 0.0) - 2.0 * f(0.0, 0.0) + f(-h, 0.0)) / (h * h);
    let hll = (f(0.0, h) - 2.0 * f(0.0, 0.0) + f(0.0, -h)) / (h * h);
    let hal = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
    let info = Matrix::from_row_major(2, 2, vec![-haa, -hal, -hal, -hll]).unwrap();
    let inv = Cholesky::factor(&info).unwrap().inverse();
    let draws = mcmc_posterior_samples(&ys, EvFamily::Gumbel, 40_000, McmcOptions::default(), &mut stream(2, Purpose::Mcmc, &[])).unwrap();
    let logged: Vec<Vec<f64>> = draws.draws.iter().map(|d| vec![d[0], d[1].ln()]).collect();
    let (_, cov) = mean_cov(&logged, 2);
    for i in 0..2 {
        let rel = cov[(i, i)] / inv[(i, i)];
        assert!((rel - 1.0).abs() < 0.3, "var {i}: mcmc {} vs fisher {}", cov[(i, i)], inv[(i, i)]);
    }
}

#[test]
fn posterior_variance_matches_grid_integration() {
    let ys = gumbel_draws(10.0, 2.0, 20, 16);
    // Exact posterior moments on a dense (α, ln β) grid, flat prior.
    let (na, nl) = (400, 400);
    let (a0, a1, l0, l1) = (6.0, 14.0, (0.4f64).ln(), (8.0f64).ln());
    let mut grid = Vec::with_capacity(na * nl);
    let mut max_ll = f64::NEG_INFINITY;
    for i in 0..na {
        for j in 0..nl {
            let a = a0 + (a1 - a0) * i as f64 / (na - 1) as f64;
            let l = l0 + (l1 - l0) * j as f64 / (nl - 1) as f64;
            let ll = gumbel_ll(&ys, a, l.exp());
            max_ll = max_ll.max(ll);
            grid.push((a, l.exp(), ll));
        }
    }
    let (mut w, mut ma, mut mb) = (0.0, 0.0, 0.0);
    for &(a, b, ll) in &grid {
        let p = (ll - max_ll).exp();
        w += p;
        ma += p * a;
        mb += p * b;
    }
    let (ma, mb) = (ma / w, mb / w);
    let (mut va, mut vb) = (0.0, 0.0);
    for &(a, b, ll) in &grid {
        let p = (ll - max_ll).exp() / w;
        va += p * (a - ma).powi(2);
        vb += p * (b - mb).powi(2);
    }
    let draws = mcmc_posterior_samples(&ys, EvFamily::Gumbel, 40_000, McmcOptions::default(), &mut stream(2, Purpose::Mcmc, &[])).unwrap();
    let (mean, cov) = mean_cov(&draws.draws, 2);
    assert!((mean[0] - ma).abs() < 0.05 * va.sqrt() * 3.0, "{} vs {ma}", mean[0]);
    assert!((cov[(0, 0)] / va - 1.0).abs() < 0.1, "{} vs {va}", cov[(0, 0)]);
    assert!((cov[(1, 1)] / vb - 1.0).abs() < 0.1, "{} vs {vb}", cov[(1, 1)]);
}

#[test]
fn gaussian_approx_converges_and_brackets_mle() {
    for (i, n) in [6usize, 18, 90].into_iter().enumerate() {
        let ys = gumbel_draws(10.0, 2.0, n, 100 + i as u64);
        let fit = gaussian_likelihood_approx(&ys, EvFamily::Gumbel, ApproxOptions::default(), &mut stream(3, Purpose::Mcmc, &[n as u64])).unwrap();
        assert_eq!(fit.n_obs, n);
        assert!(fit.batches >= 3);
        assert!(fit.mean[1] > 0.0);
        assert!(Cholesky::factor_jittered(&fit.cov, 1e-10).is_ok());
        for k in 0..2 {
            let sd = fit.cov[(k, k)].sqrt();
            assert!((fit.mean[k] - fit.mle[k]).abs() < 2.0 * sd, "n={n} k={k}");
        }
    }
}

#[test]
fn budget_is_enforced() {
    let ys = gumbel_draws(10.0, 2.0, 18, 7);
    let opts = ApproxOptions { rel_tol: 1e-9, batch: 200, max_draws: 1000, ..ApproxOptions::default() };
    let err = gaussian_likelihood_approx(&ys, EvFamily::Gumbel, opts, &mut stream(4, Purpose::Mcmc, &[])).unwrap_err();
    assert!(matches!(err, FitError::BudgetExceeded { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cdf_inverts_quantile(a in -50.0f64..50.0, b in 0.01f64..20.0, g in -0.5f64..0.5, p in 0.001f64..0.999) {
        for (fam, params) in [(EvFamily::Gumbel, vec![a, b]), (EvFamily::Gev, vec![a, b, g])] {
            let y = ev_quantile(fam, &params, p).unwrap();
            prop_assert!((ev_cdf(fam, &params, y) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn gumbel_mle_is_affine_equivariant(scale in 0.1f64..10.0, shift in -100.0f64..100.0, seed in 0u64..1000) {
        let ys = gumbel_draws(3.0, 1.5, 200, seed);
        let zs: Vec<f64> = ys.iter().map(|y| scale * y + shift).collect();
        let f1 = fit_mle(&ys, EvFamily::Gumbel).unwrap();
        let f2 = fit_mle(&zs, EvFamily::Gumbel).unwrap();
        prop_assert!((f2.params[0] - (scale * f1.params[0] + shift)).abs() < 1e-6 * (1.0 + f2.params[0].abs()));
        prop_assert!((f2.params[1] - scale * f1.params[1]).abs() < 1e-6 * f2.params[1]);
    }
}

#[test]
fn gev_shape_is_affine_invariant() {
    let ys = gumbel_draws(3.0, 1.5, 300, 21);
    let zs: Vec<f64> = ys.iter().map(|y| 4.0 * y - 7.0).collect();
    let f1 = fit_mle(&ys, EvFamily::Gev).unwrap();
    let f2 = fit_mle(&zs, EvFamily::Gev).unwrap();
    assert!((f1.params[2] - f2.params[2]).abs() < 1e-6);
}
