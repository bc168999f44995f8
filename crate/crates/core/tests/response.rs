use extremis_core::env::Condition;
use extremis_core::evfit::{fit_mle, EvFamily};
use extremis_core::presets::{brittany_like_sim, site_a_like_sim};
use extremis_core::response::*;
use extremis_core::rng::{open01, stream, Purpose};

#[test]
fn wind_fluctuation_has_requested_std() {
    let sim = site_a_like_sim();
    let cond = Condition::new(12.0, 2.0);
    let s = sim.simulate_timeseries(cond, 3, 400_000.0, 0.4).unwrap();
    assert_eq!(s.len(), 1_000_000);
    let n = s.wind.len() as f64;
    let mean = s.wind.iter().sum::<f64>() / n;
    let sd = (s.wind.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((sd / 2.0 - 1.0).abs() < 0.02, "{sd}");
}

#[test]
fn unstable_step_reports_bound() {
    let sim = site_a_like_sim();
    match sim.simulate_timeseries(Condition::new(10.0, 1.0), 1, 600.0, 1.0) {
        Err(SimError::Unstable { bound, .. }) => assert!((bound - sim.dynamics.stability_bound()).abs() < 1e-15),
        other => panic!("{other:?}"),
    }
    assert!(matches!(sim.simulate_timeseries(Condition::new(10.0, 1.0), 1, 0.5, 0.1), Err(SimError::TooShort { .. })));
}

// Anderson–Darling statistic of `x` against a fitted Gumbel, with the
// small-sample modification for estimated parameters.
fn anderson_darling_gumbel(x: &[f64]) -> f64 {
    let fit = fit_mle(x, EvFamily::Gumbel).unwrap();
    let (a, b) = (fit.params[0], fit.params[1]);
    let mut z: Vec<f64> = x.iter().map(|&v| (-(-(v - a) / b).exp()).exp()).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len();
    let s: f64 = (0..n)
        .map(|i| (2 * i + 1) as f64 * (z[i].ln() + (1.0 - z[n - 1 - i]).ln()))
        .sum();
    let a2 = -(n as f64) - s / n as f64;
    a2 * (1.0 + 0.2 / (n as f64).sqrt())
}

#[test]
fn timeseries_block_maxima_look_gumbel() {
    // 1% critical value of the modified statistic for the extreme-value
    // family with both parameters estimated.
    const CRITICAL: f64 = 1.038;
    let sim = brittany_like_sim();
    let mut rng = stream(17, Purpose::Verification, &[]);
    let mut pass = 0;
    for k in 0..100 {
        let cond = Condition::new(4.0 + 20.0 * open01(&mut rng), 0.5 + 2.5 * open01(&mut rng));
        let series = sim.simulate_timeseries(cond, k, 60.0 * 600.0, 0.1).unwrap();
        let maxima = split_block_maxima(&series, 10.0);
        assert_eq!(maxima.len(), 60);
        if anderson_darling_gumbel(&maxima) < CRITICAL {
            pass += 1;
        }
    }
    assert!(pass >= 95, "{pass}/100 conditions pass");
}

#[test]
fn seeds_are_exchangeable() {
    let sim = site_a_like_sim();
    let cond = Condition::new(13.0, 2.2);
    let draw = |range: std::ops::Range<u64>| {
        let mut v: Vec<f64> = range.map(|s| sim.max_response(cond, s).unwrap()).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let (a, b) = (draw(0..10_000), draw(10_000..20_000));
    // Two-sample KS distance by merging the sorted samples.
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    let crit = 1.628 * (2.0 / 10_000.0f64).sqrt();
    assert!(d < crit, "D = {d}, critical {crit}");
}

#[test]
fn gumbel_draws_match_closed_form_moments() {
    let sim = brittany_like_sim();
    let cond = Condition::new(10.0, 1.5);
    let (r, s) = sim.law_params(cond);
    let n = 100_000;
    let mut v: Vec<f64> = (0..n).map(|k| sim.max_response(cond, k as u64).unwrap()).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    const EULER: f64 = 0.577_215_664_901_532_9;
    let sd = s * std::f64::consts::PI / 6f64.sqrt();
    assert!((mean - (r + s * EULER)).abs() < 3.0 * sd / (n as f64).sqrt());
    v.sort_by(f64::total_cmp);
    let median = v[n / 2];
    let want = r - s * 2f64.ln().ln();
    // Density of the Gumbel at its median is ln 2 / (2s).
    let se = 0.5 / (2f64.ln() / (2.0 * s)) / (n as f64).sqrt();
    assert!((median - want).abs() < 3.0 * se, "{median} vs {want}");
}

#[test]
fn block_split_counts() {
    let dt = 1.0;
    let series = |minutes: usize| {
        let n = minutes * 60;
        ResponseSeries { t: (0..n).map(|k| k as f64).collect(), wind: vec![0.0; n], rotor: vec![0.0; n], y: (0..n).map(|k| k as f64).collect(), dt }
    };
    let m = split_block_maxima(&series(60), 10.0);
    assert_eq!(m.len(), 6);
    assert_eq!(m, (1..=6).map(|b| (b * 600 - 1) as f64).collect::<Vec<_>>());
    assert_eq!(split_block_maxima(&series(25), 10.0).len(), 2);
    assert!(split_block_maxima(&series(5), 10.0).is_empty());
}

