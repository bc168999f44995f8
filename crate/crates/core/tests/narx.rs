use std::collections::BTreeMap;

use extremis_core::env::Condition;
use extremis_core::linalg::Matrix;
use extremis_core::narx::*;
use extremis_core::presets::site_a_like_sim;
use extremis_core::response::ResponseSeries;
use extremis_core::rng::{open01, std_normal, stream, Purpose};
use proptest::prelude::*;

fn white(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Verification, &[]);
    (0..n).map(|_| std_normal(&mut rng)).collect()
}

fn arx(x: &[f64], y0: f64) -> Vec<f64> {
    let mut y = vec![y0];
    for t in 1..x.len() {
        y.push(0.5 * y[t - 1] + 0.3 * x[t]);
    }
    y
}

fn linear_spec() -> LagSpec {
    LagSpec { autoregressive: vec![1], exogenous: vec![vec![0]] }
}

fn linear_opts() -> NarxFitOptions {
    NarxFitOptions { degree: 1, regularization: 0.0, max_interaction: None }
}

fn fit_linear(n: usize) -> (NarxModel, Vec<f64>, Vec<f64>) {
    let x = white(n, 1);
    let y = arx(&x, 0.0);
    let m = fit_narx(&[NarxSeries { inputs: vec![x.clone()], output: y.clone() }], &linear_spec(), linear_opts(), vec!["x".into()]).unwrap();
    (m, x, y)
}

#[test]
fn recovers_noiseless_arx_coefficients() {
    let (m, _, _) = fit_linear(500);
    let expect = [0.0, 0.5, 0.3];
    for (c, e) in m.coefficients.iter().zip(expect) {
        assert!((c - e).abs() < 1e-10, "{:?}", m.coefficients);
    }
    assert!(m.train_rmse < 1e-12);
}

#[test]
fn free_run_matches_analytic_recursion() {
    let (m, _, _) = fit_linear(500);
    let x = white(10_000, 2);
    let truth = arx(&x, 0.7);
    let pred = predict_narx(&m, &[&x], &[0.7]).unwrap();
    let worst = pred.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn zero_input_and_init_stay_zero() {
    let (m, _, _) = fit_linear(200);
    let pred = predict_narx(&m, &[&[0.0; 100]], &[0.0]).unwrap();
    assert!(pred.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn constant_output_fits_intercept_only() {
    let x = white(100, 3);
    let m = fit_narx(&[NarxSeries { inputs: vec![x], output: vec![4.25; 100] }], &linear_spec(), linear_opts(), vec![]).unwrap();
    assert_eq!(m.coefficients, vec![4.25, 0.0, 0.0]);
}

#[test]
fn collinear_design_needs_regularization() {
    let x = white(200, 4);
    let y = arx(&x, 0.0);
    let spec = LagSpec { autoregressive: vec![1], exogenous: vec![vec![0], vec![0]] };
    let design = [NarxSeries { inputs: vec![x.clone(), x], output: y }];
    assert!(matches!(fit_narx(&design, &spec, linear_opts(), vec![]), Err(NarxError::RankDeficient { .. })));
    let ridge = NarxFitOptions { regularization: 1e-6, ..linear_opts() };
    let m = fit_narx(&design, &spec, ridge, vec![]).unwrap();
    // The shared input coefficient splits evenly between the copies.
    assert!((m.coefficients[2] - 0.15).abs() < 1e-4 && (m.coefficients[3] - 0.15).abs() < 1e-4);
}

#[test]
fn residuals_are_orthogonal_to_regressors() {
    let x = white(400, 5);
    let y: Vec<f64> = arx(&x, 0.0).iter().zip(white(400, 6)).map(|(a, e)| a + 0.1 * e + 0.05 * a * a).collect();
    let spec = LagSpec { autoregressive: vec![1, 2], exogenous: vec![vec![0, 1]] };
    let design = [NarxSeries { inputs: vec![x], output: y }];
    let m = fit_narx(&design, &spec, NarxFitOptions { degree: 2, regularization: 0.0, max_interaction: None }, vec![]).unwrap();
    let (a, t) = design_matrix(&design, &spec, &m.multi_indices).unwrap();
    let r: Vec<f64> = a.matvec(&m.coefficients).iter().zip(&t).map(|(f, y)| y - f).collect();
    for j in 0..a.cols() {
        let col: Vec<f64> = (0..a.rows()).map(|i| a[(i, j)]).collect();
        let dot: f64 = col.iter().zip(&r).map(|(c, e)| c * e).sum();
        let scale = col.iter().map(|c| c * c).sum::<f64>().sqrt() * r.iter().map(|e| e * e).sum::<f64>().sqrt();
        assert!(dot.abs() <= 1e-8 * scale.max(1e-300), "column {j}");
    }
}

#[test]
fn predictions_are_causal() {
    let (m, _, _) = fit_linear(200);
    let x = white(300, 7);
    let base = predict_narx(&m, &[&x], &[0.0]).unwrap();
    let mut x2 = x.clone();
    x2[150] += 5.0;
    let pert = predict_narx(&m, &[&x2], &[0.0]).unwrap();
    assert_eq!(base[..150], pert[..150]);
    assert_ne!(base[150], pert[150]);
}

#[test]
fn unstable_recursion_reports_divergence() {
    let (mut m, _, _) = fit_linear(200);
    m.coefficients = vec![0.0, 2.0, 1.0];
    let err = predict_narx(&m, &[&[1.0; 200]], &[1.0]).unwrap_err();
    let NarxError::Divergence { index } = err else { panic!("{err:?}") };
    assert!(index > 10 && index < 200);
}

#[test]
fn short_init_is_rejected() {
    let (m, _, _) = fit_linear(200);
    let m2 = NarxModel { lag_spec: LagSpec { autoregressive: vec![1, 2], exogenous: vec![vec![0]] }, multi_indices: vec![vec![0, 0, 0]], coefficients: vec![1.0], ..m };
    assert_eq!(predict_narx(&m2, &[&[0.0; 10]], &[0.0]).unwrap_err(), NarxError::Init { needed: 2, found: 1 });
}

#[test]
fn model_json_roundtrip() {
    let (m, _, _) = fit_linear(100);
    let back: NarxModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back, m);
}

fn turbine_series(seed: u64, cond: Condition) -> ResponseSeries {
    site_a_like_sim().simulate_timeseries(cond, seed, 1000.0, 0.1).unwrap()
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

// Three output lags let the model recover the previous forcing exactly.
fn raw_spec() -> LagSpec {
    LagSpec { autoregressive: vec![1, 2, 3], exogenous: vec![vec![0, 1, 2]] }
}

#[test]
fn fits_turbine_response_one_step() {
    let s = turbine_series(1, Condition::new(11.0, 2.0));
    let design = [NarxSeries { inputs: vec![s.wind.clone()], output: s.y.clone() }];
    let m = fit_narx(&design, &raw_spec(), NarxFitOptions::default(), vec!["wind".into()]).unwrap();
    let rmse = one_step_rmse(&m, &design).unwrap();
    assert!(rmse < 0.05 * std_dev(&s.y), "{rmse} vs {}", std_dev(&s.y));
}

fn manifold_stages(rotor_model: NarxModel, init: f64) -> Vec<ManifoldStage> {
    vec![
        ManifoldStage { name: "wind_avg".into(), inputs: vec!["wind".into()], builder: StageBuilder::AnalyticMap { map: AnalyticMap::MovingAverage { window: 50 } } },
        ManifoldStage { name: "rotor".into(), inputs: vec!["wind".into()], builder: StageBuilder::NarxSubmodel { model: rotor_model, init_value: init } },
        ManifoldStage { name: "rotor_slow".into(), inputs: vec!["rotor".into()], builder: StageBuilder::AnalyticMap { map: AnalyticMap::FirstOrderLag { alpha: 0.9 } } },
    ]
}

#[test]
fn manifold_never_degrades_one_step_fit() {
    let series: Vec<ResponseSeries> = [(11.0, 2.0), (8.0, 1.2), (15.0, 2.8)].iter().enumerate().map(|(i, &(u, s))| turbine_series(10 + i as u64, Condition::new(u, s))).collect();
    // Stage 2: a NARX emulator of the rotor-effective wind, trained then frozen.
    let rotor_design: Vec<NarxSeries> = series.iter().map(|s| NarxSeries { inputs: vec![s.wind.clone()], output: s.rotor.clone() }).collect();
    let rotor_spec = LagSpec { autoregressive: vec![1], exogenous: vec![vec![0]] };
    let rotor_model = fit_narx(&rotor_design, &rotor_spec, NarxFitOptions { degree: 1, ..NarxFitOptions::default() }, vec!["wind".into()]).unwrap();
    let init = series[0].rotor[0];
    let stages = manifold_stages(rotor_model, init);

    let raw_design: Vec<NarxSeries> = series.iter().map(|s| NarxSeries { inputs: vec![s.wind.clone()], output: s.y.clone() }).collect();
    let raw = fit_narx(&raw_design, &raw_spec(), NarxFitOptions::default(), vec!["wind".into()]).unwrap();

    let aug_design: Vec<NarxSeries> = series
        .iter()
        .map(|s| {
            let z = build_manifold(&stages, &BTreeMap::from([("wind".to_string(), s.wind.clone())])).unwrap();
            NarxSeries { inputs: vec![s.wind.clone(), z["wind_avg"].clone(), z["rotor"].clone(), z["rotor_slow"].clone()], output: s.y.clone() }
        })
        .collect();
    let aug_spec = LagSpec { autoregressive: vec![1, 2, 3], exogenous: vec![vec![0, 1, 2], vec![0], vec![0], vec![0]] };
    let aug = fit_narx(&aug_design, &aug_spec, NarxFitOptions::default(), vec![]).unwrap();
    let (r_raw, r_aug) = (one_step_rmse(&raw, &raw_design).unwrap(), one_step_rmse(&aug, &aug_design).unwrap());
    assert!(r_aug <= r_raw * (1.0 + 1e-9), "{r_aug} > {r_raw}");
}

#[test]
fn manifold_respects_dependencies_regardless_of_order() {
    let w = white(500, 8);
    let raw = BTreeMap::from([("wind".to_string(), w)]);
    let (m, _, _) = fit_linear(100);
    let mut stages = manifold_stages(NarxModel { channel_names: vec!["wind".into()], ..m }, 0.0);
    let a = build_manifold(&stages, &raw).unwrap();
    assert_eq!(a.keys().cloned().collect::<Vec<_>>(), ["rotor", "rotor_slow", "wind", "wind_avg"]);
    stages.reverse();
    assert_eq!(build_manifold(&stages, &raw).unwrap(), a);
    let (r, slow) = (&a["rotor"], &a["rotor_slow"]);
    assert_eq!(slow[0], r[0]);
    for t in 1..r.len() {
        assert_eq!(slow[t], 0.9 * slow[t - 1] + (1.0 - 0.9) * r[t]);
    }
}

#[test]
fn missing_dependency_names_stage() {
    let raw = BTreeMap::from([("wind".to_string(), vec![1.0; 10])]);
    let stages = vec![ManifoldStage { name: "sq".into(), inputs: vec!["pitch".into()], builder: StageBuilder::AnalyticMap { map: AnalyticMap::Power { exponent: 2.0 } } }];
    assert_eq!(build_manifold(&stages, &raw).unwrap_err(), NarxError::MissingDependency { stage: "sq".into(), input: "pitch".into() });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lag_vector_length(ar in prop::collection::btree_set(1usize..6, 0..4), ex in prop::collection::vec(prop::collection::btree_set(0usize..6, 0..4), 0..3), seed in 0u64..100) {
        let spec = LagSpec { autoregressive: ar.into_iter().collect(), exogenous: ex.into_iter().map(|s| s.into_iter().collect()).collect() };
        let mut rng = stream(seed, Purpose::Verification, &[]);
        let n = 20;
        let y: Vec<f64> = (0..n).map(|_| open01(&mut rng)).collect();
        let xs: Vec<Vec<f64>> = spec.exogenous.iter().map(|_| (0..n).map(|_| open01(&mut rng)).collect()).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let phi = build_lag_vector(&refs, &y, &spec, spec.max_lag()).unwrap();
        prop_assert_eq!(phi.len(), spec.autoregressive.len() + spec.exogenous.iter().map(Vec::len).sum::<usize>());
    }
}

#[test]
fn design_matrix_rows_follow_lag_trimming() {
    let x = white(50, 9);
    let y = arx(&x, 0.0);
    let terms = multi_indices(2, 1, None);
    let (a, t): (Matrix, Vec<f64>) = design_matrix(&[NarxSeries { inputs: vec![x.clone()], output: y.clone() }], &linear_spec(), &terms).unwrap();
    assert_eq!(a.rows(), 49);
    assert_eq!(t[0], y[1]);
    assert_eq!(a.row(0), &[1.0, y[0], x[1]]);
}
