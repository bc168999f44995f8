//! Polynomial NARX surrogates and sequentially built input manifolds.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{least_squares, LinalgError, Matrix};

/// Relative column-norm threshold below which an unregularised design is
/// declared rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Free-running predictions beyond this multiple of the training output
/// range count as diverged.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NarxError {
    #[error("invalid lag spec: {0}")]
    LagSpec(&'static str),
    #[error("time index {t} is below the largest lag {max_lag}")]
    Index { t: usize, max_lag: usize },
    #[error("expected {expected} input channels, got {found}")]
    Channels { expected: usize, found: usize },
    #[error("channel lengths differ")]
    Length,
    #[error("{rows} usable rows for {terms} regression terms")]
    TooFewRows { rows: usize, terms: usize },
    #[error("design matrix is rank deficient at term {term}")]
    RankDeficient { term: usize },
    #[error("initial history of {found} values, need {needed}")]
    Init { needed: usize, found: usize },
    #[error("prediction diverged at step {index}")]
    Divergence { index: usize },
    #[error("stage `{stage}` depends on missing channel `{input}`")]
    MissingDependency { stage: String, input: String },
    #[error("stage `{0}` is declared twice or shadows a raw channel")]
    DuplicateStage(String),
    #[error("stage `{stage}`: {message}")]
    Stage { stage: String, message: &'static str },
}

/// Lags in time steps: `autoregressive` on the output (each ≥ 1),
/// `exogenous[j]` on input channel `j` (each ≥ 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagSpec {
    pub autoregressive: Vec<usize>,
    pub exogenous: Vec<Vec<usize>>,
}

impl LagSpec {
    pub fn validate(&self) -> Result<(), NarxError> {
        let increasing = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
        if self.autoregressive.first().is_some_and(|&l| l == 0) {
            return Err(NarxError::LagSpec("autoregressive lags must be >= 1"));
        }
        if !increasing(&self.autoregressive) || !self.exogenous.iter().all(|l| increasing(l)) {
            return Err(NarxError::LagSpec("lags must be strictly increasing"));
        }
        Ok(())
    }

    pub fn max_lag(&self) -> usize {
        self.autoregressive.iter().chain(self.exogenous.iter().flatten()).copied().max().unwrap_or(0)
    }

    pub fn max_autoregressive_lag(&self) -> usize {
        self.autoregressive.last().copied().unwrap_or(0)
    }

    /// Length of the lag vector.
    pub fn len(&self) -> usize {
        self.autoregressive.len() + self.exogenous.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `φ(t)`: output lags first, then each input channel's lags in order.
pub fn build_lag_vector(inputs: &[&[f64]], output: &[f64], spec: &LagSpec, t: usize) -> Result<Vec<f64>, NarxError> {
    if inputs.len() != spec.exogenous.len() {
        return Err(NarxError::Channels { expected: spec.exogenous.len(), found: inputs.len() });
    }
    let max_lag = spec.max_lag();
    if t < max_lag {
        return Err(NarxError::Index { t, max_lag });
    }
    let mut phi = Vec::with_capacity(spec.len());
    fill_lag_vector(inputs, output, spec, t, &mut phi).ok_or(NarxError::Length)?;
    Ok(phi)
}

fn fill_lag_vector(inputs: &[&[f64]], output: &[f64], spec: &LagSpec, t: usize, phi: &mut Vec<f64>) -> Option<()> {
    phi.clear();
    for &l in &spec.autoregressive {
        phi.push(*output.get(t - l)?);
    }
    for (x, lags) in inputs.iter().zip(&spec.exogenous) {
        for &l in lags {
            phi.push(*x.get(t - l)?);
        }
    }
    Some(())
}

/// All exponent vectors over `n` variables with total degree ≤ `degree`,
/// constant first, graded by degree. `max_interaction` limits how many
/// distinct variables one monomial may involve.
pub fn multi_indices(n: usize, degree: usize, max_interaction: Option<usize>) -> Vec<Vec<u32>> {
    fn rec(pos: usize, left: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == cur.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for e in (0..=left).rev() {
            cur[pos] = e as u32;
            rec(pos + 1, left - e, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0u32; n];
    for d in 0..=degree {
        let start = out.len();
        rec(0, d, &mut cur, &mut out);
        if let Some(k) = max_interaction {
            let mut i = start;
            while i < out.len() {
                if out[i].iter().filter(|&&e| e > 0).count() > k {
                    out.remove(i);
                } else {
                    i += 1;
                }
            }
        }
    }
    out
}

fn eval_terms(phi: &[f64], terms: &[Vec<u32>], out: &mut [f64]) {
    for (o, alpha) in out.iter_mut().zip(terms) {
        let mut v = 1.0;
        for (&x, &e) in phi.iter().zip(alpha) {
            if e > 0 {
                v *= x.powi(e as i32);
            }
        }
        *o = v;
    }
}

/// One training or prediction record: input channels and the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarxSeries {
    pub inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl NarxSeries {
    fn input_refs(&self) -> Vec<&[f64]> {
        self.inputs.iter().map(Vec::as_slice).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarxFitOptions {
    pub degree: usize,
    pub regularization: f64,
    pub max_interaction: Option<usize>,
}

impl Default for NarxFitOptions {
    fn default() -> Self {
        Self { degree: 2, regularization: 0.0, max_interaction: Some(2) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarxModel {
    pub lag_spec: LagSpec,
    pub degree: usize,
    pub multi_indices: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
    pub channel_names: Vec<String>,
    pub train_rmse: f64,
    /// (min, max) of the training output.
    pub output_range: (f64, f64),
}

impl NarxModel {
    pub fn n_terms(&self) -> usize {
        self.multi_indices.len()
    }

    /// One-step prediction from a lag vector.
    pub fn eval(&self, phi: &[f64]) -> f64 {
        let mut terms = vec![0.0; self.n_terms()];
        eval_terms(phi, &self.multi_indices, &mut terms);
        terms.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }
}

/// Teacher-forced regressor matrix and targets over every usable row.
pub fn design_matrix(design: &[NarxSeries], spec: &LagSpec, terms: &[Vec<u32>]) -> Result<(Matrix, Vec<f64>), NarxError> {
    let start = spec.max_lag();
    let mut data = Vec::new();
    let mut target = Vec::new();
    let mut phi = Vec::with_capacity(spec.len());
    let mut row = vec![0.0; terms.len()];
    for s in design {
        if s.inputs.len() != spec.exogenous.len() {
            return Err(NarxError::Channels { expected: spec.exogenous.len(), found: s.inputs.len() });
        }
        if s.inputs.iter().any(|x| x.len() != s.output.len()) {
            return Err(NarxError::Length);
        }
        let inputs = s.input_refs();
        for t in start..s.output.len() {
            fill_lag_vector(&inputs, &s.output, spec, t, &mut phi).ok_or(NarxError::Length)?;
            eval_terms(&phi, terms, &mut row);
            data.extend_from_slice(&row);
            target.push(s.output[t]);
        }
    }
    let rows = target.len();
    Ok((Matrix::from_row_major(rows, terms.len(), data).expect("consistent shape"), target))
}

/// One-step-ahead least squares on monomials of the true lag vectors.
///
/// A constant training output yields the intercept-only model.
pub fn fit_narx(design: &[NarxSeries], spec: &LagSpec, opts: NarxFitOptions, channel_names: Vec<String>) -> Result<NarxModel, NarxError> {
    spec.validate()?;
    if !(opts.regularization >= 0.0) {
        return Err(NarxError::LagSpec("regularization must be >= 0"));
    }
    let terms = multi_indices(spec.len(), opts.degree, opts.max_interaction);
    let (x, y) = design_matrix(design, spec, &terms)?;
    if y.len() < terms.len() {
        return Err(NarxError::TooFewRows { rows: y.len(), terms: terms.len() });
    }
    let all: Vec<f64> = design.iter().flat_map(|s| s.output.iter().copied()).collect();
    let output_range = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let coefficients = if output_range.0 == output_range.1 {
        let mut c = vec![0.0; terms.len()];
        c[0] = output_range.0;
        c
    } else {
        least_squares(&x, &y, opts.regularization, RANK_TOL).map_err(|e| match e {
            LinalgError::RankDeficient { column } => NarxError::RankDeficient { term: column },
            _ => NarxError::Length,
        })?
    };
    let fitted = x.matvec(&coefficients);
    let train_rmse = (fitted.iter().zip(&y).map(|(f, t)| (f - t).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    Ok(NarxModel { lag_spec: spec.clone(), degree: opts.degree, multi_indices: terms, coefficients, channel_names, train_rmse, output_range })
}

/// Teacher-forced (one-step) predictions for `t ≥ max_lag`.
pub fn one_step_predictions(model: &NarxModel, series: &NarxSeries) -> Result<Vec<f64>, NarxError> {
    let (x, _) = design_matrix(core::slice::from_ref(series), &model.lag_spec, &model.multi_indices)?;
    Ok(x.matvec(&model.coefficients))
}

pub fn one_step_rmse(model: &NarxModel, design: &[NarxSeries]) -> Result<f64, NarxError> {
    let (x, y) = design_matrix(design, &model.lag_spec, &model.multi_indices)?;
    let f = x.matvec(&model.coefficients);
    Ok((f.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len().max(1) as f64).sqrt())
}

/// Free-running recursion: outputs before `max_lag` come from `init`, later
/// ones feed back the model's own predictions.
pub fn predict_narx(model: &NarxModel, inputs: &[&[f64]], init: &[f64]) -> Result<Vec<f64>, NarxError> {
    let spec = &model.lag_spec;
    if inputs.len() != spec.exogenous.len() {
        return Err(NarxError::Channels { expected: spec.exogenous.len(), found: inputs.len() });
    }
    let n = inputs.first().map_or(init.len(), |x| x.len());
    if inputs.iter().any(|x| x.len() != n) {
        return Err(NarxError::Length);
    }
    let start = spec.max_lag();
    if init.len() < start.min(n) {
        return Err(NarxError::Init { needed: start, found: init.len() });
    }
    let limit = DIVERGENCE_FACTOR * (model.output_range.1 - model.output_range.0).abs().max(f64::MIN_POSITIVE);
    let mut y = Vec::with_capacity(n);
    y.extend_from_slice(&init[..start.min(n)]);
    let mut phi = Vec::with_capacity(spec.len());
    let mut terms = vec![0.0; model.n_terms()];
    for t in start..n {
        y.push(0.0);
        fill_lag_vector(inputs, &y, spec, t, &mut phi).ok_or(NarxError::Length)?;
        eval_terms(&phi, &model.multi_indices, &mut terms);
        let v: f64 = terms.iter().zip(&model.coefficients).map(|(a, b)| a * b).sum();
        if !v.is_finite() || v.abs() > limit {
            return Err(NarxError::Divergence { index: t });
        }
        y[t] = v;
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticMap {
    /// Trailing mean over `window` samples (shorter at the start).
    MovingAverage { window: usize },
    /// `z(t) = a·z(t−1) + (1 − a)·x(t)`, `z(0) = x(0)`.
    FirstOrderLag { alpha: f64 },
    /// Elementwise product of all inputs.
    Product,
    /// Elementwise power of the single input.
    Power { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum StageBuilder {
    AnalyticMap { map: AnalyticMap },
    /// A frozen NARX model over the stage inputs, run free from a constant
    /// initial history.
    NarxSubmodel { model: NarxModel, init_value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldStage {
    pub name: String,
    pub inputs: Vec<String>,
    #[serde(flatten)]
    pub builder: StageBuilder,
}

fn eval_stage(stage: &ManifoldStage, inputs: &[&[f64]]) -> Result<Vec<f64>, NarxError> {
    let err = |message| NarxError::Stage { stage: stage.name.clone(), message };
    let n = inputs.first().map_or(0, |x| x.len());
    if inputs.iter().any(|x| x.len() != n) {
        return Err(err("input lengths differ"));
    }
    match &stage.builder {
        StageBuilder::AnalyticMap { map } => {
            let one = || if inputs.len() == 1 { Ok(inputs[0]) } else { Err(err("expects exactly one input")) };
            match *map {
                AnalyticMap::MovingAverage { window } => {
                    if window == 0 {
                        return Err(err("window must be >= 1"));
                    }
                    let x = one()?;
                    let mut sum = 0.0;
                    Ok((0..n)
                        .map(|t| {
                            sum += x[t];
                            if t >= window {
                                sum -= x[t - window];
                            }
                            sum / (t + 1).min(window) as f64
                        })
                        .collect())
                }
                AnalyticMap::FirstOrderLag { alpha } => {
                    let x = one()?;
                    let mut z = x.first().copied().unwrap_or(0.0);
                    Ok(x.iter()
                        .map(|&v| {
                            z = alpha * z + (1.0 - alpha) * v;
                            z
                        })
                        .collect())
                }
                AnalyticMap::Product => Ok((0..n).map(|t| inputs.iter().map(|x| x[t]).product()).collect()),
                AnalyticMap::Power { exponent } => Ok(one()?.iter().map(|v| v.powf(exponent)).collect()),
            }
        }
        StageBuilder::NarxSubmodel { model, init_value } => {
            let init = vec![*init_value; model.lag_spec.max_lag().min(n)];
            predict_narx(model, inputs, &init)
        }
    }
}

/// Evaluates stages in dependency order. Each stage sees raw channels and
/// stage outputs already computed; the result holds both. Declaration order
/// only breaks ties, so permuting it over the same graph gives the same
/// channels.
pub fn build_manifold(stages: &[ManifoldStage], raw: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<String, Vec<f64>>, NarxError> {
    let mut out = raw.clone();
    for (i, s) in stages.iter().enumerate() {
        if raw.contains_key(&s.name) || stages[..i].iter().any(|p| p.name == s.name) {
            return Err(NarxError::DuplicateStage(s.name.clone()));
        }
    }
    let mut pending: Vec<&ManifoldStage> = stages.iter().collect();
    while !pending.is_empty() {
        let ready = pending.iter().position(|s| s.inputs.iter().all(|i| out.contains_key(i)));
        let Some(idx) = ready else {
            let s = pending[0];
            let missing = s.inputs.iter().find(|i| !out.contains_key(*i)).cloned().unwrap_or_default();
            return Err(NarxError::MissingDependency { stage: s.name.clone(), input: missing });
        };
        let s = pending.remove(idx);
        let ins: Vec<&[f64]> = s.inputs.iter().map(|i| out[i].as_slice()).collect();
        let z = eval_stage(s, &ins)?;
        out.insert(s.name.to_string(), z);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(ar: &[usize], ex: &[&[usize]]) -> LagSpec {
        LagSpec { autoregressive: ar.to_vec(), exogenous: ex.iter().map(|l| l.to_vec()).collect() }
    }

    #[test]
    fn lag_vector_hand_example() {
        let phi = build_lag_vector(&[&[2.0, 3.0]], &[5.0, 7.0], &spec(&[1], &[&[0]]), 1).unwrap();
        assert_eq!(phi, vec![5.0, 3.0]);
        let phi = build_lag_vector(&[], &[5.0, 7.0, 9.0], &spec(&[1, 2], &[]), 2).unwrap();
        assert_eq!(phi, vec![7.0, 5.0]);
        assert_eq!(build_lag_vector(&[&[2.0, 3.0]], &[5.0, 7.0], &spec(&[1], &[&[0]]), 0).unwrap_err(), NarxError::Index { t: 0, max_lag: 1 });
    }

    #[test]
    fn lag_spec_rules() {
        assert!(spec(&[0], &[]).validate().is_err());
        assert!(spec(&[2, 1], &[]).validate().is_err());
        assert!(spec(&[1], &[&[0, 0]]).validate().is_err());
        assert!(spec(&[1, 3], &[&[0, 2]]).validate().is_ok());
    }

    #[test]
    fn multi_index_counts() {
        // C(n + d, d) monomials without interaction limits.
        assert_eq!(multi_indices(3, 2, None).len(), 10);
        assert_eq!(multi_indices(4, 3, None).len(), 35);
        assert_eq!(multi_indices(3, 3, Some(2)).len(), 20 - 1);
        assert_eq!(multi_indices(2, 1, None), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn moving_average_warms_up() {
        let st = ManifoldStage { name: "z".into(), inputs: vec!["w".into()], builder: StageBuilder::AnalyticMap { map: AnalyticMap::MovingAverage { window: 2 } } };
        assert_eq!(eval_stage(&st, &[&[2.0, 4.0, 6.0]]).unwrap(), vec![2.0, 3.0, 5.0]);
    }
}
