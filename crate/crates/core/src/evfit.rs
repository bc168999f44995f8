//! Short-term extreme value fitting: Gumbel/GEV likelihood, maximum
//! likelihood, random-walk Metropolis posterior sampling and the batched
//! Gaussian approximation of the parameter likelihood.
//!
//! Parameters are ordered `(α, β[, γ])`: location, scale, shape. Internally
//! the optimiser and the chain work on `(α, ln β[, γ])`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Cholesky, Matrix};
use crate::math::EULER_GAMMA;
use crate::optim::{hessian_from_gradient, minimize_bfgs, BfgsOptions};
use crate::rng::{open01, std_normal};

/// Below this |γ| the GEV closed forms switch to the Gumbel limit.
pub const SHAPE_SERIES_SWITCH: f64 = 1e-8;
pub const DEFAULT_SHAPE_BOUND: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("{family:?} fit needs at least {min} samples, got {n}")]
    TooFewSamples { family: EvFamily, n: usize, min: usize },
    #[error("all samples are equal")]
    Degenerate,
    #[error("samples contain non-finite values")]
    NonFinite,
    #[error("MLE did not converge: {iterations} iterations, mean gradient norm {grad_norm:e}")]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("probability level {0} outside (0, 1)")]
    Level(f64),
    #[error("pathological chain: acceptance rate {rate:.4}")]
    PathologicalChain { rate: f64 },
    #[error("posterior approximation did not settle within {draws} draws")]
    BudgetExceeded { draws: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvFamily {
    Gumbel,
    Gev,
}

impl EvFamily {
    pub fn dim(self) -> usize {
        match self {
            EvFamily::Gumbel => 2,
            EvFamily::Gev => 3,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            EvFamily::Gumbel => &["alpha", "beta"],
            EvFamily::Gev => &["alpha", "beta", "gamma"],
        }
    }

    pub fn min_samples(self) -> usize {
        match self {
            EvFamily::Gumbel => 3,
            EvFamily::Gev => 5,
        }
    }
}

fn shape_of(family: EvFamily, params: &[f64]) -> f64 {
    match family {
        EvFamily::Gumbel => 0.0,
        EvFamily::Gev => params[2],
    }
}

fn check_params(family: EvFamily, params: &[f64]) -> Result<(), FitError> {
    if params.len() != family.dim() {
        return Err(FitError::InvalidParams("wrong parameter count"));
    }
    if !params.iter().all(|p| p.is_finite()) {
        return Err(FitError::InvalidParams("non-finite parameter"));
    }
    if !(params[1] > 0.0) {
        return Err(FitError::InvalidParams("scale must be > 0"));
    }
    Ok(())
}

/// CDF of the family at `y`.
pub fn ev_cdf(family: EvFamily, params: &[f64], y: f64) -> f64 {
    let (a, b, g) = (params[0], params[1], shape_of(family, params));
    let z = (y - a) / b;
    if g.abs() < SHAPE_SERIES_SWITCH {
        return (-(-z).exp()).exp();
    }
    let t = 1.0 + g * z;
    if t <= 0.0 {
        return if g > 0.0 { 0.0 } else { 1.0 };
    }
    (-(-(t.ln()) / g).exp()).exp()
}

/// Quantile at level `p`: `α − β ln(−ln p)` (Gumbel) or
/// `α + (β/γ)((−ln p)^{−γ} − 1)` (GEV).
pub fn ev_quantile(family: EvFamily, params: &[f64], p: f64) -> Result<f64, FitError> {
    check_params(family, params)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(FitError::Level(p));
    }
    Ok(quantile_unchecked(family, params, p))
}

fn quantile_unchecked(family: EvFamily, params: &[f64], p: f64) -> f64 {
    let (a, b, g) = (params[0], params[1], shape_of(family, params));
    let mlp = -p.ln();
    if g.abs() < SHAPE_SERIES_SWITCH {
        a - b * mlp.ln()
    } else {
        a + b * (-g * mlp.ln()).exp_m1() / g
    }
}

/// One inverse-CDF draw; consumes exactly one `u64`. A non-positive scale
/// collapses to the location.
pub fn ev_sample<R: RngCore + ?Sized>(family: EvFamily, params: &[f64], rng: &mut R) -> f64 {
    let p = open01(rng);
    if !(params[1] > 0.0) {
        return params[0];
    }
    quantile_unchecked(family, params, p)
}

/// Log-density and its gradient w.r.t. `(α, ln β, γ)` for one observation.
/// Returns `None` outside the support.
#[inline]
fn logpdf_grad(y: f64, alpha: f64, log_beta: f64, gamma: f64, grad: Option<&mut [f64]>) -> Option<f64> {
    let beta = log_beta.exp();
    let z = (y - alpha) / beta;
    if gamma.abs() < SHAPE_SERIES_SWITCH {
        let e = (-z).exp();
        if !e.is_finite() {
            return None;
        }
        if let Some(g) = grad {
            g[0] = (1.0 - e) / beta;
            g[1] = -1.0 + z * (1.0 - e);
            if g.len() > 2 {
                g[2] = -z + (1.0 - e) * 0.5 * z * z;
            }
        }
        return Some(-log_beta - z - e);
    }
    let x = gamma * z;
    let t = 1.0 + x;
    if !(t > 0.0) {
        return None;
    }
    let q = x.ln_1p() / gamma;
    let a = (-q).exp();
    if !a.is_finite() {
        return None;
    }
    if let Some(g) = grad {
        g[0] = (1.0 + gamma - a) / (beta * t);
        g[1] = -1.0 + z * (1.0 + gamma - a) / t;
        if g.len() > 2 {
            // d = (q − z/t)/γ, by series when γz is small to avoid cancellation.
            let d = if x.abs() < 1e-3 {
                let mut sum = 0.0;
                let mut pow = 1.0;
                for k in 2..14 {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    sum += sign * (k as f64 - 1.0) / k as f64 * pow;
                    pow *= x;
                }
                z * z * sum
            } else {
                (q - z / t) / gamma
            };
            g[2] = -z / t + (1.0 - a) * d;
        }
    }
    Some(-log_beta - (1.0 + gamma) * q - a)
}

/// Log-likelihood at transformed parameters `(α, ln β[, γ])`, writing the
/// gradient into `grad` when given. `-∞` outside the support.
pub fn log_likelihood_transformed(family: EvFamily, samples: &[f64], theta: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
    let gamma = shape_of(family, theta);
    let d = family.dim();
    let mut gi = [0.0; 3];
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut total = 0.0;
    for &y in samples {
        let want = grad.is_some();
        let lp = logpdf_grad(y, theta[0], theta[1], gamma, if want { Some(&mut gi[..d]) } else { None });
        match lp {
            Some(v) => total += v,
            None => return f64::NEG_INFINITY,
        }
        if let Some(g) = grad.as_deref_mut() {
            for k in 0..d {
                g[k] += gi[k];
            }
        }
    }
    total
}

/// Log-likelihood at natural parameters `(α, β[, γ])`.
pub fn log_likelihood(family: EvFamily, samples: &[f64], params: &[f64]) -> f64 {
    if !(params[1] > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut th = params.to_vec();
    th[1] = params[1].ln();
    log_likelihood_transformed(family, samples, &th, None)
}

fn to_natural(theta: &[f64]) -> Vec<f64> {
    let mut p = theta.to_vec();
    p[1] = theta[1].exp();
    p
}

fn check_samples(samples: &[f64], family: EvFamily) -> Result<(f64, f64), FitError> {
    if samples.len() < family.min_samples() {
        return Err(FitError::TooFewSamples { family, n: samples.len(), min: family.min_samples() });
    }
    if !samples.iter().all(|v| v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > 0.0) || var.sqrt() <= 1e-14 * mean.abs() {
        return Err(FitError::Degenerate);
    }
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub family: EvFamily,
    pub params: Vec<f64>,
    pub log_likelihood: f64,
    /// Gradient norm per observation at the optimum, transformed coordinates.
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Maximum likelihood estimate by BFGS from a method-of-moments start.
///
/// The GEV shape is kept inside `±shape_bound` through `γ = b·tanh(w)`.
pub fn fit_mle(samples: &[f64], family: EvFamily) -> Result<MleFit, FitError> {
    fit_mle_bounded(samples, family, DEFAULT_SHAPE_BOUND)
}

pub fn fit_mle_bounded(samples: &[f64], family: EvFamily, shape_bound: f64) -> Result<MleFit, FitError> {
    let (mean, sd) = check_samples(samples, family)?;
    let n = samples.len() as f64;
    let beta0 = sd * 6f64.sqrt() / core::f64::consts::PI;
    // Work in units of the sample spread so tolerances are scale-free.
    let scale = sd;
    let ys: Vec<f64> = samples.iter().map(|y| (y - mean) / scale).collect();
    let d = family.dim();
    let mut x0 = vec![-EULER_GAMMA * beta0 / scale, (beta0 / scale).ln()];
    if d == 3 {
        x0.push(0.0);
    }
    let mut g3 = [0.0; 3];
    let objective = |x: &[f64], g: &mut [f64]| -> f64 {
        let mut th = [x[0], x[1], 0.0];
        if d == 3 {
            th[2] = shape_bound * x[2].tanh();
        }
        let ll = log_likelihood_transformed(family, &ys, &th[..d], Some(&mut g3[..d]));
        if !ll.is_finite() {
            return f64::NAN;
        }
        g[0] = -g3[0] / n;
        g[1] = -g3[1] / n;
        if d == 3 {
            let th2 = x[2].tanh();
            g[2] = -g3[2] * shape_bound * (1.0 - th2 * th2) / n;
        }
        -ll / n
    };
    let m = minimize_bfgs(objective, &x0, BfgsOptions { max_iter: 1000, grad_tol: 1e-10 });
    let mut th = vec![m.x[0], m.x[1]];
    if d == 3 {
        th.push(shape_bound * m.x[2].tanh());
    }
    // Newton polish in (α, ln β, γ) unless the shape sits on its bound.
    let interior = d == 2 || th[2].abs() < 0.999 * shape_bound;
    if interior {
        for _ in 0..4 {
            let mut g = vec![0.0; d];
            let ll = log_likelihood_transformed(family, &ys, &th, Some(&mut g));
            let h = hessian_from_gradient(
                |x, out| {
                    log_likelihood_transformed(family, &ys, x, Some(out));
                },
                &th,
                1e-5,
            );
            let Ok(ch) = Cholesky::factor(&h.scaled(-1.0)) else { break };
            let step = ch.solve(&g);
            let cand: Vec<f64> = th.iter().zip(&step).map(|(a, s)| a + s).collect();
            let ll_new = log_likelihood_transformed(family, &ys, &cand, None);
            if !(ll_new >= ll - 1e-12 * ll.abs()) || (d == 3 && cand[2].abs() > shape_bound) {
                break;
            }
            th = cand;
        }
    }
    let mut g = vec![0.0; d];
    let ll = log_likelihood_transformed(family, &ys, &th, Some(&mut g));
    if d == 3 && th[2].abs() >= 0.999 * shape_bound {
        // On the bound only the free coordinates need a vanishing gradient.
        g[2] = 0.0;
    }
    let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt() / n;
    if !(grad_norm < 1e-6) || !ll.is_finite() {
        return Err(FitError::NonConvergence { iterations: m.iterations, grad_norm });
    }
    let mut params = to_natural(&th);
    params[0] = mean + scale * params[0];
    params[1] *= scale;
    let log_likelihood = ll - n * scale.ln();
    Ok(MleFit { family, params, log_likelihood, grad_norm, iterations: m.iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcOptions {
    /// Burn-in steps as a fraction of the first batch's raw chain length.
    pub burn_in_fraction: f64,
    pub thin: usize,
    pub shape_bound: f64,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self { burn_in_fraction: 0.2, thin: 5, shape_bound: DEFAULT_SHAPE_BOUND }
    }
}

/// Random-walk Metropolis chain on `(α, ln β[, γ])` with a flat prior.
///
/// The proposal starts at `(2.38²/d)·H⁻¹` from the observed information at
/// the MLE and is adapted only during burn-in (covariance of the burn-in
/// path and a scale factor steered towards 20–40% acceptance); afterwards it
/// is frozen so the kept draws come from a proper Markov chain.
pub struct MetropolisChain<'a> {
    family: EvFamily,
    samples: &'a [f64],
    opts: McmcOptions,
    state: Vec<f64>,
    ll: f64,
    chol: Matrix,
    accepted: usize,
    proposed: usize,
    burned_in: bool,
}

impl<'a> MetropolisChain<'a> {
    pub fn new(samples: &'a [f64], family: EvFamily, mle: &MleFit, opts: McmcOptions) -> Result<Self, FitError> {
        let d = family.dim();
        let mut start = mle.params.clone();
        start[1] = start[1].ln();
        let ll = log_likelihood_transformed(family, samples, &start, None);
        if !ll.is_finite() {
            return Err(FitError::InvalidParams("MLE outside support"));
        }
        let h = hessian_from_gradient(
            |x, out| {
                let v = log_likelihood_transformed(family, samples, x, Some(out));
                if !v.is_finite() {
                    out.iter_mut().for_each(|o| *o = 0.0);
                }
            },
            &start,
            1e-5,
        );
        let factor = 2.38 * 2.38 / d as f64;
        let cov = match Cholesky::factor(&h.scaled(-1.0)) {
            Ok(ch) => ch.inverse().scaled(factor),
            Err(_) => {
                // Bound-pinned shape: fall back to a diagonal guess.
                Matrix::from_fn(d, d, |i, j| {
                    if i != j {
                        0.0
                    } else {
                        let hii = -h[(i, i)];
                        factor * if hii > 0.0 { 1.0 / hii } else { 1e-2 }
                    }
                })
            }
        };
        let chol = lower_factor(&cov)?;
        Ok(Self { family, samples, opts, state: start, ll, chol, accepted: 0, proposed: 0, burned_in: false })
    }

    fn step<R: RngCore + ?Sized>(&mut self, rng: &mut R, scale: f64) -> bool {
        let d = self.state.len();
        let mut z = [0.0; 3];
        for v in z.iter_mut().take(d) {
            *v = std_normal(rng);
        }
        let mut cand = [0.0; 3];
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.chol[(i, j)] * z[j];
            }
            cand[i] = self.state[i] + scale * s;
        }
        let u = open01(rng);
        if d == 3 && cand[2].abs() > self.opts.shape_bound {
            return false;
        }
        let ll = log_likelihood_transformed(self.family, self.samples, &cand[..d], None);
        if ll.is_finite() && u.ln() < ll - self.ll {
            self.state.copy_from_slice(&cand[..d]);
            self.ll = ll;
            true
        } else {
            false
        }
    }

    fn burn_in<R: RngCore + ?Sized>(&mut self, steps: usize, rng: &mut R) -> Result<(), FitError> {
        let d = self.state.len();
        let mut scale = 1.0;
        let window = 100usize;
        let mut path: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let mut acc = 0;
        for k in 1..=steps {
            if self.step(rng, scale) {
                acc += 1;
            }
            path.push(self.state.clone());
            if k % window == 0 {
                let rate = acc as f64 / window as f64;
                if rate < 0.2 {
                    scale *= 0.7;
                } else if rate > 0.4 {
                    scale *= 1.3;
                }
                acc = 0;
                // Re-shape the proposal from the second half of the path so far.
                if k >= 4 * window {
                    let tail = &path[k / 2..];
                    let (_, cov) = mean_cov(tail, d);
                    let mut c = cov.scaled(2.38 * 2.38 / d as f64);
                    for i in 0..d {
                        c[(i, i)] += 1e-12;
                    }
                    if let Ok(l) = lower_factor(&c) {
                        self.chol = l;
                        scale = 1.0;
                    }
                }
            }
        }
        self.chol = self.chol.scaled(scale);
        self.burned_in = true;
        Ok(())
    }

    /// Draws `n` thinned states (natural parameters). The first call runs
    /// burn-in for `burn_in_fraction · n · thin` steps.
    pub fn draw<R: RngCore + ?Sized>(&mut self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>, FitError> {
        if !self.burned_in {
            let steps = ((self.opts.burn_in_fraction * (n * self.opts.thin) as f64).ceil() as usize).max(500);
            self.burn_in(steps, rng)?;
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..self.opts.thin.max(1) {
                self.proposed += 1;
                if self.step(rng, 1.0) {
                    self.accepted += 1;
                }
            }
            out.push(to_natural(&self.state));
        }
        let rate = self.acceptance_rate();
        if !(0.01..=0.99).contains(&rate) {
            return Err(FitError::PathologicalChain { rate });
        }
        Ok(out)
    }

    /// Acceptance rate after burn-in.
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

fn lower_factor(c: &Matrix) -> Result<Matrix, FitError> {
    Cholesky::factor(c).map(|ch| ch.lower().clone()).map_err(|_| FitError::InvalidParams("proposal covariance not positive definite"))
}

/// Sample mean and (n − 1)-normalised covariance of row vectors.
pub fn mean_cov(rows: &[Vec<f64>], d: usize) -> (Vec<f64>, Matrix) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for i in 0..d {
            mean[i] += r[i];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = Matrix::zeros(d, d);
    for r in rows {
        for i in 0..d {
            for j in 0..=i {
                cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1.0).max(1.0);
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcDraws {
    pub draws: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
}

/// `n_draws` thinned posterior draws started at the MLE.
pub fn mcmc_posterior_samples<R: RngCore + ?Sized>(
    samples: &[f64],
    family: EvFamily,
    n_draws: usize,
    opts: McmcOptions,
    rng: &mut R,
) -> Result<McmcDraws, FitError> {
    let mle = fit_mle_bounded(samples, family, opts.shape_bound)?;
    let mut chain = MetropolisChain::new(samples, family, &mle, opts)?;
    let draws = chain.draw(n_draws, rng)?;
    Ok(McmcDraws { draws, acceptance_rate: chain.acceptance_rate() })
}

/// Tracks successive `(mean, covariance)` estimates and reports when the
/// last three agree elementwise within `rel_tol`.
///
/// Entry differences are measured relative to the larger magnitude of the
/// pair, floored at `abs_floor` and at `rel_floor` times the entry's natural
/// scale (posterior standard deviation for means, `√(c_ii c_jj)` for
/// covariances) so near-zero entries do not stall the rule.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub rel_floor: f64,
    history: Vec<(Vec<f64>, Vec<f64>)>,
}

impl ConvergenceMonitor {
    pub fn new(rel_tol: f64) -> Self {
        Self { rel_tol, abs_floor: 1e-8, rel_floor: 1.0, history: Vec::new() }
    }

    /// Pushes an estimate given as a flat vector with per-entry natural
    /// scales; returns whether the last three estimates agree.
    pub fn push(&mut self, estimate: Vec<f64>, scales: Vec<f64>) -> bool {
        self.history.push((estimate, scales));
        self.converged()
    }

    pub fn converged(&self) -> bool {
        let n = self.history.len();
        if n < 3 {
            return false;
        }
        let last = &self.history[n - 3..];
        for a in 0..3 {
            for b in a + 1..3 {
                if !self.agree(&last[a], &last[b]) {
                    return false;
                }
            }
        }
        true
    }

    fn agree(&self, a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>)) -> bool {
        a.0.iter().zip(&b.0).zip(a.1.iter().zip(&b.1)).all(|((x, y), (sx, sy))| {
            let denom = x.abs().max(y.abs()).max(self.abs_floor).max(self.rel_floor * sx.max(*sy));
            (x - y).abs() <= self.rel_tol * denom
        })
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }
}

/// Flattens `(mean, cov)` into the monitor's estimate and scale vectors.
pub fn estimate_with_scales(mean: &[f64], cov: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let d = mean.len();
    let sd: Vec<f64> = (0..d).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let mut est = mean.to_vec();
    let mut scales = sd.clone();
    for i in 0..d {
        for j in 0..=i {
            est.push(cov[(i, j)]);
            scales.push(sd[i] * sd[j]);
        }
    }
    (est, scales)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxOptions {
    pub rel_tol: f64,
    /// Thinned draws per batch.
    pub batch: usize,
    pub max_draws: usize,
    pub mcmc: McmcOptions,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        Self { rel_tol: 0.01, batch: 1000, max_draws: 200_000, mcmc: McmcOptions::default() }
    }
}

/// Gaussian approximation of the parameter likelihood at one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortTermFit {
    pub family: EvFamily,
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub n_obs: usize,
    pub mcmc_draws_used: usize,
    pub batches: usize,
    pub acceptance_rate: f64,
    pub mle: Vec<f64>,
}

/// Accumulates MCMC draws in batches until three consecutive running
/// estimates of mean and covariance agree within `rel_tol`.
pub fn gaussian_likelihood_approx<R: RngCore + ?Sized>(
    samples: &[f64],
    family: EvFamily,
    opts: ApproxOptions,
    rng: &mut R,
) -> Result<ShortTermFit, FitError> {
    let mle = fit_mle_bounded(samples, family, opts.mcmc.shape_bound)?;
    let mut chain = MetropolisChain::new(samples, family, &mle, opts.mcmc)?;
    let d = family.dim();
    let mut monitor = ConvergenceMonitor::new(opts.rel_tol);
    let mut all: Vec<Vec<f64>> = Vec::new();
    let mut batches = 0;
    loop {
        let draws = chain.draw(opts.batch, rng)?;
        all.extend(draws);
        batches += 1;
        let (mean, cov) = mean_cov(&all, d);
        let (est, scales) = estimate_with_scales(&mean, &cov);
        if monitor.push(est, scales) {
            return Ok(ShortTermFit {
                family,
                mean,
                cov,
                n_obs: samples.len(),
                mcmc_draws_used: all.len(),
                batches,
                acceptance_rate: chain.acceptance_rate(),
                mle: mle.params,
            });
        }
        if all.len() + opts.batch > opts.max_draws {
            return Err(FitError::BudgetExceeded { draws: all.len() });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn gumbel_quantiles() {
        let p = [0.0, 1.0];
        assert!(ev_quantile(EvFamily::Gumbel, &p, (-1f64).exp()).unwrap().abs() < 1e-15);
        assert!((ev_quantile(EvFamily::Gumbel, &p, 0.5).unwrap() - 0.366_512_920_581_664_3).abs() < 1e-12);
        let g = ev_quantile(EvFamily::Gev, &[0.0, 1.0, 1e-12], 0.5).unwrap();
        assert!((g - 0.366_512_920_581_664_3).abs() < 1e-9);
        assert!(ev_quantile(EvFamily::Gumbel, &[0.0, -1.0], 0.5).is_err());
        assert!(ev_quantile(EvFamily::Gumbel, &p, 1.0).is_err());
    }

    #[test]
    fn degenerate_and_short_samples() {
        assert_eq!(fit_mle(&[1.0, 1.0, 1.0], EvFamily::Gumbel).unwrap_err(), FitError::Degenerate);
        assert!(matches!(fit_mle(&[1.0, 2.0], EvFamily::Gumbel), Err(FitError::TooFewSamples { .. })));
        assert!(matches!(fit_mle(&[1.0, 2.0, 3.0, 4.0], EvFamily::Gev), Err(FitError::TooFewSamples { .. })));
    }

    #[test]
    fn shape_gradient_matches_differences() {
        let ys = [0.3, -1.2, 2.5, 0.9, 4.0];
        for &gamma in &[0.2, -0.15, 1e-5, 0.0] {
            let th = [0.1, 0.2, gamma];
            let mut g = [0.0; 3];
            log_likelihood_transformed(EvFamily::Gev, &ys, &th, Some(&mut g));
            for k in 0..3 {
                let h = 1e-6;
                let mut a = th;
                let mut b = th;
                a[k] += h;
                b[k] -= h;
                let fd = (log_likelihood_transformed(EvFamily::Gev, &ys, &a, None)
                    - log_likelihood_transformed(EvFamily::Gev, &ys, &b, None))
                    / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-5 * fd.abs().max(1.0), "γ={gamma} k={k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn monitor_needs_three_agreeing_estimates() {
        let mut m = ConvergenceMonitor::new(0.01);
        assert!(!m.push(vec![1.0], vec![0.0]));
        assert!(!m.push(vec![1.5], vec![0.0]));
        assert!(!m.push(vec![1.001], vec![0.0]));
        // Two agreeing estimates are not enough.
        assert!(!m.push(vec![1.002], vec![0.0]));
        assert!(m.push(vec![1.0015], vec![0.0]));
        // A later outlier breaks the run again.
        assert!(!m.push(vec![1.2], vec![0.0]));
    }

    #[test]
    fn monitor_floor_for_zero_entries() {
        let mut m = ConvergenceMonitor::new(0.01);
        for v in [1e-12, -1e-12, 5e-13] {
            m.push(vec![v], vec![0.0]);
        }
        assert!(m.converged());
    }

    #[test]
    fn sampler_degenerate_scale() {
        let mut rng = stream(1, Purpose::Verification, &[]);
        for _ in 0..10 {
            assert_eq!(ev_sample(EvFamily::Gumbel, &[3.0, 0.0], &mut rng), 3.0);
        }
    }

    #[test]
    fn chain_is_reproducible() {
        let ys: Vec<f64> = {
            let mut r = stream(2, Purpose::Verification, &[]);
            (0..30).map(|_| ev_sample(EvFamily::Gumbel, &[5.0, 1.0], &mut r)).collect()
        };
        let a = mcmc_posterior_samples(&ys, EvFamily::Gumbel, 200, McmcOptions::default(), &mut stream(3, Purpose::Mcmc, &[])).unwrap();
        let b = mcmc_posterior_samples(&ys, EvFamily::Gumbel, 200, McmcOptions::default(), &mut stream(3, Purpose::Mcmc, &[])).unwrap();
        assert_eq!(a, b);
        assert!(a.acceptance_rate > 0.1 && a.acceptance_rate < 0.6, "{}", a.acceptance_rate);
    }
}
