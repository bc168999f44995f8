//! Multi-output Gaussian-process regression of extreme value parameters over
//! `(U, σ_U)`.
//!
//! Each output is an independent GP with a Matérn-3/2 ARD kernel and a zero
//! prior mean in normalised output space. Training noise is heteroscedastic:
//! the per-point variance of output `j` is the `j`-th diagonal entry of that
//! point's parameter covariance.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Condition;
use crate::evfit::{EvFamily, ShortTermFit};
use crate::linalg::{Cholesky, Matrix};
use crate::optim::{minimize_bfgs, BfgsOptions};
use crate::rng::std_normal;

pub const LENGTH_SCALE_BOUNDS: (f64, f64) = (0.05, 10.0);
pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-4, 1e2);
/// Floor applied to sampled scale parameters.
pub const SCALE_FLOOR: f64 = 1e-6;
const SQRT3: f64 = 1.732_050_807_568_877_2;
const NUGGET: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("need at least 2 training points, got {0}")]
    TooFewPoints(usize),
    #[error("training point {index}: {message}")]
    InvalidTraining { index: usize, message: &'static str },
    #[error("degenerate inputs: Gram matrix of output {output} is singular (duplicate points without noise?)")]
    Degenerate { output: usize },
    #[error("hyperparameter optimisation failed for output {output}")]
    OptimisationFailed { output: usize },
}

/// Matérn-3/2 ARD kernel in normalised input space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matern32 {
    pub variance: f64,
    pub length_scales: [f64; 2],
}

impl Matern32 {
    #[inline]
    pub fn eval(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let r = self.scaled_distance(a, b);
        self.variance * (1.0 + SQRT3 * r) * (-SQRT3 * r).exp()
    }

    #[inline]
    fn scaled_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d0 = (a[0] - b[0]) / self.length_scales[0];
        let d1 = (a[1] - b[1]) / self.length_scales[1];
        (d0 * d0 + d1 * d1).sqrt()
    }
}

/// Affine map from physical inputs to zero-mean, unit-variance coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputNormalization {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl InputNormalization {
    fn from_inputs(xs: &[Condition]) -> Self {
        let n = xs.len() as f64;
        let m0 = xs.iter().map(|x| x.u).sum::<f64>() / n;
        let m1 = xs.iter().map(|x| x.sigma_u).sum::<f64>() / n;
        let s0 = (xs.iter().map(|x| (x.u - m0).powi(2)).sum::<f64>() / n).sqrt();
        let s1 = (xs.iter().map(|x| (x.sigma_u - m1).powi(2)).sum::<f64>() / n).sqrt();
        let fix = |s: f64| if s > 1e-12 { s } else { 1.0 };
        Self { mean: [m0, m1], std: [fix(s0), fix(s1)] }
    }

    #[inline]
    pub fn apply(&self, x: Condition) -> [f64; 2] {
        [(x.u - self.mean[0]) / self.std[0], (x.sigma_u - self.mean[1]) / self.std[1]]
    }
}

/// Hyperparameters and output normalisation of one output dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHyper {
    pub kernel: Matern32,
    pub y_mean: f64,
    pub y_std: f64,
    pub log_marginal_likelihood: f64,
}

#[derive(Debug, Clone)]
struct OutputState {
    chol: Cholesky,
    alpha: Vec<f64>,
}

/// Serialisable form of a fitted model; factorisations are recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpRecord {
    pub family: EvFamily,
    pub inputs: Vec<Condition>,
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<Matrix>,
    pub normalization: InputNormalization,
    pub outputs: Vec<OutputHyper>,
    /// Largest absolute correlation between parameters dropped by the
    /// independent-output noise model.
    pub max_dropped_correlation: f64,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    record: GpRecord,
    xs: Vec<[f64; 2]>,
    states: Vec<OutputState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpFitOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self { restarts: 6, max_iter: 200 }
    }
}

/// One training observation: condition, parameter mean and covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub cond: Condition,
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl TrainingPoint {
    pub fn from_fit(cond: Condition, fit: &ShortTermFit) -> Self {
        Self { cond, mean: fit.mean.clone(), cov: fit.cov.clone() }
    }
}

fn sigmoid(w: f64) -> f64 {
    1.0 / (1.0 + (-w).exp())
}

/// Maps unconstrained `w` into `[ln lo, ln hi]`; returns (log value, d/dw).
fn bounded_log(w: f64, (lo, hi): (f64, f64)) -> (f64, f64) {
    let (a, b) = (lo.ln(), hi.ln());
    let s = sigmoid(w);
    (a + (b - a) * s, (b - a) * s * (1.0 - s))
}

fn unbounded_from_log(logv: f64, (lo, hi): (f64, f64)) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    let s = ((logv - a) / (b - a)).clamp(1e-6, 1.0 - 1e-6);
    (s / (1.0 - s)).ln()
}

/// Negative log marginal likelihood and its gradient w.r.t.
/// `(ln ℓ₀, ln ℓ₁, ln v)` for one output.
pub fn neg_log_marginal_likelihood(xs: &[[f64; 2]], y: &[f64], noise: &[f64], kernel: &Matern32, grad: Option<&mut [f64; 3]>) -> f64 {
    let n = xs.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(xs[i], xs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += noise[i] + NUGGET;
    }
    let Ok(ch) = Cholesky::factor(&k) else {
        return f64::NAN;
    };
    let alpha = ch.solve(y);
    let fit = 0.5 * y.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>();
    let nll = fit + 0.5 * ch.log_det() + 0.5 * n as f64 * (2.0 * core::f64::consts::PI).ln();
    if let Some(g) = grad {
        let kinv = ch.inverse();
        *g = [0.0; 3];
        for i in 0..n {
            for j in 0..n {
                // W = α αᵀ − K⁻¹; ∂(−L)/∂θ = −½ tr(W ∂K/∂θ).
                let w = alpha[i] * alpha[j] - kinv[(i, j)];
                let d0 = (xs[i][0] - xs[j][0]) / kernel.length_scales[0];
                let d1 = (xs[i][1] - xs[j][1]) / kernel.length_scales[1];
                let r = (d0 * d0 + d1 * d1).sqrt();
                let e = (-SQRT3 * r).exp();
                let kij = kernel.variance * (1.0 + SQRT3 * r) * e;
                g[0] -= 0.5 * w * 3.0 * kernel.variance * e * d0 * d0;
                g[1] -= 0.5 * w * 3.0 * kernel.variance * e * d1 * d1;
                g[2] -= 0.5 * w * kij;
            }
        }
    }
    nll
}

fn kernel_from_w(w: &[f64]) -> (Matern32, [f64; 3]) {
    let (l0, j0) = bounded_log(w[0], LENGTH_SCALE_BOUNDS);
    let (l1, j1) = bounded_log(w[1], LENGTH_SCALE_BOUNDS);
    let (lv, jv) = bounded_log(w[2], SIGNAL_VARIANCE_BOUNDS);
    (Matern32 { variance: lv.exp(), length_scales: [l0.exp(), l1.exp()] }, [j0, j1, jv])
}

/// Deterministic multi-start points for the hyperparameter search, as kernels.
pub fn initial_kernels(restarts: usize) -> Vec<Matern32> {
    start_points(restarts).iter().map(|w| kernel_from_w(w).0).collect()
}

fn start_points(restarts: usize) -> Vec<[f64; 3]> {
    let grid: [[f64; 3]; 6] = [
        [0.0, 0.0, 1.0],
        [-0.5, -0.5, 0.0],
        [0.5, 0.5, 1.0],
        [-1.0, 0.5, 1.0],
        [0.5, -1.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    // Unit length scales and unit variance first.
    let informed = [unbounded_from_log(0.0, LENGTH_SCALE_BOUNDS), unbounded_from_log(0.0, LENGTH_SCALE_BOUNDS), unbounded_from_log(0.0, SIGNAL_VARIANCE_BOUNDS)];
    (0..restarts.max(5)).map(|s| if s == 0 { informed } else { grid[(s - 1) % grid.len()] }).collect()
}

fn optimise_output(xs: &[[f64; 2]], y: &[f64], noise: &[f64], opts: GpFitOptions, output: usize) -> Result<Matern32, GpError> {
    let mut best: Option<(f64, Matern32)> = None;
    for x0 in start_points(opts.restarts) {
        let obj = |w: &[f64], g: &mut [f64]| {
            let (kern, jac) = kernel_from_w(w);
            let mut gl = [0.0; 3];
            let v = neg_log_marginal_likelihood(xs, y, noise, &kern, Some(&mut gl));
            for i in 0..3 {
                g[i] = gl[i] * jac[i];
            }
            v
        };
        let m = minimize_bfgs(obj, &x0, BfgsOptions { max_iter: opts.max_iter, grad_tol: 1e-7 });
        if !m.value.is_finite() {
            continue;
        }
        let (kern, _) = kernel_from_w(&m.x);
        if best.as_ref().is_none_or(|(v, _)| m.value < *v) {
            best = Some((m.value, kern));
        }
    }
    best.map(|(_, k)| k).ok_or(GpError::OptimisationFailed { output })
}

fn validate_training(training: &[TrainingPoint]) -> Result<usize, GpError> {
    if training.len() < 2 {
        return Err(GpError::TooFewPoints(training.len()));
    }
    let m = training[0].mean.len();
    for (index, t) in training.iter().enumerate() {
        if t.mean.len() != m || t.cov.rows() != m || t.cov.cols() != m {
            return Err(GpError::InvalidTraining { index, message: "inconsistent output dimension" });
        }
        if !t.mean.iter().all(|v| v.is_finite()) || !t.cond.u.is_finite() || !t.cond.sigma_u.is_finite() {
            return Err(GpError::InvalidTraining { index, message: "non-finite value" });
        }
        if (0..m).any(|j| !(t.cov[(j, j)] >= 0.0)) || !t.cov.is_symmetric(1e-9 * (1.0 + t.cov.trace().abs())) {
            return Err(GpError::InvalidTraining { index, message: "covariance not symmetric PSD" });
        }
    }
    for (i, a) in training.iter().enumerate() {
        for b in &training[i + 1..] {
            if a.cond != b.cond {
                continue;
            }
            for j in 0..m {
                if a.cov[(j, j)] + b.cov[(j, j)] == 0.0 && a.mean[j] != b.mean[j] {
                    return Err(GpError::Degenerate { output: j });
                }
            }
        }
    }
    Ok(m)
}

impl GpModel {
    /// Fits one GP per output dimension by maximising the log marginal
    /// likelihood from several deterministic starting points.
    pub fn fit(family: EvFamily, training: &[TrainingPoint], opts: GpFitOptions) -> Result<Self, GpError> {
        let m = validate_training(training)?;
        let inputs: Vec<Condition> = training.iter().map(|t| t.cond).collect();
        let norm = InputNormalization::from_inputs(&inputs);
        let xs: Vec<[f64; 2]> = inputs.iter().map(|&c| norm.apply(c)).collect();
        let mut outputs = Vec::with_capacity(m);
        for j in 0..m {
            let raw: Vec<f64> = training.iter().map(|t| t.mean[j]).collect();
            let (y_mean, y_std) = output_normalization(&raw);
            let y: Vec<f64> = raw.iter().map(|v| (v - y_mean) / y_std).collect();
            let noise: Vec<f64> = training.iter().map(|t| t.cov[(j, j)] / (y_std * y_std)).collect();
            let kernel = optimise_output(&xs, &y, &noise, opts, j)?;
            let lml = -neg_log_marginal_likelihood(&xs, &y, &noise, &kernel, None);
            outputs.push(OutputHyper { kernel, y_mean, y_std, log_marginal_likelihood: lml });
        }
        let mut max_dropped_correlation: f64 = 0.0;
        for t in training {
            for a in 0..m {
                for b in 0..a {
                    let d = (t.cov[(a, a)] * t.cov[(b, b)]).sqrt();
                    if d > 0.0 {
                        max_dropped_correlation = max_dropped_correlation.max((t.cov[(a, b)] / d).abs());
                    }
                }
            }
        }
        let record = GpRecord {
            family,
            inputs,
            means: training.iter().map(|t| t.mean.clone()).collect(),
            covs: training.iter().map(|t| t.cov.clone()).collect(),
            normalization: norm,
            outputs,
            max_dropped_correlation,
        };
        Self::from_record(record)
    }

    /// Rebuilds the factorisations of a serialised model.
    pub fn from_record(record: GpRecord) -> Result<Self, GpError> {
        let xs: Vec<[f64; 2]> = record.inputs.iter().map(|&c| record.normalization.apply(c)).collect();
        let n = xs.len();
        let mut states = Vec::with_capacity(record.outputs.len());
        for (j, o) in record.outputs.iter().enumerate() {
            let mut k = Matrix::zeros(n, n);
            for a in 0..n {
                for b in 0..=a {
                    let v = o.kernel.eval(xs[a], xs[b]);
                    k[(a, b)] = v;
                    k[(b, a)] = v;
                }
                k[(a, a)] += record.covs[a][(j, j)] / (o.y_std * o.y_std) + NUGGET;
            }
            let chol = Cholesky::factor(&k).map_err(|_| GpError::Degenerate { output: j })?;
            let y: Vec<f64> = record.means.iter().map(|mu| (mu[j] - o.y_mean) / o.y_std).collect();
            let alpha = chol.solve(&y);
            states.push(OutputState { chol, alpha });
        }
        Ok(Self { record, xs, states })
    }

    pub fn record(&self) -> &GpRecord {
        &self.record
    }

    pub fn family(&self) -> EvFamily {
        self.record.family
    }

    pub fn n_train(&self) -> usize {
        self.xs.len()
    }

    /// Posterior mean and standard deviation per output in normalised
    /// output units (prior variance = kernel signal variance).
    pub fn posterior_normalized(&self, x: Condition, mean: &mut [f64], sd: &mut [f64]) {
        let xn = self.record.normalization.apply(x);
        let n = self.xs.len();
        let mut ks = vec![0.0; n];
        for (j, (o, st)) in self.record.outputs.iter().zip(&self.states).enumerate() {
            for (k, xi) in ks.iter_mut().zip(&self.xs) {
                *k = o.kernel.eval(xn, *xi);
            }
            mean[j] = ks.iter().zip(&st.alpha).map(|(a, b)| a * b).sum();
            let v = st.chol.solve_lower(&ks);
            let var = o.kernel.variance - v.iter().map(|a| a * a).sum::<f64>();
            sd[j] = var.max(0.0).sqrt();
        }
    }

    pub fn prior_variance_normalized(&self, output: usize) -> f64 {
        self.record.outputs[output].kernel.variance
    }

    pub fn log_marginal_likelihood(&self, output: usize) -> f64 {
        self.record.outputs[output].log_marginal_likelihood
    }
}

fn output_normalization(raw: &[f64]) -> (f64, f64) {
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 };
    (mean, sd)
}

/// Anything that yields a per-output posterior over the EV parameters.
pub trait ParamPosterior: Sync {
    fn dim(&self) -> usize;
    fn family(&self) -> EvFamily;
    /// Posterior mean and standard deviation in physical units.
    fn posterior(&self, x: Condition, mean: &mut [f64], sd: &mut [f64]);
    /// Per-output scale used to make standard deviations comparable.
    fn output_scale(&self, output: usize) -> f64;
}

impl ParamPosterior for GpModel {
    fn dim(&self) -> usize {
        self.record.outputs.len()
    }

    fn family(&self) -> EvFamily {
        self.record.family
    }

    fn posterior(&self, x: Condition, mean: &mut [f64], sd: &mut [f64]) {
        self.posterior_normalized(x, mean, sd);
        for (j, o) in self.record.outputs.iter().enumerate() {
            mean[j] = o.y_mean + o.y_std * mean[j];
            sd[j] *= o.y_std;
        }
    }

    fn output_scale(&self, output: usize) -> f64 {
        self.record.outputs[output].y_std
    }
}

/// Posterior mean and standard deviation at `x` (physical units).
pub fn gp_posterior<P: ParamPosterior + ?Sized>(model: &P, x: Condition) -> (Vec<f64>, Vec<f64>) {
    let mut m = vec![0.0; model.dim()];
    let mut s = vec![0.0; model.dim()];
    model.posterior(x, &mut m, &mut s);
    (m, s)
}

/// Draws EV parameters at `x`, one independent normal per output (consumes
/// one `u64` per output). Returns the draw and whether the scale was clamped
/// to [`SCALE_FLOOR`].
pub fn gp_sample_params<P: ParamPosterior + ?Sized, R: RngCore + ?Sized>(model: &P, x: Condition, rng: &mut R) -> (Vec<f64>, bool) {
    let (mut m, s) = gp_posterior(model, x);
    for j in 0..m.len() {
        let z = std_normal(rng);
        if s[j] > 0.0 {
            m[j] += s[j] * z;
        }
    }
    let clamped = m[1] < SCALE_FLOOR;
    if clamped {
        m[1] = SCALE_FLOOR;
    }
    (m, clamped)
}

/// Fixed parameters everywhere, zero posterior spread.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPosterior {
    pub family: EvFamily,
    pub params: Vec<f64>,
}

impl ParamPosterior for ConstantPosterior {
    fn dim(&self) -> usize {
        self.params.len()
    }

    fn family(&self) -> EvFamily {
        self.family
    }

    fn posterior(&self, _x: Condition, mean: &mut [f64], sd: &mut [f64]) {
        mean.copy_from_slice(&self.params);
        sd.iter_mut().for_each(|s| *s = 0.0);
    }

    fn output_scale(&self, _output: usize) -> f64 {
        1.0
    }
}

/// Bilinear interpolation table of another posterior on a regular grid.
///
/// Long-term simulation queries the posterior tens of millions of times; the
/// exact GP costs O(n²) per query. Queries outside the grid fall back to the
/// exact model.
pub struct PosteriorGrid<'a, P: ParamPosterior + ?Sized> {
    inner: &'a P,
    u_range: (f64, f64),
    s_range: (f64, f64),
    nu: usize,
    ns: usize,
    m: usize,
    /// Per node: m means followed by m standard deviations.
    table: Vec<f64>,
}

impl<'a, P: ParamPosterior + ?Sized> PosteriorGrid<'a, P> {
    pub fn build(inner: &'a P, u_range: (f64, f64), s_range: (f64, f64), nu: usize, ns: usize) -> Self {
        let m = inner.dim();
        let mut table = vec![0.0; nu * ns * 2 * m];
        let mut mean = vec![0.0; m];
        let mut sd = vec![0.0; m];
        for i in 0..nu {
            let u = u_range.0 + (u_range.1 - u_range.0) * i as f64 / (nu - 1) as f64;
            for k in 0..ns {
                let s = s_range.0 + (s_range.1 - s_range.0) * k as f64 / (ns - 1) as f64;
                inner.posterior(Condition::new(u, s), &mut mean, &mut sd);
                let base = (i * ns + k) * 2 * m;
                table[base..base + m].copy_from_slice(&mean);
                table[base + m..base + 2 * m].copy_from_slice(&sd);
            }
        }
        Self { inner, u_range, s_range, nu, ns, m, table }
    }
}

impl<P: ParamPosterior + ?Sized> ParamPosterior for PosteriorGrid<'_, P> {
    fn dim(&self) -> usize {
        self.m
    }

    fn family(&self) -> EvFamily {
        self.inner.family()
    }

    fn posterior(&self, x: Condition, mean: &mut [f64], sd: &mut [f64]) {
        let fu = (x.u - self.u_range.0) / (self.u_range.1 - self.u_range.0) * (self.nu - 1) as f64;
        let fs = (x.sigma_u - self.s_range.0) / (self.s_range.1 - self.s_range.0) * (self.ns - 1) as f64;
        if !(fu >= 0.0 && fu <= (self.nu - 1) as f64 && fs >= 0.0 && fs <= (self.ns - 1) as f64) {
            self.inner.posterior(x, mean, sd);
            return;
        }
        let i = (fu as usize).min(self.nu - 2);
        let k = (fs as usize).min(self.ns - 2);
        let (tu, ts) = (fu - i as f64, fs - k as f64);
        let w = [(1.0 - tu) * (1.0 - ts), (1.0 - tu) * ts, tu * (1.0 - ts), tu * ts];
        let nodes = [(i, k), (i, k + 1), (i + 1, k), (i + 1, k + 1)];
        let m = self.m;
        for j in 0..m {
            mean[j] = 0.0;
            sd[j] = 0.0;
        }
        for (wt, (a, b)) in w.iter().zip(nodes) {
            let base = (a * self.ns + b) * 2 * m;
            for j in 0..m {
                mean[j] += wt * self.table[base + j];
                sd[j] += wt * self.table[base + m + j];
            }
        }
    }

    fn output_scale(&self, output: usize) -> f64 {
        self.inner.output_scale(output)
    }
}
