//! Sequential sampling: long-term Monte Carlo over a GP surrogate of the
//! short-term extreme value parameters, return values, exceedance-region
//! KDE, acquisition, and the outer training loop.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Condition, EnvModel};
use crate::evfit::{ev_sample, gaussian_likelihood_approx, ApproxOptions, EvFamily, FitError, ShortTermFit};
use crate::gp::{GpError, GpFitOptions, GpModel, ParamPosterior, PosteriorGrid, TrainingPoint, SCALE_FLOOR};
use crate::kde::{Bandwidth, Kde};
use crate::math::order_statistic_index;
use crate::response::{simulate_blocks_with_retry, ShortTermSimulator, SimError};
use crate::rng::{derive_seed, open01, std_normal, stream, Executor, Purpose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeqError {
    #[error("training point {point}: {source}")]
    Simulation { point: usize, source: SimError },
    #[error("training point {point}: {source}")]
    Fit { point: usize, source: FitError },
    #[error("iteration {iteration}: {source}")]
    Gp { iteration: usize, source: GpError },
    #[error("no candidate inside the operational band after {attempts} draws")]
    EmptyBand { attempts: usize },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

/// Whole 365.25-day-year states, rounded down.
pub fn states_per_year(env: &EnvModel) -> usize {
    (env.states_per_year() + 1e-9).floor() as usize
}

/// Parameters of the maximum of `k` independent block maxima (max-stability).
pub fn max_of_blocks(family: EvFamily, params: &mut [f64], k: usize) {
    if k <= 1 {
        return;
    }
    let kf = k as f64;
    match family {
        EvFamily::Gumbel => params[0] += params[1] * kf.ln(),
        EvFamily::Gev => {
            let g = params[2];
            if g.abs() < 1e-12 {
                params[0] += params[1] * kf.ln();
            } else {
                let kg = kf.powf(g);
                params[0] += params[1] * (kg - 1.0) / g;
                params[1] *= kg;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTermOptions {
    pub band: (f64, f64),
    /// Blocks per stationary state (6 for hourly states of 10-minute blocks).
    pub blocks_per_state: usize,
    /// Largest responses tracked per year for the exceedance set.
    pub top_k: usize,
    /// Fallback exceedance set size when nothing exceeds the 100-year level.
    pub fallback_points: usize,
    /// Extra stream key; `None` reuses the same condition sequence.
    pub stream_key: Option<u64>,
}

impl Default for LongTermOptions {
    fn default() -> Self {
        Self { band: (3.0, 25.0), blocks_per_state: 1, top_k: 32, fallback_points: 50, stream_key: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTermRun {
    pub years: usize,
    pub annual_maxima: Vec<f64>,
    pub exceed_conditions: Vec<Condition>,
    pub exceed_responses: Vec<f64>,
    /// True when a year had more exceedances than its tracked top-k.
    pub exceed_truncated: bool,
    /// True when nothing exceeded the 100-year level and the fallback set was used.
    pub exceed_fallback: bool,
    pub states_simulated: u64,
    pub states_total: u64,
    pub clamped_scales: u64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct TopK {
    pub(crate) items: Vec<(f64, Condition)>,
    pub(crate) cap: usize,
    /// Smallest tracked value once full, else -inf.
    floor: f64,
}

impl TopK {
    pub(crate) fn new(cap: usize) -> Self {
        Self { items: Vec::with_capacity(cap), cap, floor: f64::NEG_INFINITY }
    }

    #[inline]
    pub(crate) fn push(&mut self, y: f64, c: Condition) {
        if self.cap == 0 || y <= self.floor {
            return;
        }
        if self.items.len() < self.cap {
            self.items.push((y, c));
        } else {
            let idx = self.items.iter().position(|it| it.0 == self.floor).unwrap_or(0);
            self.items[idx] = (y, c);
        }
        if self.items.len() == self.cap {
            self.floor = self.items.iter().map(|i| i.0).fold(f64::INFINITY, f64::min);
        }
    }
}

struct YearResult {
    max: f64,
    top: TopK,
    simulated: u64,
    clamped: u64,
}

fn year_path(year: usize, key: Option<u64>) -> ([u64; 2], usize) {
    match key {
        Some(k) => ([k, year as u64], 2),
        None => ([year as u64, 0], 1),
    }
}

/// Streams used for one simulated year: conditions from
/// `(master, EnvSample, [key,] year)`, responses from
/// `(master, LongTermResponse, [key,] year)`.
pub fn year_streams(master: u64, year: usize, key: Option<u64>) -> (rand_chacha::ChaCha8Rng, rand_chacha::ChaCha8Rng) {
    let (p, n) = year_path(year, key);
    (stream(master, Purpose::EnvSample, &p[..n]), stream(master, Purpose::LongTermResponse, &p[..n]))
}

fn simulate_year<P: ParamPosterior + ?Sized>(post: &P, env: &EnvModel, opts: &LongTermOptions, master: u64, year: usize) -> YearResult {
    let (mut env_rng, mut resp_rng) = year_streams(master, year, opts.stream_key);
    let family = post.family();
    let m = post.dim();
    let mut mean = [0.0; 3];
    let mut sd = [0.0; 3];
    let mut params = [0.0; 3];
    let mut res = YearResult { max: 0.0, top: TopK::new(opts.top_k), simulated: 0, clamped: 0 };
    for _ in 0..states_per_year(env) {
        let c = env.sample_one(&mut env_rng);
        if !(c.u >= opts.band.0 && c.u <= opts.band.1) {
            continue;
        }
        res.simulated += 1;
        post.posterior(c, &mut mean[..m], &mut sd[..m]);
        for j in 0..m {
            params[j] = mean[j] + sd[j] * std_normal(&mut resp_rng);
        }
        if params[1] < SCALE_FLOOR {
            params[1] = SCALE_FLOOR;
            res.clamped += 1;
        }
        max_of_blocks(family, &mut params[..m], opts.blocks_per_state);
        let y = ev_sample(family, &params[..m], &mut resp_rng);
        if y > res.max {
            res.max = y;
        }
        res.top.push(y, c);
    }
    res
}

/// Long-term Monte Carlo over the surrogate, one independent stream pair per
/// year. Conditions outside the band contribute zero response; annual
/// maxima are floored at zero accordingly.
pub fn simulate_longterm<P, E>(post: &P, env: &EnvModel, years: usize, opts: LongTermOptions, master: u64, exec: &E) -> LongTermRun
where
    P: ParamPosterior + ?Sized,
    E: Executor,
{
    let results = exec.map_indexed(years, |y| simulate_year(post, env, &opts, master, y));
    let annual_maxima: Vec<f64> = results.iter().map(|r| r.max).collect();
    let rv100 = return_value(&annual_maxima, 100.0);
    let mut exceed_truncated = false;
    let mut pairs: Vec<(f64, Condition)> = Vec::new();
    for r in &results {
        let above: Vec<_> = r.top.items.iter().filter(|it| it.0 > rv100).collect();
        if above.len() == r.top.cap && r.top.cap > 0 {
            exceed_truncated = true;
        }
        pairs.extend(above.into_iter().copied());
    }
    let exceed_fallback = pairs.is_empty();
    if exceed_fallback {
        let mut all: Vec<(f64, Condition)> = results.iter().flat_map(|r| r.top.items.iter().copied()).collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0));
        all.truncate(opts.fallback_points);
        pairs = all;
    }
    LongTermRun {
        years,
        annual_maxima,
        exceed_conditions: pairs.iter().map(|p| p.1).collect(),
        exceed_responses: pairs.iter().map(|p| p.0).collect(),
        exceed_truncated,
        exceed_fallback,
        states_simulated: results.iter().map(|r| r.simulated).sum(),
        states_total: (years * states_per_year(env)) as u64,
        clamped_scales: results.iter().map(|r| r.clamped).sum(),
    }
}

/// `T`-year return value: order statistic `⌈(1 − 1/T)·N⌉` of the annual maxima.
pub fn return_value(annual_maxima: &[f64], t_years: f64) -> f64 {
    if annual_maxima.is_empty() {
        return f64::NAN;
    }
    let mut s = annual_maxima.to_vec();
    s.sort_by(f64::total_cmp);
    s[order_statistic_index(1.0 - 1.0 / t_years, s.len())]
}

/// Whether fewer than `2T` years back a `T`-year estimate.
pub fn return_value_warning(years: usize, t_years: f64) -> bool {
    (years as f64) < 2.0 * t_years
}

/// Fraction of annual maxima strictly above `threshold`.
pub fn failure_probability(annual_maxima: &[f64], threshold: f64) -> f64 {
    if annual_maxima.is_empty() {
        return f64::NAN;
    }
    annual_maxima.iter().filter(|&&y| y > threshold).count() as f64 / annual_maxima.len() as f64
}

pub fn exceedance_kde(points: &[Condition], bandwidth: Bandwidth) -> Kde {
    Kde::new(points, bandwidth)
}

/// How the per-output posterior standard deviations combine in the
/// acquisition function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SigmaNorm {
    #[default]
    Euclidean,
    Product,
    Max,
}

/// Combined posterior spread at `x` in normalised output units.
pub fn sigma_norm<P: ParamPosterior + ?Sized>(post: &P, x: Condition, norm: SigmaNorm) -> f64 {
    let m = post.dim();
    let mut mean = [0.0; 3];
    let mut sd = [0.0; 3];
    post.posterior(x, &mut mean[..m], &mut sd[..m]);
    let scaled = (0..m).map(|j| sd[j] / post.output_scale(j));
    match norm {
        SigmaNorm::Euclidean => scaled.map(|v| v * v).sum::<f64>().sqrt(),
        SigmaNorm::Product => scaled.product(),
        SigmaNorm::Max => scaled.fold(0.0, f64::max),
    }
}

/// Scores `a(x) = s(x)·|σ_θ(x)|` for every candidate.
pub fn acquisition_scores<P, D, E>(post: &P, density: &D, candidates: &[Condition], norm: SigmaNorm, exec: &E) -> Vec<f64>
where
    P: ParamPosterior + ?Sized,
    D: Fn(Condition) -> f64 + Sync,
    E: Executor,
{
    const CHUNK: usize = 1024;
    let chunks = candidates.len().div_ceil(CHUNK);
    exec.map_indexed(chunks, |c| {
        candidates[c * CHUNK..((c + 1) * CHUNK).min(candidates.len())]
            .iter()
            .map(|&x| density(x) * sigma_norm(post, x, norm))
            .collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Index of the highest score; ties go to the lowest index.
pub fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|b| b.0)
}

pub fn acquisition_argmax<P, D, E>(post: &P, density: &D, candidates: &[Condition], norm: SigmaNorm, exec: &E) -> Option<Condition>
where
    P: ParamPosterior + ?Sized,
    D: Fn(Condition) -> f64 + Sync,
    E: Executor,
{
    argmax_first(&acquisition_scores(post, density, candidates, norm, exec)).map(|i| candidates[i])
}

/// `n` draws from the long-term model restricted to the band, by rejection.
pub fn band_candidates<R: RngCore + ?Sized>(env: &EnvModel, band: (f64, f64), n: usize, rng: &mut R) -> Result<Vec<Condition>, SeqError> {
    let mut out = Vec::with_capacity(n);
    let limit = n.saturating_mul(1000).max(100_000);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > limit {
            return Err(SeqError::EmptyBand { attempts });
        }
        let c = env.sample_one(rng);
        if c.u >= band.0 && c.u <= band.1 {
            out.push(c);
        }
    }
    Ok(out)
}

/// Maximin Latin hypercube of `n` points in the unit square: the best of
/// `tries` random designs by smallest pairwise distance.
pub fn maximin_lhs<R: RngCore + ?Sized>(n: usize, tries: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let mut best: Vec<[f64; 2]> = Vec::new();
    let mut best_d = f64::NEG_INFINITY;
    for _ in 0..tries.max(1) {
        let mut cols = [(0..n).collect::<Vec<usize>>(), (0..n).collect::<Vec<usize>>()];
        for col in cols.iter_mut() {
            for i in (1..n).rev() {
                let j = ((open01(rng) * (i + 1) as f64) as usize).min(i);
                col.swap(i, j);
            }
        }
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|i| [(cols[0][i] as f64 + open01(rng)) / n as f64, (cols[1][i] as f64 + open01(rng)) / n as f64])
            .collect();
        let mut dmin = f64::INFINITY;
        for a in 0..n {
            for b in a + 1..n {
                let d = (pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2);
                dmin = dmin.min(d);
            }
        }
        if dmin > best_d {
            best_d = dmin;
            best = pts;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceRule {
    pub rel_change: f64,
    pub window: usize,
}

impl Default for ConvergenceRule {
    fn default() -> Self {
        Self { rel_change: 0.01, window: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeqConfig {
    pub family: EvFamily,
    pub n_seeds: usize,
    pub blocks_per_state: usize,
    pub init_design: usize,
    pub max_iters: usize,
    pub years: usize,
    pub candidates: usize,
    pub band: (f64, f64),
    /// Tail mass excluded on each side when sizing the σ_U range of the
    /// initial design.
    pub sigma_tail: f64,
    pub convergence: Option<ConvergenceRule>,
    /// Redraw the long-term condition sequence every iteration.
    pub resample_longterm: bool,
    pub sigma_norm: SigmaNorm,
    pub top_k: usize,
    pub pf_threshold: Option<f64>,
    pub approx: ApproxOptions,
    pub gp: GpFitOptions,
    /// Posterior interpolation grid (u nodes, σ nodes); `None` queries the GP exactly.
    pub grid: Option<(usize, usize)>,
}

impl Default for SeqConfig {
    fn default() -> Self {
        Self {
            family: EvFamily::Gumbel,
            n_seeds: 18,
            blocks_per_state: 1,
            init_design: 8,
            max_iters: 40,
            years: 10_000,
            candidates: 100_000,
            band: (3.0, 25.0),
            sigma_tail: 5e-4,
            convergence: None,
            resample_longterm: false,
            sigma_norm: SigmaNorm::Euclidean,
            top_k: 32,
            pf_threshold: None,
            approx: ApproxOptions::default(),
            gp: GpFitOptions::default(),
            grid: Some((221, 121)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub cond: Condition,
    pub samples: Vec<f64>,
    pub fit: ShortTermFit,
    pub failed_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub x_new: Condition,
    pub n_seeds: usize,
    /// Short-term simulations used to train the GP that produced the estimates.
    pub total_sims: usize,
    pub rv50: f64,
    pub rv100: f64,
    pub pf: Option<f64>,
    pub n_exceed: usize,
    pub clamped_scales: u64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqState {
    pub next_iter: usize,
    pub training: Vec<TrainingRecord>,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

impl SeqState {
    pub fn total_sims(&self, n_seeds: usize) -> usize {
        self.training.len() * n_seeds
    }
}

/// Runs `n_seeds` states of `blocks` blocks at `cond` and fits the Gaussian
/// likelihood approximation. Streams are keyed by the training point index.
pub fn train_point<S: ShortTermSimulator + ?Sized>(
    sim: &S,
    cond: Condition,
    point: usize,
    cfg: &SeqConfig,
    master: u64,
) -> Result<TrainingRecord, SeqError> {
    let mut samples = Vec::with_capacity(cfg.n_seeds * cfg.blocks_per_state);
    let mut counter = 0u64;
    let mut failed_seeds = 0;
    for _ in 0..cfg.n_seeds {
        let (blocks, failed) = simulate_blocks_with_retry(sim, cond, cfg.blocks_per_state, || {
            counter += 1;
            derive_seed(master, Purpose::TrainingSeeds, &[point as u64, counter - 1])
        })
        .map_err(|source| SeqError::Simulation { point, source })?;
        failed_seeds += failed;
        samples.extend(blocks);
    }
    let mut rng = stream(master, Purpose::Mcmc, &[point as u64]);
    let fit = gaussian_likelihood_approx(&samples, cfg.family, cfg.approx, &mut rng).map_err(|source| SeqError::Fit { point, source })?;
    Ok(TrainingRecord { cond, samples, fit, failed_seeds })
}

/// The outer loop, driven one iteration at a time so callers can time,
/// checkpoint and resume between steps.
pub struct SequentialSampler<'a, S: ShortTermSimulator + ?Sized, E: Executor> {
    env: &'a EnvModel,
    sim: &'a S,
    exec: &'a E,
    cfg: SeqConfig,
    master: u64,
    state: SeqState,
    gp: GpModel,
    last_run: Option<LongTermRun>,
}

impl<'a, S: ShortTermSimulator + ?Sized, E: Executor> SequentialSampler<'a, S, E> {
    /// Simulates and fits the maximin initial design and trains the first GP.
    pub fn new(env: &'a EnvModel, sim: &'a S, cfg: SeqConfig, master: u64, exec: &'a E) -> Result<Self, SeqError> {
        if cfg.init_design < 3 {
            return Err(SeqError::Config("init_design must be >= 3"));
        }
        if cfg.max_iters < 1 {
            return Err(SeqError::Config("max_iters must be >= 1"));
        }
        if cfg.years < 1 || cfg.n_seeds < 1 || cfg.candidates < 1 {
            return Err(SeqError::Config("years, n_seeds and candidates must be >= 1"));
        }
        let (s_lo, s_hi) = env.sigma_envelope(cfg.band.0, cfg.band.1, cfg.sigma_tail);
        let s_lo = s_lo.max(0.0);
        let unit = maximin_lhs(cfg.init_design, 256, &mut stream(master, Purpose::InitialDesign, &[]));
        let design: Vec<Condition> = unit
            .iter()
            .map(|p| Condition::new(cfg.band.0 + (cfg.band.1 - cfg.band.0) * p[0], s_lo + (s_hi - s_lo) * p[1]))
            .collect();
        let training: Result<Vec<_>, _> = exec.map_indexed(design.len(), |i| train_point(sim, design[i], i, &cfg, master)).into_iter().collect();
        let state = SeqState { next_iter: 1, training: training?, history: Vec::new(), converged: false };
        Self::resume(env, sim, cfg, master, exec, state)
    }

    /// Continues from a saved state; the GP is refitted from the stored
    /// training set, which reproduces it exactly.
    pub fn resume(env: &'a EnvModel, sim: &'a S, cfg: SeqConfig, master: u64, exec: &'a E, state: SeqState) -> Result<Self, SeqError> {
        let gp = fit_gp(&cfg, &state.training, state.next_iter)?;
        Ok(Self { env, sim, exec, cfg, master, state, gp, last_run: None })
    }

    pub fn state(&self) -> &SeqState {
        &self.state
    }

    pub fn gp(&self) -> &GpModel {
        &self.gp
    }

    pub fn config(&self) -> &SeqConfig {
        &self.cfg
    }

    /// Long-term run behind the most recent record, if a step has run since
    /// construction.
    pub fn last_longterm(&self) -> Option<&LongTermRun> {
        self.last_run.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.state.converged || self.state.next_iter > self.cfg.max_iters
    }

    fn longterm_options(&self, iter: usize) -> LongTermOptions {
        LongTermOptions {
            band: self.cfg.band,
            blocks_per_state: self.cfg.blocks_per_state,
            top_k: self.cfg.top_k,
            fallback_points: 50,
            stream_key: if self.cfg.resample_longterm { Some(iter as u64) } else { None },
        }
    }

    /// Long-term run with the current surrogate.
    pub fn longterm(&self, iter: usize) -> LongTermRun {
        let opts = self.longterm_options(iter);
        match self.cfg.grid {
            Some((nu, ns)) => {
                let (lo, hi) = self.env.sigma_envelope(self.cfg.band.0, self.cfg.band.1, 1e-7);
                let grid = PosteriorGrid::build(&self.gp, self.cfg.band, (lo.max(0.0), hi), nu, ns);
                simulate_longterm(&grid, self.env, self.cfg.years, opts, self.master, self.exec)
            }
            None => simulate_longterm(&self.gp, self.env, self.cfg.years, opts, self.master, self.exec),
        }
    }

    /// One iteration: long-term estimate, acquisition, new training point, refit.
    pub fn step(&mut self) -> Result<IterationRecord, SeqError> {
        let iter = self.state.next_iter;
        let run = self.longterm(iter);
        let rv50 = return_value(&run.annual_maxima, 50.0);
        let rv100 = return_value(&run.annual_maxima, 100.0);
        let pf = self.cfg.pf_threshold.map(|t| failure_probability(&run.annual_maxima, t));
        let kde = exceedance_kde(&run.exceed_conditions, Bandwidth::Auto);
        let mut rng = stream(self.master, Purpose::Candidates, &[iter as u64]);
        let candidates = band_candidates(self.env, self.cfg.band, self.cfg.candidates, &mut rng)?;
        let density = |x: Condition| kde.density(x);
        let x_new = acquisition_argmax(&self.gp, &density, &candidates, self.cfg.sigma_norm, self.exec).ok_or(SeqError::EmptyBand { attempts: 0 })?;
        let record = IterationRecord {
            iter,
            x_new,
            n_seeds: self.cfg.n_seeds,
            total_sims: self.state.total_sims(self.cfg.n_seeds),
            rv50,
            rv100,
            pf,
            n_exceed: run.exceed_conditions.len(),
            clamped_scales: run.clamped_scales,
            wall_s: 0.0,
        };
        let point = self.state.training.len();
        let tr = train_point(self.sim, x_new, point, &self.cfg, self.master)?;
        self.state.training.push(tr);
        self.gp = fit_gp(&self.cfg, &self.state.training, iter)?;
        self.state.history.push(record.clone());
        self.state.next_iter += 1;
        if let Some(rule) = self.cfg.convergence {
            self.state.converged = rv100_settled(&self.state.history, rule);
        }
        self.last_run = Some(run);
        Ok(record)
    }

    /// Sets the wall time of the most recent record (kept out of the
    /// deterministic computation).
    pub fn set_last_wall_time(&mut self, wall_s: f64) {
        if let Some(r) = self.state.history.last_mut() {
            r.wall_s = wall_s;
        }
    }
}

fn fit_gp(cfg: &SeqConfig, training: &[TrainingRecord], iteration: usize) -> Result<GpModel, SeqError> {
    let pts: Vec<TrainingPoint> = training.iter().map(|t| TrainingPoint::from_fit(t.cond, &t.fit)).collect();
    GpModel::fit(cfg.family, &pts, cfg.gp).map_err(|source| SeqError::Gp { iteration, source })
}

/// True when rv100 moved less than `rel_change` between each of the last
/// `window` consecutive iterations.
pub fn rv100_settled(history: &[IterationRecord], rule: ConvergenceRule) -> bool {
    if history.len() < rule.window + 1 {
        return false;
    }
    history[history.len() - rule.window - 1..]
        .windows(2)
        .all(|w| (w[1].rv100 - w[0].rv100).abs() <= rule.rel_change * w[0].rv100.abs())
}

/// Runs the sampler to completion.
pub fn run_sequential<S, E>(env: &EnvModel, sim: &S, cfg: SeqConfig, master: u64, exec: &E) -> Result<SeqState, SeqError>
where
    S: ShortTermSimulator + ?Sized,
    E: Executor,
{
    let mut s = SequentialSampler::new(env, sim, cfg, master, exec)?;
    while !s.is_done() {
        s.step()?;
    }
    Ok(s.state)
}
