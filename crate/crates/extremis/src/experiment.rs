//! Named experiments: a config record in, output files and a summary
//! record out. Also run comparison and the demo pipelines.

use std::path::{Path, PathBuf};
use std::time::Instant;

use extremis_core::brute::{
    block_bootstrap, bootstrap_quantile, brute_force_return_values, BootstrapSummary, BruteError, BruteForceResult, BruteOptions,
    TruncationSpec,
};
use extremis_core::contour::{
    contour_extreme_response, crop_contour, ds_contour_from_model, exceedance_probability, iform_contour, Contour, ContourError,
    ContourResponseTable, DEFAULT_CONTOUR_POINTS,
};
use extremis_core::env::EnvModel;
use extremis_core::presets::blocks_per_state;
use extremis_core::response::SimPreset;
use extremis_core::rng::{stream, Executor, Purpose};
use extremis_core::seq::{ConvergenceRule, IterationRecord, SeqConfig, SeqError, SeqState, SequentialSampler};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{config_hash, resolve_env, resolve_sim, ConfigError, CODE_VERSION};
use crate::io::{f, load_json_file, write_conditions, write_contour, write_csv, write_json, write_json_atomic, IoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Iform,
    Ds,
    Sequential,
    Brute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourParams {
    pub return_period_years: f64,
    pub points: usize,
    /// Retained wind-speed range; `None` keeps the whole contour.
    pub crop: Option<(f64, f64)>,
    /// Direct-sampling draws; `None` uses `20 / pe`.
    pub ds_samples: Option<usize>,
    pub seeds: usize,
    pub quantiles: Vec<f64>,
    /// Fractile reported as the return-value estimate.
    pub estimate_quantile: f64,
    pub bootstrap_resamples: usize,
}

impl Default for ContourParams {
    fn default() -> Self {
        Self {
            return_period_years: 50.0,
            points: DEFAULT_CONTOUR_POINTS,
            crop: Some((3.0, 25.0)),
            ds_samples: None,
            seeds: 1000,
            quantiles: vec![0.5, 0.9, 0.99],
            estimate_quantile: 0.9,
            bootstrap_resamples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BruteParams {
    pub years: usize,
    pub cutoff_u: f64,
    pub cutoff_sigma: f64,
    pub options: BruteOptions,
}

impl Default for BruteParams {
    fn default() -> Self {
        Self { years: 10_000, cutoff_u: 0.0, cutoff_sigma: 0.0, options: BruteOptions::default() }
    }
}

/// Everything that determines a run, together with the code version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Preset name or path to an environment JSON file.
    pub env: String,
    /// Preset name or path to a simulator JSON file.
    pub sim: String,
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub contour: ContourParams,
    #[serde(default)]
    pub seq: SeqConfig,
    #[serde(default)]
    pub brute: BruteParams,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Record wall-clock times (makes outputs non-reproducible).
    pub timing: bool,
    /// Continue a sequential run from its checkpoint when one exists.
    pub resume: bool,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Contour(#[from] ContourError),
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error(transparent)]
    Brute(#[from] BruteError),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("checkpoint {path} belongs to config {found}, expected {expected}")]
    Checkpoint { path: PathBuf, found: String, expected: String },
    #[error("cannot compare: {0}")]
    Incompatible(String),
}

fn invalid(field: &str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Invalid { field: field.to_string(), message: message.into() }
}

/// The environment and simulator a config points at, after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub env: EnvModel,
    pub sim: SimPreset,
    pub blocks_per_state: usize,
}

impl Setting {
    pub fn resolve(env: &str, sim: &str) -> Result<Self, ConfigError> {
        let env = resolve_env(env)?;
        let sim = resolve_sim(sim)?;
        let blocks_per_state = blocks_per_state(&env, &sim);
        Ok(Self { env, sim, blocks_per_state })
    }

    /// Identifies the physical setting; runs are comparable only if equal.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: Option<f64>,
    pub ci95: Option<(f64, f64)>,
}

impl From<BootstrapSummary> for Estimate {
    fn from(b: BootstrapSummary) -> Self {
        Self { value: b.estimate, se: Some(b.se), ci95: Some(b.ci95) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub method: Method,
    pub config: ExperimentConfig,
    pub setting: Setting,
    pub config_hash: String,
    pub setting_hash: String,
    pub code_version: String,
    pub rv50: Option<Estimate>,
    pub rv100: Option<Estimate>,
    pub pf: Option<f64>,
    pub diagnostics: serde_json::Value,
    pub outputs: Vec<String>,
}

impl Summary {
    pub fn for_config(cfg: &ExperimentConfig, setting: &Setting) -> Self {
        Self {
            experiment: cfg.name.clone(),
            method: cfg.method,
            config: cfg.clone(),
            setting: setting.clone(),
            config_hash: config_hash(cfg),
            setting_hash: setting.hash(),
            code_version: CODE_VERSION.to_string(),
            rv50: None,
            rv100: None,
            pf: None,
            diagnostics: serde_json::Value::Null,
            outputs: Vec::new(),
        }
    }

    /// Return values, failure probability and diagnostics of a sequential run.
    pub fn fill_sequential(&mut self, out: &SeqOutcome, n_seeds: usize) {
        let Some(last) = out.state.history.last() else { return };
        let boot = out.bootstrap;
        self.rv50 = Some(Estimate { value: last.rv50, se: boot.map(|b| b[0].se), ci95: boot.map(|b| b[0].ci95) });
        self.rv100 = Some(Estimate { value: last.rv100, se: boot.map(|b| b[1].se), ci95: boot.map(|b| b[1].ci95) });
        self.pf = last.pf;
        self.diagnostics = serde_json::json!({
            "iterations": out.state.history.len(),
            "converged": out.state.converged,
            "total_sims": out.state.total_sims(n_seeds),
            "training_points": out.state.training.len(),
            "failed_seeds": out.state.training.iter().map(|t| t.failed_seeds).sum::<usize>(),
            "clamped_scales": last.clamped_scales,
            "n_exceed": last.n_exceed,
        });
    }

    fn set_return_value(&mut self, period: f64, e: Estimate) {
        if period == 50.0 {
            self.rv50 = Some(e);
        } else if period == 100.0 {
            self.rv100 = Some(e);
        }
    }
}

/// The contour, its response table and the return-value estimate at the
/// configured fractile with a bootstrap interval from the argmax point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourOutcome {
    pub contour: Contour,
    pub table: ContourResponseTable,
    pub estimate: BootstrapSummary,
    pub argmax_index: usize,
}

pub fn contour_method<E: Executor>(
    setting: &Setting,
    method: Method,
    p: &ContourParams,
    seed: u64,
    exec: &E,
) -> Result<ContourOutcome, ExperimentError> {
    let env = &setting.env;
    let pe = exceedance_probability(p.return_period_years, env.state_duration_hours)?;
    let contour = match method {
        Method::Iform => iform_contour(env, pe, p.points)?,
        Method::Ds => {
            let n = p.ds_samples.unwrap_or((20.0 / pe).ceil() as usize);
            ds_contour_from_model(env, pe, p.points, n, seed, exec)?.contour
        }
        _ => return Err(invalid("method", "not a contour method")),
    };
    let contour = match p.crop {
        Some((lo, hi)) => crop_contour(&contour, lo, hi)?,
        None => contour,
    };
    let mut quantiles = p.quantiles.clone();
    if !quantiles.iter().any(|&q| q == p.estimate_quantile) {
        quantiles.push(p.estimate_quantile);
    }
    let table = contour_extreme_response(&contour, &setting.sim, p.seeds, &quantiles, setting.blocks_per_state, seed, exec)?;
    let best = table.maximum_at(p.estimate_quantile).expect("estimate quantile requested");
    let argmax_index = table
        .rows
        .iter()
        .find(|r| r.quantile == p.estimate_quantile && r.cond == best.argmax)
        .map(|r| r.point_index)
        .expect("argmax row present");
    let estimate = bootstrap_quantile(
        &table.samples[argmax_index],
        p.estimate_quantile,
        p.bootstrap_resamples,
        &mut stream(seed, Purpose::Bootstrap, &[argmax_index as u64]),
    );
    Ok(ContourOutcome { contour, table, estimate, argmax_index })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub state: SeqState,
}

/// Checkpoint compatibility key: the config hash with the stopping settings
/// cleared, so a finished run can be extended with more iterations.
pub fn resume_key(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.seq.max_iters = 0;
    c.seq.convergence = None;
    config_hash(&c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqOutcome {
    pub state: SeqState,
    /// Block-bootstrap summaries of the last long-term run at 50 and 100 years.
    pub bootstrap: Option<[BootstrapSummary; 2]>,
}

/// Runs the sequential sampler to completion, checkpointing after every
/// iteration when `checkpoint` is given. `on_iter` sees the history so far.
pub fn sequential_method<E: Executor>(
    setting: &Setting,
    cfg: &SeqConfig,
    seed: u64,
    exec: &E,
    checkpoint: Option<(&Path, &str)>,
    opts: RunOptions,
    mut on_iter: impl FnMut(&[IterationRecord]),
) -> Result<SeqOutcome, ExperimentError> {
    let mut cfg = cfg.clone();
    cfg.blocks_per_state = setting.blocks_per_state;
    let saved = match checkpoint {
        Some((path, hash)) if opts.resume && path.exists() => {
            let cp: Checkpoint = load_json_file(path)?;
            if cp.config_hash != hash {
                return Err(ExperimentError::Checkpoint { path: path.to_path_buf(), found: cp.config_hash, expected: hash.to_string() });
            }
            Some(cp.state)
        }
        _ => None,
    };
    let mut sampler = match saved {
        Some(state) => SequentialSampler::resume(&setting.env, &setting.sim, cfg.clone(), seed, exec, state)?,
        None => SequentialSampler::new(&setting.env, &setting.sim, cfg.clone(), seed, exec)?,
    };
    while !sampler.is_done() {
        let t0 = Instant::now();
        sampler.step()?;
        if opts.timing {
            sampler.set_last_wall_time(t0.elapsed().as_secs_f64());
        }
        on_iter(&sampler.state().history);
        if let Some((path, hash)) = checkpoint {
            write_json_atomic(path, &Checkpoint { config_hash: hash.to_string(), state: sampler.state().clone() })?;
        }
    }
    let bootstrap = sampler.last_longterm().filter(|r| r.years >= 2).map(|r| {
        let b = block_bootstrap(&r.annual_maxima, &[50.0, 100.0], 10, 1000, &mut stream(seed, Purpose::Bootstrap, &[u64::MAX]));
        [b[0], b[1]]
    });
    Ok(SeqOutcome { state: sampler.state().clone(), bootstrap })
}

pub fn brute_method<E: Executor>(setting: &Setting, p: &BruteParams, seed: u64, exec: &E) -> Result<BruteForceResult, ExperimentError> {
    let opts = BruteOptions { blocks_per_state: setting.blocks_per_state, ..p.options };
    let trunc = TruncationSpec { cutoff_u: p.cutoff_u, cutoff_sigma: p.cutoff_sigma };
    Ok(brute_force_return_values(&setting.env, &setting.sim, p.years, trunc, opts, seed, exec)?)
}

pub const SUMMARY_FILE: &str = "summary.json";

pub fn write_history(path: &Path, hash: &str, history: &[IterationRecord]) -> Result<(), IoError> {
    write_csv(
        path,
        Some(hash),
        &["iter", "u_new", "sigma_u_new", "rv50_mnm", "rv100_mnm", "pf", "wall_s"],
        history.iter().map(|r| {
            [r.iter.to_string(), f(r.x_new.u), f(r.x_new.sigma_u), f(r.rv50), f(r.rv100), r.pf.map(f).unwrap_or_default(), f(r.wall_s)]
        }),
    )
}

pub fn write_response_table(path: &Path, hash: &str, table: &ContourResponseTable) -> Result<(), IoError> {
    write_csv(
        path,
        Some(hash),
        &["u", "sigma_u", "quantile", "response_mnm"],
        table.rows.iter().map(|r| [f(r.cond.u), f(r.cond.sigma_u), f(r.quantile), f(r.response)]),
    )
}

/// JSON record of a brute-force run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteRecord {
    pub config_hash: String,
    pub code_version: String,
    pub rv50: f64,
    pub rv100: f64,
    pub fraction_simulated: f64,
    pub bootstrap_se: BootstrapSe,
    pub ci95: BootstrapCi,
    pub result: BruteForceResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSe {
    pub rv50: f64,
    pub rv100: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub rv50: (f64, f64),
    pub rv100: (f64, f64),
}

impl BruteRecord {
    pub fn new(hash: &str, result: BruteForceResult) -> Self {
        Self {
            config_hash: hash.to_string(),
            code_version: CODE_VERSION.to_string(),
            rv50: result.rv50.estimate,
            rv100: result.rv100.estimate,
            fraction_simulated: result.fraction_simulated,
            bootstrap_se: BootstrapSe { rv50: result.rv50.se, rv100: result.rv100.se },
            ci95: BootstrapCi { rv50: result.rv50.ci95, rv100: result.rv100.ci95 },
            result,
        }
    }
}

fn validate(cfg: &ExperimentConfig) -> Result<(), ExperimentError> {
    if cfg.name.is_empty() || cfg.name.contains(['/', '\\']) {
        return Err(invalid("name", "must be a non-empty file-name-safe string"));
    }
    let c = &cfg.contour;
    if matches!(cfg.method, Method::Iform | Method::Ds) {
        if !(c.return_period_years > 0.0) {
            return Err(invalid("contour.return_period_years", "must be > 0"));
        }
        if c.quantiles.iter().chain([&c.estimate_quantile]).any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(invalid("contour.quantiles", "levels must lie in (0, 1)"));
        }
        if c.bootstrap_resamples < 2 {
            return Err(invalid("contour.bootstrap_resamples", "must be >= 2"));
        }
    }
    if cfg.method == Method::Brute && (cfg.brute.options.bootstrap_blocks < 2 || cfg.brute.options.bootstrap_resamples < 2) {
        return Err(invalid("brute.options", "bootstrap needs >= 2 blocks and >= 2 resamples"));
    }
    Ok(())
}

/// Dispatches on the method and writes outputs plus `summary.json` into
/// `out_dir`.
pub fn run_experiment<E: Executor>(cfg: &ExperimentConfig, out_dir: &Path, opts: RunOptions, exec: &E) -> Result<Summary, ExperimentError> {
    validate(cfg)?;
    let setting = Setting::resolve(&cfg.env, &cfg.sim)?;
    std::fs::create_dir_all(out_dir).map_err(|source| IoError::Io { path: out_dir.to_path_buf(), source })?;
    let mut s = Summary::for_config(cfg, &setting);
    let hash = s.config_hash.clone();
    match cfg.method {
        Method::Iform | Method::Ds => {
            let out = contour_method(&setting, cfg.method, &cfg.contour, cfg.seed, exec)?;
            write_contour(&out_dir.join("contour.csv"), Some(&hash), &out.contour.points)?;
            write_response_table(&out_dir.join("response.csv"), &hash, &out.table)?;
            s.outputs = vec!["contour.csv".into(), "response.csv".into()];
            s.set_return_value(cfg.contour.return_period_years, out.estimate.into());
            s.diagnostics = serde_json::json!({
                "exceedance_probability": out.contour.exceedance_prob,
                "contour_points": out.contour.len(),
                "quantile_maxima": out.table.maxima,
                "failed_seeds": out.table.failed_seeds,
                "warnings": out.table.rows.iter().filter(|r| r.warning).count(),
                "argmax_index": out.argmax_index,
            });
        }
        Method::Sequential => {
            let history_path = out_dir.join("history.csv");
            let cp = out_dir.join("checkpoint.json");
            let out = sequential_method(&setting, &cfg.seq, cfg.seed, exec, Some((&cp, &resume_key(cfg))), opts, |_| ())?;
            write_history(&history_path, &hash, &out.state.history)?;
            s.fill_sequential(&out, cfg.seq.n_seeds);
            s.outputs = vec!["history.csv".into(), "checkpoint.json".into()];
        }
        Method::Brute => {
            let r = brute_method(&setting, &cfg.brute, cfg.seed, exec)?;
            write_csv(&out_dir.join("annual_maxima.csv"), Some(&hash), &["year", "max_response_mnm"], r.annual_maxima.iter().enumerate().map(|(i, y)| [i.to_string(), f(*y)]))?;
            write_conditions(&out_dir.join("exceedances.csv"), Some(&hash), &r.exceed_conditions)?;
            s.rv50 = Some(r.rv50.into());
            s.rv100 = Some(r.rv100.into());
            s.diagnostics = serde_json::json!({
                "fraction_simulated": r.fraction_simulated,
                "failed_seeds": r.failed_seeds,
                "exceedances": r.exceed_conditions.len(),
            });
            write_json(&out_dir.join("brute.json"), &BruteRecord::new(&hash, r))?;
            s.outputs = vec!["brute.json".into(), "annual_maxima.csv".into(), "exceedances.csv".into()];
        }
    }
    s.outputs.push(SUMMARY_FILE.into());
    write_json(&out_dir.join(SUMMARY_FILE), &s)?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub experiment: String,
    pub method: Method,
    pub rv50: Option<f64>,
    pub rv100: Option<f64>,
    pub pf: Option<f64>,
    /// `(x − brute)/brute`, when a brute-force summary is present.
    pub rel_diff_rv50: Option<f64>,
    pub rel_diff_rv100: Option<f64>,
}

/// Side-by-side estimates with relative differences against the first
/// brute-force run.
pub fn compare_runs(summaries: &[Summary]) -> Result<Vec<ComparisonRow>, ExperimentError> {
    if summaries.len() < 2 {
        return Err(ExperimentError::Incompatible(format!("need at least 2 summaries, got {}", summaries.len())));
    }
    let first = &summaries[0].setting_hash;
    if let Some(bad) = summaries.iter().find(|s| &s.setting_hash != first) {
        return Err(ExperimentError::Incompatible(format!(
            "`{}` and `{}` use different environment or simulator settings",
            summaries[0].experiment, bad.experiment
        )));
    }
    let oracle = summaries.iter().find(|s| s.method == Method::Brute);
    let rel = |x: Option<&Estimate>, o: Option<&Estimate>| match (x, o) {
        (Some(x), Some(o)) if o.value != 0.0 => Some((x.value - o.value) / o.value),
        _ => None,
    };
    Ok(summaries
        .iter()
        .map(|s| ComparisonRow {
            experiment: s.experiment.clone(),
            method: s.method,
            rv50: s.rv50.map(|e| e.value),
            rv100: s.rv100.map(|e| e.value),
            pf: s.pf,
            rel_diff_rv50: oracle.and_then(|o| rel(s.rv50.as_ref(), o.rv50.as_ref())),
            rel_diff_rv100: oracle.and_then(|o| rel(s.rv100.as_ref(), o.rv100.as_ref())),
        })
        .collect())
}

pub fn write_comparison(path: &Path, hash: &str, rows: &[ComparisonRow]) -> Result<(), IoError> {
    let opt = |v: Option<f64>| v.map(f).unwrap_or_default();
    write_csv(
        path,
        Some(hash),
        &["experiment", "method", "rv50_mnm", "rv100_mnm", "pf", "rel_diff_rv50", "rel_diff_rv100"],
        rows.iter().map(|r| {
            let method = serde_json::to_value(r.method).expect("enum").as_str().unwrap_or_default().to_string();
            [r.experiment.clone(), method, opt(r.rv50), opt(r.rv100), opt(r.pf), opt(r.rel_diff_rv50), opt(r.rel_diff_rv100)]
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoSite {
    SiteA,
    Brittany,
}

/// Reduced-size brute force, IFORM contour and sequential runs on one
/// preset.
pub fn demo_configs(site: DemoSite, seed: u64, years: usize, iters: usize) -> Vec<ExperimentConfig> {
    let preset = match site {
        DemoSite::SiteA => "site-a-like",
        DemoSite::Brittany => "brittany-like",
    };
    let base = ExperimentConfig {
        name: String::new(),
        env: preset.into(),
        sim: preset.into(),
        method: Method::Brute,
        seed,
        contour: ContourParams::default(),
        seq: SeqConfig {
            years,
            max_iters: iters,
            candidates: 20_000,
            convergence: Some(ConvergenceRule::default()),
            ..SeqConfig::default()
        },
        brute: BruteParams { years, ..BruteParams::default() },
    };
    [("brute", Method::Brute), ("iform", Method::Iform), ("sequential", Method::Sequential)]
        .into_iter()
        .map(|(name, method)| ExperimentConfig { name: name.into(), method, ..base.clone() })
        .collect()
}

pub fn run_demo<E: Executor>(
    site: DemoSite,
    seed: u64,
    years: usize,
    iters: usize,
    out_dir: &Path,
    opts: RunOptions,
    exec: &E,
    mut progress: impl FnMut(&Summary),
) -> Result<(Vec<Summary>, Vec<ComparisonRow>), ExperimentError> {
    let mut summaries = Vec::new();
    for cfg in demo_configs(site, seed, years, iters) {
        let s = run_experiment(&cfg, &out_dir.join(&cfg.name), opts, exec)?;
        progress(&s);
        summaries.push(s);
    }
    let rows = compare_runs(&summaries)?;
    write_comparison(&out_dir.join("comparison.csv"), &summaries[0].setting_hash, &rows)?;
    Ok((summaries, rows))
}
