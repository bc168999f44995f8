//! Command-line interface. Every command prints a JSON summary on stdout;
//! failures print `{"error": {...}}` on stderr and exit nonzero (2 for
//! usage and configuration errors, 1 otherwise).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use extremis_core::contour::{
    contour_extreme_response, crop_contour, ds_contour_from_model, exceedance_probability, iform_contour, reliability_index, Contour,
    ContourError, ContourMethod,
};
use extremis_core::env::Condition;
use extremis_core::evfit::{gaussian_likelihood_approx, ApproxOptions, EvFamily, ShortTermFit};
use extremis_core::gp::{gp_posterior, GpFitOptions, GpModel, GpRecord, TrainingPoint};
use extremis_core::linalg::Matrix;
use extremis_core::narx::{fit_narx, one_step_rmse, predict_narx, LagSpec, NarxFitOptions, NarxModel, NarxSeries};
use extremis_core::response::{state_max_response, ShortTermSimulator};
use extremis_core::rng::{stream, Executor, Purpose};
use extremis_core::seq::{ConvergenceRule, SeqConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{config_hash, load_json, resolve_env, resolve_sim, ConfigError, CODE_VERSION};
use crate::exec::{resolve_threads, Pool};
use crate::experiment::{
    compare_runs, resume_key, run_demo, run_experiment, sequential_method, write_comparison, write_history, BruteParams, BruteRecord, ContourParams,
    DemoSite, ExperimentConfig, ExperimentError, Method, RunOptions, Setting, Summary,
};
use crate::io::{f, read_contour, read_samples, read_table, write_conditions, write_contour, write_csv, write_json, IoError};

#[derive(Debug, Parser)]
#[command(name = "extremis", version, about = "Long-term extreme response estimation")]
pub struct Cli {
    /// Worker threads, 0 for all cores. EXTREMIS_THREADS takes precedence.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Record wall-clock times in outputs.
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Environmental model utilities.
    Env {
        #[command(subcommand)]
        cmd: EnvCmd,
    },
    /// Short-term maxima of a simulator preset at one condition.
    Sim(SimArgs),
    /// Environmental contour (IFORM or direct sampling).
    Contour(ContourArgs),
    /// Short-term response quantiles along a contour.
    ContourResponse(ContourResponseArgs),
    /// Gaussian approximation of the short-term parameter likelihood.
    Fit(FitArgs),
    /// Gaussian-process surrogate of short-term parameters.
    Gp {
        #[command(subcommand)]
        cmd: GpCmd,
    },
    /// Polynomial NARX models.
    Narx {
        #[command(subcommand)]
        cmd: NarxCmd,
    },
    /// Sequential sampling with a GP surrogate.
    Seq(SeqArgs),
    /// Brute-force Monte Carlo return values.
    Brute(BruteArgs),
    /// Run an experiment described by a JSON config.
    Run(RunArgs),
    /// Compare experiment summaries.
    Compare(CompareArgs),
    /// Small end-to-end comparison on a preset.
    Demo(DemoArgs),
}

#[derive(Debug, Subcommand)]
pub enum EnvCmd {
    /// Draw conditions from the joint model.
    Sample(EnvSampleArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EnvSampleArgs {
    /// Environment JSON file or preset name.
    #[arg(long)]
    pub config: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

fn parse_pair(s: &str, sep: char) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(sep).ok_or_else(|| format!("expected two numbers separated by `{sep}`"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number"));
    Ok((p(a)?, p(b)?))
}

fn parse_cond(s: &str) -> Result<Condition, String> {
    parse_pair(s, ',').map(|(u, s)| Condition::new(u, s))
}

fn parse_crop(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = parse_pair(s, ':')?;
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err("lower bound must be below upper bound".into())
    }
}

fn parse_range(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or("expected a range `start..end`")?;
    let p = |x: &str| x.trim().parse::<u64>().map_err(|_| format!("`{x}` is not a seed"));
    let r = p(a)?..p(b)?;
    if r.is_empty() {
        return Err("empty seed range".into());
    }
    Ok(r)
}

#[derive(Debug, Args, Serialize)]
pub struct SimArgs {
    /// Preset name or simulator JSON file.
    #[arg(long, default_value = "site-a-like")]
    pub sim: String,
    /// Condition `u,sigma_u`.
    #[arg(long, value_parser = parse_cond)]
    pub cond: Condition,
    /// Seed range `start..end`.
    #[arg(long, value_parser = parse_range, default_value = "0..1000")]
    pub seeds: Range<u64>,
    /// Blocks per state; each output row is the maximum over the blocks.
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourKind {
    Iform,
    Ds,
}

#[derive(Debug, Args, Serialize)]
pub struct ContourArgs {
    /// Environment JSON file or preset name.
    #[arg(long)]
    pub config: String,
    #[arg(long, value_enum, default_value = "iform")]
    pub method: ContourKind,
    #[arg(long, default_value_t = 50.0)]
    pub years: f64,
    #[arg(long, default_value_t = 72)]
    pub points: usize,
    /// Keep points with `lo <= u <= hi`, e.g. `3:25`.
    #[arg(long, value_parser = parse_crop)]
    pub crop: Option<(f64, f64)>,
    /// Direct-sampling draws (default `20 / pe`).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ContourResponseArgs {
    #[arg(long)]
    pub contour: PathBuf,
    #[arg(long, default_value = "site-a-like")]
    pub sim: String,
    #[arg(long, default_value_t = 1000)]
    pub seeds: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.9,0.99")]
    pub quantiles: Vec<f64>,
    /// Blocks per environmental state.
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyArg {
    Gumbel,
    Gev,
}

impl From<FamilyArg> for EvFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gumbel => EvFamily::Gumbel,
            FamilyArg::Gev => EvFamily::Gev,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub samples: PathBuf,
    /// Column holding the maxima (default: the only column, or `max_response_mnm`).
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long, value_enum, default_value = "gumbel")]
    pub family: FamilyArg,
    /// Relative agreement of consecutive MCMC estimates.
    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,
    /// Condition `u,sigma_u` the samples belong to (needed for `gp fit`).
    #[arg(long, value_parser = parse_cond)]
    pub cond: Option<Condition>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Serialised short-term fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub cond: Option<Condition>,
    pub family: EvFamily,
    pub mean: Vec<f64>,
    /// Row-major.
    pub covariance: Vec<f64>,
    pub n_obs: usize,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub mcmc_draws_used: usize,
    pub batches: usize,
    pub acceptance_rate: f64,
    pub mle: Vec<f64>,
}

impl FitRecord {
    pub fn new(cond: Option<Condition>, fit: &ShortTermFit) -> Self {
        Self {
            cond,
            family: fit.family,
            mean: fit.mean.clone(),
            covariance: fit.cov.as_slice().to_vec(),
            n_obs: fit.n_obs,
            diagnostics: FitDiagnostics {
                mcmc_draws_used: fit.mcmc_draws_used,
                batches: fit.batches,
                acceptance_rate: fit.acceptance_rate,
                mle: fit.mle.clone(),
            },
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum GpCmd {
    /// Fit the surrogate to a directory of fit records.
    Fit(GpFitArgs),
    /// Posterior mean and standard deviation at a condition.
    Predict(GpPredictArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GpFitArgs {
    /// Directory of `*.json` fit records with conditions.
    #[arg(long)]
    pub fits: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub restarts: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GpPredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_parser = parse_cond)]
    pub cond: Condition,
}

#[derive(Debug, Subcommand)]
pub enum NarxCmd {
    /// Fit to every CSV series in a design directory.
    Fit(NarxFitArgs),
    /// Free-run prediction for every CSV series in a directory.
    Predict(NarxPredictArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct NarxFitArgs {
    /// Directory of CSV series sharing one header.
    #[arg(long)]
    pub design: PathBuf,
    /// Lags per channel, e.g. `y:1,2,3;wind:0,1,2`. The output channel
    /// carries the autoregressive lags.
    #[arg(long)]
    pub lags: String,
    #[arg(long, default_value_t = 2)]
    pub degree: usize,
    #[arg(long, default_value = "y")]
    pub output: String,
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    /// Largest number of distinct factors in a monomial (0 for no limit).
    #[arg(long, default_value_t = 2)]
    pub max_interaction: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct NarxPredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, default_value = "y")]
    pub output: String,
    /// Output directory for `<series>.csv` predictions.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SeqArgs {
    #[arg(long)]
    pub env: String,
    #[arg(long)]
    pub sim: String,
    #[arg(long, value_enum, default_value = "gumbel")]
    pub family: FamilyArg,
    /// Short-term simulations per training point.
    #[arg(long, default_value_t = 18)]
    pub seeds: usize,
    #[arg(long, default_value_t = 40)]
    pub iters: usize,
    #[arg(long, default_value_t = 10_000)]
    pub years: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub init: usize,
    #[arg(long, default_value_t = 100_000)]
    pub candidates: usize,
    /// Response threshold for the annual failure probability.
    #[arg(long)]
    pub pf_threshold: Option<f64>,
    /// Stop once rv100 settles (1% over 5 iterations).
    #[arg(long)]
    pub converge: bool,
    /// Checkpoint file (default: `<out>.checkpoint.json`).
    #[arg(long)]
    #[serde(skip)]
    pub checkpoint: Option<PathBuf>,
    /// Continue from the checkpoint if it exists.
    #[arg(long)]
    #[serde(skip)]
    pub resume: bool,
    /// Also write the experiment summary JSON here.
    #[arg(long)]
    #[serde(skip)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BruteArgs {
    #[arg(long)]
    pub env: String,
    #[arg(long)]
    pub sim: String,
    #[arg(long, default_value_t = 10_000)]
    pub years: usize,
    #[arg(long, default_value_t = 0.0)]
    pub cutoff_u: f64,
    #[arg(long, default_value_t = 0.0)]
    pub cutoff_sigma: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment JSON config.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Summary JSON files.
    #[arg(required = true)]
    pub summaries: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoSiteArg {
    SiteA,
    Brittany,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(value_enum)]
    pub site: DemoSiteArg,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Synthetic years for the brute-force and long-term runs.
    #[arg(long, default_value_t = 1000)]
    pub years: usize,
    #[arg(long, default_value_t = 15)]
    pub iters: usize,
}

/// A failure reported as structured JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
    #[serde(skip)]
    pub exit_code: i32,
}

impl CliError {
    fn usage(field: Option<String>, message: impl Into<String>) -> Self {
        Self { kind: "usage", field, message: message.into(), exit_code: 2 }
    }

    fn runtime(kind: &'static str, message: impl ToString) -> Self {
        Self { kind, field: None, message: message.to_string(), exit_code: 1 }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": self })
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::runtime("io", e),
            _ => Self { kind: "config", field: e.field().map(str::to_string), message: e.to_string(), exit_code: 2 },
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::runtime("io", e)
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => c.into(),
            ExperimentError::Io(io) => io.into(),
            ExperimentError::Invalid { ref field, .. } => {
                Self { kind: "config", field: Some(field.clone()), message: e.to_string(), exit_code: 2 }
            }
            ExperimentError::Incompatible(_) => Self { kind: "incompatible", field: None, message: e.to_string(), exit_code: 2 },
            other => CliError::runtime("runtime", other),
        }
    }
}

fn clap_field(e: &clap::Error) -> Option<String> {
    match e.get(ContextKind::InvalidArg) {
        Some(ContextValue::String(s)) => {
            let name = s.trim_start_matches('-').split([' ', '=']).next().unwrap_or_default();
            Some(name.trim_matches(|c| c == '<' || c == '>').to_lowercase())
        }
        _ => None,
    }
}

fn module<E: std::fmt::Display>(kind: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::runtime(kind, e)
}

fn usage_check(ok: bool, field: &str, message: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::usage(Some(field.to_string()), message))
    }
}

fn echo<T: Serialize>(command: &str, args: &T) -> (Value, String) {
    let config = json!({ "command": command, "args": args });
    let hash = config_hash(&config);
    (config, hash)
}

fn summary(config: Value, hash: &str, result: Value) -> Value {
    json!({ "config": config, "config_hash": hash, "code_version": CODE_VERSION, "result": result })
}

/// Parses `args` and runs the command; `Ok` carries the stdout summary.
pub fn run<I, T>(args: I) -> Result<Value, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) => {
            return Ok(Value::String(e.to_string()));
        }
        Err(e) => {
            let message = e.kind().as_str().map(str::to_string).unwrap_or_else(|| e.to_string());
            let detail = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            return Err(CliError::usage(clap_field(&e), if detail.is_empty() { message } else { detail }));
        }
    };
    let threads = resolve_threads(cli.threads).map_err(|m| CliError::usage(Some("threads".into()), m))?;
    let pool = Pool::new(threads).map_err(module("threads"))?;
    let opts = RunOptions { timing: cli.timing, resume: false };
    dispatch(cli.command, &pool, opts)
}

fn dispatch(cmd: Command, exec: &Pool, opts: RunOptions) -> Result<Value, CliError> {
    match cmd {
        Command::Env { cmd: EnvCmd::Sample(a) } => env_sample(a),
        Command::Sim(a) => sim(a, exec),
        Command::Contour(a) => contour(a, exec),
        Command::ContourResponse(a) => contour_response(a, exec),
        Command::Fit(a) => fit(a),
        Command::Gp { cmd: GpCmd::Fit(a) } => gp_fit(a),
        Command::Gp { cmd: GpCmd::Predict(a) } => gp_predict(a),
        Command::Narx { cmd: NarxCmd::Fit(a) } => narx_fit(a),
        Command::Narx { cmd: NarxCmd::Predict(a) } => narx_predict(a),
        Command::Seq(a) => seq(a, exec, opts),
        Command::Brute(a) => brute(a, exec),
        Command::Run(a) => {
            let cfg: ExperimentConfig = load_json(&a.config)?;
            let s = run_experiment(&cfg, &a.out_dir, RunOptions { resume: a.resume, ..opts }, exec)?;
            Ok(serde_json::to_value(s).expect("summary serialises"))
        }
        Command::Compare(a) => compare(a),
        Command::Demo(a) => demo(a, exec, opts),
    }
}

fn env_sample(a: EnvSampleArgs) -> Result<Value, CliError> {
    let (config, hash) = echo("env sample", &a);
    let env = resolve_env(&a.config)?;
    let xs = env.sample_conditions(a.n, &mut stream(a.seed, Purpose::EnvSample, &[]));
    write_conditions(&a.out, Some(&hash), &xs)?;
    Ok(summary(config, &hash, json!({ "rows": xs.len(), "env": env })))
}

fn sim(a: SimArgs, exec: &Pool) -> Result<Value, CliError> {
    usage_check(a.blocks >= 1, "blocks", "must be >= 1")?;
    let (config, hash) = echo("sim", &a);
    let sim = resolve_sim(&a.sim)?;
    let seeds: Vec<u64> = a.seeds.clone().collect();
    let ys = exec.map_indexed(seeds.len(), |i| state_max_response(&sim, a.cond, seeds[i], a.blocks));
    let ys = ys.into_iter().collect::<Result<Vec<_>, _>>().map_err(module("simulation"))?;
    write_csv(&a.out, Some(&hash), &["seed", "max_response_mnm"], seeds.iter().zip(&ys).map(|(s, y)| [s.to_string(), f(*y)]))?;
    let (r, s) = sim.law_params(a.cond);
    Ok(summary(config, &hash, json!({ "rows": ys.len(), "location": r, "scale": s, "in_band": sim.in_band(a.cond.u) })))
}

fn contour(a: ContourArgs, exec: &Pool) -> Result<Value, CliError> {
    let (config, hash) = echo("contour", &a);
    let env = resolve_env(&a.config)?;
    let pe = exceedance_probability(a.years, env.state_duration_hours).map_err(|e| CliError::usage(Some("years".into()), e.to_string()))?;
    let c = match a.method {
        ContourKind::Iform => iform_contour(&env, pe, a.points),
        ContourKind::Ds => ds_contour_from_model(&env, pe, a.points, a.samples.unwrap_or((20.0 / pe).ceil() as usize), a.seed, exec).map(|d| d.contour),
    }
    .map_err(|e| match e {
        ContourError::InsufficientSamples { .. } => CliError::usage(Some("samples".into()), e.to_string()),
        ContourError::TooFewPoints(_) => CliError::usage(Some("points".into()), e.to_string()),
        other => CliError::runtime("contour", other),
    })?;
    let full = c.len();
    let c = match a.crop {
        Some((lo, hi)) => crop_contour(&c, lo, hi).map_err(module("contour"))?,
        None => c,
    };
    write_contour(&a.out, Some(&hash), &c.points)?;
    Ok(summary(
        config,
        &hash,
        json!({ "exceedance_probability": pe, "beta": reliability_index(pe), "points": c.len(), "points_before_crop": full }),
    ))
}

fn contour_response(a: ContourResponseArgs, exec: &Pool) -> Result<Value, CliError> {
    let (config, hash) = echo("contour-response", &a);
    let sim = resolve_sim(&a.sim)?;
    let points = read_contour(&a.contour)?;
    let c = Contour { points, exceedance_prob: f64::NAN, method: ContourMethod::Iform, return_period_years: f64::NAN, state_duration_hours: f64::NAN };
    let t = contour_extreme_response(&c, &sim, a.seeds, &a.quantiles, a.blocks, a.seed, exec).map_err(|e| match e {
        ContourError::QuantileLevel(_) => CliError::usage(Some("quantiles".into()), e.to_string()),
        ContourError::TooFewSeeds(_) => CliError::usage(Some("seeds".into()), e.to_string()),
        other => CliError::runtime("contour", other),
    })?;
    crate::experiment::write_response_table(&a.out, &hash, &t)?;
    let warnings: Vec<_> = t.rows.iter().filter(|r| r.warning).map(|r| json!({ "u": r.cond.u, "sigma_u": r.cond.sigma_u, "quantile": r.quantile })).collect();
    Ok(summary(config, &hash, json!({ "maxima": t.maxima, "failed_seeds": t.failed_seeds, "warnings": warnings })))
}

fn fit(a: FitArgs) -> Result<Value, CliError> {
    usage_check(a.tol > 0.0, "tol", "must be > 0")?;
    let (config, hash) = echo("fit", &a);
    let xs = read_samples(&a.samples, a.column.as_deref())?;
    let opts = ApproxOptions { rel_tol: a.tol, ..ApproxOptions::default() };
    let fit = gaussian_likelihood_approx(&xs, a.family.into(), opts, &mut stream(a.seed, Purpose::Mcmc, &[])).map_err(module("fit"))?;
    let rec = FitRecord::new(a.cond, &fit);
    if let Some(out) = &a.out {
        write_json(out, &rec)?;
    }
    Ok(summary(config, &hash, serde_json::to_value(rec).expect("record serialises")))
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| IoError::Io { path: dir.to_path_buf(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    files.sort();
    Ok(files)
}

fn gp_fit(a: GpFitArgs) -> Result<Value, CliError> {
    let (config, hash) = echo("gp fit", &a);
    let mut pts = Vec::new();
    let mut family = None;
    for p in json_files(&a.fits)?.into_iter().filter(|p| p.extension().is_some_and(|e| e == "json")) {
        let rec: FitRecord = load_json(&p)?;
        let cond = rec.cond.ok_or_else(|| CliError::usage(Some("cond".into()), format!("{} has no condition", p.display())))?;
        if *family.get_or_insert(rec.family) != rec.family {
            return Err(CliError::usage(Some("family".into()), format!("{} mixes extreme-value families", p.display())));
        }
        let d = rec.mean.len();
        let cov = Matrix::from_row_major(d, d, rec.covariance).map_err(|e| CliError::usage(Some("covariance".into()), format!("{}: {e}", p.display())))?;
        pts.push(TrainingPoint { cond, mean: rec.mean, cov });
    }
    let family = family.ok_or_else(|| CliError::usage(Some("fits".into()), "no fit records found"))?;
    let gp = GpModel::fit(family, &pts, GpFitOptions { restarts: a.restarts, ..GpFitOptions::default() }).map_err(module("gp"))?;
    write_json(&a.out, gp.record())?;
    let hypers: Vec<_> = gp.record().outputs.iter().map(|o| serde_json::to_value(o).expect("hyper")).collect();
    Ok(summary(config, &hash, json!({ "training_points": pts.len(), "outputs": hypers })))
}

fn gp_predict(a: GpPredictArgs) -> Result<Value, CliError> {
    let (config, hash) = echo("gp predict", &a);
    let rec: GpRecord = load_json(&a.model)?;
    let gp = GpModel::from_record(rec).map_err(module("gp"))?;
    let (mean, sd) = gp_posterior(&gp, a.cond);
    Ok(summary(config, &hash, json!({ "mean": mean, "sd": sd })))
}

/// `y:1,2,3;wind:0,1,2` → per-channel lag lists.
fn parse_lags(spec: &str) -> Result<BTreeMap<String, Vec<usize>>, CliError> {
    let bad = |m: String| CliError::usage(Some("lags".into()), m);
    let mut out = BTreeMap::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, lags) = part.split_once(':').ok_or_else(|| bad(format!("`{part}` is not `name:lag,lag`")))?;
        let lags = lags
            .split(',')
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<usize>().map_err(|_| bad(format!("`{l}` is not a lag"))))
            .collect::<Result<Vec<_>, _>>()?;
        if out.insert(name.trim().to_string(), lags).is_some() {
            return Err(bad(format!("channel `{name}` given twice")));
        }
    }
    Ok(out)
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let files: Vec<PathBuf> = json_files(dir)?.into_iter().filter(|p| p.extension().is_some_and(|e| e == "csv")).collect();
    if files.is_empty() {
        return Err(CliError::usage(Some("design".into()), format!("no CSV series in {}", dir.display())));
    }
    Ok(files)
}

fn load_series(path: &Path, output: &str, inputs: &[String]) -> Result<NarxSeries, CliError> {
    let t = read_table(path)?;
    let col = |name: &str| {
        t.column(name).map(<[f64]>::to_vec).ok_or_else(|| CliError::from(IoError::MissingColumn { path: path.to_path_buf(), column: name.to_string() }))
    };
    Ok(NarxSeries { inputs: inputs.iter().map(|c| col(c)).collect::<Result<_, _>>()?, output: col(output)? })
}

fn narx_fit(a: NarxFitArgs) -> Result<Value, CliError> {
    let (config, hash) = echo("narx fit", &a);
    let mut lags = parse_lags(&a.lags)?;
    let autoregressive = lags.remove(&a.output).unwrap_or_default();
    let names: Vec<String> = lags.keys().cloned().collect();
    let spec = LagSpec { autoregressive, exogenous: lags.into_values().collect() };
    spec.validate().map_err(|e| CliError::usage(Some("lags".into()), e.to_string()))?;
    let design = csv_files(&a.design)?.iter().map(|p| load_series(p, &a.output, &names)).collect::<Result<Vec<_>, _>>()?;
    let opts = NarxFitOptions { degree: a.degree, regularization: a.ridge, max_interaction: (a.max_interaction > 0).then_some(a.max_interaction) };
    let model = fit_narx(&design, &spec, opts, names).map_err(module("narx"))?;
    write_json(&a.out, &model)?;
    Ok(summary(config, &hash, json!({ "series": design.len(), "terms": model.n_terms(), "train_rmse": model.train_rmse })))
}

fn narx_predict(a: NarxPredictArgs) -> Result<Value, CliError> {
    let (config, hash) = echo("narx predict", &a);
    let model: NarxModel = load_json(&a.model)?;
    std::fs::create_dir_all(&a.out).map_err(|source| IoError::Io { path: a.out.clone(), source })?;
    let mut report = Vec::new();
    for p in csv_files(&a.design)? {
        let s = load_series(&p, &a.output, &model.channel_names)?;
        let init = &s.output[..model.lag_spec.max_lag().min(s.output.len())];
        let inputs: Vec<&[f64]> = s.inputs.iter().map(Vec::as_slice).collect();
        let pred = predict_narx(&model, &inputs, init).map_err(module("narx"))?;
        let rmse = (pred.iter().zip(&s.output).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len() as f64).sqrt();
        let one_step = one_step_rmse(&model, std::slice::from_ref(&s)).map_err(module("narx"))?;
        let name = p.file_name().expect("file").to_owned();
        write_csv(&a.out.join(&name), Some(&hash), &["t", "y", "y_pred"], (0..pred.len()).map(|t| [t.to_string(), f(s.output[t]), f(pred[t])]))?;
        report.push(json!({ "series": name.to_string_lossy(), "free_run_rmse": rmse, "one_step_rmse": one_step }));
    }
    Ok(summary(config, &hash, json!({ "series": report })))
}

fn seq(a: SeqArgs, exec: &Pool, opts: RunOptions) -> Result<Value, CliError> {
    let cfg = ExperimentConfig {
        name: a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "seq".into()),
        env: a.env.clone(),
        sim: a.sim.clone(),
        method: Method::Sequential,
        seed: a.seed,
        contour: ContourParams::default(),
        seq: SeqConfig {
            family: a.family.into(),
            n_seeds: a.seeds,
            init_design: a.init,
            max_iters: a.iters,
            years: a.years,
            candidates: a.candidates,
            pf_threshold: a.pf_threshold,
            convergence: a.converge.then(ConvergenceRule::default),
            ..SeqConfig::default()
        },
        brute: BruteParams::default(),
    };
    let setting = Setting::resolve(&cfg.env, &cfg.sim)?;
    let mut s = Summary::for_config(&cfg, &setting);
    let hash = s.config_hash.clone();
    let checkpoint = a.checkpoint.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".checkpoint.json");
        PathBuf::from(p)
    });
    let mut write_err = None;
    let out = sequential_method(&setting, &cfg.seq, cfg.seed, exec, Some((&checkpoint, &resume_key(&cfg))), RunOptions { resume: a.resume, ..opts }, |h| {
        if let Err(e) = write_history(&a.out, &hash, h) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    write_history(&a.out, &hash, &out.state.history)?;
    s.fill_sequential(&out, cfg.seq.n_seeds);
    if let Some(p) = &a.summary {
        write_json(p, &s)?;
    }
    Ok(serde_json::to_value(s).expect("summary serialises"))
}

fn brute(a: BruteArgs, exec: &Pool) -> Result<Value, CliError> {
    let cfg = ExperimentConfig {
        name: a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "brute".into()),
        env: a.env.clone(),
        sim: a.sim.clone(),
        method: Method::Brute,
        seed: a.seed,
        contour: ContourParams::default(),
        seq: SeqConfig::default(),
        brute: BruteParams { years: a.years, cutoff_u: a.cutoff_u, cutoff_sigma: a.cutoff_sigma, ..BruteParams::default() },
    };
    usage_check(a.cutoff_u >= 0.0, "cutoff-u", "must be >= 0")?;
    usage_check(a.cutoff_sigma >= 0.0, "cutoff-sigma", "must be >= 0")?;
    let setting = Setting::resolve(&cfg.env, &cfg.sim)?;
    let hash = config_hash(&cfg);
    let r = crate::experiment::brute_method(&setting, &cfg.brute, cfg.seed, exec).map_err(|e| match e {
        ExperimentError::Brute(b @ extremis_core::brute::BruteError::TooFewYears(_)) => CliError::usage(Some("years".into()), b.to_string()),
        other => other.into(),
    })?;
    let rec = BruteRecord::new(&hash, r);
    write_json(&a.out, &rec)?;
    Ok(json!({
        "config": cfg,
        "config_hash": hash,
        "code_version": CODE_VERSION,
        "result": { "rv50": rec.rv50, "rv100": rec.rv100, "fraction_simulated": rec.fraction_simulated, "bootstrap_se": rec.bootstrap_se, "ci95": rec.ci95 },
    }))
}

fn compare(a: CompareArgs) -> Result<Value, CliError> {
    let summaries = a.summaries.iter().map(|p| load_json::<Summary>(p)).collect::<Result<Vec<_>, _>>()?;
    let rows = compare_runs(&summaries)?;
    if let Some(out) = &a.out {
        write_comparison(out, &summaries[0].setting_hash, &rows)?;
    }
    Ok(json!({ "setting_hash": summaries[0].setting_hash, "rows": rows }))
}

fn demo(a: DemoArgs, exec: &Pool, opts: RunOptions) -> Result<Value, CliError> {
    usage_check(a.years >= 100, "years", "must be >= 100")?;
    usage_check(a.iters >= 1, "iters", "must be >= 1")?;
    let (site, label) = match a.site {
        DemoSiteArg::SiteA => (DemoSite::SiteA, "site-a"),
        DemoSiteArg::Brittany => (DemoSite::Brittany, "brittany"),
    };
    let out_dir = a.out_dir.clone().unwrap_or_else(|| PathBuf::from(format!("demo-{label}")));
    let (summaries, rows) = run_demo(site, a.seed, a.years, a.iters, &out_dir, opts, exec, |s| {
        eprintln!("{}: rv50 = {:?}", s.experiment, s.rv50.map(|e| e.value));
    })?;
    let contour = rows.iter().find(|r| r.method == Method::Iform).and_then(|r| r.rel_diff_rv50);
    Ok(json!({
        "out_dir": out_dir,
        "rows": rows,
        "contour_underestimates": contour.map(|d| d < 0.0),
        "summaries": summaries.iter().map(|s| s.experiment.clone()).collect::<Vec<_>>(),
    }))
}

/// Entry point used by the binary: prints the result and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(v) => {
            let text = match v {
                Value::String(text) => text,
                v => serde_json::to_string_pretty(&v).expect("json") + "\n",
            };
            // A closed pipe downstream is not an error of ours.
            let _ = std::io::stdout().write_all(text.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_spec_parses() {
        let l = parse_lags("y:1,2,3; wind:0,1,2").unwrap();
        assert_eq!(l["y"], vec![1, 2, 3]);
        assert_eq!(l["wind"], vec![0, 1, 2]);
        assert!(parse_lags("y:1;y:2").is_err());
        assert!(parse_lags("y1,2").is_err());
    }

    #[test]
    fn argument_parsers() {
        assert_eq!(parse_cond("12,3").unwrap(), Condition::new(12.0, 3.0));
        assert_eq!(parse_crop("3:25").unwrap(), (3.0, 25.0));
        assert!(parse_crop("25:3").is_err());
        assert_eq!(parse_range("0..1000").unwrap(), 0..1000);
        assert!(parse_range("5..5").is_err());
    }

    #[test]
    fn invalid_method_names_the_field() {
        let e = run(["extremis", "contour", "--config", "site-a-like", "--method", "form", "--out", "x.csv"]).unwrap_err();
        assert_eq!(e.exit_code, 2);
        assert_eq!(e.field.as_deref(), Some("method"));
    }
}
