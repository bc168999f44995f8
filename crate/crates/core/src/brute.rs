//! Truncated brute-force Monte Carlo against the short-term simulator.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Condition, EnvModel};
use crate::math::order_statistic_index;
use crate::response::{simulate_blocks_with_retry, ShortTermSimulator, SimError};
use crate::rng::{derive_seed, index_below, stream, Executor, Purpose};
use crate::seq::{return_value, states_per_year, TopK};

pub const MIN_BRUTE_YEARS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BruteError {
    #[error("brute force needs at least {MIN_BRUTE_YEARS} years, got {0}")]
    TooFewYears(usize),
    #[error("cutoffs must be >= 0 (u {cutoff_u}, sigma {cutoff_sigma})")]
    NegativeCutoff { cutoff_u: f64, cutoff_sigma: f64 },
    #[error("year {year}, state {state}: {source}")]
    Simulation { year: usize, state: usize, source: SimError },
}

/// States with `u < cutoff_u` or `σ_U < cutoff_sigma` are assigned zero
/// response without simulation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub cutoff_u: f64,
    pub cutoff_sigma: f64,
}

impl TruncationSpec {
    pub const NONE: Self = Self { cutoff_u: 0.0, cutoff_sigma: 0.0 };

    pub fn keeps(&self, c: Condition) -> bool {
        c.u >= self.cutoff_u && c.sigma_u >= self.cutoff_sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub estimate: f64,
    pub se: f64,
    pub ci95: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub years: usize,
    pub truncation: TruncationSpec,
    pub rv50: BootstrapSummary,
    pub rv100: BootstrapSummary,
    pub fraction_simulated: f64,
    pub failed_seeds: u64,
    pub annual_maxima: Vec<f64>,
    /// Conditions whose response exceeded the 50-year value (up to
    /// `top_k` per year).
    pub exceed_conditions: Vec<Condition>,
    pub exceed_responses: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BruteOptions {
    pub band: (f64, f64),
    pub blocks_per_state: usize,
    pub top_k: usize,
    pub bootstrap_blocks: usize,
    pub bootstrap_resamples: usize,
}

impl Default for BruteOptions {
    fn default() -> Self {
        Self { band: (3.0, 25.0), blocks_per_state: 1, top_k: 16, bootstrap_blocks: 10, bootstrap_resamples: 1000 }
    }
}

struct Year {
    max: f64,
    simulated: u64,
    failed: u64,
    top: TopK,
}

fn simulate_year<S: ShortTermSimulator + ?Sized>(
    env: &EnvModel,
    sim: &S,
    trunc: TruncationSpec,
    opts: &BruteOptions,
    master: u64,
    year: usize,
) -> Result<Year, BruteError> {
    let mut rng = stream(master, Purpose::BruteEnv, &[year as u64]);
    let mut out = Year { max: 0.0, simulated: 0, failed: 0, top: TopK::new(opts.top_k) };
    for state in 0..states_per_year(env) {
        let c = env.sample_one(&mut rng);
        if !(c.u >= opts.band.0 && c.u <= opts.band.1) || !trunc.keeps(c) {
            continue;
        }
        out.simulated += 1;
        let mut attempt = 0u64;
        let (blocks, failed) = simulate_blocks_with_retry(sim, c, opts.blocks_per_state, || {
            attempt += 1;
            derive_seed(master, Purpose::BruteResponse, &[year as u64, state as u64, attempt - 1])
        })
        .map_err(|source| BruteError::Simulation { year, state, source })?;
        out.failed += failed as u64;
        let y = blocks.into_iter().fold(f64::NEG_INFINITY, f64::max);
        if y > out.max {
            out.max = y;
        }
        out.top.push(y, c);
    }
    Ok(out)
}

/// Annual maxima from direct simulation of every kept state. Each state's
/// condition and seeds depend only on `(master, year, state index)`, so
/// tightening the truncation can only lower annual maxima.
pub fn brute_force_return_values<S, E>(
    env: &EnvModel,
    sim: &S,
    years: usize,
    trunc: TruncationSpec,
    opts: BruteOptions,
    master: u64,
    exec: &E,
) -> Result<BruteForceResult, BruteError>
where
    S: ShortTermSimulator + ?Sized,
    E: Executor,
{
    if years < MIN_BRUTE_YEARS {
        return Err(BruteError::TooFewYears(years));
    }
    if !(trunc.cutoff_u >= 0.0 && trunc.cutoff_sigma >= 0.0) {
        return Err(BruteError::NegativeCutoff { cutoff_u: trunc.cutoff_u, cutoff_sigma: trunc.cutoff_sigma });
    }
    let per_year: Result<Vec<Year>, _> = exec.map_indexed(years, |y| simulate_year(env, sim, trunc, &opts, master, y)).into_iter().collect();
    let per_year = per_year?;
    let annual_maxima: Vec<f64> = per_year.iter().map(|y| y.max).collect();
    let mut boot_rng = stream(master, Purpose::Bootstrap, &[]);
    let [rv50, rv100] = block_bootstrap(&annual_maxima, &[50.0, 100.0], opts.bootstrap_blocks, opts.bootstrap_resamples, &mut boot_rng)
        .try_into()
        .expect("two return periods");
    let mut exceed_conditions = Vec::new();
    let mut exceed_responses = Vec::new();
    for y in &per_year {
        for &(r, c) in &y.top.items {
            if r > rv50.estimate {
                exceed_conditions.push(c);
                exceed_responses.push(r);
            }
        }
    }
    let simulated: u64 = per_year.iter().map(|y| y.simulated).sum();
    Ok(BruteForceResult {
        years,
        truncation: trunc,
        rv50,
        rv100,
        fraction_simulated: simulated as f64 / (years * states_per_year(env)) as f64,
        failed_seeds: per_year.iter().map(|y| y.failed).sum(),
        annual_maxima,
        exceed_conditions,
        exceed_responses,
    })
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn percentile_ci(v: &mut [f64]) -> (f64, f64) {
    v.sort_by(f64::total_cmp);
    (v[order_statistic_index(0.025, v.len())], v[order_statistic_index(0.975, v.len())])
}

/// Return values with a year-block bootstrap: the maxima are cut into
/// `n_blocks` contiguous blocks which are resampled with replacement.
pub fn block_bootstrap<R: RngCore + ?Sized>(annual_maxima: &[f64], periods: &[f64], n_blocks: usize, resamples: usize, rng: &mut R) -> Vec<BootstrapSummary> {
    let n = annual_maxima.len();
    let n_blocks = n_blocks.clamp(1, n.max(1));
    let bounds: Vec<(usize, usize)> = (0..n_blocks).map(|b| (b * n / n_blocks, (b + 1) * n / n_blocks)).collect();
    let mut reps: Vec<Vec<f64>> = periods.iter().map(|_| Vec::with_capacity(resamples)).collect();
    let mut buf = Vec::with_capacity(n);
    for _ in 0..resamples {
        buf.clear();
        for _ in 0..n_blocks {
            let (lo, hi) = bounds[index_below(rng, n_blocks)];
            buf.extend_from_slice(&annual_maxima[lo..hi]);
        }
        for (r, &t) in reps.iter_mut().zip(periods) {
            r.push(return_value(&buf, t));
        }
    }
    periods
        .iter()
        .zip(reps.iter_mut())
        .map(|(&t, r)| BootstrapSummary { estimate: return_value(annual_maxima, t), se: sd(r), ci95: percentile_ci(r) })
        .collect()
}

/// Bootstrap of the `q` order statistic of one sample.
pub fn bootstrap_quantile<R: RngCore + ?Sized>(sample: &[f64], q: f64, resamples: usize, rng: &mut R) -> BootstrapSummary {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let estimate = sorted[order_statistic_index(q, sorted.len())];
    let mut buf = alloc::vec![0.0; sample.len()];
    let mut reps = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = sample[index_below(rng, sample.len())];
        }
        buf.sort_by(f64::total_cmp);
        reps.push(buf[order_statistic_index(q, buf.len())]);
    }
    BootstrapSummary { estimate, se: sd(&reps), ci95: percentile_ci(&mut reps) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_keeps_region_above_both_cutoffs() {
        let t = TruncationSpec { cutoff_u: 5.0, cutoff_sigma: 3.0 };
        assert!(t.keeps(Condition::new(5.0, 3.0)));
        assert!(!t.keeps(Condition::new(4.9, 4.0)));
        assert!(!t.keeps(Condition::new(12.0, 2.9)));
        assert!(TruncationSpec::NONE.keeps(Condition::new(0.0, 0.0)));
    }

    #[test]
    fn bootstrap_of_constant_sample_is_degenerate() {
        let v = [4.0; 200];
        let mut rng = stream(1, Purpose::Bootstrap, &[]);
        let s = block_bootstrap(&v, &[50.0], 10, 100, &mut rng);
        assert_eq!(s[0].estimate, 4.0);
        assert_eq!(s[0].se, 0.0);
        assert_eq!(s[0].ci95, (4.0, 4.0));
    }
}
