//! Synthetic stand-in for an aero-servo-elastic turbine simulator.
//!
//! Two routes are provided. [`SimPreset::max_response`] draws a short-term
//! block maximum directly from a parametric law whose location and scale
//! are smooth surfaces over `(U, σ_U)`. [`SimPreset::simulate_timeseries`]
//! generates a full wind and load history from an AR(1) wind model, a
//! first-order rotor lag, a static thrust-like load map peaking at rated
//! speed plus a linear gust load, and a damped linear blade oscillator.

use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[allow(unused_imports)]
use num_traits::Float;
use crate::env::Condition;
use crate::rng::{mix_key, open01, splitmix64, std_normal, SplitMix64};

/// Consecutive failed seeds tolerated before a simulation is abandoned.
pub const MAX_SEED_RETRIES: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("simulation failed at u={u}, sigma_u={sigma_u}, seed {seed}")]
    Failed { u: f64, sigma_u: f64, seed: u64 },
    #[error("{retries} consecutive seeds failed at u={u}, sigma_u={sigma_u}")]
    RetriesExhausted { u: f64, sigma_u: f64, retries: usize },
    #[error("time step {dt} s exceeds the oscillator stability bound {bound} s")]
    Unstable { dt: f64, bound: f64 },
    #[error("series too short: {duration_s} s with dt {dt} s")]
    TooShort { duration_s: f64, dt: f64 },
    #[error("invalid preset `{field}`: {message}")]
    InvalidPreset { field: &'static str, message: String },
}

/// Anything that produces short-term block maxima for a condition.
pub trait ShortTermSimulator: Sync {
    fn cut_in(&self) -> f64;
    fn cut_out(&self) -> f64;
    /// Maximum response over one block for `(cond, seed)`. Deterministic.
    fn max_response(&self, cond: Condition, seed: u64) -> Result<f64, SimError>;

    fn in_band(&self, u: f64) -> bool {
        u >= self.cut_in() && u <= self.cut_out()
    }
}

/// Maximum over `blocks` consecutive blocks of one stationary state. Block
/// seeds are derived from `seed`; a single block uses `seed` itself.
pub fn state_max_response<S: ShortTermSimulator + ?Sized>(
    sim: &S,
    cond: Condition,
    seed: u64,
    blocks: usize,
) -> Result<f64, SimError> {
    if blocks <= 1 {
        return sim.max_response(cond, seed);
    }
    let mut best = f64::NEG_INFINITY;
    for b in 0..blocks {
        best = best.max(sim.max_response(cond, mix_key(&[seed, b as u64]))?);
    }
    Ok(best)
}

/// Draws block maxima `blocks` at a time from successive seeds produced by
/// `next_seed`, skipping failed seeds. Gives up after
/// [`MAX_SEED_RETRIES`] consecutive failures. Returns the per-block maxima
/// of the first successful seed and the number of failures skipped.
pub fn simulate_blocks_with_retry<S, F>(
    sim: &S,
    cond: Condition,
    blocks: usize,
    mut next_seed: F,
) -> Result<(Vec<f64>, usize), SimError>
where
    S: ShortTermSimulator + ?Sized,
    F: FnMut() -> u64,
{
    let mut failures = 0;
    loop {
        let seed = next_seed();
        let attempt: Result<Vec<f64>, SimError> = if blocks <= 1 {
            sim.max_response(cond, seed).map(|y| alloc::vec![y])
        } else {
            (0..blocks).map(|b| sim.max_response(cond, mix_key(&[seed, b as u64]))).collect()
        };
        match attempt {
            Ok(v) => return Ok((v, failures)),
            Err(SimError::Failed { .. }) => {
                failures += 1;
                if failures >= MAX_SEED_RETRIES {
                    return Err(SimError::RetriesExhausted { u: cond.u, sigma_u: cond.sigma_u, retries: failures });
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Smooth response surface `base + amplitude·bump(u) + turbulence_gain·σ_U`
/// where `bump` is a unit Gaussian bump centred at `peak_u` with separate
/// widths below and above the peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSurface {
    pub base: f64,
    pub amplitude: f64,
    pub peak_u: f64,
    pub width_below: f64,
    pub width_above: f64,
    pub turbulence_gain: f64,
}

impl ResponseSurface {
    pub fn constant(value: f64) -> Self {
        Self { base: value, amplitude: 0.0, peak_u: 0.0, width_below: 1.0, width_above: 1.0, turbulence_gain: 0.0 }
    }

    pub fn eval(&self, u: f64, sigma_u: f64) -> f64 {
        let w = if u < self.peak_u { self.width_below } else { self.width_above };
        let d = (u - self.peak_u) / w;
        self.base + self.amplitude * (-0.5 * d * d).exp() + self.turbulence_gain * sigma_u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShortTermLaw {
    Gumbel,
    Gev { shape: f64 },
}

/// Parameters of the time-domain model behind [`SimPreset::simulate_timeseries`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    /// Correlation time of the AR(1) wind fluctuation, s.
    pub correlation_time_s: f64,
    /// Time constant of the rotor-effective wind lag, s.
    pub rotor_time_constant_s: f64,
    /// Rated wind speed where the static load map peaks, m/s.
    pub rated_u: f64,
    /// Peak static load, MNm.
    pub load_gain: f64,
    /// Gust load slope at zero fluctuation, MNm per m/s.
    #[serde(default = "default_gust_gain")]
    pub gust_gain: f64,
    pub natural_freq_hz: f64,
    pub damping_ratio: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            correlation_time_s: 5.0,
            rotor_time_constant_s: 4.0,
            rated_u: 11.4,
            load_gain: 12.0,
            gust_gain: default_gust_gain(),
            natural_freq_hz: 0.7,
            damping_ratio: 0.05,
        }
    }
}

fn default_gust_gain() -> f64 {
    2.0
}

impl Dynamics {
    /// Static thrust-like map `2G·x²/(1 + x⁴)`, `x = w/rated`, peaking at `G`.
    pub fn static_load(&self, w: f64) -> f64 {
        let x = w / self.rated_u;
        let x2 = x * x;
        2.0 * self.load_gain * x2 / (1.0 + x2 * x2)
    }

    /// Quasi-static gust load `g·(w² − U²)/(2U)` for fluctuation `e = w − U`:
    /// linear in small gusts, quadratic like thrust in large ones.
    pub fn gust_load(&self, mean_u: f64, e: f64) -> f64 {
        self.gust_gain * (e + e * e / (2.0 * mean_u))
    }

    /// Largest stable step of the semi-implicit Euler oscillator update,
    /// `(2/ω)(√(1+ζ²) − ζ)`.
    pub fn stability_bound(&self) -> f64 {
        let omega = 2.0 * core::f64::consts::PI * self.natural_freq_hz;
        let z = self.damping_ratio;
        2.0 / omega * ((1.0 + z * z).sqrt() - z)
    }
}

/// A time history sampled at a uniform step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSeries {
    pub t: Vec<f64>,
    pub wind: Vec<f64>,
    /// Rotor-effective wind: the lagged internal state feeding the load map.
    pub rotor: Vec<f64>,
    pub y: Vec<f64>,
    pub dt: f64,
}

impl ResponseSeries {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 * self.dt
    }
}

/// A named synthetic turbine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPreset {
    pub name: String,
    /// Location surface `r(u, σ_U)` of the block-maximum law, MNm.
    pub location: ResponseSurface,
    /// Scale surface `s(u, σ_U)` of the block-maximum law, MNm.
    pub scale: ResponseSurface,
    pub law: ShortTermLaw,
    pub cut_in: f64,
    pub cut_out: f64,
    pub block_minutes: f64,
    /// Probability that a given `(cond, seed)` fails, emulating surrogate
    /// blow-ups at extreme inputs.
    #[serde(default)]
    pub failure_prob: f64,
    #[serde(default)]
    pub dynamics: Dynamics,
}

impl SimPreset {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |field, message: &str| Err(SimError::InvalidPreset { field, message: message.into() });
        if !(self.cut_in >= 0.0 && self.cut_in < self.cut_out) {
            return bad("cut_in", "need 0 <= cut_in < cut_out");
        }
        if !(self.block_minutes > 0.0) {
            return bad("block_minutes", "must be > 0");
        }
        if !(0.0..1.0).contains(&self.failure_prob) {
            return bad("failure_prob", "must lie in [0, 1)");
        }
        if let ShortTermLaw::Gev { shape } = self.law {
            if !shape.is_finite() {
                return bad("law.shape", "must be finite");
            }
        }
        for (field, s) in [("location", &self.location), ("scale", &self.scale)] {
            if !(s.width_below > 0.0 && s.width_above > 0.0) {
                return bad(field, "bump widths must be > 0");
            }
            // Nonnegativity on the band at zero turbulence and with positive gain.
            let mut u = self.cut_in;
            while u <= self.cut_out {
                if s.eval(u, 0.0) < 0.0 || s.turbulence_gain < 0.0 {
                    return bad(field, "surface must be nonnegative on [cut_in, cut_out] x [0, inf)");
                }
                u += 0.05;
            }
        }
        let d = &self.dynamics;
        if !(d.correlation_time_s > 0.0 && d.rotor_time_constant_s > 0.0 && d.natural_freq_hz > 0.0 && d.damping_ratio >= 0.0) {
            return bad("dynamics", "time constants and frequency must be > 0");
        }
        Ok(())
    }

    /// Location and scale of the block-maximum law at `cond` (zero outside the band).
    pub fn law_params(&self, cond: Condition) -> (f64, f64) {
        if !self.in_band(cond.u) {
            return (0.0, 0.0);
        }
        (
            self.location.eval(cond.u, cond.sigma_u).max(0.0),
            self.scale.eval(cond.u, cond.sigma_u).max(0.0),
        )
    }

    fn call_rng(cond: Condition, seed: u64) -> SplitMix64 {
        SplitMix64::new(mix_key(&[seed, cond.u.to_bits(), cond.sigma_u.to_bits()]))
    }

    /// Full time history of wind, rotor state and response.
    pub fn simulate_timeseries(&self, cond: Condition, seed: u64, duration_s: f64, dt: f64) -> Result<ResponseSeries, SimError> {
        if !(dt > 0.0) || !(duration_s >= 10.0 * dt) {
            return Err(SimError::TooShort { duration_s, dt });
        }
        let d = &self.dynamics;
        let bound = d.stability_bound();
        if dt >= bound {
            return Err(SimError::Unstable { dt, bound });
        }
        let n = libm::round(duration_s / dt) as usize;
        let mut state = mix_key(&[seed, cond.u.to_bits(), cond.sigma_u.to_bits(), 0x7473]);
        let mut key = [0u8; 32];
        for c in key.chunks_exact_mut(8) {
            c.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);

        let phi = (-dt / d.correlation_time_s).exp();
        let innov = cond.sigma_u * (1.0 - phi * phi).sqrt();
        let lag = (-dt / d.rotor_time_constant_s).exp();
        let omega = 2.0 * core::f64::consts::PI * d.natural_freq_hz;
        let (w2, c) = (omega * omega, 2.0 * d.damping_ratio * omega);

        let mut t = Vec::with_capacity(n);
        let mut wind = Vec::with_capacity(n);
        let mut rotor = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut e = cond.sigma_u * std_normal(&mut rng);
        let mut z = cond.u + e;
        let (mut pos, mut vel) = (0.0, 0.0);
        for k in 0..n {
            if k > 0 {
                e = phi * e + innov * std_normal(&mut rng);
            }
            let w = cond.u + e;
            if k > 0 {
                z = lag * z + (1.0 - lag) * w;
            }
            let force = d.static_load(z) + d.gust_load(cond.u, e);
            vel += dt * (w2 * (force - pos) - c * vel);
            pos += dt * vel;
            if !pos.is_finite() {
                return Err(SimError::Failed { u: cond.u, sigma_u: cond.sigma_u, seed });
            }
            t.push(k as f64 * dt);
            wind.push(w);
            rotor.push(z);
            y.push(pos);
        }
        Ok(ResponseSeries { t, wind, rotor, y, dt })
    }
}

impl ShortTermSimulator for SimPreset {
    fn cut_in(&self) -> f64 {
        self.cut_in
    }

    fn cut_out(&self) -> f64 {
        self.cut_out
    }

    fn max_response(&self, cond: Condition, seed: u64) -> Result<f64, SimError> {
        if !self.in_band(cond.u) {
            return Ok(0.0);
        }
        let mut rng = Self::call_rng(cond, seed);
        if self.failure_prob > 0.0 && open01(&mut rng) < self.failure_prob {
            return Err(SimError::Failed { u: cond.u, sigma_u: cond.sigma_u, seed });
        }
        let (r, s) = self.law_params(cond);
        if s == 0.0 {
            return Ok(r);
        }
        let v = open01(&mut rng);
        let g = match self.law {
            ShortTermLaw::Gumbel => -(-v.ln()).ln(),
            ShortTermLaw::Gev { shape } if shape.abs() < 1e-12 => -(-v.ln()).ln(),
            ShortTermLaw::Gev { shape } => ((-v.ln()).powf(-shape) - 1.0) / shape,
        };
        Ok(r + s * g)
    }
}

/// Per-block maxima of `y`; the trailing partial block is discarded.
pub fn split_block_maxima(series: &ResponseSeries, block_minutes: f64) -> Vec<f64> {
    let per_block = libm::round(block_minutes * 60.0 / series.dt) as usize;
    if per_block == 0 {
        return Vec::new();
    }
    series
        .y
        .chunks_exact(per_block)
        .map(|b| b.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// A simulator returning one fixed value inside the band.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSim {
    pub value: f64,
    pub cut_in: f64,
    pub cut_out: f64,
}

impl ShortTermSimulator for ConstantSim {
    fn cut_in(&self) -> f64 {
        self.cut_in
    }

    fn cut_out(&self) -> f64 {
        self.cut_out
    }

    fn max_response(&self, cond: Condition, _seed: u64) -> Result<f64, SimError> {
        Ok(if self.in_band(cond.u) { self.value } else { 0.0 })
    }
}
