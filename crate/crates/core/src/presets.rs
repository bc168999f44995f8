//! Named synthetic sites and turbines. All parameters are invented.
//!
//! `site-a-like` uses 10-minute states and a response whose long-term
//! variability dominates. `brittany-like` uses 1-hour states over a hybrid
//! Weibull/GPD wind climate with a wide short-term law at mid wind speeds.
//! `misspecified` pairs the site-a climate with a GEV(0.1) short-term law.

use alloc::string::String;
use alloc::vec;

use crate::env::{ConditionalSpec, EnvModel, MarginalSpec, TEN_MINUTES_HOURS};
use crate::response::{Dynamics, ResponseSurface, ShortTermLaw, SimPreset};

pub const PRESET_NAMES: [&str; 3] = ["site-a-like", "brittany-like", "misspecified"];

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub env: EnvModel,
    pub sim: SimPreset,
}

impl Preset {
    /// Short-term blocks per environmental state.
    pub fn blocks_per_state(&self) -> usize {
        blocks_per_state(&self.env, &self.sim)
    }
}

pub fn blocks_per_state(env: &EnvModel, sim: &SimPreset) -> usize {
    libm::round(env.state_duration_hours * 60.0 / sim.block_minutes).max(1.0) as usize
}

pub fn site_a_like_env() -> EnvModel {
    EnvModel::new(
        MarginalSpec::Weibull { shape: 2.0, scale: 9.5, location: 0.0 },
        ConditionalSpec::LognormalGivenU { mu_coeffs: vec![0.05, 0.055], sigma_coeffs: vec![0.2] },
        TEN_MINUTES_HOURS,
    )
    .expect("valid preset")
}

pub fn brittany_like_env() -> EnvModel {
    EnvModel::new(
        MarginalSpec::HybridWeibullGpd {
            weibull_shape: 1.9,
            weibull_scale: 9.0,
            threshold: 18.0,
            gpd_shape: -0.1,
            gpd_scale: 2.5,
            tail_prob: None,
        },
        ConditionalSpec::LognormalGivenU { mu_coeffs: vec![-0.2, 0.06], sigma_coeffs: vec![0.25] },
        1.0,
    )
    .expect("valid preset")
}

pub fn site_a_like_sim() -> SimPreset {
    SimPreset {
        name: String::from("site-a-like"),
        location: ResponseSurface { base: 2.0, amplitude: 16.0, peak_u: 11.5, width_below: 3.5, width_above: 9.0, turbulence_gain: 2.0 },
        scale: ResponseSurface { base: 0.35, amplitude: 0.15, peak_u: 12.0, width_below: 4.0, width_above: 8.0, turbulence_gain: 0.05 },
        law: ShortTermLaw::Gumbel,
        cut_in: 3.0,
        cut_out: 25.0,
        block_minutes: 10.0,
        failure_prob: 0.0,
        dynamics: Dynamics::default(),
    }
}

pub fn brittany_like_sim() -> SimPreset {
    SimPreset {
        name: String::from("brittany-like"),
        location: ResponseSurface { base: 2.0, amplitude: 10.0, peak_u: 11.5, width_below: 3.5, width_above: 9.0, turbulence_gain: 1.0 },
        scale: ResponseSurface { base: 0.5, amplitude: 1.5, peak_u: 10.0, width_below: 3.0, width_above: 4.0, turbulence_gain: 0.1 },
        law: ShortTermLaw::Gumbel,
        cut_in: 3.0,
        cut_out: 25.0,
        block_minutes: 10.0,
        failure_prob: 0.0,
        dynamics: Dynamics::default(),
    }
}

pub fn misspecified_sim() -> SimPreset {
    SimPreset { name: String::from("misspecified"), law: ShortTermLaw::Gev { shape: 0.1 }, ..site_a_like_sim() }
}

pub fn preset(name: &str) -> Option<Preset> {
    match name {
        "site-a-like" => Some(Preset { env: site_a_like_env(), sim: site_a_like_sim() }),
        "brittany-like" => Some(Preset { env: brittany_like_env(), sim: brittany_like_sim() }),
        "misspecified" => Some(Preset { env: site_a_like_env(), sim: misspecified_sim() }),
        _ => None,
    }
}
