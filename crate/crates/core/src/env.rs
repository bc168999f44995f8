//! Joint long-term distribution of mean wind speed `U` and turbulence `σ_U`.
//!
//! The model factorises as `f(u, σ) = f_U(u) · f_{σ|U}(σ | u)`. Every
//! marginal and conditional family has a closed-form CDF and quantile, and
//! tail evaluations use survival functions so that the Rosenblatt transform
//! stays accurate out to the probabilities of 50-year contours.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[allow(unused_imports)]
use num_traits::Float;
use crate::math::{norm_cdf, norm_pdf, norm_ppf, norm_sf};
use crate::rng::{open01, std_normal};

/// Upper end of the wind-speed range over which conditional scale
/// functions must stay positive.
pub const OPERATIONAL_CHECK_MAX_U: f64 = 50.0;

/// Tolerance on CDF continuity at the hybrid junction.
pub const JUNCTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("{what} = {value} is outside the open unit interval")]
    Domain { what: &'static str, value: f64 },
    #[error("quantile inversion failed in bracket [{lo}, {hi}]")]
    Inversion { lo: f64, hi: f64 },
}

fn invalid(path: &str, message: impl Into<String>) -> EnvError {
    EnvError::Validation { path: path.into(), message: message.into() }
}

/// An environmental state `x = (U, σ_U)`, both in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub u: f64,
    pub sigma_u: f64,
}

impl Condition {
    pub const fn new(u: f64, sigma_u: f64) -> Self {
        Self { u, sigma_u }
    }
}

/// A point in independent standard-normal space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPoint {
    pub u1: f64,
    pub u2: f64,
}

impl NormalPoint {
    pub fn radius(&self) -> f64 {
        libm::hypot(self.u1, self.u2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginalSpec {
    Weibull {
        shape: f64,
        scale: f64,
        #[serde(default)]
        location: f64,
    },
    /// Weibull body up to `threshold`, generalized Pareto tail above it.
    /// `tail_prob` is the tail's exceedance probability at the junction; if
    /// omitted it is set to the Weibull survival at the threshold.
    HybridWeibullGpd {
        weibull_shape: f64,
        weibull_scale: f64,
        threshold: f64,
        gpd_shape: f64,
        gpd_scale: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail_prob: Option<f64>,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    /// Reference family with unbounded support, used for geometry checks.
    Normal {
        mean: f64,
        std: f64,
    },
}

fn weibull_sf(z: f64, shape: f64) -> f64 {
    if z <= 0.0 {
        1.0
    } else {
        (-z.powf(shape)).exp()
    }
}

fn weibull_cdf(z: f64, shape: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        -(-z.powf(shape)).exp_m1()
    }
}

fn gpd_sf(excess: f64, shape: f64, scale: f64) -> f64 {
    if excess <= 0.0 {
        return 1.0;
    }
    if shape.abs() < 1e-12 {
        return (-excess / scale).exp();
    }
    let t = 1.0 + shape * excess / scale;
    if t <= 0.0 {
        0.0
    } else {
        (-(t.ln()) / shape).exp()
    }
}

fn gpd_pdf(excess: f64, shape: f64, scale: f64) -> f64 {
    if excess < 0.0 {
        return 0.0;
    }
    if shape.abs() < 1e-12 {
        return (-excess / scale).exp() / scale;
    }
    let t = 1.0 + shape * excess / scale;
    if t <= 0.0 {
        0.0
    } else {
        (-(1.0 / shape + 1.0) * t.ln()).exp() / scale
    }
}

/// Excess over the threshold with survival `q ∈ (0, 1]` under the GPD.
fn gpd_isf(q: f64, shape: f64, scale: f64) -> f64 {
    if shape.abs() < 1e-12 {
        -scale * q.ln()
    } else {
        scale * ((-shape * q.ln()).exp_m1()) / shape
    }
}

impl MarginalSpec {
    fn validate(&self, path: &str) -> Result<(), EnvError> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(&format!("{path}.{name}"), format!("must be finite and > 0, got {v}")))
            }
        };
        let fin = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(&format!("{path}.{name}"), "must be finite"))
            }
        };
        match *self {
            MarginalSpec::Weibull { shape, scale, location } => {
                pos("shape", shape)?;
                pos("scale", scale)?;
                fin("location", location)?;
                if location < 0.0 {
                    return Err(invalid(&format!("{path}.location"), "wind speed support must be nonnegative"));
                }
            }
            MarginalSpec::HybridWeibullGpd { weibull_shape, weibull_scale, threshold, gpd_shape, gpd_scale, tail_prob } => {
                pos("weibull_shape", weibull_shape)?;
                pos("weibull_scale", weibull_scale)?;
                pos("threshold", threshold)?;
                pos("gpd_scale", gpd_scale)?;
                fin("gpd_shape", gpd_shape)?;
                if let Some(p) = tail_prob {
                    if !(p > 0.0 && p < 1.0) {
                        return Err(invalid(&format!("{path}.tail_prob"), format!("must lie in (0, 1), got {p}")));
                    }
                    let body = weibull_cdf(threshold / weibull_scale, weibull_shape);
                    let tail = 1.0 - p;
                    if (body - tail).abs() > JUNCTION_TOL {
                        return Err(invalid(
                            &format!("{path}.tail_prob"),
                            format!(
                                "CDF discontinuous at threshold {threshold}: body {body:.12} vs tail {tail:.12}"
                            ),
                        ));
                    }
                }
            }
            MarginalSpec::Lognormal { mu, sigma } => {
                fin("mu", mu)?;
                pos("sigma", sigma)?;
            }
            MarginalSpec::Normal { mean, std } => {
                fin("mean", mean)?;
                pos("std", std)?;
            }
        }
        Ok(())
    }

    fn hybrid_tail_prob(threshold: f64, shape: f64, scale: f64, tail_prob: Option<f64>) -> f64 {
        tail_prob.unwrap_or_else(|| weibull_sf(threshold / scale, shape))
    }

    pub fn pdf(&self, u: f64) -> f64 {
        match *self {
            MarginalSpec::Weibull { shape, scale, location } => {
                let z = (u - location) / scale;
                if z < 0.0 || (z == 0.0 && shape > 1.0) {
                    return 0.0;
                }
                if z == 0.0 {
                    return if shape == 1.0 { 1.0 / scale } else { f64::INFINITY };
                }
                shape / scale * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
            }
            MarginalSpec::HybridWeibullGpd { weibull_shape, weibull_scale, threshold, gpd_shape, gpd_scale, tail_prob } => {
                if u < 0.0 {
                    0.0
                } else if u <= threshold {
                    MarginalSpec::Weibull { shape: weibull_shape, scale: weibull_scale, location: 0.0 }.pdf(u)
                } else {
                    let p = Self::hybrid_tail_prob(threshold, weibull_shape, weibull_scale, tail_prob);
                    p * gpd_pdf(u - threshold, gpd_shape, gpd_scale)
                }
            }
            MarginalSpec::Lognormal { mu, sigma } => lognormal_pdf(u, mu, sigma),
            MarginalSpec::Normal { mean, std } => norm_pdf((u - mean) / std) / std,
        }
    }

    pub fn cdf(&self, u: f64) -> f64 {
        match *self {
            MarginalSpec::Normal { mean, std } => norm_cdf((u - mean) / std),
            MarginalSpec::Lognormal { mu, sigma } => {
                if u <= 0.0 {
                    0.0
                } else {
                    norm_cdf((u.ln() - mu) / sigma)
                }
            }
            MarginalSpec::Weibull { shape, scale, location } => weibull_cdf((u - location) / scale, shape),
            MarginalSpec::HybridWeibullGpd { .. } => 1.0 - self.sf(u),
        }
    }

    /// Survival function `1 − F(u)`, computed directly in the upper tail.
    pub fn sf(&self, u: f64) -> f64 {
        match *self {
            MarginalSpec::Normal { mean, std } => norm_sf((u - mean) / std),
            MarginalSpec::Lognormal { mu, sigma } => {
                if u <= 0.0 {
                    1.0
                } else {
                    norm_sf((u.ln() - mu) / sigma)
                }
            }
            MarginalSpec::Weibull { shape, scale, location } => weibull_sf((u - location) / scale, shape),
            MarginalSpec::HybridWeibullGpd { weibull_shape, weibull_scale, threshold, gpd_shape, gpd_scale, tail_prob } => {
                if u <= threshold {
                    weibull_sf(u / weibull_scale, weibull_shape)
                } else {
                    let p = Self::hybrid_tail_prob(threshold, weibull_shape, weibull_scale, tail_prob);
                    p * gpd_sf(u - threshold, gpd_shape, gpd_scale)
                }
            }
        }
    }

    /// Quantile from a probability pair `(p, q)` with `p + q = 1`. Whichever of
    /// the two is smaller drives the computation, so neither tail loses
    /// precision.
    pub fn quantile_pq(&self, p: f64, q: f64) -> f64 {
        match *self {
            MarginalSpec::Normal { mean, std } => mean + std * z_from_pq(p, q),
            MarginalSpec::Lognormal { mu, sigma } => (mu + sigma * z_from_pq(p, q)).exp(),
            MarginalSpec::Weibull { shape, scale, location } => {
                let h = cumulative_hazard(p, q);
                location + scale * h.powf(1.0 / shape)
            }
            MarginalSpec::HybridWeibullGpd { weibull_shape, weibull_scale, threshold, gpd_shape, gpd_scale, tail_prob } => {
                let pt = Self::hybrid_tail_prob(threshold, weibull_shape, weibull_scale, tail_prob);
                if q >= pt {
                    let h = cumulative_hazard(p, q);
                    weibull_scale * h.powf(1.0 / weibull_shape)
                } else {
                    threshold + gpd_isf(q / pt, gpd_shape, gpd_scale)
                }
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.quantile_pq(p, 1.0 - p)
    }

    pub fn median(&self) -> f64 {
        self.quantile_pq(0.5, 0.5)
    }

    /// Standard-normal image of `u`, exact for the Gaussian-based families.
    fn to_normal(&self, u: f64) -> Result<f64, EnvError> {
        match *self {
            MarginalSpec::Normal { mean, std } => Ok((u - mean) / std),
            MarginalSpec::Lognormal { mu, sigma } => {
                if u <= 0.0 {
                    return Err(EnvError::Domain { what: "F_U(u)", value: 0.0 });
                }
                Ok((u.ln() - mu) / sigma)
            }
            _ => {
                let (p, q) = (self.cdf(u), self.sf(u));
                normal_from_pq(p, q, "F_U(u)")
            }
        }
    }
}

/// `−ln q` computed from whichever of `(p, q)` is more precise.
fn cumulative_hazard(p: f64, q: f64) -> f64 {
    if p < 0.5 {
        -(-p).ln_1p()
    } else {
        -q.ln()
    }
}

fn z_from_pq(p: f64, q: f64) -> f64 {
    if p <= q {
        norm_ppf(p)
    } else {
        -norm_ppf(q)
    }
}

fn normal_from_pq(p: f64, q: f64, what: &'static str) -> Result<f64, EnvError> {
    if !(p > 0.0) || !(q > 0.0) {
        return Err(EnvError::Domain { what, value: p });
    }
    Ok(z_from_pq(p, q))
}

fn lognormal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    norm_pdf((x.ln() - mu) / sigma) / (x * sigma)
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Distribution of `σ_U` given `U = u`. Location and scale are polynomials
/// in `u` of degree at most 2, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditionalSpec {
    /// `ln σ_U | u ~ N(mu(u), sigma(u)²)`.
    LognormalGivenU { mu_coeffs: Vec<f64>, sigma_coeffs: Vec<f64> },
    /// `σ_U | u ~ N(mean(u), std(u)²)`; reference family for geometry checks.
    NormalGivenU { mean_coeffs: Vec<f64>, std_coeffs: Vec<f64> },
}

impl ConditionalSpec {
    fn coeffs(&self) -> (&[f64], &[f64], &'static str, &'static str) {
        match self {
            ConditionalSpec::LognormalGivenU { mu_coeffs, sigma_coeffs } => (mu_coeffs, sigma_coeffs, "mu_coeffs", "sigma_coeffs"),
            ConditionalSpec::NormalGivenU { mean_coeffs, std_coeffs } => (mean_coeffs, std_coeffs, "mean_coeffs", "std_coeffs"),
        }
    }

    fn validate(&self, path: &str) -> Result<(), EnvError> {
        let (loc, scale, loc_name, scale_name) = self.coeffs();
        for (name, c) in [(loc_name, loc), (scale_name, scale)] {
            if c.is_empty() || c.len() > 3 {
                return Err(invalid(&format!("{path}.{name}"), "expected 1 to 3 polynomial coefficients"));
            }
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(invalid(&format!("{path}.{name}[{i}]"), "must be finite"));
            }
        }
        // Scale must be positive on [0, 50]: check a fine grid plus the vertex.
        let mut probe: Vec<f64> = (0..=5000).map(|i| i as f64 * OPERATIONAL_CHECK_MAX_U / 5000.0).collect();
        if scale.len() == 3 && scale[2] != 0.0 {
            let vertex = -scale[1] / (2.0 * scale[2]);
            if (0.0..=OPERATIONAL_CHECK_MAX_U).contains(&vertex) {
                probe.push(vertex);
            }
        }
        if let Some(&u) = probe.iter().find(|&&u| !(poly(scale, u) > 0.0)) {
            return Err(invalid(
                &format!("{path}.{scale_name}"),
                format!("scale evaluates to {} at u = {u}; must be > 0 on [0, 50]", poly(scale, u)),
            ));
        }
        Ok(())
    }

    /// Location and scale of the conditional at `u`.
    pub fn params_at(&self, u: f64) -> (f64, f64) {
        let (loc, scale, _, _) = self.coeffs();
        (poly(loc, u), poly(scale, u))
    }

    pub fn pdf(&self, sigma_u: f64, u: f64) -> f64 {
        let (m, s) = self.params_at(u);
        match self {
            ConditionalSpec::LognormalGivenU { .. } => lognormal_pdf(sigma_u, m, s),
            ConditionalSpec::NormalGivenU { .. } => norm_pdf((sigma_u - m) / s) / s,
        }
    }

    pub fn cdf(&self, sigma_u: f64, u: f64) -> f64 {
        let (m, s) = self.params_at(u);
        match self {
            ConditionalSpec::LognormalGivenU { .. } => {
                if sigma_u <= 0.0 {
                    0.0
                } else {
                    norm_cdf((sigma_u.ln() - m) / s)
                }
            }
            ConditionalSpec::NormalGivenU { .. } => norm_cdf((sigma_u - m) / s),
        }
    }

    /// Conditional value whose standard-normal image is `z`.
    pub fn from_normal(&self, z: f64, u: f64) -> f64 {
        let (m, s) = self.params_at(u);
        match self {
            ConditionalSpec::LognormalGivenU { .. } => (m + s * z).exp(),
            ConditionalSpec::NormalGivenU { .. } => m + s * z,
        }
    }

    pub fn to_normal(&self, sigma_u: f64, u: f64) -> Result<f64, EnvError> {
        let (m, s) = self.params_at(u);
        match self {
            ConditionalSpec::LognormalGivenU { .. } => {
                if sigma_u <= 0.0 {
                    return Err(EnvError::Domain { what: "F_{σ|U}(σ)", value: 0.0 });
                }
                Ok((sigma_u.ln() - m) / s)
            }
            ConditionalSpec::NormalGivenU { .. } => Ok((sigma_u - m) / s),
        }
    }

    pub fn quantile(&self, p: f64, u: f64) -> f64 {
        self.from_normal(norm_ppf(p), u)
    }
}

pub const TEN_MINUTES_HOURS: f64 = 1.0 / 6.0;

fn default_state_duration() -> f64 {
    TEN_MINUTES_HOURS
}

/// Joint long-term model of `(U, σ_U)` and the duration of one stationary
/// state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvModel {
    pub marginal_u: MarginalSpec,
    pub conditional_sigma: ConditionalSpec,
    #[serde(default = "default_state_duration")]
    pub state_duration_hours: f64,
}

impl EnvModel {
    pub fn new(marginal_u: MarginalSpec, conditional_sigma: ConditionalSpec, state_duration_hours: f64) -> Result<Self, EnvError> {
        let m = Self { marginal_u, conditional_sigma, state_duration_hours };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.marginal_u.validate("marginal_u")?;
        self.conditional_sigma.validate("conditional_sigma")?;
        let d = self.state_duration_hours;
        if !(d.is_finite() && d > 0.0) {
            return Err(invalid("state_duration_hours", format!("must be > 0, got {d}")));
        }
        Ok(())
    }

    /// Number of stationary states per year (365.25-day years).
    pub fn states_per_year(&self) -> f64 {
        365.25 * 24.0 / self.state_duration_hours
    }

    pub fn joint_pdf(&self, x: Condition) -> f64 {
        if !(x.u.is_finite() && x.sigma_u.is_finite()) {
            return 0.0;
        }
        let fu = self.marginal_u.pdf(x.u);
        if fu == 0.0 {
            return 0.0;
        }
        fu * self.conditional_sigma.pdf(x.sigma_u, x.u)
    }

    /// One draw; consumes exactly two `u64` from `rng`.
    #[inline]
    pub fn sample_one<R: RngCore + ?Sized>(&self, rng: &mut R) -> Condition {
        let v = open01(rng);
        let u = self.marginal_u.quantile_pq(v, 1.0 - v);
        let z = std_normal(rng);
        Condition { u, sigma_u: self.conditional_sigma.from_normal(z, u) }
    }

    pub fn sample_conditions<R: RngCore + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Condition> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// Rosenblatt transform to independent standard normals, `U` first.
    pub fn rosenblatt(&self, x: Condition) -> Result<NormalPoint, EnvError> {
        let u1 = self.marginal_u.to_normal(x.u)?;
        let u2 = self.conditional_sigma.to_normal(x.sigma_u, x.u)?;
        if !(u1.is_finite() && u2.is_finite()) {
            return Err(EnvError::Domain { what: "rosenblatt image", value: if u1.is_finite() { u2 } else { u1 } });
        }
        Ok(NormalPoint { u1, u2 })
    }

    pub fn inverse_rosenblatt(&self, p: NormalPoint) -> Result<Condition, EnvError> {
        if !(p.u1.is_finite() && p.u2.is_finite()) {
            return Err(EnvError::Domain { what: "standard-normal point", value: if p.u1.is_finite() { p.u2 } else { p.u1 } });
        }
        let u = self.marginal_u.quantile_pq(norm_cdf(p.u1), norm_sf(p.u1));
        if !u.is_finite() {
            return Err(EnvError::Inversion { lo: self.marginal_u.quantile(0.0), hi: f64::INFINITY });
        }
        Ok(Condition { u, sigma_u: self.conditional_sigma.from_normal(p.u2, u) })
    }

    /// Range of `σ_U` holding `1 − 2·tail` of the conditional mass at every
    /// `u` in `[u_lo, u_hi]`.
    pub fn sigma_envelope(&self, u_lo: f64, u_hi: f64, tail: f64) -> (f64, f64) {
        let z = norm_ppf(1.0 - tail);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=200 {
            let u = u_lo + (u_hi - u_lo) * i as f64 / 200.0;
            lo = lo.min(self.conditional_sigma.from_normal(-z, u));
            hi = hi.max(self.conditional_sigma.from_normal(z, u));
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use alloc::vec;

    fn weibull_model() -> EnvModel {
        EnvModel::new(
            MarginalSpec::Weibull { shape: 2.0, scale: 10.0, location: 0.0 },
            ConditionalSpec::LognormalGivenU { mu_coeffs: vec![-0.4, 0.06], sigma_coeffs: vec![0.25] },
            TEN_MINUTES_HOURS,
        )
        .unwrap()
    }

    fn hybrid(tail_prob: Option<f64>) -> MarginalSpec {
        MarginalSpec::HybridWeibullGpd {
            weibull_shape: 2.0,
            weibull_scale: 9.0,
            threshold: 18.0,
            gpd_shape: -0.1,
            gpd_scale: 2.5,
            tail_prob,
        }
    }

    #[test]
    fn pdf_outside_support_is_zero() {
        let m = weibull_model();
        assert_eq!(m.joint_pdf(Condition::new(-1.0, 1.0)), 0.0);
        assert_eq!(m.joint_pdf(Condition::new(5.0, -1.0)), 0.0);
        assert!(m.joint_pdf(Condition::new(7.07, 0.9)) > 0.0);
    }

    #[test]
    fn median_maps_to_origin() {
        let m = weibull_model();
        let med = m.marginal_u.median();
        assert!((med - 10.0 * core::f64::consts::LN_2.sqrt()).abs() < 1e-12);
        let sig_med = m.conditional_sigma.quantile(0.5, med);
        let p = m.rosenblatt(Condition::new(med, sig_med)).unwrap();
        assert!(p.u1.abs() < 1e-12 && p.u2.abs() < 1e-12);
        let back = m.inverse_rosenblatt(NormalPoint { u1: 0.0, u2: 0.0 }).unwrap();
        assert!((back.u - med).abs() < 1e-12 && (back.sigma_u - sig_med).abs() < 1e-12);
    }

    #[test]
    fn hybrid_discontinuity_rejected_with_path() {
        let body = weibull_cdf(18.0 / 9.0, 2.0);
        let good = 1.0 - body;
        assert!(EnvModel::new(hybrid(Some(good)), weibull_model().conditional_sigma, 1.0).is_ok());
        let err = EnvModel::new(hybrid(Some(good + 0.05)), weibull_model().conditional_sigma, 1.0).unwrap_err();
        match err {
            EnvError::Validation { path, .. } => assert_eq!(path, "marginal_u.tail_prob"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hybrid_cdf_continuous_and_monotone_on_grid() {
        let m = hybrid(None);
        let mut prev = 0.0;
        for i in 0..10_000 {
            let u = i as f64 * 40.0 / 10_000.0;
            let f = m.cdf(u);
            assert!(f >= prev - 1e-15, "nonmonotone at {u}");
            prev = f;
        }
        let left = m.cdf(18.0 - 1e-12);
        let right = m.cdf(18.0 + 1e-12);
        assert!((left - right).abs() < 1e-9);
    }

    #[test]
    fn negative_scale_reports_field_path() {
        let err = EnvModel::new(
            MarginalSpec::Weibull { shape: 2.0, scale: -1.0, location: 0.0 },
            weibull_model().conditional_sigma,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, EnvError::Validation { ref path, .. } if path == "marginal_u.scale"));
        let err = EnvModel::new(
            weibull_model().marginal_u,
            ConditionalSpec::LognormalGivenU { mu_coeffs: vec![0.0], sigma_coeffs: vec![1.0, -0.05] },
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, EnvError::Validation { ref path, .. } if path == "conditional_sigma.sigma_coeffs"));
    }

    #[test]
    fn quantile_inverts_cdf_every_family() {
        let fams = [
            weibull_model().marginal_u,
            hybrid(None),
            MarginalSpec::Lognormal { mu: 2.0, sigma: 0.4 },
            MarginalSpec::Normal { mean: 1.0, std: 2.0 },
        ];
        for f in fams {
            for p in [1e-9, 1e-4, 0.1, 0.5, 0.9, 0.999, 1.0 - 1e-7] {
                let x = f.quantile(p);
                assert!((f.cdf(x) - p).abs() < 1e-12, "{f:?} p={p}");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = weibull_model();
        let a = m.sample_conditions(100, &mut stream(1, Purpose::EnvSample, &[0]));
        let b = m.sample_conditions(100, &mut stream(1, Purpose::EnvSample, &[0]));
        assert_eq!(a, b);
        assert!(m.sample_conditions(0, &mut stream(1, Purpose::EnvSample, &[0])).is_empty());
    }

    #[test]
    fn rosenblatt_domain_error_at_support_edge() {
        let m = weibull_model();
        assert!(matches!(m.rosenblatt(Condition::new(0.0, 1.0)), Err(EnvError::Domain { .. })));
        assert!(matches!(m.rosenblatt(Condition::new(5.0, 0.0)), Err(EnvError::Domain { .. })));
    }
}
