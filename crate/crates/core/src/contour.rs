//! Environmental contours (IFORM and direct sampling) and contour-based
//! long-term extreme response estimates.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[allow(unused_imports)]
use num_traits::Float;
use crate::env::{Condition, EnvError, EnvModel, NormalPoint};
use crate::math::{norm_isf, order_statistic_index};
use crate::response::{simulate_blocks_with_retry, ShortTermSimulator, SimError};
use crate::rng::{derive_seed, stream, Executor, Purpose};

pub const HOURS_PER_YEAR: f64 = 365.25 * 24.0;
pub const DEFAULT_CONTOUR_POINTS: usize = 72;
pub const MIN_CONTOUR_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContourError {
    #[error("{what} must be > 0, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("exceedance probability {0} outside (0, 0.5)")]
    ExceedanceRange(f64),
    #[error("at least {MIN_CONTOUR_POINTS} contour points required, got {0}")]
    TooFewPoints(usize),
    #[error("{samples} samples at pe={pe} leave fewer than one exceedance")]
    InsufficientSamples { samples: usize, pe: f64 },
    #[error("samples are degenerate: {0}")]
    Degenerate(&'static str),
    #[error("no contour points remain in u range [{u_min}, {u_max}]")]
    Empty { u_min: f64, u_max: f64 },
    #[error("quantile level {0} outside (0, 1)")]
    QuantileLevel(f64),
    #[error("need at least 2 seeds per point, got {0}")]
    TooFewSeeds(usize),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("contour point {index}: {source}")]
    Simulation { index: usize, source: SimError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourMethod {
    Iform,
    DirectSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourPoint {
    /// Direction in standard-normal space (IFORM) or tangent direction (DS), degrees.
    pub theta_deg: f64,
    pub cond: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<ContourPoint>,
    pub exceedance_prob: f64,
    pub method: ContourMethod,
    pub return_period_years: f64,
    pub state_duration_hours: f64,
}

impl Contour {
    pub fn conditions(&self) -> impl Iterator<Item = Condition> + '_ {
        self.points.iter().map(|p| p.cond)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Probability that one stationary state of `state_duration_hours` exceeds
/// the `return_period_years` level: `1 / (8766 · T / d)`.
pub fn exceedance_probability(return_period_years: f64, state_duration_hours: f64) -> Result<f64, ContourError> {
    if !(return_period_years > 0.0) {
        return Err(ContourError::NonPositive { what: "return period", value: return_period_years });
    }
    if !(state_duration_hours > 0.0) {
        return Err(ContourError::NonPositive { what: "state duration", value: state_duration_hours });
    }
    Ok(1.0 / (HOURS_PER_YEAR * return_period_years / state_duration_hours))
}

/// Inverse of [`exceedance_probability`].
pub fn return_period_years(pe: f64, state_duration_hours: f64) -> f64 {
    state_duration_hours / (HOURS_PER_YEAR * pe)
}

/// Reliability index `β = Φ⁻¹(1 − pe)`.
pub fn reliability_index(pe: f64) -> f64 {
    norm_isf(pe)
}

fn check_pe(pe: f64) -> Result<(), ContourError> {
    if pe > 0.0 && pe < 0.5 {
        Ok(())
    } else {
        Err(ContourError::ExceedanceRange(pe))
    }
}

/// IFORM contour: the circle of radius `β` in standard-normal space mapped
/// through the inverse Rosenblatt transform, at `n_points` equispaced angles.
pub fn iform_contour(model: &EnvModel, pe: f64, n_points: usize) -> Result<Contour, ContourError> {
    check_pe(pe)?;
    if n_points < MIN_CONTOUR_POINTS {
        return Err(ContourError::TooFewPoints(n_points));
    }
    let beta = reliability_index(pe);
    let points = (0..n_points)
        .map(|k| {
            let theta_deg = 360.0 * k as f64 / n_points as f64;
            let (s, c) = theta_deg.to_radians().sin_cos();
            let cond = model.inverse_rosenblatt(NormalPoint { u1: beta * c, u2: beta * s })?;
            Ok(ContourPoint { theta_deg, cond })
        })
        .collect::<Result<Vec<_>, EnvError>>()?;
    Ok(Contour {
        points,
        exceedance_prob: pe,
        method: ContourMethod::Iform,
        return_period_years: return_period_years(pe, model.state_duration_hours),
        state_duration_hours: model.state_duration_hours,
    })
}

/// Half-plane `a·u + b·σ_U ≤ c` in original coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub theta_deg: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HalfPlane {
    pub fn exceeds(&self, x: Condition) -> bool {
        self.a * x.u + self.b * x.sigma_u > self.c
    }

    pub fn slack(&self, x: Condition) -> f64 {
        self.c - (self.a * x.u + self.b * x.sigma_u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectSamplingContour {
    pub contour: Contour,
    /// Supporting half-planes, one per direction, in angle order.
    pub half_planes: Vec<HalfPlane>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Streaming direct-sampling accumulator: keeps, per direction, the
/// `⌊pe·n⌋ + 1` largest projections of standardised samples so the
/// supporting line can be read off without storing the sample.
#[derive(Debug, Clone)]
pub struct DirectSampling {
    pe: f64,
    center: (f64, f64),
    scale: (f64, f64),
    dirs: Vec<(f64, f64, f64)>,
    heaps: Vec<BinaryHeap<Reverse<Key>>>,
    keep: usize,
    expected: usize,
    seen: usize,
}

impl DirectSampling {
    /// `center`/`scale` standardise samples before projection; `expected` is
    /// the total sample count that will be pushed.
    pub fn new(pe: f64, n_angles: usize, expected: usize, center: (f64, f64), scale: (f64, f64)) -> Result<Self, ContourError> {
        check_pe(pe)?;
        if n_angles < MIN_CONTOUR_POINTS {
            return Err(ContourError::TooFewPoints(n_angles));
        }
        if (expected as f64) * pe < 1.0 {
            return Err(ContourError::InsufficientSamples { samples: expected, pe });
        }
        if !(scale.0 > 0.0 && scale.1 > 0.0) {
            return Err(ContourError::Degenerate("zero spread in a coordinate"));
        }
        let keep = (pe * expected as f64).floor() as usize + 1;
        let dirs = (0..n_angles)
            .map(|k| {
                let theta = 360.0 * k as f64 / n_angles as f64;
                let (s, c) = theta.to_radians().sin_cos();
                (theta, c, s)
            })
            .collect();
        Ok(Self {
            pe,
            center,
            scale,
            dirs,
            heaps: (0..n_angles).map(|_| BinaryHeap::with_capacity(keep + 1)).collect(),
            keep,
            expected,
            seen: 0,
        })
    }

    pub fn push(&mut self, x: Condition) {
        let p1 = (x.u - self.center.0) / self.scale.0;
        let p2 = (x.sigma_u - self.center.1) / self.scale.1;
        for (heap, &(_, c, s)) in self.heaps.iter_mut().zip(&self.dirs) {
            let proj = c * p1 + s * p2;
            if heap.len() < self.keep {
                heap.push(Reverse(Key(proj)));
            } else if let Some(Reverse(Key(min))) = heap.peek() {
                if proj > *min {
                    heap.pop();
                    heap.push(Reverse(Key(proj)));
                }
            }
        }
        self.seen += 1;
    }

    pub fn finish(self, state_duration_hours: f64) -> Result<DirectSamplingContour, ContourError> {
        if self.seen != self.expected {
            return Err(ContourError::InsufficientSamples { samples: self.seen, pe: self.pe });
        }
        let offsets: Vec<f64> = self.heaps.iter().map(|h| h.peek().map(|r| r.0 .0).unwrap_or(f64::NAN)).collect();
        let lines: Vec<(f64, f64, f64, f64)> =
            self.dirs.iter().zip(&offsets).map(|(&(t, c, s), &off)| (t, c, s, off)).collect();
        let polygon = clip_half_planes(&lines);
        if polygon.len() < 3 {
            return Err(ContourError::Degenerate("half-plane intersection has fewer than 3 vertices"));
        }
        let area = polygon_area(&polygon);
        if !(area > 1e-12) {
            return Err(ContourError::Degenerate("half-plane intersection has zero area"));
        }
        let (cx, cy) = (self.center, self.scale);
        let mut points: Vec<ContourPoint> = polygon
            .iter()
            .map(|&(p1, p2)| {
                let mut theta = libm::atan2(p2, p1).to_degrees();
                if theta < 0.0 {
                    theta += 360.0;
                }
                ContourPoint { theta_deg: theta, cond: Condition::new(cx.0 + cy.0 * p1, cx.1 + cy.1 * p2) }
            })
            .collect();
        points.sort_by(|a, b| a.theta_deg.total_cmp(&b.theta_deg));
        let half_planes = lines
            .iter()
            .map(|&(theta_deg, c, s, off)| HalfPlane {
                theta_deg,
                a: c / cy.0,
                b: s / cy.1,
                c: off + c * cx.0 / cy.0 + s * cx.1 / cy.1,
            })
            .collect();
        Ok(DirectSamplingContour {
            contour: Contour {
                points,
                exceedance_prob: self.pe,
                method: ContourMethod::DirectSampling,
                return_period_years: return_period_years(self.pe, state_duration_hours),
                state_duration_hours,
            },
            half_planes,
        })
    }
}

/// Direct-sampling contour from an in-memory sample. Coordinates are
/// standardised by the sample mean and standard deviation before the
/// directional quantiles are taken.
pub fn ds_contour(samples: &[Condition], pe: f64, n_angles: usize, state_duration_hours: f64) -> Result<DirectSamplingContour, ContourError> {
    check_pe(pe)?;
    if (samples.len() as f64) * pe < 1.0 {
        return Err(ContourError::InsufficientSamples { samples: samples.len(), pe });
    }
    let n = samples.len() as f64;
    let mu = samples.iter().fold((0.0, 0.0), |a, x| (a.0 + x.u, a.1 + x.sigma_u));
    let mu = (mu.0 / n, mu.1 / n);
    let var = samples
        .iter()
        .fold((0.0, 0.0), |a, x| (a.0 + (x.u - mu.0).powi(2), a.1 + (x.sigma_u - mu.1).powi(2)));
    let sd = ((var.0 / n).sqrt(), (var.1 / n).sqrt());
    if !(sd.0 > 0.0 && sd.1 > 0.0) {
        return Err(ContourError::Degenerate("zero spread in a coordinate"));
    }
    let mut acc = DirectSampling::new(pe, n_angles, samples.len(), mu, sd)?;
    samples.iter().for_each(|&x| acc.push(x));
    acc.finish(state_duration_hours)
}

const DS_PILOT: usize = 100_000;
const DS_CHUNK: usize = 1 << 16;
const DS_CHUNKS_PER_ROUND: usize = 32;

/// Direct-sampling contour from `n_samples` fresh draws of `model`. A pilot
/// sample fixes the standardisation; the main sample is generated in chunks
/// on `exec` and streamed into the accumulator in chunk order, so the result
/// does not depend on the executor.
pub fn ds_contour_from_model<E: Executor>(
    model: &EnvModel,
    pe: f64,
    n_angles: usize,
    n_samples: usize,
    master_seed: u64,
    exec: &E,
) -> Result<DirectSamplingContour, ContourError> {
    check_pe(pe)?;
    let pilot = model.sample_conditions(DS_PILOT, &mut stream(master_seed, Purpose::DirectSampling, &[0]));
    let n = DS_PILOT as f64;
    let mu = pilot.iter().fold((0.0, 0.0), |a, x| (a.0 + x.u / n, a.1 + x.sigma_u / n));
    let var = pilot.iter().fold((0.0, 0.0), |a, x| (a.0 + (x.u - mu.0).powi(2) / n, a.1 + (x.sigma_u - mu.1).powi(2) / n));
    let mut acc = DirectSampling::new(pe, n_angles, n_samples, mu, (var.0.sqrt(), var.1.sqrt()))?;
    let chunks = n_samples.div_ceil(DS_CHUNK);
    let mut next = 0;
    while next < chunks {
        let round = DS_CHUNKS_PER_ROUND.min(chunks - next);
        let drawn = exec.map_indexed(round, |i| {
            let k = next + i;
            let len = DS_CHUNK.min(n_samples - k * DS_CHUNK);
            model.sample_conditions(len, &mut stream(master_seed, Purpose::DirectSampling, &[1, k as u64]))
        });
        drawn.iter().flatten().for_each(|&x| acc.push(x));
        next += round;
    }
    acc.finish(model.state_duration_hours)
}

/// Intersection of half-planes `c·x + s·y ≤ off` (Sutherland–Hodgman
/// clipping of a large square), vertices in counter-clockwise order.
fn clip_half_planes(lines: &[(f64, f64, f64, f64)]) -> Vec<(f64, f64)> {
    let big = 1e6;
    let mut poly = vec![(-big, -big), (big, -big), (big, big), (-big, big)];
    for &(_, c, s, off) in lines {
        if !off.is_finite() {
            return Vec::new();
        }
        let inside = |p: (f64, f64)| c * p.0 + s * p.1 <= off;
        let mut out = Vec::with_capacity(poly.len() + 1);
        for i in 0..poly.len() {
            let cur = poly[i];
            let prev = poly[(i + poly.len() - 1) % poly.len()];
            let (ci, pi) = (inside(cur), inside(prev));
            if ci != pi {
                let fp = c * prev.0 + s * prev.1 - off;
                let fc = c * cur.0 + s * cur.1 - off;
                let t = fp / (fp - fc);
                out.push((prev.0 + t * (cur.0 - prev.0), prev.1 + t * (cur.1 - prev.1)));
            }
            if ci {
                out.push(cur);
            }
        }
        poly = out;
        if poly.is_empty() {
            break;
        }
    }
    // Merge vertices that coincide to rounding.
    let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(poly.len());
    for p in poly {
        if dedup.last().is_none_or(|q: &(f64, f64)| (q.0 - p.0).abs() + (q.1 - p.1).abs() > 1e-12) {
            dedup.push(p);
        }
    }
    while dedup.len() > 1 {
        let (f, l) = (dedup[0], dedup[dedup.len() - 1]);
        if (f.0 - l.0).abs() + (f.1 - l.1).abs() <= 1e-12 {
            dedup.pop();
        } else {
            break;
        }
    }
    dedup
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
}

/// Keeps points with `u ∈ [u_min, u_max]`, preserving order.
pub fn crop_contour(c: &Contour, u_min: f64, u_max: f64) -> Result<Contour, ContourError> {
    let points: Vec<ContourPoint> = c.points.iter().copied().filter(|p| p.cond.u >= u_min && p.cond.u <= u_max).collect();
    if points.is_empty() {
        return Err(ContourError::Empty { u_min, u_max });
    }
    Ok(Contour { points, ..c.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourResponseRow {
    pub point_index: usize,
    pub cond: Condition,
    pub quantile: f64,
    pub response: f64,
    /// The quantile's order statistic is within one of the sample maximum,
    /// so the estimate rests on the single largest draw.
    pub warning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileMaximum {
    pub quantile: f64,
    pub response: f64,
    pub argmax: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourResponseTable {
    pub rows: Vec<ContourResponseRow>,
    pub n_seeds: usize,
    pub maxima: Vec<QuantileMaximum>,
    /// Per-point sorted state maxima, kept for resampling diagnostics.
    pub samples: Vec<Vec<f64>>,
    pub failed_seeds: usize,
}

impl ContourResponseTable {
    pub fn maximum_at(&self, quantile: f64) -> Option<&QuantileMaximum> {
        self.maxima.iter().find(|m| (m.quantile - quantile).abs() < 1e-12)
    }
}

/// Empirical quantile by the order statistic `⌈q·n⌉` of sorted values.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[order_statistic_index(q, sorted.len())]
}

/// Runs `n_seeds` short-term simulations of `blocks_per_state` blocks at
/// every contour point and extracts the requested quantiles of the state
/// maxima. Point `i` draws its seeds from the stream `(master_seed, i)`.
pub fn contour_extreme_response<S, E>(
    contour: &Contour,
    sim: &S,
    n_seeds: usize,
    quantiles: &[f64],
    blocks_per_state: usize,
    master_seed: u64,
    exec: &E,
) -> Result<ContourResponseTable, ContourError>
where
    S: ShortTermSimulator + ?Sized,
    E: Executor,
{
    if n_seeds < 2 {
        return Err(ContourError::TooFewSeeds(n_seeds));
    }
    if let Some(&q) = quantiles.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
        return Err(ContourError::QuantileLevel(q));
    }
    let per_point = exec.map_indexed(contour.points.len(), |i| {
        let cond = contour.points[i].cond;
        let mut counter = 0u64;
        let mut failed = 0usize;
        let mut maxima = Vec::with_capacity(n_seeds);
        for _ in 0..n_seeds {
            let (blocks, skipped) = simulate_blocks_with_retry(sim, cond, blocks_per_state, || {
                counter += 1;
                derive_seed(master_seed, Purpose::ContourResponse, &[i as u64, counter - 1])
            })
            .map_err(|source| ContourError::Simulation { index: i, source })?;
            failed += skipped;
            maxima.push(blocks.into_iter().fold(f64::NEG_INFINITY, f64::max));
        }
        maxima.sort_by(f64::total_cmp);
        Ok::<_, ContourError>((maxima, failed))
    });
    let mut rows = Vec::with_capacity(contour.points.len() * quantiles.len());
    let mut samples = Vec::with_capacity(contour.points.len());
    let mut failed_seeds = 0;
    let mut maxima: Vec<QuantileMaximum> = quantiles
        .iter()
        .map(|&q| QuantileMaximum { quantile: q, response: f64::NEG_INFINITY, argmax: Condition::new(f64::NAN, f64::NAN) })
        .collect();
    for (i, res) in per_point.into_iter().enumerate() {
        let (sorted, failed) = res?;
        failed_seeds += failed;
        let cond = contour.points[i].cond;
        for (m, &q) in maxima.iter_mut().zip(quantiles) {
            let idx = order_statistic_index(q, sorted.len());
            let response = sorted[idx];
            rows.push(ContourResponseRow { point_index: i, cond, quantile: q, response, warning: sorted.len() - idx <= 2 });
            if response > m.response {
                *m = QuantileMaximum { quantile: q, response, argmax: cond };
            }
        }
        samples.push(sorted);
    }
    Ok(ContourResponseTable { rows, n_seeds, maxima, samples, failed_seeds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ConditionalSpec, MarginalSpec};
    use crate::response::ConstantSim;
    use crate::rng::Serial;
    use alloc::vec;

    fn identity_model() -> EnvModel {
        EnvModel::new(
            MarginalSpec::Normal { mean: 0.0, std: 1.0 },
            ConditionalSpec::NormalGivenU { mean_coeffs: vec![0.0], std_coeffs: vec![1.0] },
            1.0 / 6.0,
        )
        .unwrap()
    }

    #[test]
    fn published_exceedance_probabilities() {
        let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;
        assert!(close(exceedance_probability(50.0, 1.0 / 6.0).unwrap(), 3.8e-7, 0.05e-7));
        assert!(close(exceedance_probability(1.0, 1.0).unwrap(), 1.14e-4, 0.005e-4));
        assert!(close(exceedance_probability(50.0, 1.0).unwrap(), 2.28e-6, 0.005e-6));
        assert!(exceedance_probability(0.0, 1.0).is_err());
        assert!(exceedance_probability(1.0, -1.0).is_err());
    }

    #[test]
    fn return_period_roundtrip() {
        let pe = exceedance_probability(50.0, 1.0 / 6.0).unwrap();
        let t = return_period_years(pe, 1.0 / 6.0);
        assert!((t - 50.0).abs() <= 1e-12 * 50.0);
    }

    #[test]
    fn iform_identity_is_circle() {
        let pe = exceedance_probability(50.0, 1.0 / 6.0).unwrap();
        let c = iform_contour(&identity_model(), pe, 40).unwrap();
        let beta = reliability_index(pe);
        for p in &c.points {
            assert!((libm::hypot(p.cond.u, p.cond.sigma_u) - beta).abs() < 1e-9);
        }
        assert!(matches!(iform_contour(&identity_model(), pe, 7), Err(ContourError::TooFewPoints(7))));
        assert!(iform_contour(&identity_model(), 0.6, 72).is_err());
    }

    #[test]
    fn crop_rules() {
        let c = Contour {
            points: (0..30)
                .map(|i| ContourPoint { theta_deg: i as f64, cond: Condition::new(1.0 + i as f64, 1.0) })
                .collect(),
            exceedance_prob: 1e-3,
            method: ContourMethod::Iform,
            return_period_years: 1.0,
            state_duration_hours: 1.0,
        };
        let cropped = crop_contour(&c, 3.0, 25.0).unwrap();
        assert!(cropped.points.iter().all(|p| (3.0..=25.0).contains(&p.cond.u)));
        assert_eq!(cropped.len(), 23);
        assert_eq!(crop_contour(&c, f64::NEG_INFINITY, f64::INFINITY).unwrap(), c);
        assert!(matches!(crop_contour(&c, 40.0, 50.0), Err(ContourError::Empty { .. })));
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let s = vec![Condition::new(5.0, 1.0); 1000];
        assert!(matches!(ds_contour(&s, 0.01, 16, 1.0), Err(ContourError::Degenerate(_))));
        assert!(matches!(ds_contour(&s[..10], 0.01, 16, 1.0), Err(ContourError::InsufficientSamples { .. })));
    }

    #[test]
    fn deterministic_sim_gives_equal_quantiles() {
        let c = iform_contour(&identity_model(), 1e-3, 8).unwrap();
        // Shift the contour into the operating band of the constant simulator.
        let shifted = Contour {
            points: c.points.iter().map(|p| ContourPoint { cond: Condition::new(p.cond.u + 10.0, p.cond.sigma_u), ..*p }).collect(),
            ..c
        };
        let sim = ConstantSim { value: 7.5, cut_in: 3.0, cut_out: 25.0 };
        let t = contour_extreme_response(&shifted, &sim, 50, &[0.5, 0.9, 0.99], 1, 1, &Serial).unwrap();
        assert_eq!(t.rows.len(), 8 * 3);
        assert!(t.rows.iter().all(|r| r.response == 7.5));
        assert!(t.maxima.iter().all(|m| m.response == 7.5));
    }

    #[test]
    fn high_quantile_flagged_at_100_seeds() {
        let c = iform_contour(&identity_model(), 1e-3, 8).unwrap();
        let shifted = Contour {
            points: c.points.iter().map(|p| ContourPoint { cond: Condition::new(p.cond.u + 10.0, p.cond.sigma_u), ..*p }).collect(),
            ..c
        };
        let sim = ConstantSim { value: 1.0, cut_in: 3.0, cut_out: 25.0 };
        let t = contour_extreme_response(&shifted, &sim, 100, &[0.5, 0.9, 0.99], 1, 1, &Serial).unwrap();
        for r in &t.rows {
            assert_eq!(r.warning, r.quantile == 0.99, "{r:?}");
        }
        assert!(contour_extreme_response(&shifted, &sim, 1, &[0.5], 1, 1, &Serial).is_err());
        assert!(contour_extreme_response(&shifted, &sim, 10, &[1.0], 1, 1, &Serial).is_err());
    }
}
