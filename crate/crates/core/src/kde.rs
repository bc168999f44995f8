//! Gaussian product-kernel density estimate over `(U, σ_U)`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::env::Condition;

/// Bandwidth used when a coordinate has zero spread (e.g. a single point).
pub const FALLBACK_BANDWIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Silverman's rule per dimension: `σ̂ · n^{-1/6}` in two dimensions.
    Auto,
    Fixed([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    points: Vec<[f64; 2]>,
    pub bandwidth: [f64; 2],
}

pub fn silverman_bandwidth(points: &[Condition]) -> [f64; 2] {
    let n = points.len() as f64;
    let factor = (4.0 / (4.0 * n)).powf(1.0 / 6.0);
    let sd = |f: &dyn Fn(&Condition) -> f64| {
        let m = points.iter().map(f).sum::<f64>() / n;
        let var = if points.len() > 1 { points.iter().map(|p| (f(p) - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        var.sqrt()
    };
    let pick = |s: f64| if s > 0.0 { s * factor } else { FALLBACK_BANDWIDTH };
    [pick(sd(&|p| p.u)), pick(sd(&|p| p.sigma_u))]
}

impl Kde {
    /// Panics if `points` is empty.
    pub fn new(points: &[Condition], bandwidth: Bandwidth) -> Self {
        assert!(!points.is_empty(), "KDE needs at least one point");
        let bandwidth = match bandwidth {
            Bandwidth::Auto => silverman_bandwidth(points),
            Bandwidth::Fixed(h) => h,
        };
        Self { points: points.iter().map(|p| [p.u, p.sigma_u]).collect(), bandwidth }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn density(&self, x: Condition) -> f64 {
        let [h0, h1] = self.bandwidth;
        let (i0, i1) = (1.0 / h0, 1.0 / h1);
        let sum: f64 = self
            .points
            .iter()
            .map(|p| {
                let a = (x.u - p[0]) * i0;
                let b = (x.sigma_u - p[1]) * i1;
                (-0.5 * (a * a + b * b)).exp()
            })
            .sum();
        sum / (self.points.len() as f64 * 2.0 * core::f64::consts::PI * h0 * h1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_peaks_at_point() {
        let p = Condition::new(12.0, 2.0);
        let k = Kde::new(&[p], Bandwidth::Auto);
        let at = k.density(p);
        for (du, ds) in [(0.1, 0.0), (-0.1, 0.0), (0.0, 0.1), (0.0, -0.1), (0.3, 0.3)] {
            assert!(k.density(Condition::new(p.u + du, p.sigma_u + ds)) < at);
        }
    }

    #[test]
    fn symmetric_pair() {
        let k = Kde::new(&[Condition::new(10.0, 1.0), Condition::new(14.0, 3.0)], Bandwidth::Auto);
        for i in 0..50 {
            let du = 0.13 * i as f64;
            let ds = 0.07 * i as f64;
            let a = k.density(Condition::new(12.0 + du, 2.0 + ds));
            let b = k.density(Condition::new(12.0 - du, 2.0 - ds));
            assert!((a - b).abs() <= 1e-12 * a.max(b).max(1e-300));
        }
    }
}
