//! Quasi-Newton minimisation (BFGS with Armijo backtracking).

use alloc::vec;
use alloc::vec::Vec;


#[allow(unused_imports)]
use num_traits::Float;
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Convergence when the gradient infinity norm drops below this.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Minimum {
    pub fn grad_norm(&self) -> f64 {
        dot(&self.grad, &self.grad).sqrt()
    }
}

/// Minimises `f`, which returns the objective and writes its gradient.
/// Non-finite objective values are treated as infeasible and backtracked.
pub fn minimize_bfgs<F>(mut f: F, x0: &[f64], opts: BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut h = Matrix::identity(n);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;

    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if !fx.is_finite() {
        return Minimum { x, value: fx, grad: g, iterations, converged: false };
    }

    let mut stalls = 0;
    while iterations < opts.max_iter {
        if inf_norm(&g) < opts.grad_tol {
            return Minimum { x, value: fx, grad: g, iterations, converged: true };
        }
        iterations += 1;
        let mut d: Vec<f64> = h.matvec(&g).iter().map(|v| -v).collect();
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            h = Matrix::identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    bfgs_update(&mut h, &s, &y, sy);
                }
                let improvement = fx - f_new;
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                stalls = if improvement <= 1e-15 * fx.abs().max(1.0) { stalls + 1 } else { 0 };
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || stalls >= 5 {
            let converged = inf_norm(&g) < opts.grad_tol;
            return Minimum { x, value: fx, grad: g, iterations, converged };
        }
    }
    let converged = inf_norm(&g) < opts.grad_tol;
    Minimum { x, value: fx, grad: g, iterations, converged }
}

fn bfgs_update(h: &mut Matrix, s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = h.matvec(y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Symmetric Hessian by central differences of an analytic gradient.
pub fn hessian_from_gradient<G>(mut grad: G, x: &[f64], rel_step: f64) -> Matrix
where
    G: FnMut(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut hess = Matrix::zeros(n, n);
    let mut xp = x.to_vec();
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for j in 0..n {
        let h = rel_step * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        grad(&xp, &mut gp);
        xp[j] = x[j] - h;
        grad(&xp, &mut gm);
        xp[j] = x[j];
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (hess[(i, j)] + hess[(j, i)]);
            hess[(i, j)] = avg;
            hess[(j, i)] = avg;
        }
    }
    hess
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let m = minimize_bfgs(f, &[-1.2, 1.0], BfgsOptions { max_iter: 1000, grad_tol: 1e-9 });
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_region_is_backtracked() {
        // Objective undefined for x <= 0; minimum of x - ln x at 1.
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] <= 0.0 {
                return f64::NAN;
            }
            g[0] = 1.0 - 1.0 / x[0];
            x[0] - x[0].ln()
        };
        let m = minimize_bfgs(f, &[8.0], BfgsOptions::default());
        assert!(m.converged && (m.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn quadratic_hessian() {
        let h = hessian_from_gradient(
            |x, g| {
                g[0] = 6.0 * x[0] + 2.0 * x[1];
                g[1] = 2.0 * x[0] + 4.0 * x[1];
            },
            &[0.3, -0.7],
            1e-5,
        );
        assert!((h[(0, 0)] - 6.0).abs() < 1e-8 && (h[(0, 1)] - 2.0).abs() < 1e-8);
        assert!((h[(1, 1)] - 4.0).abs() < 1e-8);
    }
}
