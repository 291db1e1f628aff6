//! Laplacian-regularized restoration of a graph signal.
//!
//! `denoise` returns the minimizer of `|y - b|^2 + mu * b^T L b`, which is
//! the solution of `(I + mu L) b = y`. The system matrix is SPD, so
//! conjugate gradients is the default; a dense Cholesky solve backs it up
//! when CG fails to reach the tolerance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LaplacianSystem;
use crate::signal::LabelSignal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlrParams {
    pub kappa: f64,
    pub mu_fraction: f64,
    pub solver_tol: f64,
    /// Iteration cap as a multiple of N.
    pub max_iters_per_node: usize,
}

impl Default for GlrParams {
    fn default() -> Self {
        GlrParams {
            kappa: 60.0,
            mu_fraction: 0.67,
            solver_tol: 1e-10,
            max_iters_per_node: 10,
        }
    }
}

impl GlrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 1.0) {
            return Err(Error::Config(format!("kappa must exceed 1, got {}", self.kappa)));
        }
        if !(self.mu_fraction > 0.0 && self.mu_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "mu_fraction must lie in (0, 1], got {}",
                self.mu_fraction
            )));
        }
        if !(self.solver_tol > 0.0) || self.max_iters_per_node == 0 {
            return Err(Error::Config("solver tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }

    /// The regularization weight used for a graph with maximum degree `d_max`.
    pub fn mu(&self, d_max: f64) -> f64 {
        self.mu_fraction * mu_max(self.kappa, d_max)
    }
}

/// Largest `mu` that keeps the condition number of `I + mu L` at or below
/// `kappa`. Infinite for an edgeless graph, where `L = 0` and any `mu` works.
pub fn mu_max(kappa: f64, d_max: f64) -> f64 {
    if d_max <= 0.0 {
        return f64::INFINITY;
    }
    (kappa - 1.0) / (2.0 * d_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub mu: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub used_dense_fallback: bool,
}

/// Denoises `y_prev` on `lap` with `mu` taken from `params`.
pub fn denoise(lap: &LaplacianSystem, y_prev: &LabelSignal, params: &GlrParams) -> Result<LabelSignal> {
    denoise_detailed(lap, y_prev, params).map(|(y, _)| y)
}

pub fn denoise_detailed(
    lap: &LaplacianSystem,
    y_prev: &LabelSignal,
    params: &GlrParams,
) -> Result<(LabelSignal, SolveReport)> {
    params.validate()?;
    let mu = if lap.d_max > 0.0 { params.mu(lap.d_max) } else { 0.0 };
    solve_with_mu(lap, y_prev, mu, params)
}

/// Solves `(I + mu L) b = y_prev` for an explicit `mu >= 0`.
pub fn solve_with_mu(
    lap: &LaplacianSystem,
    y_prev: &LabelSignal,
    mu: f64,
    params: &GlrParams,
) -> Result<(LabelSignal, SolveReport)> {
    let n = lap.n_nodes();
    if y_prev.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: y_prev.len(),
        });
    }
    if !y_prev.is_finite() {
        return Err(Error::Validation("GLR input signal contains non-finite values".into()));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Config(format!("mu must be finite and nonnegative, got {mu}")));
    }
    let mut report = SolveReport {
        mu,
        iterations: 0,
        residuals: Vec::new(),
        used_dense_fallback: false,
    };
    if mu == 0.0 || lap.d_max == 0.0 {
        return Ok((y_prev.clone(), report));
    }

    let b = y_prev.values();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Ok((LabelSignal::zeros(n), report));
    }
    let mut x = b.to_vec();
    let mut ax = vec![0.0; n];
    lap.apply_regularized(mu, &x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];
    let max_iters = params.max_iters_per_node * n;
    let mut converged = rr.sqrt() / b_norm <= params.solver_tol;
    while !converged && report.iterations < max_iters {
        lap.apply_regularized(mu, &p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_next = dot(&r, &r);
        report.iterations += 1;
        let rel = rr_next.sqrt() / b_norm;
        report.residuals.push(rel);
        if rel <= params.solver_tol {
            converged = true;
            break;
        }
        let beta = rr_next / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_next;
    }
    if !converged || x.iter().any(|v| !v.is_finite()) {
        log::warn!(
            "CG did not converge in {} iterations on {n} nodes; using dense solve",
            report.iterations
        );
        report.used_dense_fallback = true;
        x = dense_solve(lap, b, mu)?;
    }
    Ok((LabelSignal(x), report))
}

/// Direct solve of `(I + mu L) b = y` by Cholesky; also serves as a test oracle.
pub fn dense_solve(lap: &LaplacianSystem, y: &[f64], mu: f64) -> Result<Vec<f64>> {
    let n = lap.n_nodes();
    let m = DMatrix::identity(n, n) + lap.laplacian_dense() * mu;
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Validation("regularized Laplacian is not positive definite".into()))?;
    Ok(chol.solve(&DVector::from_column_slice(y)).iter().copied().collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, Graph};

    #[test]
    fn mu_max_values() {
        assert!((mu_max(60.0, 10.0) - 2.95).abs() < 1e-12);
        assert!((mu_max(60.0, 5.9) - 5.0).abs() < 1e-12);
        assert!(mu_max(60.0, 0.0).is_infinite());
    }

    #[test]
    fn zero_mu_is_identity() {
        let g = Graph::from_weighted_edges(3, &[(0, 1, 0.5), (1, 2, 0.7)]);
        let y = LabelSignal(vec![0.3, -1.0, 0.0]);
        let (out, _) = solve_with_mu(&build_laplacian(&g), &y, 0.0, &GlrParams::default()).unwrap();
        assert_eq!(out, y);
    }

    #[test]
    fn two_node_hand_solve() {
        let g = Graph::from_weighted_edges(2, &[(0, 1, 1.0)]);
        let y = LabelSignal(vec![1.0, -1.0]);
        let (out, _) = solve_with_mu(&build_laplacian(&g), &y, 0.5, &GlrParams::default()).unwrap();
        assert!((out.0[0] - 0.5).abs() < 1e-12);
        assert!((out.0[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn constants_preserved() {
        let g = Graph::from_weighted_edges(4, &[(0, 1, 0.5), (1, 2, 0.7), (2, 3, 0.1), (0, 3, 1.0)]);
        let y = LabelSignal(vec![0.4; 4]);
        let out = denoise(&build_laplacian(&g), &y, &GlrParams::default()).unwrap();
        for v in out.values() {
            assert!((v - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn edgeless_short_circuits() {
        let g = Graph::from_edges(3, &[]);
        let y = LabelSignal(vec![1.0, 0.0, -1.0]);
        assert_eq!(denoise(&build_laplacian(&g), &y, &GlrParams::default()).unwrap(), y);
    }

    #[test]
    fn rejects_non_finite() {
        let g = Graph::from_edges(2, &[(0, 1)]);
        let y = LabelSignal(vec![f64::NAN, 1.0]);
        assert!(denoise(&build_laplacian(&g), &y, &GlrParams::default()).is_err());
    }

    #[test]
    fn fallback_agrees() {
        let g = Graph::from_weighted_edges(5, &[(0, 1, 0.9), (1, 2, 0.2), (2, 3, 0.5), (3, 4, 0.7), (0, 4, 0.3)]);
        let lap = build_laplacian(&g);
        let y = LabelSignal(vec![1.0, -1.0, 0.0, 1.0, 1.0]);
        let params = GlrParams {
            max_iters_per_node: 1,
            solver_tol: 1e-300,
            ..GlrParams::default()
        };
        let mu = params.mu(lap.d_max);
        let (out, rep) = solve_with_mu(&lap, &y, mu, &params).unwrap();
        assert!(rep.used_dense_fallback);
        let (cg, _) = solve_with_mu(&lap, &y, mu, &GlrParams::default()).unwrap();
        for (a, b) in out.values().iter().zip(cg.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
