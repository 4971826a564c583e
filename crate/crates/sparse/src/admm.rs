//! Basis pursuit denoising `min ½‖Aα − y‖² + λ‖α‖₁` by ADMM.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::dictionary::SparseCode;
use crate::error::{Result, SparseError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmmParams {
    pub lambda: f64,
    pub rho: f64,
    pub max_iter: usize,
    /// Absolute threshold on both the primal and the dual residual norms.
    pub tol: f64,
    /// Residual balancing: rescale `ρ` when one residual dominates the other by 10×.
    pub adaptive_rho: bool,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            rho: 1.0,
            max_iter: 500,
            tol: 1e-6,
            adaptive_rho: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdmmOutcome {
    pub code: SparseCode,
    pub converged: bool,
    pub iterations: usize,
    /// Objective at the thresholded iterate after every iteration.
    pub objective: Vec<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

pub fn bpdn_objective(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: &DVector<f64>,
    lambda: f64,
) -> f64 {
    0.5 * (a * alpha - y).norm_squared() + lambda * alpha.lp_norm(1)
}

/// Factorization for the `x`-update `(AᵀA + ρI) x = q`, using the smaller of
/// the two Gram matrices.
enum LinearSolve {
    Primal(Cholesky<f64, Dyn>),
    /// `ρI + AAᵀ`, applied through the matrix inversion lemma.
    Dual(Cholesky<f64, Dyn>),
}

impl LinearSolve {
    fn new(a: &DMatrix<f64>, rho: f64) -> Result<Self> {
        let (m, s) = a.shape();
        let fail = || SparseError::Invalid("ADMM system is not positive definite".into());
        if s <= m {
            let mut g = a.tr_mul(a);
            for i in 0..s {
                g[(i, i)] += rho;
            }
            Cholesky::new(g).map(Self::Primal).ok_or_else(fail)
        } else {
            let mut g = a * a.transpose();
            for i in 0..m {
                g[(i, i)] += rho;
            }
            Cholesky::new(g).map(Self::Dual).ok_or_else(fail)
        }
    }

    fn solve(&self, a: &DMatrix<f64>, q: &DVector<f64>, rho: f64) -> DVector<f64> {
        match self {
            Self::Primal(c) => c.solve(q),
            Self::Dual(c) => {
                let t = c.solve(&(a * q));
                (q - a.tr_mul(&t)) / rho
            }
        }
    }
}

/// Runs scaled-form ADMM on the split `x = z`, returning the sparse `z`.
///
/// If the residual tolerance is not met within `max_iter` iterations, the
/// iterate with the lowest objective is returned with `converged = false`.
pub fn admm_bpdn(a: &DMatrix<f64>, y: &DVector<f64>, params: &AdmmParams) -> Result<AdmmOutcome> {
    let (m, s) = a.shape();
    if y.len() != m {
        return Err(SparseError::Dimension(format!(
            "A is {m}x{s} but y has {} entries",
            y.len()
        )));
    }
    if params.lambda.is_nan() || params.lambda < 0.0 {
        return Err(SparseError::Invalid(format!(
            "lambda must be >= 0, got {}",
            params.lambda
        )));
    }
    if params.rho.is_nan() || params.rho <= 0.0 {
        return Err(SparseError::Invalid(format!(
            "rho must be > 0, got {}",
            params.rho
        )));
    }

    let mut rho = params.rho;
    let mut solver = LinearSolve::new(a, rho)?;
    let aty = a.tr_mul(y);
    let mut z = DVector::zeros(s);
    let mut u = DVector::zeros(s);
    let mut objective = Vec::with_capacity(params.max_iter);
    let mut best = (f64::INFINITY, z.clone());
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..params.max_iter {
        iterations = it + 1;
        let q = &aty + (&z - &u) * rho;
        let x = solver.solve(a, &q, rho);
        let z_old = z.clone();
        let t = params.lambda / rho;
        z = (&x + &u).map(|v| soft_threshold(v, t));
        u += &x - &z;

        r_norm = (&x - &z).norm();
        s_norm = rho * (&z - &z_old).norm();
        let f = bpdn_objective(a, y, &z, params.lambda);
        objective.push(f);
        if f < best.0 {
            best = (f, z.clone());
        }
        if r_norm < params.tol && s_norm < params.tol {
            converged = true;
            break;
        }
        if params.adaptive_rho {
            let scale = if r_norm > 10.0 * s_norm {
                2.0
            } else if s_norm > 10.0 * r_norm {
                0.5
            } else {
                1.0
            };
            if scale != 1.0 {
                rho *= scale;
                u /= scale;
                solver = LinearSolve::new(a, rho)?;
            }
        }
    }

    let alpha = if converged { z } else { best.1 };
    Ok(AdmmOutcome {
        code: SparseCode::from_dense(alpha),
        converged,
        iterations,
        objective,
        primal_residual: r_norm,
        dual_residual: s_norm,
    })
}
