//! Preconditioned conjugate gradients for symmetric positive-definite
//! operators.
//!
//! The stopping test is on the Euclidean residual, `‖b − A x‖₂ ≤ tol·‖b‖₂`.
//! When the recursively updated residual meets the tolerance the true
//! residual is recomputed and iteration resumes from it if the two have
//! drifted apart, so a returned `converged` result always satisfies the bound
//! for the operator as applied.

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2, LinearOperator, SparseOperator};

pub trait Preconditioner {
    /// `z = P⁻¹ r`
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn new(a: &SparseOperator) -> Self {
        Self { inv_diag: a.diagonal_values().iter().map(|d| 1.0 / d).collect() }
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Relative residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub jacobi: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 10_000, jacobi: false }
    }
}

#[derive(Debug, Clone)]
pub struct CgReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `‖b − A x‖₂ / ‖b‖₂`, from an explicitly recomputed residual.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Runs PCG from `x0` (zero when `None`). Non-convergence is reported in the
/// returned [`CgReport`], not as an error; errors only come from the operator.
pub fn pcg<A, P>(a: &A, precond: &P, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<CgReport>
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    let b_norm = norm2(b);
    let mut x = match x0 {
        Some(x0) if x0.len() != n => return Err(Error::DimensionMismatch { expected: n, found: x0.len() }),
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if b_norm == 0.0 {
        return Ok(CgReport { x: vec![0.0; n], iterations: 0, relative_residual: 0.0, converged: true });
    }
    let target = tol * b_norm;

    let mut ax = vec![0.0; n];
    let mut r = b.to_vec();
    if x0.is_some() {
        a.apply_into(&x, &mut ax)?;
        axpy(-1.0, &ax, &mut r);
    }
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    // Restarts after a true-residual recomputation; two are plenty in practice.
    let mut restarts = 0;

    'outer: loop {
        let mut r_norm = norm2(&r);
        if r_norm <= target {
            break;
        }
        precond.apply(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            a.apply_into(&p, &mut q)?;
            let pq = dot(&p, &q);
            if pq <= 0.0 || !pq.is_finite() {
                break 'outer;
            }
            let step = rz / pq;
            axpy(step, &p, &mut x);
            axpy(-step, &q, &mut r);
            iterations += 1;
            r_norm = norm2(&r);
            if r_norm <= target {
                // Recompute the residual from scratch before declaring success.
                a.apply_into(&x, &mut ax)?;
                r.copy_from_slice(b);
                axpy(-1.0, &ax, &mut r);
                if norm2(&r) <= target || restarts >= 2 {
                    break 'outer;
                }
                restarts += 1;
                continue 'outer;
            }
            precond.apply(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        break;
    }

    a.apply_into(&x, &mut ax)?;
    r.copy_from_slice(b);
    axpy(-1.0, &ax, &mut r);
    let relative_residual = norm2(&r) / b_norm;
    Ok(CgReport { x, iterations, relative_residual, converged: relative_residual <= tol })
}

/// Solves `A x = b` for a sparse SPD matrix from a zero initial guess.
pub fn cg_solve(a: &SparseOperator, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    solve_with(a, b, &CgOptions { tol, max_iter, jacobi: false })
}

pub fn solve_with(a: &SparseOperator, b: &[f64], opts: &CgOptions) -> Result<Vec<f64>> {
    let report = if opts.jacobi {
        pcg(a, &JacobiPreconditioner::new(a), b, None, opts.tol, opts.max_iter)?
    } else {
        pcg(a, &IdentityPreconditioner, b, None, opts.tol, opts.max_iter)?
    };
    if report.converged {
        Ok(report.x)
    } else {
        Err(Error::NotConverged { iterations: report.iterations, residual: report.relative_residual })
    }
}
