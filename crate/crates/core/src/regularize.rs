//! Tikhonov regularization in H¹(0,1) and the discrepancy principle.
//!
//! The minimizer of `½‖T^δ f − ρ^δ‖² + α/2 ‖f‖²_{H¹}` solves the normal
//! equations `(A*A + αG) f = A*(ρ^δ − b)`. They are solved matrix free by
//! conjugate gradients preconditioned with `G⁻¹` (a tridiagonal solve), which
//! turns the iteration into CG in the H¹ geometry; the stopping test is on
//! the Euclidean residual of the normal equations.

use serde::{Deserialize, Serialize};

use crate::cg::pcg;
use crate::error::{Error, Result};
use crate::inverse::AffineOperator;
use crate::par;
use crate::param1d::{Gram1D, PiecewiseLinear1D};
use crate::sparse::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TikhonovOptions {
    /// Relative residual tolerance on the normal equations.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TikhonovOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TikhonovResult {
    pub f_rec: PiecewiseLinear1D,
    pub alpha: f64,
    /// `‖T^δ f_rec − ρ^δ‖`, recomputed from scratch.
    pub residual: f64,
    pub cgne_iterations: usize,
    pub converged: bool,
    /// `‖A*(A f − (ρ^δ − b)) + αG f‖₂ / ‖A*(ρ^δ − b)‖₂` at the returned iterate.
    pub relative_gradient: f64,
}

/// `f ↦ A*A f + αG f`
pub struct NormalOperator<'a> {
    pub op: &'a AffineOperator,
    pub gram: &'a Gram1D,
    pub alpha: f64,
}

impl LinearOperator for NormalOperator<'_> {
    fn dim(&self) -> usize {
        self.op.n_param()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let ata = self.op.apply_adjoint(&self.op.apply_linear(x)?)?;
        let gx = self.gram.apply(x);
        for ((yi, a), g) in y.iter_mut().zip(&ata).zip(&gx) {
            *yi = a + self.alpha * g;
        }
        Ok(())
    }
}

/// An operator paired with its Gram matrix and the fixed right-hand side
/// `A*(ρ^δ − b)`, reused across α values.
pub struct TikhonovProblem<'a> {
    op: &'a AffineOperator,
    gram: &'a Gram1D,
    rhs: Vec<f64>,
}

impl<'a> TikhonovProblem<'a> {
    pub fn new(op: &'a AffineOperator, gram: &'a Gram1D) -> Result<Self> {
        if gram.dim() != op.n_param() {
            return Err(Error::DimensionMismatch { expected: op.n_param(), found: gram.dim() });
        }
        let rhs = op.apply_adjoint(&op.shifted_data())?;
        Ok(Self { op, gram, rhs })
    }

    pub fn operator(&self) -> &AffineOperator {
        self.op
    }

    pub fn gram(&self) -> &Gram1D {
        self.gram
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Minimizer for one `alpha`, optionally warm-started.
    pub fn solve(&self, alpha: f64, opts: &TikhonovOptions, warm: Option<&[f64]>) -> Result<TikhonovResult> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
        }
        let normal = NormalOperator { op: self.op, gram: self.gram, alpha };
        let report = pcg(&normal, self.gram, &self.rhs, warm, opts.tol, opts.max_iter)?;
        let residual = self.op.residual_norm(&report.x)?;
        Ok(TikhonovResult {
            f_rec: PiecewiseLinear1D::new(report.x)?,
            alpha,
            residual,
            cgne_iterations: report.iterations,
            converged: report.converged,
            relative_gradient: report.relative_residual,
        })
    }
}

pub fn solve_tikhonov(op: &AffineOperator, gram: &Gram1D, alpha: f64, opts: &TikhonovOptions) -> Result<TikhonovResult> {
    TikhonovProblem::new(op, gram)?.solve(alpha, opts, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscrepancyOptions {
    pub tau: f64,
    pub alpha0: f64,
    /// Scan ratio in `(0, 1)`.
    pub q: f64,
    pub max_steps: usize,
}

impl Default for DiscrepancyOptions {
    fn default() -> Self {
        Self { tau: 1.03, alpha0: 1.0, q: 0.5, max_steps: 60 }
    }
}

impl DiscrepancyOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 1.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must exceed 1, got {}", self.tau)));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidConfig(format!("q must lie in (0, 1), got {}", self.q)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// One solved point of an α scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub alpha: f64,
    pub residual: f64,
    pub h1_norm: f64,
    pub cgne_iterations: usize,
    /// Part of the refinement pass between the bracketing scan values.
    pub refinement: bool,
}

#[derive(Debug, Clone)]
pub struct DiscrepancyOutcome {
    pub result: TikhonovResult,
    /// Every solve, in the order performed.
    pub scan: Vec<ScanPoint>,
    /// The closest larger α that was tried and rejected, with its residual.
    pub rejected_neighbor: Option<(f64, f64)>,
    pub bound: f64,
}

/// Largest α on the grid `α₀ qᵏ` (refined to `q^{1/4}` within the bracket)
/// with `‖T^δ f_α − ρ^δ‖ ≤ τδ`.
pub fn discrepancy_select(
    problem: &TikhonovProblem<'_>,
    delta: f64,
    opts: &DiscrepancyOptions,
    tik: &TikhonovOptions,
) -> Result<DiscrepancyOutcome> {
    opts.validate()?;
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig(format!("discrepancy principle needs delta > 0, got {delta}")));
    }
    let bound = opts.tau * delta;
    let gram = problem.gram();
    let mut scan = Vec::new();
    let record = |scan: &mut Vec<ScanPoint>, r: &TikhonovResult, refinement: bool| {
        scan.push(ScanPoint {
            alpha: r.alpha,
            residual: r.residual,
            h1_norm: gram.h1_norm(r.f_rec.values()),
            cgne_iterations: r.cgne_iterations,
            refinement,
        });
    };

    let mut previous: Option<TikhonovResult> = None;
    for k in 0..opts.max_steps {
        let alpha = opts.alpha0 * opts.q.powi(k as i32);
        let warm = previous.as_ref().map(|p| p.f_rec.values());
        let current = problem.solve(alpha, tik, warm)?;
        record(&mut scan, &current, false);
        if current.residual <= bound {
            let Some(rejected) = previous else {
                return Ok(DiscrepancyOutcome { result: current, scan, rejected_neighbor: None, bound });
            };
            let step = opts.q.powf(0.25);
            let mut neighbor = (rejected.alpha, rejected.residual);
            let mut warm = rejected.f_rec.values().to_vec();
            for i in 1..4 {
                let alpha = rejected.alpha * step.powi(i);
                let candidate = problem.solve(alpha, tik, Some(&warm))?;
                record(&mut scan, &candidate, true);
                if candidate.residual <= bound {
                    return Ok(DiscrepancyOutcome { result: candidate, scan, rejected_neighbor: Some(neighbor), bound });
                }
                neighbor = (candidate.alpha, candidate.residual);
                warm = candidate.f_rec.values().to_vec();
            }
            return Ok(DiscrepancyOutcome { result: current, scan, rejected_neighbor: Some(neighbor), bound });
        }
        previous = Some(current);
    }
    Err(Error::DiscrepancyNotReached { bound, curve: scan.iter().map(|p| (p.alpha, p.residual)).collect() })
}

/// `‖f_a − f_b‖_{H¹(0,1)}`
pub fn h1_error(f_a: &PiecewiseLinear1D, f_b: &PiecewiseLinear1D, gram: &Gram1D) -> Result<f64> {
    if f_a.n_nodes() != f_b.n_nodes() || gram.dim() != f_a.n_nodes() {
        return Err(Error::DimensionMismatch { expected: f_a.n_nodes(), found: f_b.n_nodes().max(gram.dim()) });
    }
    let d: Vec<f64> = f_a.values().iter().zip(f_b.values()).map(|(a, b)| a - b).collect();
    Ok(gram.h1_norm(&d))
}

/// Maximum of `|f_a − f_b|` over grid nodes in `[lo, hi]`.
pub fn max_error_on(f_a: &PiecewiseLinear1D, f_b: &PiecewiseLinear1D, lo: f64, hi: f64) -> f64 {
    f_a.grid()
        .iter()
        .zip(f_a.values().iter().zip(f_b.values()))
        .filter(|(r, _)| **r >= lo - 1e-12 && **r <= hi + 1e-12)
        .map(|(_, (a, b))| (a - b).abs())
        .fold(0.0, f64::max)
}

/// One row of a convergence-rate study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub delta: f64,
    pub alpha: f64,
    pub residual: f64,
    pub h1_error: f64,
    pub cgne_iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RateStudy {
    /// One entry per δ, in input order; failures keep their message.
    pub rows: Vec<std::result::Result<RateRow, String>>,
    /// Least-squares slope of `log α` against `log δ`.
    pub alpha_slope: Option<f64>,
    /// Least-squares slope of `log ‖f⁰ − f_rec‖_{H¹}` against `log δ`.
    pub error_slope: Option<f64>,
}

impl RateStudy {
    pub fn successful(&self) -> impl Iterator<Item = &RateRow> {
        self.rows.iter().filter_map(|r| r.as_ref().ok())
    }
}

/// Slope of the least-squares line through `(log x, log y)`; `None` with
/// fewer than two distinct abscissae or non-positive data.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if logs.len() < 2 || sxx <= 1e-300 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Runs `row(δ, seed)` for every noise level, concurrently when the
/// `parallel` feature is on, with seeds `base_seed + index`, and fits the
/// two log-log slopes over the successful rows.
pub fn rate_study<F>(deltas: &[f64], base_seed: u64, row: F) -> RateStudy
where
    F: Fn(f64, u64) -> Result<RateRow> + Sync + Send,
{
    let indexed: Vec<(usize, f64)> = deltas.iter().copied().enumerate().collect();
    let rows: Vec<std::result::Result<RateRow, String>> =
        par::map_slice(&indexed, |&(i, delta)| row(delta, base_seed + i as u64).map_err(|e| e.to_string()));
    let ok: Vec<&RateRow> = rows.iter().filter_map(|r| r.as_ref().ok()).collect();
    let alpha_slope = loglog_slope(&ok.iter().map(|r| (r.delta, r.alpha)).collect::<Vec<_>>());
    let error_slope = loglog_slope(&ok.iter().map(|r| (r.delta, r.h1_error)).collect::<Vec<_>>());
    RateStudy { rows, alpha_slope, error_slope }
}
