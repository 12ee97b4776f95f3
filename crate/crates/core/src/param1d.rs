//! Continuous piecewise-linear functions on a uniform grid over `[0, 1]`,
//! used for the sensitivity `f` and the production rate `g`.

use std::io::{BufRead, Write};

use crate::cg::Preconditioner;
use crate::error::{Error, Result};
use crate::fem::NodalField;

/// Default number of parameter nodes.
pub const DEFAULT_NODES: usize = 1000;

/// Nodal values at `ρ_j = j/(n−1)`, `j = 0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear1D {
    values: Vec<f64>,
}

/// Interpolation stencil of one argument: `(1−θ)·v[j] + θ·v[j+1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub index: usize,
    pub theta: f64,
}

/// Stencil for `rho` on a grid with `n_nodes` nodes. Arguments outside
/// `[0,1]` are clamped to the boundary.
pub fn stencil(n_nodes: usize, rho: f64) -> Stencil {
    let cells = (n_nodes - 1) as f64;
    let s = rho.clamp(0.0, 1.0) * cells;
    // Grid points j/(n−1) scaled back by n−1 can land one ulp off j.
    let r = s.round();
    let s = if (s - r).abs() <= 8.0 * f64::EPSILON * cells { r } else { s };
    let index = (s.floor() as usize).min(n_nodes - 2);
    Stencil { index, theta: s - index as f64 }
}

impl PiecewiseLinear1D {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidConfig(format!("a parameter grid needs at least 2 nodes, got {}", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { values })
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(n_nodes: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid(n_nodes).into_iter().map(f).collect())
    }

    pub fn zeros(n_nodes: usize) -> Result<Self> {
        Self::new(vec![0.0; n_nodes])
    }

    /// `ρ(1−ρ)`
    pub fn logistic(n_nodes: usize) -> Result<Self> {
        Self::from_fn(n_nodes, |r| r * (1.0 - r))
    }

    pub fn identity(n_nodes: usize) -> Result<Self> {
        Self::from_fn(n_nodes, |r| r)
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n_nodes() - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        grid(self.n_nodes())
    }

    pub fn evaluate(&self, rho: f64) -> f64 {
        self.evaluate_stencil(stencil(self.n_nodes(), rho))
    }

    pub fn evaluate_stencil(&self, s: Stencil) -> f64 {
        (1.0 - s.theta) * self.values[s.index] + s.theta * self.values[s.index + 1]
    }

    /// Largest absolute slope over the cells.
    pub fn lipschitz(&self) -> f64 {
        let h = self.spacing();
        self.values.windows(2).map(|w| ((w[1] - w[0]) / h).abs()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "rho,value")?;
        for (r, v) in self.grid().iter().zip(&self.values) {
            writeln!(out, "{r:.16e},{v:.16e}")?;
        }
        Ok(())
    }

    /// Reads the two-column `rho,value` format. The `rho` column must be the
    /// uniform grid on `[0,1]`.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty parameter file".into()))??;
        if header.trim() != "rho,value" {
            return Err(Error::Parse(format!("expected header 'rho,value', found '{header}'")));
        }
        let mut rhos = Vec::new();
        let mut values = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut next = |name: &str| -> Result<f64> {
                cols.next()
                    .ok_or_else(|| Error::Parse(format!("line {}: missing {name}", k + 2)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {name}: {e}", k + 2)))
            };
            rhos.push(next("rho")?);
            values.push(next("value")?);
        }
        let n = values.len();
        if n < 2 {
            return Err(Error::Parse("a parameter file needs at least two rows".into()));
        }
        for (j, (&r, expected)) in rhos.iter().zip(grid(n)).enumerate() {
            if (r - expected).abs() > 1e-12 {
                return Err(Error::Parse(format!("row {j}: rho = {r} is not on the uniform grid (expected {expected})")));
            }
        }
        Self::new(values)
    }
}

impl std::ops::Add for &PiecewiseLinear1D {
    type Output = PiecewiseLinear1D;

    fn add(self, rhs: Self) -> PiecewiseLinear1D {
        assert_eq!(self.n_nodes(), rhs.n_nodes());
        PiecewiseLinear1D { values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect() }
    }
}

pub fn grid(n_nodes: usize) -> Vec<f64> {
    let cells = (n_nodes - 1) as f64;
    (0..n_nodes).map(|j| j as f64 / cells).collect()
}

/// Entrywise `f(ρ)` at the vertex values of a density field.
pub fn compose_nodal(f: &PiecewiseLinear1D, rho: &NodalField) -> NodalField {
    NodalField::from_raw(compose_values(f, rho.values()), rho.mesh_id())
}

pub fn compose_values(f: &PiecewiseLinear1D, rho: &[f64]) -> Vec<f64> {
    rho.iter().map(|&r| f.evaluate(r)).collect()
}

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    /// `off[j]` couples `j` and `j+1`.
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, x)| d * x).collect();
        for j in 0..n - 1 {
            y[j] += self.off[j] * x[j + 1];
            y[j + 1] += self.off[j] * x[j];
        }
        y
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        crate::sparse::dot(&self.matvec(x), x)
    }

    /// Thomas algorithm. The matrices here are diagonally dominant or SPD,
    /// so no pivoting is needed.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = if n > 1 { self.off[0] / self.diag[0] } else { 0.0 };
        d[0] = b[0] / self.diag[0];
        for j in 1..n {
            let denom = self.diag[j] - self.off[j - 1] * c[j - 1];
            if j < n - 1 {
                c[j] = self.off[j] / denom;
            }
            d[j] = (b[j] - self.off[j - 1] * d[j - 1]) / denom;
        }
        let mut x = d;
        for j in (0..n - 1).rev() {
            x[j] -= c[j] * x[j + 1];
        }
        x
    }

    fn sum(&self, other: &Self) -> Self {
        Self {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + b).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a + b).collect(),
        }
    }
}

/// H¹(0,1) Gram structure of the P1 space: `G = mass + stiffness`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram1D {
    pub mass: Tridiagonal,
    pub stiffness: Tridiagonal,
    pub combined: Tridiagonal,
}

pub fn h1_gram(n_nodes: usize) -> Result<Gram1D> {
    if n_nodes < 2 {
        return Err(Error::InvalidConfig(format!("a parameter grid needs at least 2 nodes, got {n_nodes}")));
    }
    let h = 1.0 / (n_nodes - 1) as f64;
    let mut mdiag = vec![4.0 * h / 6.0; n_nodes];
    mdiag[0] = 2.0 * h / 6.0;
    mdiag[n_nodes - 1] = 2.0 * h / 6.0;
    let mass = Tridiagonal { diag: mdiag, off: vec![h / 6.0; n_nodes - 1] };
    let mut kdiag = vec![2.0 / h; n_nodes];
    kdiag[0] = 1.0 / h;
    kdiag[n_nodes - 1] = 1.0 / h;
    let stiffness = Tridiagonal { diag: kdiag, off: vec![-1.0 / h; n_nodes - 1] };
    let combined = mass.sum(&stiffness);
    Ok(Gram1D { mass, stiffness, combined })
}

impl Gram1D {
    pub fn dim(&self) -> usize {
        self.combined.dim()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.combined.matvec(f)
    }

    /// `fᵀ G f`, summed cell by cell so the seminorm part is formed from
    /// differences rather than cancelling `±1/h` entries.
    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        let h = 1.0 / (self.dim() - 1) as f64;
        f.windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                h / 3.0 * (a * a + a * b + b * b) + (b - a) * (b - a) / h
            })
            .sum()
    }

    /// `‖f‖_{H¹(0,1)}`
    pub fn h1_norm(&self, f: &[f64]) -> f64 {
        self.quadratic_form(f).max(0.0).sqrt()
    }

    /// Smallest eigenvalue of `matrix` by inverse power iteration.
    pub fn smallest_eigenvalue(matrix: &Tridiagonal, iterations: usize) -> f64 {
        let n = matrix.dim();
        let mut x: Vec<f64> = (0..n).map(|j| 1.0 + 0.1 * ((j * 7919) % 13) as f64).collect();
        let mut lambda = 0.0;
        for _ in 0..iterations {
            let y = matrix.solve(&x);
            let norm = crate::sparse::norm2(&y);
            x = y.iter().map(|v| v / norm).collect();
            lambda = matrix.quadratic_form(&x);
        }
        lambda
    }
}

/// `G⁻¹` as a preconditioner for the Tikhonov normal equations.
impl Preconditioner for Gram1D {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.combined.solve(r));
    }
}

/// Structural assumptions on `(f, g)`, reported as flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumptionReport {
    /// `|f(0)|, |f(1)| ≤ 1e−12`
    pub f_vanishes_at_endpoints: bool,
    /// `f > 0` at every interior node.
    pub f_positive_interior: bool,
    /// `g` has a nonzero slope on every cell.
    pub g_slopes_nonzero: bool,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.f_vanishes_at_endpoints && self.f_positive_interior && self.g_slopes_nonzero
    }
}

pub fn validate_assumptions(f: &PiecewiseLinear1D, g: &PiecewiseLinear1D) -> AssumptionReport {
    let fv = f.values();
    let n = fv.len();
    AssumptionReport {
        f_vanishes_at_endpoints: fv[0].abs() <= 1e-12 && fv[n - 1].abs() <= 1e-12,
        f_positive_interior: fv[1..n - 1].iter().all(|&v| v > 0.0),
        g_slopes_nonzero: g.values().windows(2).all(|w| w[1] != w[0]),
    }
}
