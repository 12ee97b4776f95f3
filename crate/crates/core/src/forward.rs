//! Forward solver for
//!
//! ```text
//!   ∂ρ/∂t − D_ρ Δρ = −div(f(ρ) ∇c),   −D_c Δc + A_c c = g(ρ)
//! ```
//!
//! with homogeneous Neumann conditions, discretized by P1 elements in space
//! and a linear implicit Euler scheme in time. Each step first solves the
//! elliptic equation with the current density, then takes one diffusion-
//! implicit step with the drift coefficient `f(ρⁿ)` frozen:
//!
//! ```text
//!   (D_c K + A_c M) cⁿ⁺¹ = M g(ρⁿ)
//!   (M + Δt D_ρ K) ρⁿ⁺¹ = M ρⁿ + Δt B(cⁿ⁺¹) f(ρⁿ)
//! ```
//!
//! where `B(c) w = ∫ w ∇c·∇φ_i`. Both systems are SPD and solved by CG.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cg::{pcg, solve_with, CgOptions, IdentityPreconditioner, JacobiPreconditioner};
use crate::error::{Error, Result};
use crate::fem::{Discretization, FluxLoad, NodalField};
use crate::mesh::TriMesh;
use crate::param1d::{compose_values, PiecewiseLinear1D};
use crate::sparse::{dot, SparseOperator};

/// Physical and numerical constants of the forward model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_rho: f64,
    pub d_c: f64,
    pub a_c: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Relative residual tolerance of every inner CG solve.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub cg_jacobi: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { d_rho: 0.05, d_c: 0.1, a_c: 0.01, dt: 0.025, t_end: 5.0, cg_tol: 1e-10, cg_max_iter: 10_000, cg_jacobi: false }
    }
}

impl ModelConfig {
    /// The reduced-cost setting used for tests and CI: `Δt = 0.05`.
    pub fn desk() -> Self {
        Self { dt: 0.05, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("d_rho", self.d_rho), ("d_c", self.d_c), ("a_c", self.a_c), ("dt", self.dt), ("t_end", self.t_end), ("cg_tol", self.cg_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.cg_max_iter == 0 {
            return Err(Error::InvalidConfig("cg_max_iter must be positive".into()));
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 1.0 {
            return Err(Error::InvalidConfig(format!("t_end / dt = {steps} is not a positive integer")));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn cg_options(&self) -> CgOptions {
        CgOptions { tol: self.cg_tol, max_iter: self.cg_max_iter, jacobi: self.cg_jacobi }
    }
}

/// Fields at `t = n·Δt`, `n = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesField {
    dt: f64,
    fields: Vec<NodalField>,
}

impl TimeSeriesField {
    pub fn new(dt: f64, fields: Vec<NodalField>) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::GridMismatch("empty time series".into()))?;
        if !(dt > 0.0) {
            return Err(Error::GridMismatch(format!("time step {dt} is not positive")));
        }
        let (id, len) = (first.mesh_id(), first.len());
        if let Some(f) = fields.iter().find(|f| f.mesh_id() != id || f.len() != len) {
            return Err(Error::MeshMismatch { expected: id, found: f.mesh_id() });
        }
        Ok(Self { dt, fields })
    }

    pub(crate) fn from_raw(dt: f64, mesh_id: u64, slices: Vec<Vec<f64>>) -> Self {
        Self { dt, fields: slices.into_iter().map(|v| NodalField::from_raw(v, mesh_id)).collect() }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of time levels, `N + 1`.
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        self.dt * self.n_steps() as f64
    }

    pub fn mesh_id(&self) -> u64 {
        self.fields[0].mesh_id()
    }

    pub fn fields(&self) -> &[NodalField] {
        &self.fields
    }

    pub fn field(&self, n: usize) -> &NodalField {
        &self.fields[n]
    }

    /// Same mesh, same step, same number of levels.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.mesh_id() != other.mesh_id() {
            return Err(Error::MeshMismatch { expected: self.mesh_id(), found: other.mesh_id() });
        }
        if self.len() != other.len() || (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(Error::GridMismatch(format!(
                "{} levels at dt {} vs {} levels at dt {}",
                self.len(),
                self.dt,
                other.len(),
                other.dt
            )));
        }
        Ok(())
    }

    /// Levels whose time is an integer multiple of `every`, as `(n, t)`.
    pub fn sample_levels(&self, every: f64) -> Vec<(usize, f64)> {
        let stride = every / self.dt;
        let stride_n = stride.round() as usize;
        if stride_n == 0 || (stride - stride_n as f64).abs() > 1e-9 {
            return Vec::new();
        }
        (0..self.len()).step_by(stride_n).map(|n| (n, n as f64 * self.dt)).collect()
    }
}

/// Density and chemoattractant trajectories from [`ForwardModel::simulate`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rho: TimeSeriesField,
    /// `c[0]` is computed from `ρ⁰`; `c[n+1]` is the field that drove step `n`.
    pub c: TimeSeriesField,
}

/// `ρ₀(x) = 0.45·exp(−((10x₁ − 3)² + 225x₂²)/20)`
pub fn initial_density_at(x1: f64, x2: f64) -> f64 {
    0.45 * (-((10.0 * x1 - 3.0).powi(2) + 225.0 * x2 * x2) / 20.0).exp()
}

pub fn initial_density(mesh: &TriMesh) -> NodalField {
    NodalField::interpolate(mesh, initial_density_at)
}

/// `1ᵀ M ρ = ∫ ρ`
pub fn total_mass(disc: &Discretization, rho: &NodalField) -> Result<f64> {
    rho.check_mesh(disc.mesh())?;
    Ok(dot(disc.lumped_mass(), rho.values()))
}

/// Extrema of a time series with their `(level, vertex)` locations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeReport {
    pub min: f64,
    pub max: f64,
    pub argmin: (usize, usize),
    pub argmax: (usize, usize),
}

pub fn range_monitor(series: &TimeSeriesField) -> RangeReport {
    let mut r = RangeReport { min: f64::INFINITY, max: f64::NEG_INFINITY, argmin: (0, 0), argmax: (0, 0) };
    for (n, f) in series.fields().iter().enumerate() {
        for (i, &v) in f.values().iter().enumerate() {
            if v < r.min {
                r.min = v;
                r.argmin = (n, i);
            }
            if v > r.max {
                r.max = v;
                r.argmax = (n, i);
            }
        }
    }
    r
}

/// The assembled operators of one `(mesh, config)` pair.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    disc: Arc<Discretization>,
    cfg: ModelConfig,
    /// `D_c K + A_c M`
    elliptic: SparseOperator,
    /// `M + Δt D_ρ K`
    parabolic: SparseOperator,
}

impl ForwardModel {
    pub fn new(disc: Arc<Discretization>, cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let elliptic = disc.stiffness().linear_combination(cfg.d_c, disc.mass(), cfg.a_c)?;
        let parabolic = disc.mass().linear_combination(1.0, disc.stiffness(), cfg.dt * cfg.d_rho)?;
        Ok(Self { disc, cfg, elliptic, parabolic })
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn mesh(&self) -> &TriMesh {
        self.disc.mesh()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn parabolic_matrix(&self) -> &SparseOperator {
        &self.parabolic
    }

    pub fn elliptic_matrix(&self) -> &SparseOperator {
        &self.elliptic
    }

    /// `c` with `(D_c K + A_c M) c = M g(ρ)`.
    pub fn elliptic_solve(&self, g: &PiecewiseLinear1D, rho: &NodalField) -> Result<NodalField> {
        rho.check_mesh(self.mesh())?;
        Ok(NodalField::from_raw(self.elliptic_values(g, rho.values())?, self.mesh().id()))
    }

    pub(crate) fn elliptic_values(&self, g: &PiecewiseLinear1D, rho: &[f64]) -> Result<Vec<f64>> {
        let rhs = self.disc.mass().matvec(&compose_values(g, rho));
        solve_with(&self.elliptic, &rhs, &self.cfg.cg_options())
    }

    /// `ρⁿ⁺¹` with `(M + Δt D_ρ K) ρⁿ⁺¹ = M ρⁿ + Δt B(cⁿ⁺¹) f(ρⁿ)`.
    pub fn parabolic_step(&self, f: &PiecewiseLinear1D, rho_n: &NodalField, c_next: &NodalField) -> Result<NodalField> {
        rho_n.check_mesh(self.mesh())?;
        let load = FluxLoad::new(self.mesh(), c_next)?;
        let w = compose_values(f, rho_n.values());
        let next = self.implicit_step(rho_n.values(), &load.apply(self.mesh(), &w)?)?;
        Ok(NodalField::from_raw(next, self.mesh().id()))
    }

    /// Solves `(M + Δt D_ρ K) x = M r + Δt·load`, starting CG from `r`.
    /// The initial residual is then `Δt·load − Δt D_ρ K r`, whose entries
    /// sum to zero, so constants are reproduced exactly and mass drift is
    /// bounded by the tolerance times the increment rather than the state.
    /// Every parabolic step in the crate goes through here so the forward
    /// solver and the inverse operator share one arithmetic path.
    pub(crate) fn implicit_step(&self, r: &[f64], load: &[f64]) -> Result<Vec<f64>> {
        let mut rhs = self.disc.mass().matvec(r);
        let dt = self.cfg.dt;
        for (b, l) in rhs.iter_mut().zip(load) {
            *b += dt * l;
        }
        let opts = self.cfg.cg_options();
        let report = if opts.jacobi {
            pcg(&self.parabolic, &JacobiPreconditioner::new(&self.parabolic), &rhs, Some(r), opts.tol, opts.max_iter)?
        } else {
            pcg(&self.parabolic, &IdentityPreconditioner, &rhs, Some(r), opts.tol, opts.max_iter)?
        };
        if !report.converged {
            return Err(Error::NotConverged { iterations: report.iterations, residual: report.relative_residual });
        }
        Ok(report.x)
    }

    /// `(M + Δt D_ρ K)⁻¹ b`
    pub(crate) fn solve_parabolic(&self, b: &[f64]) -> Result<Vec<f64>> {
        solve_with(&self.parabolic, b, &self.cfg.cg_options())
    }

    /// Runs the full time loop from `rho0`.
    pub fn simulate(&self, f: &PiecewiseLinear1D, g: &PiecewiseLinear1D, rho0: &NodalField) -> Result<Trajectory> {
        rho0.check_mesh(self.mesh())?;
        let n_steps = self.cfg.n_steps();
        let mut rho = Vec::with_capacity(n_steps + 1);
        let mut c = Vec::with_capacity(n_steps + 1);
        rho.push(rho0.values().to_vec());
        c.push(self.elliptic_values(g, rho0.values()).map_err(|e| step_error(0, e))?);
        for n in 0..n_steps {
            let step = || -> Result<(Vec<f64>, Vec<f64>)> {
                let c_next = if n == 0 { c[0].clone() } else { self.elliptic_values(g, &rho[n])? };
                let load = FluxLoad::new(self.mesh(), &NodalField::from_raw(c_next.clone(), self.mesh().id()))?;
                let w = compose_values(f, &rho[n]);
                let next = self.implicit_step(&rho[n], &load.apply(self.mesh(), &w)?)?;
                Ok((c_next, next))
            };
            let (c_next, rho_next) = step().map_err(|e| step_error(n, e))?;
            c.push(c_next);
            rho.push(rho_next);
        }
        let id = self.mesh().id();
        Ok(Trajectory { rho: TimeSeriesField::from_raw(self.cfg.dt, id, rho), c: TimeSeriesField::from_raw(self.cfg.dt, id, c) })
    }
}

fn step_error(step: usize, e: Error) -> Error {
    Error::Step { step, source: Box::new(e) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disk_mesh;

    fn model(level: u32, cfg: ModelConfig) -> ForwardModel {
        ForwardModel::new(Arc::new(Discretization::new(build_disk_mesh(level))), cfg).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert_eq!(ModelConfig::default().n_steps(), 200);
        assert_eq!(ModelConfig::desk().n_steps(), 100);
        assert!(ModelConfig { dt: -1.0, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { dt: 0.03, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { d_c: f64::NAN, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn initial_density_values() {
        assert_eq!(initial_density_at(0.3, 0.0), 0.45);
        let at_left = initial_density_at(-1.0, 0.0);
        assert!((at_left - 0.45 * (-8.45f64).exp()).abs() < 1e-18);
        assert!((at_left - 9.6255e-5).abs() < 1e-9);

        let mesh = build_disk_mesh(4);
        let rho0 = initial_density(&mesh);
        assert!(rho0.values().iter().all(|&v| v > 0.0 && v <= 0.45));
        let peak = mesh.nearest_vertex([0.3, 0.0]);
        let max = rho0.values().iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(rho0.values()[peak], max);
        assert!((max - 0.45).abs() < 0.01);
    }

    #[test]
    fn elliptic_constant_balance() {
        let m = model(3, ModelConfig::desk());
        let rho = NodalField::constant(m.mesh(), 0.5);
        let id = PiecewiseLinear1D::identity(1000).unwrap();
        let c = m.elliptic_solve(&id, &rho).unwrap();
        assert!(c.values().iter().all(|v| (v - 50.0).abs() < 1e-7), "{:?}", &c.values()[..3]);
        let zero = PiecewiseLinear1D::zeros(1000).unwrap();
        assert!(m.elliptic_solve(&zero, &rho).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn elliptic_energy_identity() {
        let m = model(3, ModelConfig::desk());
        let rho0 = initial_density(m.mesh());
        let g = PiecewiseLinear1D::identity(1000).unwrap();
        let c = m.elliptic_solve(&g, &rho0).unwrap();
        let lhs = dot(&m.elliptic_matrix().matvec(c.values()), c.values());
        let rhs = dot(&m.discretization().mass().matvec(&compose_values(&g, rho0.values())), c.values());
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs());
    }

    #[test]
    fn parabolic_step_fixes_constants_without_drift() {
        let m = model(3, ModelConfig::desk());
        let rho = NodalField::constant(m.mesh(), 0.3);
        let c = initial_density(m.mesh());
        let zero = PiecewiseLinear1D::zeros(1000).unwrap();
        let next = m.parabolic_step(&zero, &rho, &c).unwrap();
        for v in next.values() {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_step_conserves_mass() {
        let m = model(3, ModelConfig::desk());
        let rho = initial_density(m.mesh());
        let f = PiecewiseLinear1D::logistic(1000).unwrap();
        let next = m.parabolic_step(&f, &rho, &NodalField::constant(m.mesh(), 2.0)).unwrap();
        let before = total_mass(m.discretization(), &rho).unwrap();
        let after = total_mass(m.discretization(), &next).unwrap();
        assert!((after - before).abs() <= 1e-10 * before);
    }

    #[test]
    fn constant_state_is_stationary() {
        let m = model(2, ModelConfig { t_end: 1.0, ..ModelConfig::desk() });
        let f = PiecewiseLinear1D::logistic(1000).unwrap();
        let g = PiecewiseLinear1D::identity(1000).unwrap();
        let traj = m.simulate(&f, &g, &NodalField::constant(m.mesh(), 0.5)).unwrap();
        assert_eq!(traj.rho.len(), 21);
        for (r, c) in traj.rho.fields().iter().zip(traj.c.fields()) {
            assert!(r.values().iter().all(|v| (v - 0.5).abs() < 1e-12));
            assert!(c.values().iter().all(|v| (v - 50.0).abs() < 1e-7));
        }
        let range = range_monitor(&traj.rho);
        assert!(range.max - range.min < 1e-12);
    }

    #[test]
    fn range_monitor_locates_extrema() {
        let mesh = build_disk_mesh(0);
        let a = NodalField::new(&mesh, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]).unwrap();
        let b = NodalField::new(&mesh, vec![0.5, -0.2, 0.3, 0.4, 0.5, 1.6, 0.7, 0.8, 0.9]).unwrap();
        let series = TimeSeriesField::new(0.5, vec![a, b]).unwrap();
        let r = range_monitor(&series);
        assert_eq!((r.min, r.argmin), (-0.2, (1, 1)));
        assert_eq!((r.max, r.argmax), (1.6, (1, 5)));
        assert!(r.min <= r.max);
    }

    #[test]
    fn total_mass_bounds() {
        let m = model(4, ModelConfig::desk());
        let one = NodalField::constant(m.mesh(), 1.0);
        assert!((total_mass(m.discretization(), &one).unwrap() - m.mesh().area()).abs() < 1e-12);
        let mass0 = total_mass(m.discretization(), &initial_density(m.mesh())).unwrap();
        assert!(mass0 > 0.0 && mass0 < 0.45 * std::f64::consts::PI);
    }

    #[test]
    fn sample_levels_at_integer_times() {
        let mesh = build_disk_mesh(0);
        let s = TimeSeriesField::new(0.25, vec![NodalField::constant(&mesh, 0.0); 9]).unwrap();
        assert_eq!(s.sample_levels(1.0), vec![(0, 0.0), (4, 1.0), (8, 2.0)]);
    }
}
