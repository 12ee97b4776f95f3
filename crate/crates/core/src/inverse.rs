//! The perturbed forward operator `T^δ: f ↦ r^δ` and its discrete adjoint.
//!
//! Given observed densities `ρ^δ(tⁿ)`, the chemoattractant fields
//! `c^δ_{n+1}` solve the elliptic equation with source `g(ρ^δ(tⁿ))` and are
//! independent of `f`. The density then evolves by
//!
//! ```text
//!   (M + Δt D_ρ K) rⁿ⁺¹ = M rⁿ + Δt B(c^δ_{n+1}) f(ρ^δ(tⁿ)),   r⁰ = ρ₀,
//! ```
//!
//! which is affine in the coefficient vector of `f`: `T^δ f = A f + b` with
//! `b` the pure heat evolution of `ρ₀`. The trajectory space carries the
//! space-time inner product `Σₙ wₙ uₙᵀ M vₙ` with trapezoidal weights `wₙ`;
//! the parameter space carries the Euclidean product on coefficients.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Discretization, FluxLoad, NodalField};
use crate::forward::{ForwardModel, TimeSeriesField};
use crate::par;
use crate::param1d::{stencil, PiecewiseLinear1D, Stencil};
use crate::sparse::dot;

/// Trapezoidal weights on `n_levels` uniformly spaced levels.
pub fn trapezoid_weights(n_levels: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; n_levels];
    if let Some(first) = w.first_mut() {
        *first = 0.5 * dt;
    }
    if n_levels > 1 {
        w[n_levels - 1] = 0.5 * dt;
    }
    w
}

/// `Σₙ wₙ aₙᵀ M bₙ` on raw slices.
pub fn st_inner_raw(disc: &Discretization, dt: f64, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let w = trapezoid_weights(a.len(), dt);
    a.iter().zip(b).zip(&w).map(|((x, y), wn)| wn * disc.mass_inner(x, y)).sum()
}

/// `‖a − b‖_{L²(0,T;L²(Ω))}` with trapezoidal quadrature in time.
pub fn st_norm(disc: &Discretization, a: &TimeSeriesField, b: &TimeSeriesField) -> Result<f64> {
    a.check_compatible(b)?;
    if a.mesh_id() != disc.mesh().id() {
        return Err(Error::MeshMismatch { expected: disc.mesh().id(), found: a.mesh_id() });
    }
    let d: Vec<Vec<f64>> = a.fields().iter().zip(b.fields()).map(|(x, y)| sub(x.values(), y.values())).collect();
    Ok(st_inner_raw(disc, a.dt(), &d, &d).max(0.0).sqrt())
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    Uniform,
}

/// Noisy observation of a density trajectory.
#[derive(Debug, Clone)]
pub struct ObservedData {
    pub rho_delta: TimeSeriesField,
    pub delta: f64,
    pub seed: u64,
}

impl ObservedData {
    /// Exact data, `δ = 0`.
    pub fn exact(truth: TimeSeriesField) -> Self {
        Self { rho_delta: truth, delta: 0.0, seed: 0 }
    }
}

/// Perturbs every `(level, vertex)` entry of `truth` (including `t = 0`) by
/// i.i.d. draws from a seeded ChaCha8 stream, rescaled so the space-time
/// norm of the perturbation is exactly `delta`.
pub fn add_noise(
    disc: &Discretization,
    truth: &TimeSeriesField,
    delta: f64,
    seed: u64,
    distribution: NoiseDistribution,
) -> Result<ObservedData> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise level must be non-negative, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(ObservedData { rho_delta: truth.clone(), delta, seed });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = Uniform::new(-1.0, 1.0).expect("valid range");
    let noise: Vec<Vec<f64>> = truth
        .fields()
        .iter()
        .map(|f| {
            (0..f.len())
                .map(|_| match distribution {
                    NoiseDistribution::Gaussian => rng.sample::<f64, _>(StandardNormal),
                    NoiseDistribution::Uniform => rng.sample(uniform),
                })
                .collect()
        })
        .collect();
    let dt = truth.dt();
    let scale = delta / st_inner_raw(disc, dt, &noise, &noise).sqrt();
    let perturb = |scale: f64, noise: &[Vec<f64>]| -> Vec<Vec<f64>> {
        truth
            .fields()
            .iter()
            .zip(noise)
            .map(|(t, e)| t.values().iter().zip(e).map(|(a, b)| a + scale * b).collect())
            .collect()
    };
    let first = perturb(scale, &noise);
    // The sum rounds; rescale the realized difference once more so the
    // noise level holds to near machine precision.
    let realized: Vec<Vec<f64>> = first.iter().zip(truth.fields()).map(|(a, t)| sub(a, t.values())).collect();
    let correction = delta / st_inner_raw(disc, dt, &realized, &realized).sqrt();
    let slices = perturb(correction, &realized);
    Ok(ObservedData { rho_delta: TimeSeriesField::from_raw(dt, truth.mesh_id(), slices), delta, seed })
}

/// Per-step data of the operator: the stencils of `f(ρ^δ(tⁿ))` and the
/// load map of `∇c^δ_{n+1}`.
#[derive(Debug, Clone)]
struct StepData {
    stencils: Vec<Stencil>,
    load: FluxLoad,
}

/// `T^δ f = A f + b`, matrix free. Immutable after construction, so
/// applications may run concurrently.
#[derive(Debug, Clone)]
pub struct AffineOperator {
    model: Arc<ForwardModel>,
    n_param: usize,
    steps: Vec<StepData>,
    rho0: Vec<f64>,
    offset: Vec<Vec<f64>>,
    observed: TimeSeriesField,
    weights: Vec<f64>,
}

/// Builds `T^δ` from observed data, the known production rate `g` and the
/// true initial density `rho0`.
pub fn build_operator(
    model: Arc<ForwardModel>,
    g: &PiecewiseLinear1D,
    data: &ObservedData,
    rho0: &NodalField,
    n_param: usize,
) -> Result<AffineOperator> {
    let mesh = model.mesh();
    rho0.check_mesh(mesh)?;
    let obs = &data.rho_delta;
    if obs.mesh_id() != mesh.id() {
        return Err(Error::MeshMismatch { expected: mesh.id(), found: obs.mesh_id() });
    }
    let cfg = model.config();
    if obs.n_steps() != cfg.n_steps() || (obs.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(Error::GridMismatch(format!(
            "data has {} steps of {}, model expects {} steps of {}",
            obs.n_steps(),
            obs.dt(),
            cfg.n_steps(),
            cfg.dt
        )));
    }
    if n_param < 2 {
        return Err(Error::InvalidConfig("parameter grid needs at least 2 nodes".into()));
    }

    // The chemoattractant fields do not depend on f; solve them up front.
    let steps = par::map_range(cfg.n_steps(), |n| -> Result<StepData> {
        let rho = obs.field(n).values();
        let c = model.elliptic_values(g, rho).map_err(|e| Error::Step { step: n, source: Box::new(e) })?;
        Ok(StepData {
            stencils: rho.iter().map(|&r| stencil(n_param, r)).collect(),
            load: FluxLoad::new(mesh, &NodalField::from_raw(c, mesh.id()))?,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let zero_load = vec![0.0; mesh.n_vertices()];
    let mut offset = Vec::with_capacity(steps.len() + 1);
    offset.push(rho0.values().to_vec());
    for n in 0..steps.len() {
        let next = model.implicit_step(&offset[n], &zero_load).map_err(|e| Error::Step { step: n, source: Box::new(e) })?;
        offset.push(next);
    }
    let weights = trapezoid_weights(obs.len(), obs.dt());
    Ok(AffineOperator { model, n_param, steps, rho0: rho0.values().to_vec(), offset, observed: obs.clone(), weights })
}

impl AffineOperator {
    pub fn n_param(&self) -> usize {
        self.n_param
    }

    pub fn n_levels(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn model(&self) -> &Arc<ForwardModel> {
        &self.model
    }

    pub fn dt(&self) -> f64 {
        self.model.config().dt
    }

    /// `b = T^δ 0`
    pub fn offset(&self) -> &[Vec<f64>] {
        &self.offset
    }

    pub fn observed(&self) -> &TimeSeriesField {
        &self.observed
    }

    /// Space-time inner product of two raw trajectories.
    pub fn st_inner(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let disc = self.model.discretization();
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| w * disc.mass_inner(x, y)).sum()
    }

    fn check_param(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n_param {
            return Err(Error::DimensionMismatch { expected: self.n_param, found: f.len() });
        }
        Ok(())
    }

    fn compose(&self, n: usize, f: &[f64]) -> Vec<f64> {
        self.steps[n].stencils.iter().map(|s| (1.0 - s.theta) * f[s.index] + s.theta * f[s.index + 1]).collect()
    }

    fn evolve(&self, f: &[f64], start: Vec<f64>) -> Result<Vec<Vec<f64>>> {
        self.check_param(f)?;
        let mesh = self.model.mesh();
        let mut out = Vec::with_capacity(self.n_levels());
        out.push(start);
        for n in 0..self.steps.len() {
            let load = self.steps[n].load.apply(mesh, &self.compose(n, f))?;
            let next = self.model.implicit_step(&out[n], &load).map_err(|e| Error::Step { step: n, source: Box::new(e) })?;
            out.push(next);
        }
        Ok(out)
    }

    /// `A f`: the trajectory driven by `f` from a zero initial state.
    pub fn apply_linear(&self, f: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.evolve(f, vec![0.0; self.model.mesh().n_vertices()])
    }

    /// `T^δ f = A f + b`, evaluated as one recursion from `ρ₀`. With exact
    /// data this is the same arithmetic as [`ForwardModel::simulate`].
    pub fn apply(&self, f: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.evolve(f, self.rho0.clone())
    }

    pub fn apply_series(&self, f: &PiecewiseLinear1D) -> Result<TimeSeriesField> {
        Ok(TimeSeriesField::from_raw(self.dt(), self.model.mesh().id(), self.apply(f.values())?))
    }

    /// `A* y`, the exact transpose of [`apply_linear`](Self::apply_linear)
    /// with respect to the space-time product on trajectories and the
    /// Euclidean product on coefficients.
    pub fn apply_adjoint(&self, y: &[Vec<f64>]) -> Result<Vec<f64>> {
        if y.len() != self.n_levels() {
            return Err(Error::GridMismatch(format!("{} levels, operator has {}", y.len(), self.n_levels())));
        }
        let disc = self.model.discretization();
        let mesh = disc.mesh();
        let dt = self.dt();
        let n_steps = self.steps.len();
        let mut grad = vec![0.0; self.n_param];

        // z carries M-weighted sensitivities backwards; r⁰ = 0, so level 0
        // never reaches f.
        let mut z: Vec<f64> = disc.mass().matvec(&y[n_steps]).iter().map(|v| self.weights[n_steps] * v).collect();
        for n in (1..=n_steps).rev() {
            let p = self.model.solve_parabolic(&z).map_err(|e| Error::Step { step: n, source: Box::new(e) })?;
            let q = self.steps[n - 1].load.apply_transpose(mesh, &p)?;
            for (s, qk) in self.steps[n - 1].stencils.iter().zip(&q) {
                grad[s.index] += dt * (1.0 - s.theta) * qk;
                grad[s.index + 1] += dt * s.theta * qk;
            }
            if n > 1 {
                let mp = disc.mass().matvec(&p);
                let my = disc.mass().matvec(&y[n - 1]);
                z = mp.iter().zip(&my).map(|(a, b)| a + self.weights[n - 1] * b).collect();
            }
        }
        Ok(grad)
    }

    pub fn apply_adjoint_series(&self, y: &TimeSeriesField) -> Result<Vec<f64>> {
        if y.mesh_id() != self.model.mesh().id() {
            return Err(Error::MeshMismatch { expected: self.model.mesh().id(), found: y.mesh_id() });
        }
        let raw: Vec<Vec<f64>> = y.fields().iter().map(|f| f.values().to_vec()).collect();
        self.apply_adjoint(&raw)
    }

    /// `ρ^δ − b`, the data the linear part has to explain.
    pub fn shifted_data(&self) -> Vec<Vec<f64>> {
        self.observed.fields().iter().zip(&self.offset).map(|(d, b)| sub(d.values(), b)).collect()
    }

    /// `‖T^δ f − ρ^δ‖` recomputed from scratch.
    pub fn residual_norm(&self, f: &[f64]) -> Result<f64> {
        let tf = self.apply(f)?;
        let d: Vec<Vec<f64>> = tf.iter().zip(self.observed.fields()).map(|(a, o)| sub(a, o.values())).collect();
        Ok(self.st_inner(&d, &d).max(0.0).sqrt())
    }

    /// Dense matrix of `A` (one column per coefficient, rows stacked by time
    /// level). Costs `n_param` forward runs; meant for tiny meshes.
    pub fn assemble_dense(&self) -> Result<Vec<Vec<f64>>> {
        let cols = par::map_range(self.n_param, |j| {
            let mut e = vec![0.0; self.n_param];
            e[j] = 1.0;
            self.apply_linear(&e).map(|t| t.concat())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(cols)
    }
}

/// `‖T^δ f − T f‖`, where `T` is built from the exact trajectory.
pub fn perturbation_gap(
    model: &Arc<ForwardModel>,
    g: &PiecewiseLinear1D,
    f: &PiecewiseLinear1D,
    truth: &TimeSeriesField,
    data: &ObservedData,
    rho0: &NodalField,
) -> Result<f64> {
    let exact = build_operator(model.clone(), g, &ObservedData::exact(truth.clone()), rho0, f.n_nodes())?;
    let perturbed = build_operator(model.clone(), g, data, rho0, f.n_nodes())?;
    let a = exact.apply(f.values())?;
    let b = perturbed.apply(f.values())?;
    let d: Vec<Vec<f64>> = a.iter().zip(&b).map(|(x, y)| sub(x, y)).collect();
    Ok(exact.st_inner(&d, &d).max(0.0).sqrt())
}

/// Relative adjoint defect `|⟨Af, y⟩ − ⟨f, A*y⟩| / (‖Af‖·‖y‖)`. When `Af`
/// vanishes the scale falls back to `‖f‖·‖A*y‖`, and an operator that is
/// identically zero has defect 0.
pub fn adjoint_defect(op: &AffineOperator, f: &[f64], y: &[Vec<f64>]) -> Result<f64> {
    let af = op.apply_linear(f)?;
    let aty = op.apply_adjoint(y)?;
    Ok(defect_of(op, f, y, &af, &aty))
}

pub(crate) fn defect_of(op: &AffineOperator, f: &[f64], y: &[Vec<f64>], af: &[Vec<f64>], aty: &[f64]) -> f64 {
    let lhs = op.st_inner(af, y);
    let rhs = dot(f, aty);
    let mut scale = op.st_inner(af, af).sqrt() * op.st_inner(y, y).sqrt();
    if scale == 0.0 {
        scale = dot(f, f).sqrt() * dot(aty, aty).sqrt();
    }
    if scale == 0.0 {
        return (lhs - rhs).abs();
    }
    (lhs - rhs).abs() / scale
}
