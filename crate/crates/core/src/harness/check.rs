//! Fast invariant battery on a small mesh.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fem::Discretization;
use crate::forward::{range_monitor, ForwardModel, ModelConfig};
use crate::inverse::{build_operator, defect_of, st_norm, ObservedData};
use crate::mesh::build_disk_mesh;
use crate::param1d::validate_assumptions;

use super::commands::mass_drift;
use super::config::ExperimentConfig;

/// Finest level the battery uses; finer configured meshes are reduced to it.
pub const CHECK_LEVEL: u32 = 2;
pub const CHECK_T_END: f64 = 1.0;
pub const ADJOINT_PAIRS: usize = 5;
pub const ADJOINT_TOL: f64 = 1e-10;
pub const MASS_TOL: f64 = 1e-8;
pub const RANGE_SLACK: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Warn => "WARN",
            Status::Fail => "FAIL",
        })
    }
}

/// Deliberate defects used to confirm the battery catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the adjoint before comparing inner products.
    AdjointSign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for CheckItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:<28} {}", self.status, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.status != Status::Fail)
    }

    pub fn status_of(&self, name: &str) -> Option<Status> {
        self.items.iter().find(|i| i.name == name).map(|i| i.status)
    }

    fn push(&mut self, name: &'static str, ok: bool, fail: Status, detail: String) {
        self.items.push(CheckItem { name, status: if ok { Status::Pass } else { fail }, detail });
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for item in &self.items {
            writeln!(f, "{item}")?;
        }
        Ok(())
    }
}

pub fn cmd_check(cfg: &ExperimentConfig, fault: Option<Fault>) -> Result<CheckReport> {
    cfg.validate()?;
    let f = cfg.true_f()?;
    let g = cfg.g()?;
    let mut report = CheckReport::default();

    let mesh = build_disk_mesh(cfg.mesh_level.min(CHECK_LEVEL));
    let invariants = mesh.check_disk_invariants();
    report.push(
        "mesh invariants",
        invariants.is_ok(),
        Status::Fail,
        match &invariants {
            Ok(()) => format!("{} vertices, {} triangles", mesh.n_vertices(), mesh.n_triangles()),
            Err(e) => e.to_string(),
        },
    );

    let a = validate_assumptions(&f, &g);
    report.push("f vanishes at 0 and 1", a.f_vanishes_at_endpoints, Status::Warn, format!("f(0) = {:e}, f(1) = {:e}", f.values()[0], f.values()[f.n_nodes() - 1]));
    report.push("f positive inside (0,1)", a.f_positive_interior, Status::Warn, String::new());
    report.push(
        "g strictly monotone pieces",
        a.g_slopes_nonzero,
        Status::Warn,
        if a.g_slopes_nonzero { String::new() } else { "g is flat on some cell; f is not identifiable there".into() },
    );

    let disc = Arc::new(Discretization::new(mesh));
    let model_cfg = ModelConfig { t_end: CHECK_T_END, ..cfg.model };
    let model = Arc::new(ForwardModel::new(disc.clone(), model_cfg)?);
    let rho0 = cfg.initial_density(disc.mesh());
    let traj = model.simulate(&f, &g, &rho0)?;

    let (_, _, drift) = mass_drift(&disc, &traj.rho)?;
    report.push("mass conservation", drift <= MASS_TOL, Status::Fail, format!("max relative drift {drift:.3e} (tol {MASS_TOL:e})"));

    let range = range_monitor(&traj.rho);
    let in_range = range.min >= -RANGE_SLACK && range.max <= 1.0 + RANGE_SLACK;
    report.push("invariant region", in_range, Status::Fail, format!("rho in [{:.6e}, {:.6e}]", range.min, range.max));

    let op = build_operator(model.clone(), &g, &ObservedData::exact(traj.rho.clone()), &rho0, cfg.param_nodes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.noise.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..ADJOINT_PAIRS {
        let x: Vec<f64> = (0..op.n_param()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<Vec<f64>> = (0..op.n_levels()).map(|_| (0..disc.n_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ax = op.apply_linear(&x)?;
        let mut aty = op.apply_adjoint(&y)?;
        if fault == Some(Fault::AdjointSign) {
            aty.iter_mut().for_each(|v| *v = -*v);
        }
        worst = worst.max(defect_of(&op, &x, &y, &ax, &aty));
    }
    report.push(
        "adjoint identity",
        worst < ADJOINT_TOL,
        Status::Fail,
        format!("worst relative defect {worst:.3e} over {ADJOINT_PAIRS} pairs (tol {ADJOINT_TOL:e})"),
    );

    let reproduced = op.apply_series(&f)?;
    let gap = st_norm(&disc, &reproduced, &traj.rho)?;
    let raw: Vec<Vec<f64>> = traj.rho.fields().iter().map(|f| f.values().to_vec()).collect();
    let scale = op.st_inner(&raw, &raw).sqrt();
    let bound = 10.0 * model_cfg.cg_tol * scale;
    report.push("operator consistency", gap <= bound, Status::Fail, format!("||T f - rho|| = {gap:.3e} (bound {bound:.3e})"));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass() {
        let report = cmd_check(&ExperimentConfig::default(), None).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.items.iter().all(|i| i.status == Status::Pass), "{report}");
    }

    #[test]
    fn constant_g_warns_without_failing() {
        let cfg = ExperimentConfig { g: "constant:0.5".into(), ..Default::default() };
        let report = cmd_check(&cfg, None).unwrap();
        assert_eq!(report.status_of("g strictly monotone pieces"), Some(Status::Warn));
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn adjoint_sign_error_fails() {
        let report = cmd_check(&ExperimentConfig::default(), Some(Fault::AdjointSign)).unwrap();
        assert_eq!(report.status_of("adjoint identity"), Some(Status::Fail));
        assert!(!report.passed());
    }
}
