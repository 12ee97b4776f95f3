use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result, ResultExt};
use crate::fem::{Discretization, NodalField};
use crate::forward::{range_monitor, total_mass, ForwardModel, RangeReport, TimeSeriesField, Trajectory};
use crate::inverse::{add_noise, build_operator};
use crate::mesh::{build_disk_mesh, TriMesh};
use crate::param1d::{h1_gram, Gram1D, PiecewiseLinear1D};
use crate::regularize::{
    discrepancy_select, h1_error, max_error_on, rate_study, RateRow, RateStudy, ScanPoint, TikhonovProblem, TikhonovResult,
};

use super::config::ExperimentConfig;
use super::store::{create_dir, load_trajectory, save_snapshots, save_trajectory};

/// Interval on which the max-norm reconstruction error is reported.
pub const MAX_ERROR_WINDOW: (f64, f64) = (0.1, 0.9);

/// Mesh, model and parameter functions resolved from a config.
pub struct Setup {
    pub cfg: ExperimentConfig,
    pub model: Arc<ForwardModel>,
    pub f_true: PiecewiseLinear1D,
    pub g: PiecewiseLinear1D,
    pub rho0: NodalField,
    pub gram: Gram1D,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let disc = Arc::new(Discretization::new(build_disk_mesh(cfg.mesh_level)));
        let rho0 = cfg.initial_density(disc.mesh());
        let model = Arc::new(ForwardModel::new(disc, cfg.model)?);
        Ok(Self { cfg: cfg.clone(), model, f_true: cfg.true_f()?, g: cfg.g()?, rho0, gram: h1_gram(cfg.param_nodes)? })
    }

    pub fn mesh(&self) -> &TriMesh {
        self.model.mesh()
    }

    pub fn discretization(&self) -> &Discretization {
        self.model.discretization()
    }

    /// The exact trajectory: read from `data_dir` when set, simulated
    /// otherwise.
    pub fn truth(&self) -> Result<Trajectory> {
        let Some(dir) = &self.cfg.data_dir else {
            return self.model.simulate(&self.f_true, &self.g, &self.rho0).context("simulating the data");
        };
        let (mesh, traj) = load_trajectory(dir).with_context(|| format!("loading data from {}", dir.display()))?;
        if mesh.checksum() != self.mesh().checksum() {
            return Err(Error::InvalidMesh(format!(
                "data in {} were computed on a different mesh than mesh_level {}",
                dir.display(),
                self.cfg.mesh_level
            )));
        }
        let cfg = &self.cfg.model;
        if traj.rho.n_steps() != cfg.n_steps() || (traj.rho.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
            return Err(Error::GridMismatch(format!(
                "data in {} have {} steps of {}, config expects {} steps of {}",
                dir.display(),
                traj.rho.n_steps(),
                traj.rho.dt(),
                cfg.n_steps(),
                cfg.dt
            )));
        }
        Ok(traj)
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    write_file(&dir.join("config.json"), &cfg.to_json())
}

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub initial_mass: f64,
    pub final_mass: f64,
    /// `max_n |m_n − m_0| / |m_0|`, absolute when `m_0 = 0`.
    pub max_mass_drift: f64,
    pub rho_range: RangeReport,
    pub c_range: RangeReport,
    pub snapshots: Vec<PathBuf>,
}

/// Largest relative deviation of `1ᵀMρ` from its initial value.
pub fn mass_drift(disc: &Discretization, rho: &TimeSeriesField) -> Result<(f64, f64, f64)> {
    let masses = rho.fields().iter().map(|f| total_mass(disc, f)).collect::<Result<Vec<_>>>()?;
    let m0 = masses[0];
    let scale = if m0 == 0.0 { 1.0 } else { m0.abs() };
    let drift = masses.iter().map(|m| (m - m0).abs() / scale).fold(0.0, f64::max);
    Ok((m0, *masses.last().expect("non-empty"), drift))
}

/// Runs the forward model and writes VTK snapshots at integer times, the
/// full trajectory under `trajectory/`, and `report.txt`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulateSummary> {
    let setup = Setup::new(cfg)?;
    let out = &cfg.output_dir;
    create_dir(out)?;
    let traj = setup.model.simulate(&setup.f_true, &setup.g, &setup.rho0).context("simulating")?;
    let mesh = setup.mesh();
    let manifest = save_snapshots(out, mesh, &traj, 1.0)?;
    save_trajectory(&out.join("trajectory"), mesh, &traj)?;
    write_config(out, cfg)?;

    let (initial_mass, final_mass, max_mass_drift) = mass_drift(setup.discretization(), &traj.rho)?;
    let summary = SimulateSummary {
        initial_mass,
        final_mass,
        max_mass_drift,
        rho_range: range_monitor(&traj.rho),
        c_range: range_monitor(&traj.c),
        snapshots: manifest.files.iter().map(|e| out.join(&e.file)).collect(),
    };

    let mut r = String::new();
    writeln!(r, "vertices            {}", mesh.n_vertices()).unwrap();
    writeln!(r, "triangles           {}", mesh.n_triangles()).unwrap();
    writeln!(r, "mesh checksum       {}", mesh.checksum()).unwrap();
    writeln!(r, "dt                  {}", cfg.model.dt).unwrap();
    writeln!(r, "steps               {}", cfg.model.n_steps()).unwrap();
    writeln!(r, "initial mass        {:.16e}", summary.initial_mass).unwrap();
    writeln!(r, "final mass          {:.16e}", summary.final_mass).unwrap();
    writeln!(r, "max mass drift      {:.6e}", summary.max_mass_drift).unwrap();
    for (name, range) in [("rho", &summary.rho_range), ("c", &summary.c_range)] {
        writeln!(
            r,
            "{name:<3} range           [{:.10e}, {:.10e}] width {:.6e} (min at level {} vertex {}, max at level {} vertex {})",
            range.min,
            range.max,
            range.max - range.min,
            range.argmin.0,
            range.argmin.1,
            range.argmax.0,
            range.argmax.1
        )
        .unwrap();
    }
    for e in &manifest.files {
        writeln!(r, "snapshot            t={} {}", e.t, e.file).unwrap();
    }
    write_file(&out.join("report.txt"), &r)?;
    Ok(summary)
}

/// Outcome of one noisy reconstruction.
#[derive(Debug, Clone)]
pub struct Inversion {
    pub result: TikhonovResult,
    pub scan: Vec<ScanPoint>,
    /// `τδ`; `None` for exact data, where α is fixed.
    pub bound: Option<f64>,
    pub delta: f64,
    pub seed: u64,
    pub h1_error: f64,
    pub max_error: f64,
    /// Range of the noisy density, where `f` is identifiable.
    pub data_range: (f64, f64),
}

/// Perturbs `truth` at level `delta`, builds the operator and selects α by
/// the discrepancy principle (or uses `noiseless_alpha` when `delta = 0`).
pub fn invert(setup: &Setup, truth: &TimeSeriesField, delta: f64, seed: u64) -> Result<Inversion> {
    let cfg = &setup.cfg;
    let data = add_noise(setup.discretization(), truth, delta, seed, cfg.noise.distribution)?;
    let op = build_operator(setup.model.clone(), &setup.g, &data, &setup.rho0, cfg.param_nodes).context("building the operator")?;
    let problem = TikhonovProblem::new(&op, &setup.gram)?;
    let (result, scan, bound) = if delta == 0.0 {
        let r = problem.solve(cfg.noiseless_alpha, &cfg.tikhonov, None)?;
        let point = ScanPoint {
            alpha: r.alpha,
            residual: r.residual,
            h1_norm: setup.gram.h1_norm(r.f_rec.values()),
            cgne_iterations: r.cgne_iterations,
            refinement: false,
        };
        (r, vec![point], None)
    } else {
        let o = discrepancy_select(&problem, delta, &cfg.discrepancy, &cfg.tikhonov)?;
        (o.result, o.scan, Some(o.bound))
    };
    let range = range_monitor(&data.rho_delta);
    Ok(Inversion {
        h1_error: h1_error(&setup.f_true, &result.f_rec, &setup.gram)?,
        max_error: max_error_on(&setup.f_true, &result.f_rec, MAX_ERROR_WINDOW.0, MAX_ERROR_WINDOW.1),
        result,
        scan,
        bound,
        delta,
        seed,
        data_range: (range.min, range.max),
    })
}

/// Reconstructs `f` from noisy data and writes `reconstruction.csv`,
/// `alpha_scan.csv`, `comparison.csv` and `report.txt`.
pub fn cmd_invert(cfg: &ExperimentConfig) -> Result<Inversion> {
    let setup = Setup::new(cfg)?;
    let out = &cfg.output_dir;
    create_dir(out)?;
    let truth = setup.truth()?;
    let inv = invert(&setup, &truth.rho, cfg.noise.delta, cfg.noise.seed)?;

    let mut buf = Vec::new();
    inv.result.f_rec.write_csv(&mut buf)?;
    write_file(&out.join("reconstruction.csv"), buf)?;

    let mut scan = String::from("alpha,residual,h1_norm,cgne_iterations,refinement,selected\n");
    for p in &inv.scan {
        let selected = p.alpha == inv.result.alpha;
        writeln!(scan, "{:.16e},{:.16e},{:.16e},{},{},{}", p.alpha, p.residual, p.h1_norm, p.cgne_iterations, p.refinement, selected)
            .unwrap();
    }
    write_file(&out.join("alpha_scan.csv"), &scan)?;

    let mut cmp = String::from("rho,f_true,f_rec\n");
    for ((r, a), b) in setup.f_true.grid().iter().zip(setup.f_true.values()).zip(inv.result.f_rec.values()) {
        writeln!(cmp, "{r:.16e},{a:.16e},{b:.16e}").unwrap();
    }
    write_file(&out.join("comparison.csv"), &cmp)?;
    write_config(out, cfg)?;

    let mut r = String::new();
    writeln!(r, "delta               {:.6e}", inv.delta).unwrap();
    writeln!(r, "seed                {}", inv.seed).unwrap();
    match inv.bound {
        Some(b) => writeln!(r, "discrepancy bound   {b:.6e} (tau {})", cfg.discrepancy.tau).unwrap(),
        None => writeln!(r, "discrepancy bound   none (exact data, fixed alpha)").unwrap(),
    }
    writeln!(r, "alpha               {:.6e}", inv.result.alpha).unwrap();
    writeln!(r, "residual            {:.6e}", inv.result.residual).unwrap();
    writeln!(r, "cgne iterations     {}", inv.result.cgne_iterations).unwrap();
    writeln!(r, "converged           {}", inv.result.converged).unwrap();
    writeln!(r, "h1 error            {:.6e}", inv.h1_error).unwrap();
    writeln!(r, "max error [{}, {}]  {:.6e}", MAX_ERROR_WINDOW.0, MAX_ERROR_WINDOW.1, inv.max_error).unwrap();
    writeln!(r, "data range          [{:.6e}, {:.6e}]", inv.data_range.0, inv.data_range.1).unwrap();
    write_file(&out.join("report.txt"), &r)?;
    Ok(inv)
}

/// One rate-study row for the given noise level and seed.
pub fn rate_row(setup: &Setup, truth: &TimeSeriesField, delta: f64, seed: u64) -> Result<RateRow> {
    let inv = invert(setup, truth, delta, seed)?;
    Ok(RateRow {
        delta,
        alpha: inv.result.alpha,
        residual: inv.result.residual,
        h1_error: inv.h1_error,
        cgne_iterations: inv.result.cgne_iterations,
        seed,
    })
}

pub fn format_slope(s: Option<f64>) -> String {
    s.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"))
}

/// Runs the rate study over `deltas` with seeds `noise.seed + index` and
/// writes `rates.csv` and `rates_report.txt`. Rows that fail are reported
/// in the text report; the others are still written.
pub fn cmd_rates(cfg: &ExperimentConfig, deltas: &[f64]) -> Result<RateStudy> {
    if deltas.is_empty() {
        return Err(Error::InvalidConfig("the noise-level list is empty".into()));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidConfig(format!("noise levels must be positive, got {d}")));
    }
    let setup = Setup::new(cfg)?;
    let out = &cfg.output_dir;
    create_dir(out)?;
    let truth = setup.truth()?;
    let study = rate_study(deltas, cfg.noise.seed, |delta, seed| rate_row(&setup, &truth.rho, delta, seed));

    let mut csv = String::from("delta,alpha,residual,h1_error,cgne_iterations,seed\n");
    for row in study.successful() {
        writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            row.delta, row.alpha, row.residual, row.h1_error, row.cgne_iterations, row.seed
        )
        .unwrap();
    }
    write_file(&out.join("rates.csv"), &csv)?;
    write_config(out, cfg)?;

    let mut r = String::new();
    for (i, (delta, row)) in deltas.iter().zip(&study.rows).enumerate() {
        match row {
            Ok(row) => writeln!(
                r,
                "delta {:.1e}  seed {}  alpha {:.4e}  residual {:.4e}  h1 error {:.4e}  iterations {}",
                delta, row.seed, row.alpha, row.residual, row.h1_error, row.cgne_iterations
            )
            .unwrap(),
            Err(e) => writeln!(r, "delta {:.1e}  seed {}  FAILED: {e}", delta, cfg.noise.seed + i as u64).unwrap(),
        }
    }
    writeln!(r, "alpha slope         {}  (expected 1)", format_slope(study.alpha_slope)).unwrap();
    writeln!(r, "h1 error slope      {}  (expected 0.5)", format_slope(study.error_slope)).unwrap();
    write_file(&out.join("rates_report.txt"), &r)?;
    Ok(study)
}
