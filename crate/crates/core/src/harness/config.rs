use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::fem::NodalField;
use crate::forward::{initial_density, ModelConfig};
use crate::inverse::NoiseDistribution;
use crate::mesh::TriMesh;
use crate::param1d::{PiecewiseLinear1D, DEFAULT_NODES};
use crate::regularize::{DiscrepancyOptions, TikhonovOptions};

/// Refinement level of the desk-scale mesh (1089 vertices).
pub const DESK_LEVEL: u32 = 4;
/// Refinement level of the reference-scale mesh (4225 vertices).
pub const PAPER_LEVEL: u32 = 5;
pub const PAPER_DT: f64 = 0.025;

/// Noise levels of the default rate study.
pub const DESK_DELTAS: [f64; 4] = [5e-1, 5e-2, 5e-3, 5e-4];
/// Noise levels of the full rate study.
pub const FULL_DELTAS: [f64; 6] = [5e-1, 5e-2, 5e-3, 5e-4, 5e-5, 5e-6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub delta: f64,
    pub seed: u64,
    pub distribution: NoiseDistribution,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { delta: 0.05, seed: 20240601, distribution: NoiseDistribution::Gaussian }
    }
}

/// Everything a command needs. Loaded from JSON; missing keys take their
/// defaults and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mesh_level: u32,
    pub model: ModelConfig,
    pub param_nodes: usize,
    /// `"logistic"`, `"identity"`, `"constant:<v>"` or a `rho,value` CSV path.
    pub true_f: String,
    /// Same forms as `true_f`.
    pub g: String,
    /// Constant initial density instead of the Gaussian bump.
    pub initial_constant: Option<f64>,
    pub noise: NoiseConfig,
    pub discrepancy: DiscrepancyOptions,
    pub tikhonov: TikhonovOptions,
    /// Regularization parameter used when `noise.delta` is zero.
    pub noiseless_alpha: f64,
    pub deltas: Vec<f64>,
    pub output_dir: PathBuf,
    /// Directory of a trajectory written by `simulate`; when absent the
    /// data are simulated on the fly.
    pub data_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mesh_level: DESK_LEVEL,
            model: ModelConfig::desk(),
            param_nodes: DEFAULT_NODES,
            true_f: "logistic".into(),
            g: "identity".into(),
            initial_constant: None,
            noise: NoiseConfig::default(),
            discrepancy: DiscrepancyOptions::default(),
            tikhonov: TikhonovOptions::default(),
            noiseless_alpha: 1e-9,
            deltas: DESK_DELTAS.to_vec(),
            output_dir: PathBuf::from("out"),
            data_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Reference-scale mesh and time step.
    pub fn paper(mut self) -> Self {
        self.mesh_level = PAPER_LEVEL;
        self.model.dt = PAPER_DT;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh_level > 8 {
            return Err(Error::InvalidConfig(format!("mesh_level {} is too large (max 8)", self.mesh_level)));
        }
        self.model.validate()?;
        if self.param_nodes < 2 {
            return Err(Error::InvalidConfig("param_nodes must be at least 2".into()));
        }
        if !(self.noise.delta >= 0.0 && self.noise.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise.delta must be non-negative, got {}", self.noise.delta)));
        }
        if let Some(v) = self.initial_constant {
            if !v.is_finite() {
                return Err(Error::InvalidConfig("initial_constant must be finite".into()));
            }
        }
        self.discrepancy.validate()?;
        if !(self.tikhonov.tol > 0.0) || self.tikhonov.max_iter == 0 {
            return Err(Error::InvalidConfig("tikhonov.tol and tikhonov.max_iter must be positive".into()));
        }
        if !(self.noiseless_alpha > 0.0 && self.noiseless_alpha.is_finite()) {
            return Err(Error::InvalidConfig("noiseless_alpha must be positive".into()));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidConfig(format!("rate-study noise levels must be positive, got {d}")));
        }
        Ok(())
    }

    pub fn true_f(&self) -> Result<PiecewiseLinear1D> {
        parameter(&self.true_f, self.param_nodes).context("true_f")
    }

    pub fn g(&self) -> Result<PiecewiseLinear1D> {
        parameter(&self.g, self.param_nodes).context("g")
    }

    pub fn initial_density(&self, mesh: &TriMesh) -> NodalField {
        match self.initial_constant {
            Some(v) => NodalField::constant(mesh, v),
            None => initial_density(mesh),
        }
    }
}

/// Resolves a parameter descriptor. CSV files are used on their own grid when it
/// matches `n_nodes`, and resampled otherwise.
pub fn parameter(spec: &str, n_nodes: usize) -> Result<PiecewiseLinear1D> {
    match spec {
        "logistic" => PiecewiseLinear1D::logistic(n_nodes),
        "identity" => PiecewiseLinear1D::identity(n_nodes),
        _ => {
            if let Some(v) = spec.strip_prefix("constant:") {
                let v: f64 = v.trim().parse().map_err(|e| Error::InvalidConfig(format!("'{spec}': {e}")))?;
                return PiecewiseLinear1D::from_fn(n_nodes, |_| v);
            }
            let file = fs::File::open(spec).with_context(|| format!("opening {spec}"))?;
            let f = PiecewiseLinear1D::read_csv(std::io::BufReader::new(file)).with_context(|| format!("reading {spec}"))?;
            if f.n_nodes() == n_nodes {
                Ok(f)
            } else {
                PiecewiseLinear1D::from_fn(n_nodes, |r| f.evaluate(r))
            }
        }
    }
}
