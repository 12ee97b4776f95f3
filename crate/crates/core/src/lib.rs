//! Parameter identification for a volume-filling chemotaxis model.
//!
//! The crate simulates the parabolic-elliptic system
//!
//! ```text
//!   ∂ρ/∂t − D_ρ Δρ = −div(f(ρ) ∇c)
//!   −D_c Δc + A_c c = g(ρ)
//! ```
//!
//! on the unit disk with no-flux boundary conditions using P1 finite
//! elements and a linear implicit Euler scheme, and reconstructs the
//! chemotactic sensitivity `f` from noisy density observations by Tikhonov
//! regularization in H¹(0,1) with the discrepancy principle.
//!
//! Module map:
//!
//! * [`mesh`], [`sparse`], [`cg`], [`fem`], [`vtk`]: spatial discretization
//!   and linear algebra.
//! * [`param1d`]: piecewise-linear parameter functions on `[0,1]`.
//! * [`forward`]: the nonlinear forward solver and its monitors.
//! * [`inverse`]: noise model, the perturbed affine operator and its adjoint.
//! * [`regularize`]: Tikhonov solves, discrepancy principle, rate studies.
//! * [`harness`]: configuration and the command implementations behind the CLI.

pub mod cg;
pub mod error;
pub mod fem;
pub mod forward;
pub mod harness;
pub mod inverse;
pub mod mesh;
pub mod par;
pub mod param1d;
pub mod regularize;
pub mod sparse;
pub mod vtk;

pub use error::{Error, Result};
pub use fem::{Discretization, NodalField};
pub use forward::{ForwardModel, ModelConfig, TimeSeriesField, Trajectory};
pub use inverse::{AffineOperator, ObservedData};
pub use mesh::TriMesh;
pub use param1d::{Gram1D, PiecewiseLinear1D};
pub use regularize::{RateRow, TikhonovResult};
pub use sparse::SparseOperator;
