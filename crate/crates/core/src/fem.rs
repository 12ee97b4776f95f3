//! P1 finite-element assembly on a [`TriMesh`].
//!
//! Element contributions are computed independently (in parallel when the
//! `parallel` feature is on) and scattered into the CSR structure
//! sequentially in triangle order, so assembly is deterministic.
//! Neumann conditions are natural in the weak form; no rows are modified.

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::par;
use crate::sparse::SparseOperator;

/// Finite-element coefficient vector, one value per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    values: Vec<f64>,
    mesh_id: u64,
}

impl NodalField {
    pub fn new(mesh: &TriMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::DimensionMismatch { expected: mesh.n_vertices(), found: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { values, mesh_id: mesh.id() })
    }

    pub fn constant(mesh: &TriMesh, value: f64) -> Self {
        Self { values: vec![value; mesh.n_vertices()], mesh_id: mesh.id() }
    }

    /// Nodal interpolant of `f(x₁, x₂)`.
    pub fn interpolate(mesh: &TriMesh, f: impl Fn(f64, f64) -> f64) -> Self {
        Self { values: mesh.vertices().iter().map(|p| f(p[0], p[1])).collect(), mesh_id: mesh.id() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_mesh(&self, mesh: &TriMesh) -> Result<()> {
        if self.mesh_id != mesh.id() {
            return Err(Error::MeshMismatch { expected: mesh.id(), found: self.mesh_id });
        }
        Ok(())
    }

    /// Wraps raw values already known to belong to the mesh with id `mesh_id`.
    pub(crate) fn from_raw(values: Vec<f64>, mesh_id: u64) -> Self {
        Self { values, mesh_id }
    }
}

fn assemble(mesh: &TriMesh, local: impl Fn(usize) -> [[f64; 3]; 3] + Sync + Send) -> SparseOperator {
    let blocks = par::map_range(mesh.n_triangles(), local);
    let mut m = SparseOperator::from_pattern(&mesh.adjacency(), true);
    for (t, block) in mesh.triangles().iter().zip(&blocks) {
        for a in 0..3 {
            for b in 0..3 {
                m.add(t[a], t[b], block[a][b]);
            }
        }
    }
    m
}

/// Consistent mass matrix `M_ij = ∫ φ_i φ_j`.
pub fn assemble_mass(mesh: &TriMesh) -> SparseOperator {
    let geom = mesh.geometry();
    assemble(mesh, |k| {
        let off = geom[k].area / 12.0;
        let diag = 2.0 * off;
        [[diag, off, off], [off, diag, off], [off, off, diag]]
    })
}

/// Stiffness matrix `K_ij = ∫ ∇φ_i·∇φ_j`.
pub fn assemble_stiffness(mesh: &TriMesh) -> SparseOperator {
    let geom = mesh.geometry();
    assemble(mesh, |k| {
        let g = &geom[k];
        let mut block = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                block[a][b] = g.area * (g.grads[a][0] * g.grads[b][0] + g.grads[a][1] * g.grads[b][1]);
            }
        }
        block
    })
}

/// Row sums of the mass matrix, `∫ φ_i`.
pub fn lumped_mass(mesh: &TriMesh) -> Vec<f64> {
    let mut d = vec![0.0; mesh.n_vertices()];
    for (t, g) in mesh.triangles().iter().zip(mesh.geometry()) {
        for &v in t {
            d[v] += g.area / 3.0;
        }
    }
    d
}

/// `∫ u v` computed element by element from the exact P1 product formula.
pub fn l2_inner(mesh: &TriMesh, u: &NodalField, v: &NodalField) -> Result<f64> {
    u.check_mesh(mesh)?;
    v.check_mesh(mesh)?;
    let (u, v) = (u.values(), v.values());
    Ok(mesh
        .triangles()
        .iter()
        .zip(mesh.geometry())
        .map(|(t, g)| {
            let uu = [u[t[0]], u[t[1]], u[t[2]]];
            let vv = [v[t[0]], v[t[1]], v[t[2]]];
            let diag: f64 = (0..3).map(|k| uu[k] * vv[k]).sum();
            g.area / 12.0 * (diag + uu.iter().sum::<f64>() * vv.iter().sum::<f64>())
        })
        .sum())
}

/// The bilinear map `(w, c) ↦ b`, `b_i = ∫ w_h ∇c_h·∇φ_i`, with `c` frozen.
///
/// Stores `(|T|/3)·∇c_T` per triangle. Since `∇c_h` is constant and `w_h`
/// linear on each triangle, `∫_T w_h = |T|·mean(w)` makes the element
/// integral exact; the edge-midpoint rule gives the same value.
#[derive(Debug, Clone)]
pub struct FluxLoad {
    factors: Vec<[f64; 2]>,
    mesh_id: u64,
}

impl FluxLoad {
    pub fn new(mesh: &TriMesh, c: &NodalField) -> Result<Self> {
        c.check_mesh(mesh)?;
        let c = c.values();
        let factors = mesh
            .triangles()
            .iter()
            .zip(mesh.geometry())
            .map(|(t, g)| {
                let grad = g.gradient([c[t[0]], c[t[1]], c[t[2]]]);
                let s = g.area / 3.0;
                [s * grad[0], s * grad[1]]
            })
            .collect();
        Ok(Self { factors, mesh_id: mesh.id() })
    }

    /// Load vector for weight `w` (nodal values of the composed `f(ρ)`).
    pub fn apply(&self, mesh: &TriMesh, w: &[f64]) -> Result<Vec<f64>> {
        self.check(mesh, w.len())?;
        let mut b = vec![0.0; mesh.n_vertices()];
        for ((t, g), fac) in mesh.triangles().iter().zip(mesh.geometry()).zip(&self.factors) {
            let wsum = w[t[0]] + w[t[1]] + w[t[2]];
            for a in 0..3 {
                b[t[a]] += wsum * (fac[0] * g.grads[a][0] + fac[1] * g.grads[a][1]);
            }
        }
        Ok(b)
    }

    /// Transpose of [`apply`](Self::apply): `q = Bᵀ p` with `pᵀ B w = qᵀ w`.
    pub fn apply_transpose(&self, mesh: &TriMesh, p: &[f64]) -> Result<Vec<f64>> {
        self.check(mesh, p.len())?;
        let mut q = vec![0.0; mesh.n_vertices()];
        for ((t, g), fac) in mesh.triangles().iter().zip(mesh.geometry()).zip(&self.factors) {
            let s: f64 = (0..3).map(|a| p[t[a]] * (fac[0] * g.grads[a][0] + fac[1] * g.grads[a][1])).sum();
            for &v in t {
                q[v] += s;
            }
        }
        Ok(q)
    }

    fn check(&self, mesh: &TriMesh, len: usize) -> Result<()> {
        if self.mesh_id != mesh.id() {
            return Err(Error::MeshMismatch { expected: mesh.id(), found: self.mesh_id });
        }
        if len != mesh.n_vertices() {
            return Err(Error::DimensionMismatch { expected: mesh.n_vertices(), found: len });
        }
        Ok(())
    }
}

/// `b_i = ∫ w_h ∇c_h·∇φ_i`.
pub fn assemble_weighted_flux_load(mesh: &TriMesh, w: &NodalField, c: &NodalField) -> Result<Vec<f64>> {
    w.check_mesh(mesh)?;
    FluxLoad::new(mesh, c)?.apply(mesh, w.values())
}

/// A mesh together with its mass and stiffness matrices. Shared read-only by
/// every solver built on the mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    mesh: TriMesh,
    mass: SparseOperator,
    stiffness: SparseOperator,
    lumped: Vec<f64>,
}

impl Discretization {
    pub fn new(mesh: TriMesh) -> Self {
        let mass = assemble_mass(&mesh);
        let stiffness = assemble_stiffness(&mesh);
        let lumped = lumped_mass(&mesh);
        Self { mesh, mass, stiffness, lumped }
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn mass(&self) -> &SparseOperator {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseOperator {
        &self.stiffness
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    pub fn n_vertices(&self) -> usize {
        self.mesh.n_vertices()
    }

    /// `uᵀ M v` on raw coefficient vectors.
    pub fn mass_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        crate::sparse::dot(&self.mass.matvec(u), v)
    }
}
