//! Dense reference implementations, written independently of the crate's
//! sparse assembly, for small meshes.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use chemo_ident::mesh::TriMesh;

/// Area and barycentric gradients of one triangle.
pub fn element(mesh: &TriMesh, t: usize) -> (f64, [[f64; 2]; 3]) {
    let [a, b, c] = mesh.triangles()[t].map(|i| mesh.vertices()[i]);
    let jac = DMatrix::from_row_slice(2, 2, &[b[0] - a[0], c[0] - a[0], b[1] - a[1], c[1] - a[1]]);
    let area = 0.5 * jac.determinant();
    let inv = jac.try_inverse().expect("non-degenerate triangle");
    // λ1 = row 0 of inv·(x − a), λ2 = row 1, λ0 = 1 − λ1 − λ2.
    let g1 = [inv[(0, 0)], inv[(0, 1)]];
    let g2 = [inv[(1, 0)], inv[(1, 1)]];
    (area, [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2])
}

pub fn mass(mesh: &TriMesh) -> DMatrix<f64> {
    let n = mesh.n_vertices();
    let mut m = DMatrix::zeros(n, n);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (area, _) = element(mesh, t);
        for a in 0..3 {
            for b in 0..3 {
                m[(tri[a], tri[b])] += area / if a == b { 6.0 } else { 12.0 };
            }
        }
    }
    m
}

pub fn stiffness(mesh: &TriMesh) -> DMatrix<f64> {
    let n = mesh.n_vertices();
    let mut k = DMatrix::zeros(n, n);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (area, g) = element(mesh, t);
        for a in 0..3 {
            for b in 0..3 {
                k[(tri[a], tri[b])] += area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            }
        }
    }
    k
}

/// `B[i][j] = ∫ φ_j ∇c·∇φ_i`, so `B w` is the weak flux load of `w ∇c`.
pub fn flux_matrix(mesh: &TriMesh, c: &[f64]) -> DMatrix<f64> {
    let n = mesh.n_vertices();
    let mut b = DMatrix::zeros(n, n);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (area, g) = element(mesh, t);
        let gc = [0, 1].map(|d| (0..3).map(|a| c[tri[a]] * g[a][d]).sum::<f64>());
        for i in 0..3 {
            let s = area / 3.0 * (gc[0] * g[i][0] + gc[1] * g[i][1]);
            for j in 0..3 {
                b[(tri[i], tri[j])] += s;
            }
        }
    }
    b
}

/// Interpolation matrix taking nodal values of `f` on the uniform grid to
/// `f(ρ_k)` for each density value (clamped to `[0,1]`).
pub fn interpolation(n_nodes: usize, rho: &[f64]) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(rho.len(), n_nodes);
    let cells = (n_nodes - 1) as f64;
    for (k, &r) in rho.iter().enumerate() {
        let s = r.clamp(0.0, 1.0) * cells;
        let j = (s.floor() as usize).min(n_nodes - 2);
        let theta = s - j as f64;
        p[(k, j)] += 1.0 - theta;
        p[(k, j + 1)] += theta;
    }
    p
}

/// H¹(0,1) Gram matrix of P1 on a uniform grid.
pub fn gram(n_nodes: usize) -> DMatrix<f64> {
    let h = 1.0 / (n_nodes - 1) as f64;
    let mut g = DMatrix::zeros(n_nodes, n_nodes);
    for j in 0..n_nodes - 1 {
        for (a, b, m, k) in [(j, j, h / 3.0, 1.0 / h), (j + 1, j + 1, h / 3.0, 1.0 / h), (j, j + 1, h / 6.0, -1.0 / h), (j + 1, j, h / 6.0, -1.0 / h)] {
            g[(a, b)] += m + k;
        }
    }
    g
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone().lu().solve(b).expect("non-singular system")
}

pub fn vec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

pub struct DenseModel {
    pub m: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub d_rho: f64,
    pub d_c: f64,
    pub a_c: f64,
    pub dt: f64,
}

impl DenseModel {
    pub fn new(mesh: &TriMesh, d_rho: f64, d_c: f64, a_c: f64, dt: f64) -> Self {
        Self { m: mass(mesh), k: stiffness(mesh), d_rho, d_c, a_c, dt }
    }

    /// `(D_c K + A_c M) c = M g(ρ)`
    pub fn elliptic(&self, g_of_rho: &[f64]) -> DVector<f64> {
        let a = &self.k * self.d_c + &self.m * self.a_c;
        solve(&a, &(&self.m * vec(g_of_rho)))
    }

    /// `(M + Δt D_ρ K) x = M r + Δt B(c) w`
    pub fn parabolic(&self, mesh: &TriMesh, r: &[f64], c: &[f64], w: &[f64]) -> DVector<f64> {
        let p = &self.m + &self.k * (self.dt * self.d_rho);
        let rhs = &self.m * vec(r) + flux_matrix(mesh, c) * vec(w) * self.dt;
        solve(&p, &rhs)
    }

    /// Trapezoid-in-time, `M`-in-space Gram matrix on stacked trajectories.
    pub fn space_time_weight(&self, n_levels: usize) -> DMatrix<f64> {
        let n = self.m.nrows();
        let mut w = DMatrix::zeros(n * n_levels, n * n_levels);
        for l in 0..n_levels {
            let tw = if l == 0 || l == n_levels - 1 { 0.5 * self.dt } else { self.dt };
            w.view_mut((l * n, l * n), (n, n)).copy_from(&(&self.m * tw));
        }
        w
    }

    /// Dense matrix of the linear part of the observation operator for the
    /// data `obs` (one slice per level) and production rate `g` on the
    /// parameter grid.
    pub fn linear_operator(&self, mesh: &TriMesh, obs: &[Vec<f64>], g: &[f64], n_param: usize) -> DMatrix<f64> {
        let n = mesh.n_vertices();
        let levels = obs.len();
        let p = &self.m + &self.k * (self.dt * self.d_rho);
        let p_inv = p.try_inverse().expect("invertible");
        let mut a = DMatrix::zeros(n * levels, n_param);
        let mut state = DMatrix::<f64>::zeros(n, n_param);
        for step in 0..levels - 1 {
            let g_of_rho: Vec<f64> = (&interpolation(g.len(), &obs[step]) * vec(g)).iter().copied().collect();
            let c = self.elliptic(&g_of_rho);
            let drive = flux_matrix(mesh, c.as_slice()) * interpolation(n_param, &obs[step]) * self.dt;
            state = &p_inv * (&self.m * &state + drive);
            a.view_mut(((step + 1) * n, 0), (n, n_param)).copy_from(&state);
        }
        a
    }
}
