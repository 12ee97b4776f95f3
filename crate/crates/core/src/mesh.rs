//! Conforming triangulations of the unit disk.
//!
//! The coarse mesh is a fan of eight triangles around the origin over the
//! inscribed regular octagon. Each refinement level splits every triangle
//! into four (red refinement) and pushes the new boundary midpoints radially
//! onto the unit circle. A fan of `s` sectors refined `l` times has
//! `1 + s·m(m+1)/2` vertices with `m = 2^l`, so with eight sectors level 4
//! has 1089 vertices and level 5 has 4225. Memory grows by roughly 4× per
//! level.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Number of sectors in the coarse fan.
pub const COARSE_SECTORS: usize = 8;

/// Per-triangle P1 geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    /// Gradients of the three barycentric coordinates (constant per element).
    pub grads: [[f64; 2]; 3],
}

impl ElementGeometry {
    fn new(p: [[f64; 2]; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let grads = [
            [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
            [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
            [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
        ];
        Self { area: 0.5 * det, grads }
    }

    /// Gradient of the P1 interpolant with nodal values `u`.
    pub fn gradient(&self, u: [f64; 3]) -> [f64; 2] {
        [
            u[0] * self.grads[0][0] + u[1] * self.grads[1][0] + u[2] * self.grads[2][0],
            u[0] * self.grads[0][1] + u[1] * self.grads[1][1] + u[2] * self.grads[2][1],
        ]
    }
}

/// Triangulation with counterclockwise triangles and cached element
/// geometry. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_vertices: Vec<usize>,
    geometry: Vec<ElementGeometry>,
    id: u64,
    checksum: String,
}

impl TriMesh {
    /// Builds a mesh, rejecting out-of-range indices and triangles that are
    /// not strictly counterclockwise. Boundary vertices are those on edges
    /// used by exactly one triangle.
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&v| v >= nv)) {
            return Err(Error::InvalidMesh(format!("triangle {t:?} references a missing vertex")));
        }
        if let Some(i) = vertices.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let geometry: Vec<ElementGeometry> = triangles
            .iter()
            .map(|t| ElementGeometry::new([vertices[t[0]], vertices[t[1]], vertices[t[2]]]))
            .collect();
        if let Some(k) = geometry.iter().position(|g| !(g.area > 0.0)) {
            return Err(Error::InvalidMesh(format!("triangle {k} has non-positive signed area")));
        }

        let counts = edge_counts(&triangles);
        if let Some((e, c)) = counts.iter().find(|(_, &c)| c > 2) {
            return Err(Error::InvalidMesh(format!("edge {e:?} shared by {c} triangles")));
        }
        let mut on_boundary = vec![false; nv];
        for (&(a, b), &c) in &counts {
            if c == 1 {
                on_boundary[a] = true;
                on_boundary[b] = true;
            }
        }
        let boundary_vertices = (0..nv).filter(|&i| on_boundary[i]).collect();

        let mut hasher = Sha256::new();
        for p in &vertices {
            hasher.update(p[0].to_le_bytes());
            hasher.update(p[1].to_le_bytes());
        }
        for t in &triangles {
            for &v in t {
                hasher.update((v as u64).to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        let id = u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
        let checksum = hex::encode(digest);

        Ok(Self { vertices, triangles, boundary_vertices, geometry, id, checksum })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    pub fn geometry(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Content fingerprint; fields carry it to detect mesh mismatches.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// SHA-256 of coordinates and connectivity, hex encoded.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    /// Number of distinct edges.
    pub fn n_edges(&self) -> usize {
        edge_counts(&self.triangles).len()
    }

    /// Longest edge length.
    pub fn max_edge_length(&self) -> f64 {
        edge_counts(&self.triangles)
            .keys()
            .map(|&(a, b)| dist(self.vertices[a], self.vertices[b]))
            .fold(0.0, f64::max)
    }

    /// Sorted, deduplicated vertex adjacency including the vertex itself;
    /// the sparsity pattern of every P1 operator on this mesh.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut rows: Vec<Vec<usize>> = (0..self.n_vertices()).map(|i| vec![i]).collect();
        for t in &self.triangles {
            for &a in t {
                for &b in t {
                    if a != b {
                        rows[a].push(b);
                    }
                }
            }
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        rows
    }

    /// Index of the vertex closest to `p`.
    pub fn nearest_vertex(&self, p: [f64; 2]) -> usize {
        (0..self.n_vertices())
            .min_by(|&i, &j| dist(self.vertices[i], p).total_cmp(&dist(self.vertices[j], p)))
            .expect("mesh has vertices")
    }

    /// Same mesh with the triangle list reordered by `perm`.
    pub fn with_permuted_triangles(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_triangles() {
            return Err(Error::DimensionMismatch { expected: self.n_triangles(), found: perm.len() });
        }
        Self::new(self.vertices.clone(), perm.iter().map(|&k| self.triangles[k]).collect())
    }

    /// Checks the disk-mesh invariants: positive areas (already enforced by
    /// construction), conformity, and boundary vertices on the unit circle.
    pub fn check_disk_invariants(&self) -> Result<()> {
        let counts = edge_counts(&self.triangles);
        // A boundary edge must join two boundary vertices that lie on the circle;
        // an interior edge must be shared by two triangles. A hanging node shows
        // up as a count-1 edge whose endpoints are not both on the circle.
        for (&(a, b), &c) in &counts {
            if c == 1 {
                for v in [a, b] {
                    let r = norm(self.vertices[v]);
                    if (r - 1.0).abs() > 1e-12 {
                        return Err(Error::InvalidMesh(format!(
                            "boundary edge ({a}, {b}) has vertex {v} at radius {r}"
                        )));
                    }
                }
            }
        }
        if let Some(g) = self.geometry.iter().position(|g| g.area <= 0.0) {
            return Err(Error::InvalidMesh(format!("triangle {g} is not counterclockwise")));
        }
        Ok(())
    }
}

fn edge_counts(triangles: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::with_capacity(triangles.len() * 2);
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// Vertex count of [`build_disk_mesh`] at `level`.
pub fn disk_vertex_count(level: u32) -> usize {
    let m = 1usize << level;
    1 + COARSE_SECTORS * m * (m + 1) / 2
}

/// Smallest refinement level whose vertex count is closest to `target`.
pub fn level_nearest(target: usize) -> u32 {
    (0..12)
        .min_by_key(|&l| disk_vertex_count(l).abs_diff(target))
        .expect("non-empty range")
}

/// Unit-disk triangulation after `level` uniform refinements of the coarse
/// octagon fan.
pub fn build_disk_mesh(level: u32) -> TriMesh {
    let s = COARSE_SECTORS;
    let mut vertices = vec![[0.0, 0.0]];
    for k in 0..s {
        let theta = std::f64::consts::TAU * k as f64 / s as f64;
        vertices.push([theta.cos(), theta.sin()]);
    }
    let mut triangles: Vec<[usize; 3]> = (0..s).map(|k| [0, 1 + k, 1 + (k + 1) % s]).collect();

    for _ in 0..level {
        let counts = edge_counts(&triangles);
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(counts.len());
        let mut refined = Vec::with_capacity(4 * triangles.len());
        for t in &triangles {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let (pa, pb) = (vertices[a], vertices[b]);
                    let mut m = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                    if counts[&key] == 1 {
                        let r = norm(m);
                        m = [m[0] / r, m[1] / r];
                    }
                    vertices.push(m);
                    vertices.len() - 1
                });
            }
            // mid[0] on edge (t0,t1), mid[1] on (t1,t2), mid[2] on (t2,t0)
            refined.push([t[0], mid[0], mid[2]]);
            refined.push([mid[0], t[1], mid[1]]);
            refined.push([mid[2], mid[1], t[2]]);
            refined.push([mid[0], mid[1], mid[2]]);
        }
        triangles = refined;
    }
    TriMesh::new(vertices, triangles).expect("disk refinement preserves validity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn coarse_mesh_satisfies_invariants() {
        let m = build_disk_mesh(0);
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.n_triangles(), 8);
        assert_eq!(m.boundary_vertices().len(), 8);
        m.check_disk_invariants().unwrap();
    }

    #[test]
    fn vertex_counts_follow_closed_form() {
        for level in 0..=5 {
            assert_eq!(build_disk_mesh(level).n_vertices(), disk_vertex_count(level));
        }
        assert_eq!(disk_vertex_count(4), 1089);
        assert_eq!(disk_vertex_count(5), 4225);
        assert_eq!(level_nearest(4225), 5);
    }

    #[test]
    fn euler_characteristic_of_a_disk() {
        for level in 0..=5 {
            let m = build_disk_mesh(level);
            let chi = m.n_vertices() as i64 - m.n_edges() as i64 + m.n_triangles() as i64;
            assert_eq!(chi, 1, "level {level}");
            m.check_disk_invariants().unwrap();
        }
    }

    #[test]
    fn area_approaches_pi() {
        // Oracle: the boundary is an inscribed regular polygon with
        // 8·2^level sides, whose area is (N/2)·sin(2π/N).
        let level = level_nearest(4225);
        let m = build_disk_mesh(level);
        let n_sides = (COARSE_SECTORS << level) as f64;
        let polygon = 0.5 * n_sides * (2.0 * PI / n_sides).sin();
        assert!((m.area() - polygon).abs() < 1e-12);
        assert!((m.area() - PI).abs() < 5e-3);
    }

    #[test]
    fn clockwise_triangle_is_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 2]]).is_ok());
        assert!(TriMesh::new(v.clone(), vec![[0, 2, 1]]).is_err());
        assert!(TriMesh::new(v, vec![[0, 1, 3]]).is_err());
    }

    #[test]
    fn barycentric_gradients_sum_to_zero() {
        let m = build_disk_mesh(2);
        for g in m.geometry() {
            for d in 0..2 {
                let s: f64 = g.grads.iter().map(|gr| gr[d]).sum();
                assert!(s.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permutation_changes_id_but_not_area() {
        let m = build_disk_mesh(2);
        let perm: Vec<usize> = (0..m.n_triangles()).rev().collect();
        let p = m.with_permuted_triangles(&perm).unwrap();
        assert_ne!(m.id(), p.id());
        assert!((m.area() - p.area()).abs() < 1e-14);
    }
}
