mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use chemo_ident::cg::cg_solve;
use chemo_ident::fem::{Discretization, NodalField};
use chemo_ident::forward::{initial_density, range_monitor, total_mass, ForwardModel, ModelConfig};
use chemo_ident::mesh::{build_disk_mesh, TriMesh};
use chemo_ident::param1d::PiecewiseLinear1D;

/// Degree-5 rule on the reference triangle: (barycentric coordinates, weight).
fn dunavant7() -> Vec<([f64; 3], f64)> {
    let a1 = 0.059_715_871_789_770;
    let b1 = 0.470_142_064_105_115;
    let a2 = 0.797_426_985_353_087;
    let b2 = 0.101_286_507_323_456;
    let w1 = 0.132_394_152_788_506;
    let w2 = 0.125_939_180_544_827;
    vec![
        ([1.0 / 3.0; 3], 0.225),
        ([a1, b1, b1], w1),
        ([b1, a1, b1], w1),
        ([b1, b1, a1], w1),
        ([a2, b2, b2], w2),
        ([b2, a2, b2], w2),
        ([b2, b2, a2], w2),
    ]
}

fn l2_error(mesh: &TriMesh, uh: &[f64], exact: impl Fn(f64, f64) -> f64) -> f64 {
    let rule = dunavant7();
    let mut sum = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.geometry()[t].area;
        let p = tri.map(|i| mesh.vertices()[i]);
        for (l, w) in &rule {
            let x = l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0];
            let y = l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1];
            let v = l[0] * uh[tri[0]] + l[1] * uh[tri[1]] + l[2] * uh[tri[2]];
            sum += w * area * (v - exact(x, y)).powi(2);
        }
    }
    sum.sqrt()
}

#[test]
fn assembly_matches_dense_reference() {
    for level in 0..3 {
        let mesh = build_disk_mesh(level);
        let disc = Discretization::new(mesh.clone());
        let (m, k) = (common::mass(&mesh), common::stiffness(&mesh));
        let (sm, sk) = (disc.mass().to_dense(), disc.stiffness().to_dense());
        for i in 0..mesh.n_vertices() {
            for j in 0..mesh.n_vertices() {
                assert!((sm[i][j] - m[(i, j)]).abs() < 1e-14);
                assert!((sk[i][j] - k[(i, j)]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn neumann_problem_converges_at_second_order() {
    let u = |x: f64, y: f64| (PI * (x * x + y * y)).cos();
    let h = |x: f64, y: f64| {
        let r2 = x * x + y * y;
        4.0 * PI * (PI * r2).sin() + 4.0 * PI * PI * r2 * (PI * r2).cos() + (PI * r2).cos()
    };
    let mut errors = Vec::new();
    for level in 2..=5 {
        let mesh = build_disk_mesh(level);
        let disc = Discretization::new(mesh.clone());
        let a = disc.stiffness().linear_combination(1.0, disc.mass(), 1.0).unwrap();
        let rhs = disc.mass().matvec(NodalField::interpolate(&mesh, h).values());
        let uh = cg_solve(&a, &rhs, 1e-12, 10_000).unwrap();
        errors.push((mesh.max_edge_length(), l2_error(&mesh, &uh, u)));
    }
    for w in errors.windows(2) {
        let rate = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
        assert!(rate >= 1.8, "L2 rate {rate} between h = {} and {}", w[0].0, w[1].0);
    }
}

#[test]
fn time_stepping_is_first_order() {
    let disc = Arc::new(Discretization::new(build_disk_mesh(2)));
    let f = PiecewiseLinear1D::logistic(1000).unwrap();
    let g = PiecewiseLinear1D::identity(1000).unwrap();
    let rho0 = initial_density(disc.mesh());
    let final_state = |dt: f64| {
        let model = ForwardModel::new(disc.clone(), ModelConfig { dt, t_end: 1.0, ..ModelConfig::default() }).unwrap();
        model.simulate(&f, &g, &rho0).unwrap().rho.fields().last().unwrap().values().to_vec()
    };
    let reference = final_state(0.1 / 64.0);
    let err = |dt: f64| {
        let d: Vec<f64> = final_state(dt).iter().zip(&reference).map(|(a, b)| a - b).collect();
        disc.mass_inner(&d, &d).sqrt()
    };
    let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&dt| err(dt)).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((0.8..=1.2).contains(&order), "observed order {order}");
    }
}

#[test]
fn invariant_region_overshoot_does_not_grow_under_refinement() {
    let f = PiecewiseLinear1D::logistic(1000).unwrap();
    let g = PiecewiseLinear1D::identity(1000).unwrap();
    let overshoot = |level: u32, dt: f64| {
        let disc = Arc::new(Discretization::new(build_disk_mesh(level)));
        let model = ForwardModel::new(disc.clone(), ModelConfig { dt, ..ModelConfig::default() }).unwrap();
        let r = range_monitor(&model.simulate(&f, &g, &initial_density(disc.mesh())).unwrap().rho);
        (-r.min).max(r.max - 1.0).max(0.0)
    };
    let sequence = [overshoot(2, 0.2), overshoot(3, 0.1), overshoot(4, 0.05)];
    assert!(sequence.windows(2).all(|w| w[1] <= w[0]), "overshoot under refinement: {sequence:?}");
    assert!(sequence[2] <= 0.02, "overshoot {sequence:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mass_is_conserved(a in 0.1f64..0.6, bx in -0.2f64..0.2, by in -0.2f64..0.2, chi in 0.0f64..3.0) {
        let disc = Arc::new(Discretization::new(build_disk_mesh(2)));
        let model = ForwardModel::new(disc.clone(), ModelConfig { t_end: 0.5, ..ModelConfig::desk() }).unwrap();
        let f = PiecewiseLinear1D::from_fn(200, |r| chi * r * (1.0 - r)).unwrap();
        let g = PiecewiseLinear1D::identity(200).unwrap();
        let rho0 = NodalField::interpolate(disc.mesh(), |x, y| a + bx * x + by * y * x);
        let traj = model.simulate(&f, &g, &rho0).unwrap();
        let m0 = total_mass(&disc, &rho0).unwrap();
        for r in traj.rho.fields() {
            prop_assert!((total_mass(&disc, r).unwrap() - m0).abs() <= 1e-8 * m0);
        }
    }

    #[test]
    fn constants_are_stationary(rho in 0.0f64..1.0, chi in 0.0f64..3.0, slope in 0.1f64..2.0, offset in 0.0f64..1.0) {
        let disc = Arc::new(Discretization::new(build_disk_mesh(1)));
        let model = ForwardModel::new(disc.clone(), ModelConfig { t_end: 0.5, ..ModelConfig::desk() }).unwrap();
        let f = PiecewiseLinear1D::from_fn(100, |r| chi * r * (1.0 - r)).unwrap();
        let g = PiecewiseLinear1D::from_fn(100, |r| slope * r + offset).unwrap();
        let traj = model.simulate(&f, &g, &NodalField::constant(disc.mesh(), rho)).unwrap();
        for r in traj.rho.fields() {
            for v in r.values() {
                prop_assert!((v - rho).abs() <= 1e-12);
            }
        }
    }
}
