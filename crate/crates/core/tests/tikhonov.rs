mod common;

use std::sync::Arc;

use chemo_ident::fem::Discretization;
use chemo_ident::forward::{initial_density, ForwardModel, ModelConfig};
use chemo_ident::inverse::{add_noise, build_operator, AffineOperator, NoiseDistribution};
use chemo_ident::mesh::build_disk_mesh;
use chemo_ident::param1d::{h1_gram, Gram1D, PiecewiseLinear1D};
use chemo_ident::regularize::{discrepancy_select, h1_error, DiscrepancyOptions, TikhonovOptions, TikhonovProblem};
use chemo_ident::sparse::{dot, norm2};

struct Case {
    op: AffineOperator,
    gram: Gram1D,
    f_true: PiecewiseLinear1D,
}

fn case(level: u32, t_end: f64, n_param: usize, delta: f64, seed: u64, cg_tol: f64) -> Case {
    let disc = Arc::new(Discretization::new(build_disk_mesh(level)));
    let cfg = ModelConfig { t_end, cg_tol, ..ModelConfig::desk() };
    let model = Arc::new(ForwardModel::new(disc.clone(), cfg).unwrap());
    let f_true = PiecewiseLinear1D::logistic(n_param).unwrap();
    let g = PiecewiseLinear1D::identity(n_param).unwrap();
    let rho0 = initial_density(disc.mesh());
    let truth = model.simulate(&f_true, &g, &rho0).unwrap();
    let data = add_noise(&disc, &truth.rho, delta, seed, NoiseDistribution::Gaussian).unwrap();
    let op = build_operator(model, &g, &data, &rho0, n_param).unwrap();
    Case { op, gram: h1_gram(n_param).unwrap(), f_true }
}

fn gradient(c: &Case, f: &[f64], alpha: f64) -> Vec<f64> {
    let af = c.op.apply_linear(f).unwrap();
    let d = c.op.shifted_data();
    let r: Vec<Vec<f64>> = af.iter().zip(&d).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
    let g = c.op.apply_adjoint(&r).unwrap();
    let gf = c.gram.apply(f);
    g.iter().zip(&gf).map(|(a, b)| a + alpha * b).collect()
}

#[test]
fn matches_dense_normal_equations() {
    let c = case(1, 0.5, 21, 0.01, 3, 1e-13);
    let model = c.op.model();
    let mesh = model.mesh();
    let cfg = model.config();
    let obs: Vec<Vec<f64>> = c.op.observed().fields().iter().map(|f| f.values().to_vec()).collect();
    let g: Vec<f64> = PiecewiseLinear1D::identity(21).unwrap().into_values();
    let dense = common::DenseModel::new(mesh, cfg.d_rho, cfg.d_c, cfg.a_c, cfg.dt);
    let a = dense.linear_operator(mesh, &obs, &g, 21);
    let w = dense.space_time_weight(obs.len());
    let shifted: Vec<f64> = c.op.shifted_data().concat();

    // The linear part itself.
    let probe: Vec<f64> = (0..21).map(|j| ((j * 7 % 5) as f64 - 2.0) * 0.1).collect();
    let sparse_a = c.op.apply_linear(&probe).unwrap().concat();
    let dense_a: Vec<f64> = (&a * common::vec(&probe)).iter().copied().collect();
    assert!(common::rel_diff(&sparse_a, &dense_a) < 1e-10);

    let alpha = 1e-3;
    let lhs = a.transpose() * &w * &a + common::gram(21) * alpha;
    let rhs = a.transpose() * &w * common::vec(&shifted);
    let expected: Vec<f64> = common::solve(&lhs, &rhs).iter().copied().collect();
    let problem = TikhonovProblem::new(&c.op, &c.gram).unwrap();
    let got = problem.solve(alpha, &TikhonovOptions { tol: 1e-13, max_iter: 500 }, None).unwrap();
    assert!(got.converged);
    let err = common::rel_diff(got.f_rec.values(), &expected);
    assert!(err < 1e-8, "relative difference {err:e}");
}

#[test]
fn first_order_optimality_holds_at_tolerance() {
    let c = case(2, 1.0, 101, 0.02, 5, 1e-12);
    let problem = TikhonovProblem::new(&c.op, &c.gram).unwrap();
    let opts = TikhonovOptions::default();
    for alpha in [1e-1, 1e-3] {
        let r = problem.solve(alpha, &opts, None).unwrap();
        assert!(r.converged);
        let grad = gradient(&c, r.f_rec.values(), alpha);
        assert!(norm2(&grad) <= opts.tol * norm2(problem.rhs()) * (1.0 + 1e-6), "alpha {alpha}");
    }
}

#[test]
fn huge_alpha_shrinks_to_zero() {
    let c = case(2, 1.0, 101, 0.02, 5, 1e-10);
    let problem = TikhonovProblem::new(&c.op, &c.gram).unwrap();
    let opts = TikhonovOptions::default();
    let r = problem.solve(1e8, &opts, None).unwrap();
    // ‖f‖ ≤ ‖rhs‖ / (α λ_min(G)), and Gershgorin gives λ_min(G) ≥ h/6.
    let h = 1.0 / 100.0;
    let bound = norm2(problem.rhs()) / (1e8 * h / 6.0);
    assert!(norm2(r.f_rec.values()) <= bound);
    let zero_residual = c.op.residual_norm(&vec![0.0; 101]).unwrap();
    assert!((r.residual - zero_residual).abs() <= 1e-6 * zero_residual);
}

#[test]
fn warm_start_does_not_change_the_minimizer() {
    let c = case(2, 1.0, 101, 0.02, 5, 1e-12);
    let problem = TikhonovProblem::new(&c.op, &c.gram).unwrap();
    let opts = TikhonovOptions { tol: 1e-10, max_iter: 2000 };
    let coarse = problem.solve(1e-2, &opts, None).unwrap();
    let cold = problem.solve(5e-3, &opts, None).unwrap();
    let warm = problem.solve(5e-3, &opts, Some(coarse.f_rec.values())).unwrap();
    let diff = common::rel_diff(warm.f_rec.values(), cold.f_rec.values());
    assert!(diff < 1e-7, "warm vs cold {diff:e}");
}

#[test]
fn scan_is_monotone_and_noiseless_residual_shrinks() {
    let c = case(2, 1.0, 101, 0.02, 9, 1e-12);
    let problem = TikhonovProblem::new(&c.op, &c.gram).unwrap();
    let outcome = discrepancy_select(&problem, 0.02, &DiscrepancyOptions::default(), &TikhonovOptions::default()).unwrap();
    assert!(outcome.result.residual <= outcome.bound);
    let mut points = outcome.scan.clone();
    points.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).unwrap());
    for w in points.windows(2) {
        assert!(w[1].residual >= w[0].residual * (1.0 - 1e-9), "residual not monotone: {w:?}");
        assert!(w[1].h1_norm <= w[0].h1_norm * (1.0 + 1e-9), "penalty not monotone: {w:?}");
    }
    if let Some((a, r)) = outcome.rejected_neighbor {
        assert!(a > outcome.result.alpha && r > outcome.bound);
    }

    let exact = case(2, 1.0, 101, 0.0, 0, 1e-12);
    let problem = TikhonovProblem::new(&exact.op, &exact.gram).unwrap();
    let mut last = f64::INFINITY;
    for alpha in [1e-1, 1e-2, 1e-3, 1e-4] {
        let r = problem.solve(alpha, &TikhonovOptions { tol: 1e-10, max_iter: 4000 }, None).unwrap();
        assert!(r.residual < last);
        last = r.residual;
    }
}

#[test]
fn discrepancy_choice_is_near_the_error_minimum() {
    let c = case(3, 5.0, 201, 0.05, 11, 1e-10);
    let problem = TikhonovProblem::new(&c.op, &c.gram).unwrap();
    let tik = TikhonovOptions::default();
    let outcome = discrepancy_select(&problem, 0.05, &DiscrepancyOptions::default(), &tik).unwrap();
    let mut best = (f64::INFINITY, 0.0);
    let mut warm: Option<Vec<f64>> = None;
    for k in 0..16 {
        let alpha = 0.5f64.powi(k);
        let r = problem.solve(alpha, &tik, warm.as_deref()).unwrap();
        let e = h1_error(&c.f_true, &r.f_rec, &c.gram).unwrap();
        if e < best.0 {
            best = (e, alpha);
        }
        warm = Some(r.f_rec.into_values());
    }
    let ratio = outcome.result.alpha / best.1;
    assert!((0.1..=10.0).contains(&ratio), "discrepancy alpha {} vs error-minimizing {}", outcome.result.alpha, best.1);
}

#[test]
fn normal_operator_is_symmetric() {
    let c = case(1, 0.5, 31, 0.01, 1, 1e-13);
    let x: Vec<f64> = (0..31).map(|j| (j as f64 * 0.37).sin()).collect();
    let y: Vec<f64> = (0..31).map(|j| (j as f64 * 0.11).cos()).collect();
    let ax = gradient(&c, &x, 0.3);
    let ay = gradient(&c, &y, 0.3);
    let g0 = gradient(&c, &vec![0.0; 31], 0.3);
    let lx: Vec<f64> = ax.iter().zip(&g0).map(|(a, b)| a - b).collect();
    let ly: Vec<f64> = ay.iter().zip(&g0).map(|(a, b)| a - b).collect();
    let (p, q) = (dot(&lx, &y), dot(&x, &ly));
    assert!((p - q).abs() <= 1e-10 * p.abs().max(q.abs()));
}
