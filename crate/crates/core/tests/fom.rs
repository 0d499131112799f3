mod common;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfopt::fem::Geometry;
use mfopt::fom::{FomModel, LinearSolver, Role, SolverOptions, TimeGrid, Trajectory};
use mfopt::harness::gradient_fd_check;

fn dense_system(fom: &FomModel, mu: &[f64]) -> DMatrix<f64> {
    fom.forms.system_matrix(mu, 1.0 / fom.time.dt).to_dense()
}

#[test]
fn forcing_profile() {
    let f = TimeGrid::new(10, 0.1).unwrap().forcing();
    assert_eq!(f.len(), 11);
    assert_eq!(f[0], 0.0);
    assert!((f[2] - 0.4).abs() < 1e-15);
    assert_eq!(f[5], 1.0);
    assert_eq!(f[10], 1.0);
}

#[test]
fn one_step_matches_dense_oracle() {
    let fom = common::halves_fom(4, 2, 1);
    let mu = [0.03, 0.08];
    let u = fom.solve_primal(&mu).unwrap();
    assert!(u.at(0).iter().all(|&v| v == 0.0));
    let rhs = fom.forms.load_at(&mu) * fom.forcing[1];
    let want = dense_system(&fom, &mu).lu().solve(&rhs).unwrap();
    assert!((u.at(1) - &want).amax() <= 1e-12 * want.amax());

    let p = fom.solve_adjoint(&mu, &u).unwrap();
    assert!(p.endpoint_is_zero());
    let d = (u.at(1) - fom.g_ref.at(1)).into_owned();
    let rhs = fom.forms.output.mul_vec(&d) * 2.0;
    let want = dense_system(&fom, &mu).transpose().lu().solve(&rhs).unwrap();
    assert!((p.at(1) - &want).amax() <= 1e-12 * want.amax().max(1e-300));
}

#[test]
fn initial_and_terminal_values_are_zero() {
    let fom = common::halves_fom(8, 4, 10);
    let mu = [0.02, 0.09];
    let out = fom.eval_output(&mu).unwrap();
    assert!(out.primal.coeffs.column(0).iter().all(|&v| v == 0.0));
    assert!(out.adjoint.endpoint_is_zero());
    assert_eq!(out.primal.role, Role::Primal);
    assert_eq!(out.adjoint.role, Role::Adjoint);
}

#[test]
fn zero_load_gives_zero_state() {
    let text = common::TWO_HALVES.replace("heater_power = 80.0", "heater_power = 0.0");
    let g = Geometry::from_toml(&text).unwrap();
    let fom = FomModel::new(
        common::forms(&g, 8, 4),
        TimeGrid::new(5, 0.1).unwrap(),
        vec![0.05, 0.05],
        0.5e-3,
        common::unit_box(),
        SolverOptions::default(),
    )
    .unwrap();
    let u = fom.solve_primal(&[0.02, 0.07]).unwrap();
    assert_eq!(u.coeffs.amax(), 0.0);
}

#[test]
fn zero_state_and_reference_give_zero_adjoint() {
    let base = common::halves_fom(8, 4, 6);
    let zero = Trajectory::zeros(Role::Primal, base.dim(), 6);
    let fom = FomModel::with_reference(
        base.forms.clone(),
        base.time,
        vec![0.05, 0.05],
        0.5e-3,
        common::unit_box(),
        SolverOptions::default(),
        zero.clone(),
    )
    .unwrap();
    let p = fom.solve_adjoint(&[0.04, 0.04], &zero).unwrap();
    assert_eq!(p.coeffs.amax(), 0.0);
}

#[test]
fn objective_vanishes_at_target() {
    let fom = common::halves_fom(16, 8, 20);
    let out = fom.eval_output(&[0.05, 0.05]).unwrap();
    assert!(out.j.abs() < 1e-14, "J(μ̂) = {}", out.j);
    assert!(out.grad.iter().all(|g| g.abs() < 1e-8), "{:?}", out.grad);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let mu = [rng.random_range(0.01..0.1), rng.random_range(0.01..0.1)];
        assert!(fom.eval_output(&mu).unwrap().j >= 0.0);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let fom = common::halves_fom(16, 8, 20);
    let points = vec![vec![0.02, 0.03], vec![0.07, 0.04], vec![0.09, 0.09]];
    for s in gradient_fd_check(&fom, &points, 1e-5).unwrap() {
        assert!(s.worst() <= 1e-4, "{:?}", s);
    }
}

#[test]
fn sensitivity_matches_finite_differences() {
    let fom = common::halves_fom(16, 8, 20);
    let mu = [0.04, 0.06];
    let u = fom.solve_primal(&mu).unwrap();
    for i in 0..2 {
        let w = fom.solve_sensitivity(&mu, &u, i).unwrap();
        let h = 1e-6;
        let (mut plus, mut minus) = (mu, mu);
        plus[i] += h;
        minus[i] -= h;
        let fd = (fom.solve_primal(&plus).unwrap().coeffs - fom.solve_primal(&minus).unwrap().coeffs) / (2.0 * h);
        assert!((&w.coeffs - &fd).amax() <= 1e-6 * fd.amax());
    }
}

#[test]
fn iterative_and_direct_solvers_agree() {
    let direct = common::halves_fom(16, 8, 10);
    let cg = FomModel::with_reference(
        direct.forms.clone(),
        direct.time,
        vec![0.05, 0.05],
        0.5e-3,
        common::unit_box(),
        SolverOptions { kind: LinearSolver::Cg, rtol: 1e-13, max_iter: 10_000 },
        direct.g_ref.clone(),
    )
    .unwrap();
    let mu = [0.03, 0.08];
    let a = direct.eval_output(&mu).unwrap();
    let b = cg.eval_output(&mu).unwrap();
    assert!((a.j - b.j).abs() <= 1e-9 * a.j);
    assert!((&a.primal.coeffs - &b.primal.coeffs).amax() <= 1e-9 * a.primal.coeffs.amax());
}

#[test]
fn constants_are_valid_bounds() {
    let fom = common::halves_fom(16, 8, 4);
    let c = fom.constants(&fom.forms.reference_parameter.clone()).unwrap();
    assert!((c.alpha_lb - 1.0).abs() < 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mu = [0.015, 0.09];
    let c = fom.constants(&mu).unwrap();
    let a = fom.forms.stiffness_at(&mu);
    for _ in 0..100 {
        let v = DVector::from_fn(fom.dim(), |_, _| rng.random_range(-1.0..1.0));
        let e = fom.forms.energy.inner(v.as_slice(), v.as_slice());
        assert!(c.alpha_lb * e <= a.inner(v.as_slice(), v.as_slice()) * (1.0 + 1e-12));
        assert!(fom.forms.output.inner(v.as_slice(), v.as_slice()) <= c.gamma_d * e * (1.0 + 1e-9));
    }
}

#[test]
fn rejects_bad_parameters() {
    let fom = common::halves_fom(8, 4, 2);
    assert!(fom.solve_primal(&[0.05]).is_err());
    assert!(fom.solve_primal(&[f64::NAN, 0.05]).is_err());
    assert!(TimeGrid::new(0, 0.1).is_err());
    assert!(TimeGrid::new(3, -0.1).is_err());
}
