mod common;

use nalgebra::DMatrix;

use mfopt::fom::{Role, Trajectory};
use mfopt::harness::validate::local_training_buffer;
use mfopt::ml_kernel::KernelModel;
use mfopt::rb::{RbModel, TrainingBuffer};
use mfopt::tr_opt::Problem;

fn model(p: &Problem) -> RbModel {
    let mut rb = RbModel::with_riesz(p.fom.clone(), p.riesz.clone(), p.rb.clone()).unwrap();
    rb.extend(&[0.03, 0.06]).unwrap();
    rb.extend(&[0.06, 0.03]).unwrap();
    rb
}

fn fd_check(f: impl Fn(&[f64]) -> f64, g: &[f64], mu: &[f64], h: f64, tol: f64) {
    for i in 0..mu.len() {
        let (mut plus, mut minus) = (mu.to_vec(), mu.to_vec());
        plus[i] += h;
        minus[i] -= h;
        let fd = (f(&plus) - f(&minus)) / (2.0 * h);
        assert!((g[i] - fd).abs() <= tol * fd.abs().max(g[i].abs()), "component {i}: {} vs {fd}", g[i]);
    }
}

#[test]
fn single_center_reproduces_its_pair() {
    let p = common::small_problem();
    let rb = model(&p);
    let mu = vec![0.04, 0.05];
    let u = rb.solve_primal(&mu).unwrap();
    let mut buffer = TrainingBuffer::new(10);
    buffer.push(mu.clone(), u.coeffs.clone()).unwrap();
    let k = KernelModel::train(&buffer, &rb, &p.fom.bounds, p.kernel).unwrap();
    assert_eq!(k.num_centers(), 1);
    assert!((k.predict(&mu).coeffs - &u.coeffs).amax() <= 1e-8 * u.coeffs.amax());
}

#[test]
fn ten_centers_interpolate() {
    let p = common::small_problem();
    let rb = model(&p);
    let buffer = local_training_buffer(&rb, &[0.045, 0.045], 1e-2).unwrap();
    assert_eq!(buffer.len(), 10);
    let k = KernelModel::train(&buffer, &rb, &p.fom.bounds, p.kernel).unwrap();
    assert!(k.training_error() <= 1e-6, "{:e}", k.training_error());
    for (mu, coeffs) in buffer.iter() {
        assert!((k.predict(mu).coeffs - coeffs).amax() <= 1e-8 * coeffs.amax());
    }
}

#[test]
fn predictions_start_at_zero_and_derivatives_match_differences() {
    let p = common::small_problem();
    let rb = model(&p);
    let buffer = local_training_buffer(&rb, &[0.05, 0.06], 1e-2).unwrap();
    let k = KernelModel::train(&buffer, &rb, &p.fom.bounds, p.kernel).unwrap();
    let mu = [0.0505, 0.0597];
    assert!(k.predict(&mu).coeffs.column(0).iter().all(|&v| v == 0.0));
    for d in k.predict_grad(&mu) {
        assert!(d.coeffs.column(0).iter().all(|&v| v == 0.0));
    }
    assert!(k.derivative_check(&mu, 1e-3) <= 1e-5);
}

#[test]
fn zero_model_sees_only_the_reference() {
    let p = common::small_problem();
    let rb = model(&p);
    let steps = p.fom.time.steps;
    let mut buffer = TrainingBuffer::new(10);
    for mu in [[0.03, 0.03], [0.05, 0.04], [0.07, 0.06]] {
        buffer.push(mu.to_vec(), DMatrix::zeros(rb.dim(), steps + 1)).unwrap();
    }
    let k = KernelModel::train(&buffer, &rb, &p.fom.bounds, p.kernel).unwrap();
    let mu = [0.04, 0.05];
    let zero = Trajectory::zeros(Role::Primal, p.fom.dim(), steps);
    let want = p.fom.objective(&mu, &zero);
    let got = k.eval_output_ml(&rb, &mu).unwrap().j;
    assert!((got - want).abs() <= 1e-10 * want);
}

#[test]
fn local_model_tracks_the_reduced_objective() {
    let p = common::small_problem();
    let rb = model(&p);
    let mu = [0.045, 0.045];
    let buffer = local_training_buffer(&rb, &mu, 1e-2).unwrap();
    let k = KernelModel::train(&buffer, &rb, &p.fom.bounds, p.kernel).unwrap();
    let ml = k.eval_output_ml(&rb, &mu).unwrap();
    let j_rb = rb.eval_output(&mu).unwrap().j;
    assert!((ml.j - j_rb).abs() <= 1e-3 * j_rb.abs(), "{} vs {}", ml.j, j_rb);
    fd_check(|m| k.eval_output_ml(&rb, m).unwrap().j, &ml.grad, &mu, 1e-6, 1e-4);
}

#[test]
fn empty_buffer_is_rejected() {
    let p = common::small_problem();
    let rb = model(&p);
    assert!(KernelModel::train(&TrainingBuffer::new(3), &rb, &p.fom.bounds, p.kernel).is_err());
}
