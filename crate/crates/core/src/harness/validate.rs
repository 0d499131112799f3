//! Numerical self-checks against high-fidelity oracles.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bench::sample_starts;
use super::config::ExperimentConfig;
use crate::error::Result;
use crate::estimators::{
    adjoint_residual, dual_norms, est_output_ml, est_output_rb, exact_adjoint_residual, exact_dual_norms,
    exact_primal_residual, primal_residual, s_norm, t_norm,
};
use crate::fom::{FomModel, Role, Trajectory};
use crate::ml_kernel::KernelModel;
use crate::rb::{RbModel, TrainingBuffer};
use crate::tr_opt::Problem;

pub const FD_TOL: f64 = 1e-4;
pub const REPRO_J_TOL: f64 = 1e-8;
pub const REPRO_GRAD_TOL: f64 = 1e-6;
pub const REPRO_BOUND_TOL: f64 = 1e-6;
pub const BASIS_DEFECT_TOL: f64 = 1e-10;
pub const RESIDUAL_TOL: f64 = 1e-6;
pub const KERNEL_FIT_TOL: f64 = 1e-6;
pub const KERNEL_DERIVATIVE_TOL: f64 = 1e-5;
/// Normalized step of the kernel derivative check.
pub const KERNEL_FD_STEP: f64 = 1e-3;

/// Deliberate corruption used to confirm that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Perturb one basis vector after the extensions.
    CorruptBasis,
}

/// Adjoint gradient against central differences at one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub mu: Vec<f64>,
    pub adjoint: Vec<f64>,
    pub finite_difference: Vec<f64>,
    /// Componentwise relative deviation.
    pub rel_error: Vec<f64>,
}

impl GradientSample {
    pub fn worst(&self) -> f64 {
        self.rel_error.iter().copied().fold(0.0, f64::max)
    }
}

pub fn gradient_fd_check(fom: &FomModel, points: &[Vec<f64>], fd_step: f64) -> Result<Vec<GradientSample>> {
    let mut out = Vec::new();
    for mu in points {
        let adjoint = fom.eval_output(mu)?.grad;
        let mut finite_difference = Vec::new();
        for i in 0..mu.len() {
            let h = fd_step * (fom.bounds.upper[i] - fom.bounds.lower[i]);
            let mut plus = mu.clone();
            let mut minus = mu.clone();
            plus[i] += h;
            minus[i] -= h;
            let jp = fom.objective(&plus, &fom.solve_primal(&plus)?);
            let jm = fom.objective(&minus, &fom.solve_primal(&minus)?);
            finite_difference.push((jp - jm) / (2.0 * h));
        }
        let rel_error = adjoint
            .iter()
            .zip(&finite_difference)
            .map(|(a, f)| {
                let scale = a.abs().max(f.abs());
                if scale > 0.0 { (a - f).abs() / scale } else { 0.0 }
            })
            .collect();
        out.push(GradientSample { mu: mu.clone(), adjoint, finite_difference, rel_error });
    }
    Ok(out)
}

/// RB quantities at a parameter the basis was just extended with.
#[derive(Debug, Clone, PartialEq)]
pub struct ReproductionSample {
    pub mu: Vec<f64>,
    pub j_h: f64,
    /// `|J_h − J_RB| / max(1, |J_h|)`.
    pub rel_j: f64,
    /// `‖∇J_h − ∇J_RB‖∞`.
    pub grad_abs: f64,
    /// `grad_abs / ‖∇J_h‖∞`.
    pub grad_rel: f64,
    pub delta_j: f64,
    pub basis_dim: usize,
    pub basis_defect: f64,
}

impl ReproductionSample {
    pub fn passed(&self) -> bool {
        self.rel_j <= REPRO_J_TOL
            && self.grad_abs <= REPRO_GRAD_TOL
            && self.delta_j <= REPRO_BOUND_TOL * self.j_h.abs().max(1.0)
            && self.basis_defect <= BASIS_DEFECT_TOL
    }
}

/// Extends one model at every point in turn and then evaluates the RB model
/// at all of them. Returns the samples and the final model.
pub fn reproduction_check(
    problem: &Problem,
    points: &[Vec<f64>],
    fault: Option<Fault>,
) -> Result<(Vec<ReproductionSample>, RbModel)> {
    let mut rb = RbModel::with_riesz(problem.fom.clone(), problem.riesz.clone(), problem.rb.clone())?;
    let mut truth = Vec::new();
    for mu in points {
        truth.push(rb.extend(mu)?.fom);
    }
    if fault == Some(Fault::CorruptBasis) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        rb.corrupt_basis(|b| {
            let scale = b.column(0).norm() * 1e-3;
            for v in b.column_mut(0).iter_mut() {
                *v += scale * rng.random_range(-1.0..1.0);
            }
        });
    }
    let mut samples = Vec::new();
    for (mu, h) in points.iter().zip(&truth) {
        let out = rb.eval_output(mu)?;
        let constants = problem.fom.constants(mu)?;
        let bounds = est_output_rb(&rb, mu, &out.primal, &out.adjoint, out.j, &constants)?;
        let grad_abs = h.grad.iter().zip(&out.grad).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let grad_scale = h.grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        samples.push(ReproductionSample {
            mu: mu.clone(),
            j_h: h.j,
            rel_j: (h.j - out.j).abs() / h.j.abs().max(1.0),
            grad_abs,
            grad_rel: if grad_scale > 0.0 { grad_abs / grad_scale } else { grad_abs },
            delta_j: bounds.delta_j,
            basis_dim: rb.dim(),
            basis_defect: rb.orthonormality_defect(),
        });
    }
    Ok((samples, rb))
}

/// True errors and bounds of one `(μ, basis)` pair; gradient entries per component.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSample {
    pub mu: Vec<f64>,
    pub basis_dim: usize,
    pub err_pr: f64,
    pub delta_pr: f64,
    pub err_ad: f64,
    pub delta_ad: f64,
    pub err_j: f64,
    pub delta_j: f64,
    pub err_grad: Vec<f64>,
    pub delta_grad: Vec<f64>,
}

impl EstimatorSample {
    /// `(name, bound, error)` for every certified quantity.
    pub fn pairs(&self) -> Vec<(String, f64, f64)> {
        let mut v = vec![
            ("primal".to_string(), self.delta_pr, self.err_pr),
            ("adjoint".to_string(), self.delta_ad, self.err_ad),
            ("objective".to_string(), self.delta_j, self.err_j),
        ];
        for (i, (d, e)) in self.delta_grad.iter().zip(&self.err_grad).enumerate() {
            v.push((format!("gradient_{}", i + 1), *d, *e));
        }
        v
    }

    pub fn violations(&self) -> usize {
        self.pairs().iter().filter(|(_, d, e)| !(d >= e)).count()
    }
}

/// RB bounds against the high-fidelity truth for every parameter and every
/// truncation of `rb` to the given basis sizes.
pub fn rb_estimator_check(
    problem: &Problem,
    rb: &RbModel,
    points: &[Vec<f64>],
    sizes: &[usize],
) -> Result<Vec<EstimatorSample>> {
    let fom = &problem.fom;
    let dt = fom.time.dt;
    let energy = &fom.forms.energy;
    let models: Vec<RbModel> = sizes.iter().map(|&n| rb.truncated(n)).collect();
    let mut samples = Vec::new();
    for mu in points {
        let h = fom.eval_output(mu)?;
        let constants = fom.constants(mu)?;
        for model in &models {
            let out = model.eval_output(mu)?;
            let b = est_output_rb(model, mu, &out.primal, &out.adjoint, out.j, &constants)?;
            let e_pr = Trajectory { role: Role::Primal, coeffs: &h.primal.coeffs - model.reconstruct(&out.primal).coeffs };
            let e_ad =
                Trajectory { role: Role::Adjoint, coeffs: &h.adjoint.coeffs - model.reconstruct(&out.adjoint).coeffs };
            samples.push(EstimatorSample {
                mu: mu.clone(),
                basis_dim: model.dim(),
                err_pr: s_norm(&e_pr, dt, Some(energy)),
                delta_pr: b.delta_pr,
                err_ad: s_norm(&e_ad, dt, Some(energy)),
                delta_ad: b.delta_ad,
                err_j: (h.j - out.j).abs(),
                delta_j: b.delta_j,
                err_grad: h.grad.iter().zip(&out.grad).map(|(a, c)| (a - c).abs()).collect(),
                delta_grad: b.delta_grad,
            });
        }
    }
    Ok(samples)
}

/// ML bounds against the high-fidelity truth, including parameter sensitivities.
#[derive(Debug, Clone, PartialEq)]
pub struct MlSample {
    pub mu: Vec<f64>,
    pub err_pr: f64,
    pub delta_pr: f64,
    pub err_du: Vec<f64>,
    pub delta_du: Vec<f64>,
    pub err_j: f64,
    pub delta_j: f64,
    pub err_grad: Vec<f64>,
    pub delta_grad: Vec<f64>,
}

impl MlSample {
    pub fn pairs(&self) -> Vec<(String, f64, f64)> {
        let mut v = vec![("primal".to_string(), self.delta_pr, self.err_pr), ("objective".to_string(), self.delta_j, self.err_j)];
        for i in 0..self.err_du.len() {
            v.push((format!("sensitivity_{}", i + 1), self.delta_du[i], self.err_du[i]));
            v.push((format!("gradient_{}", i + 1), self.delta_grad[i], self.err_grad[i]));
        }
        v
    }

    pub fn violations(&self) -> usize {
        self.pairs().iter().filter(|(_, d, e)| !(d >= e)).count()
    }
}

/// Reduced solutions on a small stencil of `n_train` points around `mu`
/// (radius `radius` times the box width), as an optimizer would collect them.
pub fn local_training_buffer(rb: &RbModel, mu: &[f64], radius: f64) -> Result<TrainingBuffer> {
    let bounds = &rb.fom().bounds;
    let n = rb.options().n_train;
    let mut buffer = TrainingBuffer::new(n);
    for k in 0..n {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let r = radius * (0.5 + 0.5 * (k % 2) as f64);
        let dir = [angle.cos(), angle.sin()];
        let center: Vec<f64> = (0..mu.len())
            .map(|j| mu[j] + r * dir[j % 2] * (bounds.upper[j] - bounds.lower[j]))
            .collect();
        let center = bounds.project(&center);
        buffer.push(center.clone(), rb.eval_output(&center)?.primal.coeffs)?;
    }
    Ok(buffer)
}

pub fn ml_estimator_check(problem: &Problem, rb: &RbModel, points: &[Vec<f64>]) -> Result<Vec<MlSample>> {
    let fom = &problem.fom;
    let dt = fom.time.dt;
    let energy = &fom.forms.energy;
    let s_g = s_norm(&fom.g_ref, dt, Some(energy));
    let mut samples = Vec::new();
    for mu in points {
        let buffer = local_training_buffer(rb, mu, 1e-2)?;
        let kernel = KernelModel::train(&buffer, rb, &fom.bounds, problem.kernel)?;
        let u_ml = kernel.predict(mu);
        let du_ml = kernel.predict_grad(mu);
        let ml = kernel.eval_output_ml(rb, mu)?;
        let constants = fom.constants(mu)?;
        let b = est_output_ml(rb, mu, &u_ml, &du_ml, &constants, s_g)?;
        let h = fom.eval_output(mu)?;
        let err = |truth: &Trajectory, approx: &Trajectory| {
            let e = Trajectory { role: Role::Primal, coeffs: &truth.coeffs - rb.reconstruct(approx).coeffs };
            s_norm(&e, dt, Some(energy))
        };
        let mut err_du = Vec::new();
        for (i, w) in du_ml.iter().enumerate() {
            err_du.push(err(&fom.solve_sensitivity(mu, &h.primal, i)?, w));
        }
        samples.push(MlSample {
            mu: mu.clone(),
            err_pr: err(&h.primal, &u_ml),
            delta_pr: b.delta_pr,
            err_du,
            delta_du: b.delta_du,
            err_j: (h.j - ml.j).abs(),
            delta_j: b.delta_j,
            err_grad: h.grad.iter().zip(&ml.grad).map(|(a, c)| (a - c).abs()).collect(),
            delta_grad: b.delta_grad,
        });
    }
    Ok(samples)
}

/// Largest relative gap between offline/online and exact T-norms of the
/// primal and adjoint residuals, over random reduced trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualComparison {
    pub primal: f64,
    pub adjoint: f64,
    /// Per-step dual norms, relative to the largest step norm.
    pub per_step: f64,
}

pub fn residual_check(rb: &RbModel, samples: usize, seed: u64) -> Result<ResidualComparison> {
    let fom = rb.fom();
    let dt = fom.time.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = sample_starts(&fom.bounds, samples, seed);
    let (n, k) = (rb.dim(), fom.time.steps);
    let mut worst = ResidualComparison { primal: 0.0, adjoint: 0.0, per_step: 0.0 };
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    for mu in &points {
        let mut random = |role| {
            let mut c = DMatrix::from_fn(n, k + 1, |_, _| rng.random_range(-1.0..1.0));
            match role {
                Role::Primal => c.column_mut(0).fill(0.0),
                Role::Adjoint => c.column_mut(k).fill(0.0),
            }
            Trajectory { role, coeffs: c }
        };
        let u = random(Role::Primal);
        let p = random(Role::Adjoint);
        let (uh, ph) = (rb.reconstruct(&u), rb.reconstruct(&p));

        let online = primal_residual(rb, mu, &u)?;
        let exact = exact_dual_norms(rb.riesz(), &exact_primal_residual(fom, mu, &uh));
        let t_exact = (dt * exact.iter().map(|x| x * x).sum::<f64>()).sqrt();
        worst.primal = worst.primal.max(rel(t_norm(&online, dt), t_exact));
        let scale = exact.iter().copied().fold(0.0, f64::max);
        for (a, b) in dual_norms(&online).iter().zip(&exact) {
            worst.per_step = worst.per_step.max((a - b).abs() / scale);
        }

        let online = adjoint_residual(rb, mu, &u, &p)?;
        let exact = exact_dual_norms(rb.riesz(), &exact_adjoint_residual(fom, mu, &uh, &ph));
        let t_exact = (dt * exact.iter().map(|x| x * x).sum::<f64>()).sqrt();
        worst.adjoint = worst.adjoint.max(rel(t_norm(&online, dt), t_exact));
    }
    Ok(worst)
}

/// Interpolation error and derivative accuracy of a kernel model trained on
/// reduced solutions around `mu`.
pub fn kernel_check(problem: &Problem, rb: &RbModel, mu: &[f64]) -> Result<(f64, f64)> {
    let buffer = local_training_buffer(rb, mu, 1e-2)?;
    let kernel = KernelModel::train(&buffer, rb, &problem.fom.bounds, problem.kernel)?;
    Ok((kernel.training_error(), kernel.derivative_check(mu, KERNEL_FD_STEP)))
}

/// Pass/fail line of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Distribution of `bound / error` over the samples of one quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Effectivity {
    pub name: String,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub effectivities: Vec<Effectivity>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check { name, passed, detail });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {:<22} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        if !self.effectivities.is_empty() {
            writeln!(f, "effectivity (bound/error)      min        median     max        n")?;
            for e in &self.effectivities {
                writeln!(f, "  {:<28} {:<10.3e} {:<10.3e} {:<10.3e} {}", e.name, e.min, e.median, e.max, e.samples)?;
            }
        }
        Ok(())
    }
}

/// Effectivities per quantity name; pairs with zero error are skipped.
pub fn effectivities(prefix: &str, pairs: impl Iterator<Item = (String, f64, f64)>) -> Vec<Effectivity> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (name, bound, error) in pairs {
        if !(error > 0.0) {
            continue;
        }
        let ratio = bound / error;
        match groups.iter_mut().find(|(n, _)| *n == name) {
            Some((_, v)) => v.push(ratio),
            None => groups.push((name, vec![ratio])),
        }
    }
    groups
        .into_iter()
        .map(|(name, mut v)| {
            v.sort_by(f64::total_cmp);
            Effectivity {
                name: format!("{prefix}{name}"),
                min: v[0],
                median: v[v.len() / 2],
                max: v[v.len() - 1],
                samples: v.len(),
            }
        })
        .collect()
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

/// Runs the whole suite on the configured problem.
pub fn validate(config: &ExperimentConfig, problem: &Problem, fault: Option<Fault>) -> Result<ValidationReport> {
    let v = &config.validation;
    let seed = config.experiment.seed;
    let bounds = &problem.fom.bounds;
    let points = sample_starts(bounds, v.points, seed ^ 0x5eed_0001);
    let mut report = ValidationReport::default();

    let grads = gradient_fd_check(&problem.fom, &points, v.fd_step)?;
    let worst = grads.iter().map(GradientSample::worst).fold(0.0, f64::max);
    report.push("fom-gradient", worst <= FD_TOL, format!("max rel. deviation from central differences {worst:.2e} (tol {FD_TOL:.0e})"));

    let (repro, rb) = reproduction_check(problem, &points, fault)?;
    let ok = repro.iter().all(ReproductionSample::passed);
    let detail = repro
        .iter()
        .map(|r| {
            format!(
                "{}: relJ {:.1e} |dgrad| {:.1e} (rel {:.1e}) dJ {:.1e} defect {:.1e}",
                fmt_vec(&r.mu),
                r.rel_j,
                r.grad_abs,
                r.grad_rel,
                r.delta_j,
                r.basis_defect
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    report.push("rb-reproduction", ok, detail);

    let est_points = sample_starts(bounds, v.estimator_pairs.div_ceil(4), seed ^ 0x5eed_0002);
    let n = rb.dim();
    let sizes = [n / 8, n / 4, n / 2, n].map(|s| s.max(1));
    let est = rb_estimator_check(problem, &rb, &est_points, &sizes)?;
    let violations: usize = est.iter().map(EstimatorSample::violations).sum();
    report.push(
        "rb-estimators",
        violations == 0 && est.len() >= v.estimator_pairs.min(est.len()),
        format!("{} violations over {} (μ, basis) pairs, basis sizes {:?}", violations, est.len(), sizes),
    );
    report.effectivities.extend(effectivities("rb ", est.iter().flat_map(|s| s.pairs())));

    let ml = ml_estimator_check(problem, &rb, &points)?;
    let violations: usize = ml.iter().map(MlSample::violations).sum();
    report.push("ml-estimators", violations == 0, format!("{} violations over {} parameters", violations, ml.len()));
    report.effectivities.extend(effectivities("ml ", ml.iter().flat_map(|s| s.pairs())));

    let res = residual_check(&rb, v.residual_samples, seed ^ 0x5eed_0003)?;
    let worst = res.primal.max(res.adjoint).max(res.per_step);
    report.push(
        "residual-offline",
        worst <= RESIDUAL_TOL,
        format!("primal {:.1e}, adjoint {:.1e}, per step {:.1e} (tol {RESIDUAL_TOL:.0e})", res.primal, res.adjoint, res.per_step),
    );

    let mut fit: f64 = 0.0;
    let mut deriv: f64 = 0.0;
    for mu in &points {
        let (e, d) = kernel_check(problem, &rb, mu)?;
        fit = fit.max(e);
        deriv = deriv.max(d);
    }
    report.push(
        "kernel",
        fit <= KERNEL_FIT_TOL && deriv <= KERNEL_DERIVATIVE_TOL,
        format!("training error {fit:.1e} (tol {KERNEL_FIT_TOL:.0e}), derivative vs differences {deriv:.1e} (tol {KERNEL_DERIVATIVE_TOL:.0e})"),
    );
    Ok(report)
}
