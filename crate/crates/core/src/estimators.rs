//! A posteriori error bounds for the RB and ML surrogates.
//!
//! All dual norms are taken with respect to the energy product. Residuals are
//! represented by their coordinates in the energy-orthonormal image basis of
//! [`ResidualOffline`](crate::rb::ResidualOffline), so a dual norm is the
//! Euclidean norm of a coordinate vector. An exact mode that assembles the
//! residuals in the high-dimensional space and applies the Riesz map serves as
//! the reference.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fom::{ConstantsBundle, FomModel, Role, Trajectory};
use crate::numerics::{EnvelopeCholesky, SparseMatrix};
use crate::rb::RbModel;

/// Bounds for the RB objective, gradient and trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct RbErrorBounds {
    pub delta_pr: f64,
    pub delta_ad: f64,
    pub delta_j: f64,
    pub delta_grad: Vec<f64>,
    /// `|Δ^J / J_RB|`.
    pub relative: f64,
    pub t_pr: f64,
    pub t_ad: f64,
}

/// Bounds for the ML surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct MlErrorBounds {
    pub delta_pr: f64,
    pub delta_du: Vec<f64>,
    pub delta_j: f64,
    pub delta_grad: Vec<f64>,
}

/// `S(u) = (Δt Σ_{k=1}^K ‖u^k‖²)^{1/2}`; the norm is the energy norm when `energy`
/// is given and the Euclidean one otherwise (reduced coordinates of an
/// energy-orthonormal basis).
pub fn s_norm(traj: &Trajectory, dt: f64, energy: Option<&SparseMatrix>) -> f64 {
    let x = traj.interior();
    let sum = match energy {
        Some(g) => g.mul_mat(&x.into_owned()).component_mul(&x).sum(),
        None => x.norm_squared(),
    };
    (dt * sum.max(0.0)).sqrt()
}

/// `T(f) = (Δt Σ_k ‖f^k‖²_{V'})^{1/2}` from image-basis coordinates, one column per step.
pub fn t_norm(coords: &DMatrix<f64>, dt: f64) -> f64 {
    (dt * coords.norm_squared()).sqrt()
}

/// Per-step dual norms from image-basis coordinates.
pub fn dual_norms(coords: &DMatrix<f64>) -> Vec<f64> {
    coords.column_iter().map(|c| c.norm()).collect()
}

fn forcing_row(fom: &FomModel) -> DVector<f64> {
    DVector::from_row_slice(&fom.forcing[1..])
}

/// Σ_q c_q s_stiff^q.
fn combined_stiffness(rb: &RbModel, coeffs: &[f64]) -> DMatrix<f64> {
    let res = rb.residual();
    let mut s = DMatrix::zeros(res.image_dim(), rb.dim());
    for (c, sq) in coeffs.iter().zip(&res.s_stiff) {
        if *c != 0.0 {
            s += sq * *c;
        }
    }
    s
}

/// Coordinates of `Σ_q c_q f^q`.
fn combined_load(rb: &RbModel, coeffs: &[f64]) -> DVector<f64> {
    let res = rb.residual();
    let mut s = DVector::zeros(res.image_dim());
    for (j, c) in coeffs.iter().enumerate() {
        s += res.s_load.column(j) * *c;
    }
    s
}

/// Columns `0..K−1` and `1..K` of a primal-layout coefficient matrix.
fn primal_pair(u: &Trajectory) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = u.steps();
    (u.coeffs.columns(0, k).into_owned(), u.coeffs.columns(1, k).into_owned())
}

fn check_reduced(rb: &RbModel, t: &Trajectory, role: Role) -> Result<()> {
    if t.role != role || t.dim() != rb.dim() || t.steps() != rb.fom().time.steps {
        return Err(Error::DimensionMismatch("trajectory does not match the reduced basis".into()));
    }
    Ok(())
}

/// Image coordinates of `r_pr^k(u, ·; μ) = b(t^k) f(·; μ) − a(u^k, ·; μ) − (u^k − u^{k−1}, ·)/Δt`.
pub fn primal_residual(rb: &RbModel, mu: &[f64], u: &Trajectory) -> Result<DMatrix<f64>> {
    check_reduced(rb, u, Role::Primal)?;
    let fom = rb.fom();
    let forms = &fom.forms;
    let (u0, u1) = primal_pair(u);
    let load = combined_load(rb, &forms.theta_f(mu));
    let mut r = &load * forcing_row(fom).transpose();
    r -= combined_stiffness(rb, &forms.theta_a(mu)) * &u1;
    r -= &rb.residual().s_mass * (&u1 - &u0) / fom.time.dt;
    Ok(r)
}

/// Image coordinates of
/// `r_ad^k(u, p, ·; μ) = 2d(u^k, ·) + l^k(·) − a(·, p^k; μ) − (·, p^k − p^{k+1})/Δt`.
pub fn adjoint_residual(rb: &RbModel, mu: &[f64], u: &Trajectory, p: &Trajectory) -> Result<DMatrix<f64>> {
    check_reduced(rb, u, Role::Primal)?;
    check_reduced(rb, p, Role::Adjoint)?;
    let fom = rb.fom();
    let res = rb.residual();
    let k = u.steps();
    let u1 = u.coeffs.columns(1, k).into_owned();
    let p_now = p.coeffs.columns(0, k).into_owned();
    let p_next = p.coeffs.columns(1, k).into_owned();
    let mut r = (&res.s_output * &u1 - &res.s_track) * 2.0;
    r -= combined_stiffness(rb, &fom.forms.theta_a(mu)) * &p_now;
    r -= &res.s_mass * (&p_now - &p_next) / fom.time.dt;
    Ok(r)
}

/// Image coordinates of the sensitivity residual
/// `R^k(·) = b(t^k) ∂_i f(·) − ∂_i a(u^k, ·) − a(w^k, ·; μ) − (w^k − w^{k−1}, ·)/Δt`
/// for a candidate derivative trajectory `w ≈ d_{μ_i} u`.
pub fn sensitivity_residual(rb: &RbModel, mu: &[f64], u: &Trajectory, w: &Trajectory, i: usize) -> Result<DMatrix<f64>> {
    check_reduced(rb, u, Role::Primal)?;
    check_reduced(rb, w, Role::Primal)?;
    let fom = rb.fom();
    let forms = &fom.forms;
    let d_theta_f: Vec<f64> = forms.load_coefficients.iter().map(|c| c.derivative(i)).collect();
    let d_theta_a: Vec<f64> = forms.stiffness_coefficients.iter().map(|c| c.derivative(i)).collect();
    let (_, u1) = primal_pair(u);
    let (w0, w1) = primal_pair(w);
    let mut r = combined_load(rb, &d_theta_f) * forcing_row(fom).transpose();
    r -= combined_stiffness(rb, &d_theta_a) * &u1;
    r -= combined_stiffness(rb, &forms.theta_a(mu)) * &w1;
    r -= &rb.residual().s_mass * (&w1 - &w0) / fom.time.dt;
    Ok(r)
}

/// `Δ^pr(u, μ) = α_LB(μ)⁻¹ T(r_pr(u, ·; μ))`.
pub fn delta_pr(rb: &RbModel, mu: &[f64], u: &Trajectory, constants: &ConstantsBundle) -> Result<f64> {
    let t = t_norm(&primal_residual(rb, mu, u)?, rb.fom().time.dt);
    Ok(t / constants.alpha_lb)
}

/// `Δ^ad(u, μ) = α_LB⁻¹ (8γ_d²(Δ^pr)² + 2T²(r_ad))^{1/2}`, with `p` the reduced
/// adjoint for the right-hand side defined by `u`.
pub fn delta_ad(rb: &RbModel, mu: &[f64], u: &Trajectory, p: &Trajectory, constants: &ConstantsBundle) -> Result<f64> {
    let dpr = delta_pr(rb, mu, u, constants)?;
    let t_ad = t_norm(&adjoint_residual(rb, mu, u, p)?, rb.fom().time.dt);
    Ok(delta_ad_from(dpr, t_ad, constants))
}

fn delta_ad_from(dpr: f64, t_ad: f64, c: &ConstantsBundle) -> f64 {
    (8.0 * c.gamma_d.powi(2) * dpr.powi(2) + 2.0 * t_ad.powi(2)).sqrt() / c.alpha_lb
}

/// `T((f_{μ_i})_k) = √(KΔt) ‖f_{μ_i}‖_{V'}`.
fn t_load_derivative(rb: &RbModel, i: usize) -> f64 {
    let fom = rb.fom();
    let d: Vec<f64> = fom.forms.load_coefficients.iter().map(|c| c.derivative(i)).collect();
    let norm = combined_load(rb, &d).norm();
    (fom.time.final_time()).sqrt() * norm
}

/// RB objective and gradient bounds at `mu` for the reduced solutions `u`, `p`.
pub fn est_output_rb(
    rb: &RbModel,
    mu: &[f64],
    u: &Trajectory,
    p: &Trajectory,
    j_rb: f64,
    constants: &ConstantsBundle,
) -> Result<RbErrorBounds> {
    let dt = rb.fom().time.dt;
    let t_pr = t_norm(&primal_residual(rb, mu, u)?, dt);
    let t_ad = t_norm(&adjoint_residual(rb, mu, u, p)?, dt);
    let delta_pr = t_pr / constants.alpha_lb;
    let delta_ad = delta_ad_from(delta_pr, t_ad, constants);
    let delta_j = t_ad * delta_pr + constants.gamma_d * delta_pr.powi(2);
    let s_u = s_norm(u, dt, None);
    let s_p = s_norm(p, dt, None);
    let delta_grad = constants
        .gamma_a
        .iter()
        .enumerate()
        .map(|(i, g)| {
            t_load_derivative(rb, i) * delta_ad + g * (delta_pr * delta_ad + delta_pr * s_p + delta_ad * s_u)
        })
        .collect();
    let relative = if j_rb != 0.0 { (delta_j / j_rb).abs() } else if delta_j == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(RbErrorBounds { delta_pr, delta_ad, delta_j, delta_grad, relative, t_pr, t_ad })
}

/// Relative objective bound only (primal and adjoint residuals), for trust-region tests.
pub fn relative_objective_bound(rb: &RbModel, mu: &[f64], out: &crate::rb::RbOutput) -> Result<f64> {
    let constants = rb.fom().constants(mu)?;
    Ok(est_output_rb(rb, mu, &out.primal, &out.adjoint, out.j, &constants)?.relative)
}

/// Bounds for an ML trajectory `u_ml` and its parameter derivatives `du_ml[i]`,
/// all in reduced coordinates with zero initial rows. `s_g` is `S(g_ref)`.
pub fn est_output_ml(
    rb: &RbModel,
    mu: &[f64],
    u_ml: &Trajectory,
    du_ml: &[Trajectory],
    constants: &ConstantsBundle,
    s_g: f64,
) -> Result<MlErrorBounds> {
    let zero_start = |t: &Trajectory| t.coeffs.column(0).iter().all(|&v| v == 0.0);
    if !zero_start(u_ml) || !du_ml.iter().all(zero_start) {
        return Err(Error::InvalidInput("ML trajectories must have zero initial rows".into()));
    }
    if du_ml.len() != constants.gamma_a.len() {
        return Err(Error::DimensionMismatch("one derivative trajectory per parameter expected".into()));
    }
    let dt = rb.fom().time.dt;
    let gd = constants.gamma_d;
    let delta_pr = t_norm(&primal_residual(rb, mu, u_ml)?, dt) / constants.alpha_lb;
    let s_u = s_norm(u_ml, dt, None);
    let mut delta_du = Vec::with_capacity(du_ml.len());
    let mut delta_grad = Vec::with_capacity(du_ml.len());
    for (i, w) in du_ml.iter().enumerate() {
        let t_r = t_norm(&sensitivity_residual(rb, mu, u_ml, w, i)?, dt);
        let ddu = (t_r + constants.gamma_a[i] * delta_pr) / constants.alpha_lb;
        let s_w = s_norm(w, dt, None);
        delta_grad.push((2.0 * delta_pr + 2.0 * s_u + s_g) * gd * ddu + 2.0 * s_w * gd * delta_pr);
        delta_du.push(ddu);
    }
    let delta_j = (2.0 * s_u + s_g) * gd * delta_pr + gd * delta_pr.powi(2);
    Ok(MlErrorBounds { delta_pr, delta_du, delta_j, delta_grad })
}

/// Exact per-step dual norms of high-dimensional residual functionals (one
/// column per step) through the energy Riesz map.
pub fn exact_dual_norms(riesz: &EnvelopeCholesky, functionals: &DMatrix<f64>) -> Vec<f64> {
    let reps = riesz.solve_mat(functionals);
    functionals
        .column_iter()
        .zip(reps.column_iter())
        .map(|(f, r)| f.dot(&r).max(0.0).sqrt())
        .collect()
}

/// High-dimensional primal residual functionals of a (high-dimensional) trajectory.
pub fn exact_primal_residual(fom: &FomModel, mu: &[f64], u: &Trajectory) -> DMatrix<f64> {
    let forms = &fom.forms;
    let (u0, u1) = primal_pair(u);
    let f = forms.load_at(mu);
    let mut r = &f * forcing_row(fom).transpose();
    r -= forms.stiffness_at(mu).mul_mat(&u1);
    r -= forms.mass.mul_mat(&(&u1 - &u0)) / fom.time.dt;
    r
}

/// High-dimensional adjoint residual functionals.
pub fn exact_adjoint_residual(fom: &FomModel, mu: &[f64], u: &Trajectory, p: &Trajectory) -> DMatrix<f64> {
    let forms = &fom.forms;
    let k = u.steps();
    let u1 = u.coeffs.columns(1, k).into_owned();
    let g = fom.g_ref.interior().into_owned();
    let p_now = p.coeffs.columns(0, k).into_owned();
    let p_next = p.coeffs.columns(1, k).into_owned();
    let mut r = forms.output.mul_mat(&(&u1 - &g)) * 2.0;
    r -= forms.stiffness_at(mu).mul_mat(&p_now);
    r -= forms.mass.mul_mat(&(&p_now - &p_next)) / fom.time.dt;
    r
}
