//! Full-order model: implicit-Euler primal, adjoint and sensitivity solves,
//! objective, adjoint gradient and stability constants.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::fem::AffineForms;
use crate::numerics::{cg_solve_into, max_gen_eig, EnvelopeCholesky, SparseMatrix};

/// Uniform time grid `t^k = kΔt`, `k = 0..K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub steps: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, dt: f64) -> Result<Self> {
        if steps == 0 || !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("time grid needs K ≥ 1 and Δt > 0 (got {steps}, {dt})")));
        }
        Ok(TimeGrid { steps, dt })
    }

    pub fn final_time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Heating profile b(t) = min(2t, 1) at every grid point.
    pub fn forcing(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| (2.0 * k as f64 * self.dt).min(1.0)).collect()
    }
}

/// Admissible parameter set `Π [L_j, U_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidInput("parameter box needs L_j < U_j componentwise".into()));
        }
        Ok(ParameterBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim() && mu.iter().zip(self.lower.iter().zip(&self.upper)).all(|(m, (l, u))| m >= l && m <= u)
    }

    pub fn project(&self, mu: &[f64]) -> Vec<f64> {
        mu.iter().zip(self.lower.iter().zip(&self.upper)).map(|(m, (l, u))| m.clamp(*l, *u)).collect()
    }
}

/// Linear solver used for the implicit-Euler steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolver {
    /// Jacobi-preconditioned CG per time step.
    Cg,
    /// One sparse Cholesky factorization per parameter, reused for all steps.
    Direct,
}

/// Solver settings for all high-dimensional solves.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub kind: LinearSolver,
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { kind: LinearSolver::Direct, rtol: 1e-12, max_iter: 20_000 }
    }
}

enum Stepper<'a> {
    Cg(&'a SparseMatrix, SolverOptions),
    Direct(&'a SparseMatrix, EnvelopeCholesky),
}

impl<'a> Stepper<'a> {
    fn new(system: &'a SparseMatrix, options: SolverOptions) -> Result<Self> {
        Ok(match options.kind {
            LinearSolver::Cg => Stepper::Cg(system, options),
            LinearSolver::Direct => Stepper::Direct(system, EnvelopeCholesky::new(system)?),
        })
    }

    /// Solves into `x`, which holds the initial guess on entry.
    fn solve(&self, b: &[f64], x: &mut [f64]) -> Result<()> {
        match self {
            Stepper::Cg(a, o) => cg_solve_into(a, b, x, o.rtol, o.max_iter).map(|_| ()),
            Stepper::Direct(a, f) => {
                x.copy_from_slice(b);
                f.solve_in_place(x);
                // One step of iterative refinement: the output weight amplifies
                // any solve error in the objective.
                let mut r = vec![0.0; b.len()];
                a.mul_vec_into(x, &mut r);
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri = bi - *ri;
                }
                f.solve_in_place(&mut r);
                for (xi, ri) in x.iter_mut().zip(&r) {
                    *xi += ri;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Primal,
    Adjoint,
}

/// Time-indexed coefficient vectors.
///
/// A primal trajectory stores `u^0..u^K` with `u^0 = 0`; an adjoint trajectory
/// stores `p^1..p^{K+1}` with `p^{K+1} = 0`. Column `j` holds time index
/// `j + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub role: Role,
    pub coeffs: DMatrix<f64>,
}

impl Trajectory {
    pub fn zeros(role: Role, dim: usize, steps: usize) -> Self {
        Trajectory { role, coeffs: DMatrix::zeros(dim, steps + 1) }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn steps(&self) -> usize {
        self.coeffs.ncols() - 1
    }

    fn offset(&self) -> usize {
        match self.role {
            Role::Primal => 0,
            Role::Adjoint => 1,
        }
    }

    /// Vector at time index `k`.
    pub fn at(&self, k: usize) -> DVectorView<'_, f64> {
        self.coeffs.column(k - self.offset())
    }

    pub fn set(&mut self, k: usize, v: &DVector<f64>) {
        let off = self.offset();
        self.coeffs.set_column(k - off, v);
    }

    /// Columns for the time indices `1..=K`.
    pub fn interior(&self) -> nalgebra::DMatrixView<'_, f64> {
        let k = self.steps();
        match self.role {
            Role::Primal => self.coeffs.columns(1, k),
            Role::Adjoint => self.coeffs.columns(0, k),
        }
    }

    /// Checks the exact endpoint condition.
    pub fn endpoint_is_zero(&self) -> bool {
        let col = match self.role {
            Role::Primal => 0,
            Role::Adjoint => self.coeffs.ncols() - 1,
        };
        self.coeffs.column(col).iter().all(|&v| v == 0.0)
    }
}

/// Coercivity/continuity constants at one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsBundle {
    pub alpha_lb: f64,
    pub gamma_a: Vec<f64>,
    pub gamma_d: f64,
    pub gamma_l: f64,
}

/// High-fidelity objective, gradient and the trajectories behind them.
#[derive(Debug, Clone)]
pub struct FomOutput {
    pub j: f64,
    pub grad: Vec<f64>,
    pub primal: Trajectory,
    pub adjoint: Trajectory,
}

/// Everything needed to evaluate the high-fidelity problem.
#[derive(Debug, Clone)]
pub struct FomModel {
    pub forms: AffineForms,
    pub time: TimeGrid,
    pub forcing: Vec<f64>,
    pub g_ref: Trajectory,
    pub mu_hat: Vec<f64>,
    pub lambda: f64,
    pub bounds: ParameterBox,
    pub solver: SolverOptions,
    /// Largest eigenvalue of the output product relative to the energy product.
    pub gamma_d: f64,
    /// Continuity bound of the tracking functionals `v ↦ −2(g^k, v)_D`.
    pub gamma_l: f64,
}

impl FomModel {
    /// Builds the model; the reference trajectory is the primal solution at `mu_hat`.
    pub fn new(
        forms: AffineForms,
        time: TimeGrid,
        mu_hat: Vec<f64>,
        lambda: f64,
        bounds: ParameterBox,
        solver: SolverOptions,
    ) -> Result<Self> {
        let g_ref = Trajectory::zeros(Role::Primal, forms.dim(), time.steps);
        let mut model = Self::with_reference(forms, time, mu_hat, lambda, bounds, solver, g_ref)?;
        model.g_ref = model.solve_primal(&model.mu_hat.clone())?;
        model.gamma_l = model.tracking_continuity();
        Ok(model)
    }

    /// Builds the model around a given reference trajectory.
    pub fn with_reference(
        forms: AffineForms,
        time: TimeGrid,
        mu_hat: Vec<f64>,
        lambda: f64,
        bounds: ParameterBox,
        solver: SolverOptions,
        g_ref: Trajectory,
    ) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("regularization weight must be nonnegative, got {lambda}")));
        }
        if mu_hat.len() != forms.num_parameters || bounds.dim() != forms.num_parameters {
            return Err(Error::DimensionMismatch("parameter dimension differs from the layout".into()));
        }
        if g_ref.role != Role::Primal || g_ref.dim() != forms.dim() || g_ref.steps() != time.steps {
            return Err(Error::DimensionMismatch("reference trajectory does not match the grid".into()));
        }
        let gamma_d = max_gen_eig(&forms.output, &forms.energy, 1e-10)?;
        let forcing = time.forcing();
        let mut model =
            FomModel { forms, time, forcing, g_ref, mu_hat, lambda, bounds, solver, gamma_d, gamma_l: 0.0 };
        model.gamma_l = model.tracking_continuity();
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.forms.dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.forms.num_parameters
    }

    // |d(g^k, v)| ≤ ‖g^k‖_D ‖v‖_D ≤ ‖g^k‖_D √γ_d ‖v‖_V.
    fn tracking_continuity(&self) -> f64 {
        let max_g = (1..=self.time.steps)
            .map(|k| {
                let g: Vec<f64> = self.g_ref.at(k).iter().copied().collect();
                self.forms.output.inner(&g, &g).max(0.0).sqrt()
            })
            .fold(0.0, f64::max);
        2.0 * max_g * self.gamma_d.sqrt()
    }

    fn check_parameter(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.num_parameters() || mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput(format!("parameter {mu:?} has wrong dimension or is not finite")));
        }
        Ok(())
    }

    /// Regularization term λ‖μ − μ̂‖².
    pub fn regularization(&self, mu: &[f64]) -> f64 {
        self.lambda * mu.iter().zip(&self.mu_hat).map(|(m, h)| (m - h).powi(2)).sum::<f64>()
    }

    pub fn regularization_gradient(&self, mu: &[f64]) -> Vec<f64> {
        mu.iter().zip(&self.mu_hat).map(|(m, h)| 2.0 * self.lambda * (m - h)).collect()
    }

    /// Backward/forward implicit-Euler sweep shared by all solves: for each step
    /// solve `S x^k = (M/Δt) x^{prev} + rhs(k)`.
    fn sweep(
        &self,
        system: &SparseMatrix,
        order: impl Iterator<Item = usize>,
        out: &mut Trajectory,
        prev_index: impl Fn(usize) -> usize,
        mut rhs: impl FnMut(usize, &mut [f64]),
    ) -> Result<()> {
        let n = self.dim();
        let stepper = Stepper::new(system, self.solver)?;
        let inv_dt = 1.0 / self.time.dt;
        let mut b = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut x = vec![0.0; n];
        for k in order {
            let prev: Vec<f64> = out.at(prev_index(k)).iter().copied().collect();
            self.forms.mass.mul_vec_into(&prev, &mut tmp);
            for i in 0..n {
                b[i] = inv_dt * tmp[i];
            }
            rhs(k, &mut b);
            // Previous step as initial guess.
            x.copy_from_slice(&prev);
            stepper.solve(&b, &mut x).map_err(|e| e.at_step(k))?;
            out.set(k, &DVector::from_column_slice(&x));
        }
        Ok(())
    }

    /// Primal trajectory: `(M/Δt + A(μ)) u^k = (M/Δt) u^{k−1} + b(t^k) f(μ)`.
    pub fn solve_primal(&self, mu: &[f64]) -> Result<Trajectory> {
        self.check_parameter(mu)?;
        let system = self.forms.system_matrix(mu, 1.0 / self.time.dt);
        let f = self.forms.load_at(mu);
        let mut u = Trajectory::zeros(Role::Primal, self.dim(), self.time.steps);
        self.sweep(&system, 1..=self.time.steps, &mut u, |k| k - 1, |k, b| {
            let bk = self.forcing[k];
            for (bi, fi) in b.iter_mut().zip(f.iter()) {
                *bi += bk * fi;
            }
        })?;
        Ok(u)
    }

    /// Adjoint trajectory:
    /// `(M/Δt + A(μ)) p^k = (M/Δt) p^{k+1} + 2 M_D (u^k − g^k)`, `p^{K+1} = 0`.
    pub fn solve_adjoint(&self, mu: &[f64], u: &Trajectory) -> Result<Trajectory> {
        self.check_parameter(mu)?;
        if u.role != Role::Primal || u.dim() != self.dim() || u.steps() != self.time.steps {
            return Err(Error::DimensionMismatch("primal trajectory does not match the model".into()));
        }
        let system = self.forms.system_matrix(mu, 1.0 / self.time.dt);
        let n = self.dim();
        let mut p = Trajectory::zeros(Role::Adjoint, n, self.time.steps);
        let mut diff = vec![0.0; n];
        let mut md = vec![0.0; n];
        self.sweep(&system, (1..=self.time.steps).rev(), &mut p, |k| k + 1, |k, b| {
            for (i, d) in diff.iter_mut().enumerate() {
                *d = u.at(k)[i] - self.g_ref.at(k)[i];
            }
            self.forms.output.mul_vec_into(&diff, &mut md);
            for (bi, mi) in b.iter_mut().zip(&md) {
                *bi += 2.0 * mi;
            }
        })?;
        Ok(p)
    }

    /// Parameter sensitivity `d_{μ_i} u`:
    /// `(M/Δt + A) w^k = (M/Δt) w^{k−1} + b(t^k) ∂_i f − ∂_i A u^k`, `w^0 = 0`.
    pub fn solve_sensitivity(&self, mu: &[f64], u: &Trajectory, i: usize) -> Result<Trajectory> {
        self.check_parameter(mu)?;
        let system = self.forms.system_matrix(mu, 1.0 / self.time.dt);
        let df = self.forms.load_derivative(i);
        let da = self.forms.stiffness_derivative(i);
        let n = self.dim();
        let mut w = Trajectory::zeros(Role::Primal, n, self.time.steps);
        let mut au = vec![0.0; n];
        self.sweep(&system, 1..=self.time.steps, &mut w, |k| k - 1, |k, b| {
            let uk: Vec<f64> = u.at(k).iter().copied().collect();
            da.mul_vec_into(&uk, &mut au);
            let bk = self.forcing[k];
            for j in 0..n {
                b[j] += bk * df[j] - au[j];
            }
        })?;
        Ok(w)
    }

    /// `Δt Σ_k ‖u^k − g^k‖²_D + λ‖μ − μ̂‖²` for a given primal trajectory.
    pub fn objective(&self, mu: &[f64], u: &Trajectory) -> f64 {
        let n = self.dim();
        let mut diff = vec![0.0; n];
        let mut misfit = 0.0;
        for k in 1..=self.time.steps {
            for (i, d) in diff.iter_mut().enumerate() {
                *d = u.at(k)[i] - self.g_ref.at(k)[i];
            }
            misfit += self.forms.output.inner(&diff, &diff);
        }
        self.time.dt * misfit + self.regularization(mu)
    }

    /// `d_{μ_i} J = Δt Σ_k [b(t^k) ∂_i f(p^k) − ∂_i a(u^k, p^k)] + 2λ(μ_i − μ̂_i)`.
    pub fn gradient(&self, mu: &[f64], u: &Trajectory, p: &Trajectory) -> Vec<f64> {
        let mut grad = self.regularization_gradient(mu);
        for (i, g) in grad.iter_mut().enumerate() {
            let df = self.forms.load_derivative(i);
            let da = self.forms.stiffness_derivative(i);
            let mut acc = 0.0;
            for k in 1..=self.time.steps {
                let uk: Vec<f64> = u.at(k).iter().copied().collect();
                let pk: Vec<f64> = p.at(k).iter().copied().collect();
                acc += self.forcing[k] * df.iter().zip(&pk).map(|(a, b)| a * b).sum::<f64>();
                acc -= da.inner(&uk, &pk);
            }
            *g += self.time.dt * acc;
        }
        grad
    }

    /// Objective and adjoint gradient.
    pub fn eval_output(&self, mu: &[f64]) -> Result<FomOutput> {
        let primal = self.solve_primal(mu)?;
        let adjoint = self.solve_adjoint(mu, &primal)?;
        let j = self.objective(mu, &primal);
        let grad = self.gradient(mu, &primal, &adjoint);
        Ok(FomOutput { j, grad, primal, adjoint })
    }

    /// Min-theta coercivity bound and max-theta continuity bounds.
    pub fn constants(&self, mu: &[f64]) -> Result<ConstantsBundle> {
        self.check_parameter(mu)?;
        let theta = self.forms.theta_a(mu);
        let theta_bar = self.forms.theta_a(&self.forms.reference_parameter);
        if theta.iter().chain(&theta_bar).any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidInput(format!("nonpositive coefficient at {mu:?}")));
        }
        let alpha_lb = theta.iter().zip(&theta_bar).map(|(t, tb)| t / tb).fold(f64::INFINITY, f64::min);
        let gamma_a = (0..self.num_parameters())
            .map(|i| {
                self.forms
                    .stiffness_coefficients
                    .iter()
                    .zip(&theta_bar)
                    .map(|(c, tb)| c.derivative(i).abs() / tb)
                    .fold(0.0, f64::max)
            })
            .collect();
        Ok(ConstantsBundle { alpha_lb, gamma_a, gamma_d: self.gamma_d, gamma_l: self.gamma_l })
    }
}
