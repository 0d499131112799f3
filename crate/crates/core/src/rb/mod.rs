//! Reduced-basis model: Galerkin-projected primal/adjoint solves, the RB
//! objective and gradient, basis extension by HaPOD, and residual offline data.

mod buffer;
mod residual;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::sync::Arc;

pub use buffer::TrainingBuffer;
pub use residual::ResidualOffline;

use crate::error::{Error, Result};
use crate::fom::{FomModel, FomOutput, Role, Trajectory};
use crate::numerics::{deflate, hapod, orthonormalize_against, EnvelopeCholesky};

/// Basis-generation settings.
#[derive(Debug, Clone, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbOptions {
    /// Primal POD tolerance, relative to the largest primal snapshot-set
    /// energy seen so far.
    pub eps_pod: f64,
    /// Adjoint POD tolerance, relative in the same way. Adjoint trajectories
    /// shrink towards zero near a minimizer of the tracking term, so a
    /// per-set relative tolerance would add noise-level modes there.
    pub eps_pod_adjoint: f64,
    /// Share of the HaPOD error budget given to intermediate chain nodes.
    pub omega: f64,
    /// Number of time steps per HaPOD chunk.
    pub chunk_size: usize,
    /// Capacity of the training buffer.
    pub n_train: usize,
    /// Extra compress-and-deflate passes when the measured projection error
    /// still exceeds the tolerance after the first pass.
    pub refinement_rounds: usize,
}

impl Default for RbOptions {
    fn default() -> Self {
        RbOptions { eps_pod: 1e-24, eps_pod_adjoint: 1e-16, omega: 0.9, chunk_size: 100, n_train: 10, refinement_rounds: 2 }
    }
}

/// Objective, gradient and reduced trajectories at one parameter.
#[derive(Debug, Clone)]
pub struct RbOutput {
    pub j: f64,
    pub grad: Vec<f64>,
    pub primal: Trajectory,
    pub adjoint: Trajectory,
}

/// Result of one basis extension.
#[derive(Debug, Clone)]
pub struct Extension {
    pub fom: FomOutput,
    pub added_primal: usize,
    pub added_adjoint: usize,
}

/// Reduced-basis surrogate with an energy-orthonormal basis.
#[derive(Debug, Clone)]
pub struct RbModel {
    fom: Arc<FomModel>,
    riesz: Arc<EnvelopeCholesky>,
    options: RbOptions,
    basis: DMatrix<f64>,
    pub mass_r: DMatrix<f64>,
    pub stiff_r: Vec<DMatrix<f64>>,
    pub load_r: Vec<DVector<f64>>,
    /// `D_r = Φᵀ M_D Φ`.
    pub output_r: DMatrix<f64>,
    /// `L^k = Φᵀ M_D g^k`, k = 1..K, as columns.
    pub tracking: DMatrix<f64>,
    /// Coefficients `a^k` of the output-orthogonal projection of `g^k`.
    track_proj: DMatrix<f64>,
    /// `Φᵀ M_D (g^k − Φ a^k)` (zero up to round-off), formed in the full space.
    track_defect: DMatrix<f64>,
    /// `‖g^k − Φ a^k‖²_D`.
    track_rest: Vec<f64>,
    residual: ResidualOffline,
    pub buffer: TrainingBuffer,
    extensions: Vec<Vec<f64>>,
    /// Largest primal and adjoint snapshot-set energies seen so far.
    reference_energy: [f64; 2],
}

impl RbModel {
    /// Model with an empty basis.
    pub fn new(fom: Arc<FomModel>, options: RbOptions) -> Result<Self> {
        let riesz = Arc::new(EnvelopeCholesky::new(&fom.forms.energy)?);
        Self::with_riesz(fom, riesz, options)
    }

    /// Model with an empty basis sharing an existing energy factorization.
    pub fn with_riesz(fom: Arc<FomModel>, riesz: Arc<EnvelopeCholesky>, options: RbOptions) -> Result<Self> {
        if !(options.eps_pod > 0.0) || !(options.eps_pod_adjoint > 0.0) || options.chunk_size == 0 || options.n_train == 0 {
            return Err(Error::InvalidInput("RB options need eps_pod > 0, chunk_size > 0, n_train > 0".into()));
        }
        let residual = ResidualOffline::new(&fom, &riesz);
        let n = fom.dim();
        let k = fom.time.steps;
        let buffer = TrainingBuffer::new(options.n_train);
        let mut model = RbModel {
            riesz,
            options,
            basis: DMatrix::zeros(n, 0),
            mass_r: DMatrix::zeros(0, 0),
            stiff_r: fom.forms.stiffness.iter().map(|_| DMatrix::zeros(0, 0)).collect(),
            load_r: fom.forms.loads.iter().map(|_| DVector::zeros(0)).collect(),
            output_r: DMatrix::zeros(0, 0),
            tracking: DMatrix::zeros(0, k),
            track_proj: DMatrix::zeros(0, k),
            track_defect: DMatrix::zeros(0, k),
            track_rest: Vec::new(),
            residual,
            buffer,
            extensions: Vec::new(),
            reference_energy: [0.0; 2],
            fom,
        };
        model.project();
        Ok(model)
    }

    pub fn fom(&self) -> &Arc<FomModel> {
        &self.fom
    }

    pub fn riesz(&self) -> &Arc<EnvelopeCholesky> {
        &self.riesz
    }

    pub fn options(&self) -> &RbOptions {
        &self.options
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn residual(&self) -> &ResidualOffline {
        &self.residual
    }

    /// Output-space projection of the reference trajectory: coefficients `a^k`,
    /// defects `L^k − D_r a^k`, and remainders `‖g^k − Φa^k‖²_D`.
    pub fn tracking_projection(&self) -> (&DMatrix<f64>, &DMatrix<f64>, &[f64]) {
        (&self.track_proj, &self.track_defect, &self.track_rest)
    }

    /// Parameters at which the basis was extended, in order.
    pub fn extension_parameters(&self) -> &[Vec<f64>] {
        &self.extensions
    }

    /// Recomputes every projected quantity from the current basis.
    fn project(&mut self) {
        let forms = &self.fom.forms;
        let phi = &self.basis;
        let phit = phi.transpose();
        self.mass_r = &phit * forms.mass.mul_mat(phi);
        self.stiff_r = forms.stiffness.iter().map(|a| &phit * a.mul_mat(phi)).collect();
        self.load_r = forms.loads.iter().map(|f| &phit * f).collect();
        let m_d_phi = forms.output.mul_mat(phi);
        self.output_r = &phit * &m_d_phi;
        let g = self.fom.g_ref.interior().into_owned();
        let m_d_g = forms.output.mul_mat(&g);
        self.tracking = &phit * &m_d_g;

        let n_rb = self.dim();
        let steps = g.ncols();
        let a = if n_rb == 0 {
            DMatrix::zeros(0, steps)
        } else {
            Cholesky::new(self.output_r.clone())
                .map(|c| c.solve(&self.tracking))
                .unwrap_or_else(|| DMatrix::zeros(n_rb, steps))
        };
        let rest = &g - phi * &a;
        let m_d_rest = forms.output.mul_mat(&rest);
        self.track_defect = &phit * &m_d_rest;
        self.track_rest = (0..steps).map(|k| rest.column(k).dot(&m_d_rest.column(k))).collect();
        self.track_proj = a;
    }

    /// Procedure: solve the FOM at `mu`, compress the deflated primal and adjoint
    /// snapshots, extend the basis, and rebuild all offline data. The training
    /// buffer is cleared because coefficient vectors change meaning.
    pub fn extend(&mut self, mu: &[f64]) -> Result<Extension> {
        let out = self.fom.eval_output(mu)?;
        let (added_primal, added_adjoint) = self.extend_with(&out.primal, &out.adjoint)?;
        self.extensions.push(mu.to_vec());
        Ok(Extension { fom: out, added_primal, added_adjoint })
    }

    /// Extends the basis with given high-dimensional primal and adjoint trajectories.
    pub fn extend_with(&mut self, primal: &Trajectory, adjoint: &Trajectory) -> Result<(usize, usize)> {
        let old_n = self.dim();
        let added_primal = self.add_snapshots(&primal.interior().into_owned(), 0)?;
        let added_adjoint = self.add_snapshots(&adjoint.interior().into_owned(), 1)?;
        if self.dim() > old_n {
            self.project();
            let fom = self.fom.clone();
            self.residual.extend(&fom, &self.riesz, &self.basis, old_n);
        }
        self.buffer.clear();
        Ok((added_primal, added_adjoint))
    }

    fn add_snapshots(&mut self, snapshots: &DMatrix<f64>, role: usize) -> Result<usize> {
        let kv = &self.fom.forms.energy;
        let energy = kv.mul_mat(snapshots).component_mul(snapshots).sum();
        if !(energy > 0.0) {
            return Ok(0);
        }
        let reference = &mut self.reference_energy[role];
        *reference = reference.max(energy);
        let rel = if role == 0 { self.options.eps_pod } else { self.options.eps_pod_adjoint };
        let eps = rel * *reference;
        let mut pending = deflate(snapshots, &self.basis, kv);
        let mut added = 0;
        for _round in 0..=self.options.refinement_rounds {
            let remaining = kv.mul_mat(&pending).component_mul(&pending).sum();
            if remaining < eps {
                break;
            }
            let chunks: Vec<DMatrix<f64>> = (0..pending.ncols())
                .step_by(self.options.chunk_size)
                .map(|s| pending.columns(s, self.options.chunk_size.min(pending.ncols() - s)).into_owned())
                .collect();
            let pod = hapod(&chunks, kv, eps, self.options.omega)?;
            let fresh = orthonormalize_against(kv, &self.basis, &pod.modes, 1e-8);
            if fresh.ncols() == 0 {
                break;
            }
            let mut basis = DMatrix::zeros(self.basis.nrows(), self.basis.ncols() + fresh.ncols());
            basis.columns_mut(0, self.basis.ncols()).copy_from(&self.basis);
            basis.columns_mut(self.basis.ncols(), fresh.ncols()).copy_from(&fresh);
            self.basis = basis;
            added += fresh.ncols();
            pending = deflate(&pending, &fresh, kv);
        }
        Ok(added)
    }

    fn check(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.fom.num_parameters() || mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput(format!("parameter {mu:?} has wrong dimension or is not finite")));
        }
        Ok(())
    }

    /// `A_r(μ) = Σ Θ_q(μ) A_r^q`.
    pub fn stiffness_at(&self, mu: &[f64]) -> DMatrix<f64> {
        let theta = self.fom.forms.theta_a(mu);
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for (t, aq) in theta.iter().zip(&self.stiff_r) {
            a += aq * *t;
        }
        a
    }

    pub fn load_at(&self, mu: &[f64]) -> DVector<f64> {
        let theta = self.fom.forms.theta_f(mu);
        let mut f = DVector::zeros(self.dim());
        for (t, fq) in theta.iter().zip(&self.load_r) {
            f += fq * *t;
        }
        f
    }

    fn system(&self, mu: &[f64]) -> Result<Cholesky<f64, Dyn>> {
        let s = &self.mass_r / self.fom.time.dt + self.stiffness_at(mu);
        Cholesky::new(s).ok_or_else(|| Error::SingularSystem("reduced system is not positive definite".into()))
    }

    /// Reduced primal trajectory.
    pub fn solve_primal(&self, mu: &[f64]) -> Result<Trajectory> {
        self.check(mu)?;
        let steps = self.fom.time.steps;
        let mut u = Trajectory::zeros(Role::Primal, self.dim(), steps);
        if self.dim() == 0 {
            return Ok(u);
        }
        let chol = self.system(mu)?;
        let f = self.load_at(mu);
        let m_dt = &self.mass_r / self.fom.time.dt;
        let mut x = DVector::zeros(self.dim());
        for k in 1..=steps {
            x.gemv(1.0, &m_dt, &u.at(k - 1), 0.0);
            x.axpy(self.fom.forcing[k], &f, 1.0);
            chol.solve_mut(&mut x);
            u.set(k, &x);
        }
        Ok(u)
    }

    /// Reduced adjoint trajectory for the right-hand side defined by `u`.
    pub fn solve_adjoint(&self, mu: &[f64], u: &Trajectory) -> Result<Trajectory> {
        self.check(mu)?;
        let steps = self.fom.time.steps;
        if u.dim() != self.dim() || u.steps() != steps {
            return Err(Error::DimensionMismatch("reduced primal trajectory does not match the basis".into()));
        }
        let mut p = Trajectory::zeros(Role::Adjoint, self.dim(), steps);
        if self.dim() == 0 {
            return Ok(p);
        }
        let chol = self.system(mu)?;
        let m_dt = &self.mass_r / self.fom.time.dt;
        // Tracking right-hand sides `2Φᵀ M_D (Φu − g)` for all steps, split
        // like the objective so that no large terms cancel.
        let mut rhs = &self.output_r * (u.interior() - &self.track_proj) - &self.track_defect;
        rhs *= 2.0;
        let mut x = DVector::zeros(self.dim());
        for k in (1..=steps).rev() {
            x.copy_from(&rhs.column(k - 1));
            x.gemv(1.0, &m_dt, &p.at(k + 1), 1.0);
            chol.solve_mut(&mut x);
            p.set(k, &x);
        }
        Ok(p)
    }

    /// Objective for a reduced primal trajectory, evaluated as
    /// `Δt Σ_k [(u−a)ᵀD_r(u−a) − 2(u−a)ᵀ(L − D_r a) + ‖g − Φa‖²_D] + λR(μ)`,
    /// which equals `Δt Σ_k [uᵀD_r u − 2Lᵀu + ‖g‖²_D] + λR(μ)` without the
    /// cancellation between the large tracking terms.
    pub fn objective(&self, mu: &[f64], u: &Trajectory) -> f64 {
        let mut misfit: f64 = self.track_rest.iter().sum();
        if self.dim() > 0 {
            let w = u.interior() - &self.track_proj;
            let dw = &self.output_r * &w;
            misfit += w.dot(&dw) - 2.0 * w.dot(&self.track_defect);
        }
        self.fom.time.dt * misfit + self.fom.regularization(mu)
    }

    /// `Δt Σ_k [b(t^k) ∂_i f_r·p^k − ∂_i a_r(u^k, p^k)] + λ ∂_i R`.
    pub fn gradient(&self, mu: &[f64], u: &Trajectory, p: &Trajectory) -> Vec<f64> {
        let forms = &self.fom.forms;
        let mut grad = self.fom.regularization_gradient(mu);
        if self.dim() == 0 {
            return grad;
        }
        let ui = u.interior();
        let pi = p.interior();
        let b = DVector::from_row_slice(&self.fom.forcing[1..]);
        for (i, g) in grad.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, fq) in forms.load_coefficients.iter().zip(&self.load_r) {
                let d = c.derivative(i);
                if d != 0.0 {
                    acc += d * (fq.transpose() * pi).transpose().dot(&b);
                }
            }
            for (c, aq) in forms.stiffness_coefficients.iter().zip(&self.stiff_r) {
                let d = c.derivative(i);
                if d != 0.0 {
                    acc -= d * (aq * pi).component_mul(&ui).sum();
                }
            }
            *g += self.fom.time.dt * acc;
        }
        grad
    }

    /// RB objective and gradient with the trajectories behind them.
    pub fn eval_output(&self, mu: &[f64]) -> Result<RbOutput> {
        let primal = self.solve_primal(mu)?;
        let adjoint = self.solve_adjoint(mu, &primal)?;
        let j = self.objective(mu, &primal);
        let grad = self.gradient(mu, &primal, &adjoint);
        Ok(RbOutput { j, grad, primal, adjoint })
    }

    /// Stores a reduced primal solution for kernel training.
    pub fn push_training(&mut self, mu: &[f64], u: &Trajectory) -> Result<()> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "training trajectory has dimension {}, basis {}",
                u.dim(),
                self.dim()
            )));
        }
        self.buffer.push(mu.to_vec(), u.coeffs.clone())
    }

    /// High-dimensional trajectory `Φ c`.
    pub fn reconstruct(&self, t: &Trajectory) -> Trajectory {
        Trajectory { role: t.role, coeffs: &self.basis * &t.coeffs }
    }

    /// `‖ΦᵀK_VΦ − I‖_max`.
    pub fn orthonormality_defect(&self) -> f64 {
        crate::numerics::orthonormality_defect(&self.fom.forms.energy, &self.basis)
    }

    /// Copy restricted to the first `n` basis vectors (hierarchical
    /// truncation), with its offline data rebuilt and an empty buffer.
    pub fn truncated(&self, n: usize) -> RbModel {
        let mut out = self.clone();
        out.basis = self.basis.columns(0, n.min(self.dim())).into_owned();
        out.project();
        let mut residual = ResidualOffline::new(&self.fom, &self.riesz);
        residual.extend(&self.fom, &self.riesz, &out.basis, 0);
        out.residual = residual;
        out.buffer = TrainingBuffer::new(self.options.n_train);
        out
    }

    /// Replaces the basis without any checks and rebuilds the offline data.
    /// Exists for fault-injection checks of the validation suite.
    pub fn corrupt_basis(&mut self, f: impl FnOnce(&mut DMatrix<f64>)) {
        f(&mut self.basis);
        self.project();
        let fom = self.fom.clone();
        let mut residual = ResidualOffline::new(&fom, &self.riesz);
        residual.extend(&fom, &self.riesz, &self.basis, 0);
        self.residual = residual;
    }
}
