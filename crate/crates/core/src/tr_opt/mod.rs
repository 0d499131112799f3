//! Trust-region optimization over a hierarchy of models.
//!
//! The outer loop enriches a reduced basis at accepted iterates and decides
//! acceptance from certified objective bounds; the inner loop runs a projected
//! BFGS method on the current surrogate (RB, optionally replaced by a kernel
//! model after a warm-up) inside a relaxed trust region.

mod backtrack;
mod bfgs;
mod inner;
mod record;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;

pub use backtrack::{backtrack, LineSearch, Outcome};
pub use bfgs::{bfgs_direction, bfgs_update, criticality, project_box};
pub use record::{Fidelity, HistoryEvent, InnerExit, OuterDecision, OuterStep, Query, RunRecord, Status, Training};

use crate::error::{Error, Result};
use crate::estimators::{est_output_rb, RbErrorBounds};
use crate::fom::{FomModel, FomOutput};
use crate::ml_kernel::{KernelModel, KernelSettings, MlOutput};
use crate::numerics::EnvelopeCholesky;
use crate::rb::{RbModel, RbOptions, RbOutput};

/// Algorithm parameters.
#[derive(Debug, Clone, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrConfig {
    /// Outer (high-fidelity) criticality tolerance.
    pub tau: f64,
    /// Inner (surrogate) criticality tolerance.
    pub tau_sub: f64,
    /// Initial trust-region radius on the relative objective bound.
    pub eps_l0: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Largest initial backtracking step.
    pub alpha0: f64,
    /// Initial cap on the backtracking step; shrinks with the radius.
    pub alpha_l0: f64,
    pub kappa: f64,
    pub alpha_arm: f64,
    pub eps_cutoff: f64,
    pub l_check: usize,
    pub l_warmup: usize,
    pub max_outer: usize,
    pub max_inner: usize,
    pub max_backtrack: usize,
    /// Start each sub-problem from the previous inverse-Hessian approximation
    /// instead of the identity.
    pub reuse_curvature: bool,
    /// Check kernel derivatives against finite differences after each training.
    pub kernel_diagnostics: bool,
}

impl Default for TrConfig {
    fn default() -> Self {
        TrConfig {
            tau: 1e-3,
            tau_sub: 5e-4,
            eps_l0: 0.1,
            beta1: 0.95,
            beta2: 0.95,
            alpha0: 1e-3,
            alpha_l0: 0.01,
            kappa: 0.5,
            alpha_arm: 1e-6,
            eps_cutoff: 1e-6,
            l_check: 25,
            l_warmup: 3,
            max_outer: 50,
            max_inner: 500,
            max_backtrack: 30,
            reuse_curvature: true,
            kernel_diagnostics: false,
        }
    }
}

impl TrConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("tau_sub", self.tau_sub),
            ("eps_l0", self.eps_l0),
            ("alpha0", self.alpha0),
            ("alpha_l0", self.alpha_l0),
            ("alpha_arm", self.alpha_arm),
            ("eps_cutoff", self.eps_cutoff),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("kappa", self.kappa)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.l_check == 0 || self.max_backtrack == 0 {
            return Err(Error::Config("l_check and max_backtrack must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Projected BFGS on the high-fidelity model.
    FomOpt,
    /// Classical trust region: every trial point must satisfy the bound.
    TrRbOpt,
    /// Relaxed trust region, checked periodically.
    RelaxedTrRbOpt,
    /// Relaxed trust region with the kernel surrogate after warm-up.
    RelaxedTrRbMlOpt,
}

impl Variant {
    pub const ALL: [Variant; 4] =
        [Variant::FomOpt, Variant::TrRbOpt, Variant::RelaxedTrRbOpt, Variant::RelaxedTrRbMlOpt];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FomOpt => "FomOpt",
            Variant::TrRbOpt => "TrRbOpt",
            Variant::RelaxedTrRbOpt => "RelaxedTrRbOpt",
            Variant::RelaxedTrRbMlOpt => "RelaxedTrRbMlOpt",
        }
    }

    fn relaxed(self) -> bool {
        matches!(self, Variant::RelaxedTrRbOpt | Variant::RelaxedTrRbMlOpt)
    }

    fn uses_ml(self) -> bool {
        self == Variant::RelaxedTrRbMlOpt
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown variant '{s}'")))
    }
}

/// Shared, immutable ingredients of every run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub fom: Arc<FomModel>,
    pub riesz: Arc<EnvelopeCholesky>,
    pub rb: RbOptions,
    pub kernel: KernelSettings,
}

impl Problem {
    pub fn new(fom: Arc<FomModel>, rb: RbOptions, kernel: KernelSettings) -> Result<Self> {
        let riesz = Arc::new(EnvelopeCholesky::new(&fom.forms.energy)?);
        Ok(Problem { fom, riesz, rb, kernel })
    }
}

/// Runs one variant from `mu0`.
pub fn run_variant(problem: &Problem, config: &TrConfig, variant: Variant, mu0: &[f64]) -> Result<RunRecord> {
    config.validate()?;
    let bounds = &problem.fom.bounds;
    if mu0.len() != bounds.dim() || !bounds.contains(mu0) {
        return Err(Error::InvalidInput(format!("start {mu0:?} is not in the parameter box")));
    }
    match variant {
        Variant::FomOpt => fom_opt(problem, config, mu0),
        _ => tr_opt(problem, config, variant, mu0),
    }
}

/// Bookkeeping shared by the optimizers: timed, counted model queries.
pub(crate) struct Session<'a> {
    pub problem: &'a Problem,
    pub config: &'a TrConfig,
    pub variant: Variant,
    pub record: RunRecord,
}

impl<'a> Session<'a> {
    fn new(problem: &'a Problem, config: &'a TrConfig, variant: Variant, mu0: &[f64]) -> Self {
        Session { problem, config, variant, record: RunRecord::new(variant, mu0) }
    }

    fn log(&mut self, fidelity: Fidelity, start: Instant) {
        self.record.queries.push(Query { fidelity, time_s: start.elapsed().as_secs_f64() });
    }

    pub fn fom_eval(&mut self, mu: &[f64]) -> Result<FomOutput> {
        let t = Instant::now();
        let out = self.problem.fom.eval_output(mu)?;
        self.log(Fidelity::Fom, t);
        Ok(out)
    }

    pub fn rb_eval(&mut self, rb: &mut RbModel, mu: &[f64]) -> Result<RbOutput> {
        let t = Instant::now();
        let out = rb.eval_output(mu)?;
        self.log(Fidelity::Rb, t);
        if self.variant.uses_ml() {
            rb.push_training(mu, &out.primal)?;
        }
        Ok(out)
    }

    pub fn ml_eval(&mut self, kernel: &KernelModel, rb: &RbModel, mu: &[f64]) -> Result<MlOutput> {
        let t = Instant::now();
        let out = kernel.eval_output_ml(rb, mu)?;
        self.log(Fidelity::Ml, t);
        Ok(out)
    }

    pub fn estimate(&mut self, rb: &RbModel, mu: &[f64], out: &RbOutput) -> Result<RbErrorBounds> {
        let t = Instant::now();
        let constants = self.problem.fom.constants(mu)?;
        let bounds = est_output_rb(rb, mu, &out.primal, &out.adjoint, out.j, &constants)?;
        self.record.estimates += 1;
        self.record.estimate_time_s += t.elapsed().as_secs_f64();
        Ok(bounds)
    }

    /// Enriches the basis at `mu`; the high-fidelity solve is logged as a query.
    pub fn extend(&mut self, rb: &mut RbModel, mu: &[f64]) -> Result<FomOutput> {
        let fom = self.fom_eval(mu)?;
        let t = Instant::now();
        rb.extend_with(&fom.primal, &fom.adjoint)?;
        rb.buffer.clear();
        rb.buffer.mark_clean();
        self.record.extension_time_s += t.elapsed().as_secs_f64();
        Ok(fom)
    }

    pub fn train(&mut self, rb: &mut RbModel) -> Result<KernelModel> {
        let t = Instant::now();
        let model = KernelModel::train(&rb.buffer, rb, &self.problem.fom.bounds, self.problem.kernel)?;
        let error = model.training_error();
        let time_s = t.elapsed().as_secs_f64();
        rb.buffer.mark_clean();
        let derivative_error = self.config.kernel_diagnostics.then(|| {
            let newest = rb.buffer.iter().last().map(|(mu, _)| mu.clone()).unwrap_or_default();
            model.derivative_check(&newest, 1e-3)
        });
        self.record.trainings.push(Training { centers: model.num_centers(), error, derivative_error, time_s });
        Ok(model)
    }
}

fn fom_opt(problem: &Problem, config: &TrConfig, mu0: &[f64]) -> Result<RunRecord> {
    let start = Instant::now();
    let bounds = &problem.fom.bounds;
    let mut s = Session::new(problem, config, Variant::FomOpt, mu0);
    let mut mu = mu0.to_vec();
    let first = s.fom_eval(&mu)?;
    let (mut j, mut g) = (first.j, first.grad);
    let p = mu.len();
    let mut h = DMatrix::identity(p, p);
    let mut status = Status::MaxIterations;
    let rule = LineSearch {
        alpha0: config.alpha0,
        kappa: config.kappa,
        alpha_arm: config.alpha_arm,
        cutoff: None,
        max_steps: config.max_backtrack,
    };
    let mut iters = 0;
    s.record.history.push(fom_event(0, j, criticality(&mu, &g, bounds)));
    while iters < config.max_inner {
        if criticality(&mu, &g, bounds) <= config.tau {
            status = Status::Converged;
            break;
        }
        let d = bfgs_direction(&h, &g);
        let outcome = backtrack(&mu, j, &d, &rule, bounds, |cand| {
            let out = s.fom_eval(cand)?;
            Ok(Some((out.j, out.grad)))
        })?;
        match outcome {
            Outcome::Accepted { mu: next, j: jn, grad: gn, .. } => {
                s.record.inner_decay.push((j, jn));
                let step: Vec<f64> = next.iter().zip(&mu).map(|(a, b)| a - b).collect();
                let dy: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
                h = bfgs_update(&h, &step, &dy);
                (mu, j, g) = (next, jn, gn);
                iters += 1;
                s.record.history.push(fom_event(iters, j, criticality(&mu, &g, bounds)));
            }
            Outcome::NoProgress if h != DMatrix::identity(p, p) => h = DMatrix::identity(p, p),
            Outcome::NoProgress => {
                status = Status::Stalled;
                break;
            }
        }
    }
    let rec = &mut s.record;
    rec.criticality = criticality(&mu, &g, bounds);
    if status == Status::MaxIterations && rec.criticality <= config.tau {
        status = Status::Converged;
    }
    rec.mu = mu;
    rec.j = j;
    rec.status = status;
    rec.outer_iters = iters;
    rec.total_time_s = start.elapsed().as_secs_f64();
    Ok(s.record)
}

fn fom_event(iteration: usize, j: f64, criticality: f64) -> HistoryEvent {
    HistoryEvent { outer: iteration, inner: 0, fidelity: Fidelity::Fom, j, criticality, eps_l: None, alpha_l: None }
}

fn tr_opt(problem: &Problem, config: &TrConfig, variant: Variant, mu0: &[f64]) -> Result<RunRecord> {
    let start = Instant::now();
    let bounds = &problem.fom.bounds;
    let mut s = Session::new(problem, config, variant, mu0);
    let mut rb = RbModel::with_riesz(problem.fom.clone(), problem.riesz.clone(), problem.rb.clone())?;

    let mut mu = mu0.to_vec();
    let first = s.extend(&mut rb, &mu)?;
    let (mut j_fom, mut g_fom) = (first.j, first.grad);
    let mut eps_l = config.eps_l0;
    let mut alpha_l = config.alpha_l0;
    let mut status = Status::MaxIterations;
    // RB output at the current iterate for the current basis, if known.
    let mut cached: Option<RbOutput> = None;
    // J^(i)(μ^(i)) of the last accepted sub-problem, awaiting its successor.
    let mut pending_decay: Option<f64> = None;
    let mut iteration = 0;
    let mut curvature = DMatrix::identity(mu.len(), mu.len());
    let outer_event = |iteration, inner, j, g: &[f64], mu: &[f64], eps_l, alpha_l| HistoryEvent {
        outer: iteration,
        inner,
        fidelity: Fidelity::Fom,
        j,
        criticality: criticality(mu, g, bounds),
        eps_l: Some(eps_l),
        alpha_l: Some(alpha_l),
    };
    s.record.history.push(outer_event(0, 0, j_fom, &g_fom, &mu, eps_l, alpha_l));

    loop {
        if criticality(&mu, &g_fom, bounds) <= config.tau {
            status = Status::Converged;
            break;
        }
        if iteration >= config.max_outer {
            break;
        }
        let region = inner::Region { iteration, eps_l, alpha_l };
        let inner = inner::inner_loop(&mut s, &mut rb, &mu, cached.take(), &region, &mut curvature)?;
        if let Some(before) = pending_decay.take() {
            s.record.outer_decay.push((before, inner.j_start));
        }

        let mut decision = OuterDecision::Rejected;
        if let Some(agc) = inner.agc {
            let out = match inner.rb_at_end {
                Some(out) => out,
                None => s.rb_eval(&mut rb, &inner.mu)?,
            };
            let delta = s.estimate(&rb, &inner.mu, &out)?.delta_j;
            if out.j + delta < agc {
                decision = OuterDecision::Accepted;
            } else if out.j - delta <= agc {
                let fom = s.extend(&mut rb, &inner.mu)?;
                let fresh = s.rb_eval(&mut rb, &inner.mu)?;
                decision = if fresh.j <= agc {
                    (j_fom, g_fom) = (fom.j, fom.grad);
                    pending_decay = Some(inner.j_start);
                    mu = inner.mu.clone();
                    cached = Some(fresh);
                    OuterDecision::AcceptedAfterEnrichment
                } else {
                    OuterDecision::RejectedAfterEnrichment
                };
            }
            if decision == OuterDecision::Accepted {
                let fom = s.extend(&mut rb, &inner.mu)?;
                (j_fom, g_fom) = (fom.j, fom.grad);
                pending_decay = Some(inner.j_start);
                mu = inner.mu.clone();
            }
        }
        if matches!(decision, OuterDecision::Rejected | OuterDecision::RejectedAfterEnrichment) {
            eps_l *= config.beta1;
            alpha_l *= config.beta2;
        } else {
            s.record.history.push(outer_event(iteration + 1, 0, j_fom, &g_fom, &mu, eps_l, alpha_l));
        }
        s.record.outer_steps.push(OuterStep {
            iteration,
            mu: mu.clone(),
            inner_steps: inner.steps,
            inner_exit: inner.exit,
            decision,
            eps_l,
            basis_dim: rb.dim(),
        });
        iteration += 1;
    }

    if let Some(before) = pending_decay.take() {
        let after = match cached.take() {
            Some(out) => out.j,
            None => s.rb_eval(&mut rb, &mu)?.j,
        };
        s.record.outer_decay.push((before, after));
    }
    let rec = &mut s.record;
    rec.criticality = criticality(&mu, &g_fom, bounds);
    rec.mu = mu;
    rec.j = j_fom;
    rec.status = status;
    rec.outer_iters = iteration;
    rec.total_time_s = start.elapsed().as_secs_f64();
    Ok(s.record)
}
