use nalgebra::DMatrix;

use super::{backtrack, Fidelity, HistoryEvent, bfgs_direction, bfgs_update, criticality, InnerExit, LineSearch, Outcome, Session, Variant};
use crate::error::Result;
use crate::ml_kernel::KernelModel;
use crate::rb::{RbModel, RbOutput};

pub(crate) struct InnerResult {
    pub mu: Vec<f64>,
    /// `J^(i)(μ^(i))`.
    pub j_start: f64,
    /// Surrogate value at the first accepted iterate (approximate generalized
    /// Cauchy point); `None` if not even one step was accepted.
    pub agc: Option<f64>,
    /// RB output at `mu`, when the last query there was an RB one.
    pub rb_at_end: Option<RbOutput>,
    pub steps: usize,
    pub exit: InnerExit,
}

#[derive(Clone, Copy, PartialEq)]
enum Level {
    Rb,
    Ml,
}

/// Trust-region state handed to one sub-problem.
pub(crate) struct Region {
    pub iteration: usize,
    pub eps_l: f64,
    pub alpha_l: f64,
}

/// Solves the surrogate sub-problem from `mu0` inside the trust region
/// `{Δ_r ≤ eps_l}`. `h_start` carries the inverse-Hessian approximation in
/// and out when curvature is reused.
pub(crate) fn inner_loop(
    s: &mut Session,
    rb: &mut RbModel,
    mu0: &[f64],
    cached: Option<RbOutput>,
    region: &Region,
    h_start: &mut DMatrix<f64>,
) -> Result<InnerResult> {
    let Region { iteration, eps_l, alpha_l } = *region;
    let alpha0 = s.config.alpha0.min(alpha_l);
    let config = s.config;
    let variant = s.variant;
    let bounds = &s.problem.fom.bounds;
    let p = mu0.len();

    let first = match cached {
        Some(out) => out,
        None => s.rb_eval(rb, mu0)?,
    };
    let mut mu = mu0.to_vec();
    let j_start = first.j;
    let mut j = first.j;
    let mut g = first.grad.clone();
    let mut at_current = Some(first);
    let mut h = if s.config.reuse_curvature { h_start.clone() } else { DMatrix::identity(p, p) };
    let mut d = bfgs_direction(&h, &g);
    let mut kernel: Option<KernelModel> = None;
    let mut agc = None;
    let mut use_ml = true;
    let mut no_progress = false;
    let mut l = 0;

    let exit = loop {
        if l > 0 && criticality(&mu, &g, bounds) <= config.tau_sub {
            break InnerExit::Converged;
        }
        if l >= config.max_inner {
            break InnerExit::Budget;
        }
        if variant.relaxed() && (l % config.l_check == 0 || no_progress) {
            let out = match at_current.take() {
                Some(out) => out,
                None => s.rb_eval(rb, &mu)?,
            };
            let relative = s.estimate(rb, &mu, &out)?.relative;
            at_current = Some(out);
            if relative > eps_l {
                break InnerExit::TrustRegion;
            }
        }
        no_progress = false;

        let level = if variant.uses_ml() && use_ml && l >= config.l_warmup && kernel.is_some() {
            Level::Ml
        } else {
            Level::Rb
        };
        let rule = LineSearch {
            alpha0,
            kappa: config.kappa,
            alpha_arm: config.alpha_arm,
            cutoff: (variant.relaxed() && l > 0).then_some(config.eps_cutoff),
            max_steps: config.max_backtrack,
        };
        let mut last_rb: Option<RbOutput> = None;
        let outcome = backtrack(&mu, j, &d, &rule, bounds, |cand| match level {
            Level::Ml => {
                let out = s.ml_eval(kernel.as_ref().expect("kernel trained"), rb, cand)?;
                Ok(Some((out.j, out.grad)))
            }
            Level::Rb => {
                let out = s.rb_eval(rb, cand)?;
                if variant == Variant::TrRbOpt && s.estimate(rb, cand, &out)?.relative > eps_l {
                    return Ok(None);
                }
                let jg = (out.j, out.grad.clone());
                last_rb = Some(out);
                Ok(Some(jg))
            }
        })?;

        match outcome {
            Outcome::NoProgress if level == Level::Ml => {
                use_ml = false;
                no_progress = true;
                let out = match at_current.take() {
                    Some(out) => out,
                    None => s.rb_eval(rb, &mu)?,
                };
                j = out.j;
                g = out.grad.clone();
                at_current = Some(out);
                h = DMatrix::identity(p, p);
                d = bfgs_direction(&h, &g);
            }
            Outcome::NoProgress => break InnerExit::NoProgress,
            Outcome::Accepted { mu: next, j: jn, grad: gn, .. } => {
                s.record.inner_decay.push((j, jn));
                if l == 0 {
                    agc = Some(jn);
                }
                let step: Vec<f64> = next.iter().zip(&mu).map(|(a, b)| a - b).collect();
                let dy: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
                h = bfgs_update(&h, &step, &dy);
                at_current = if level == Level::Rb { last_rb } else { None };
                (mu, j, g) = (next, jn, gn);
                d = bfgs_direction(&h, &g);
                use_ml = true;
                if variant.uses_ml() && rb.buffer.is_dirty() && !rb.buffer.is_empty() {
                    kernel = Some(s.train(rb)?);
                }
                l += 1;
                s.record.history.push(HistoryEvent {
                    outer: iteration,
                    inner: l,
                    fidelity: if level == Level::Ml { Fidelity::Ml } else { Fidelity::Rb },
                    j,
                    criticality: criticality(&mu, &g, bounds),
                    eps_l: Some(eps_l),
                    alpha_l: Some(alpha_l),
                });
            }
        }
    };

    *h_start = h;
    Ok(InnerResult { mu, j_start, agc, rb_at_end: at_current, steps: l, exit })
}
