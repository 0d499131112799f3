use crate::error::Result;
use crate::fom::ParameterBox;

/// Step-size rule for one backtracking search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub alpha0: f64,
    pub kappa: f64,
    pub alpha_arm: f64,
    /// Minimum step length; `None` disables the cutoff.
    pub cutoff: Option<f64>,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Accepted { mu: Vec<f64>, j: f64, grad: Vec<f64>, k: usize },
    NoProgress,
}

/// Projected backtracking `μ(k) = P(μ + α₀κ^k d)` with the Armijo-type test
/// `J(μ) − J(μ(k)) ≥ α_arm/(α₀κ^k)·‖μ − μ(k)‖²`.
///
/// `eval` returns `None` for a candidate that must be skipped (trust-region
/// membership failure); the search then continues with the next `k`.
pub fn backtrack(
    mu: &[f64],
    j: f64,
    d: &[f64],
    rule: &LineSearch,
    bounds: &ParameterBox,
    mut eval: impl FnMut(&[f64]) -> Result<Option<(f64, Vec<f64>)>>,
) -> Result<Outcome> {
    if d.iter().all(|&v| v == 0.0) {
        return Ok(Outcome::NoProgress);
    }
    for k in 0..rule.max_steps {
        let step = rule.alpha0 * rule.kappa.powi(k as i32);
        let trial: Vec<f64> = mu.iter().zip(d).map(|(m, di)| m + step * di).collect();
        let cand = bounds.project(&trial);
        let dist2: f64 = mu.iter().zip(&cand).map(|(a, b)| (a - b).powi(2)).sum();
        let dist = dist2.sqrt();
        if dist == 0.0 || rule.cutoff.is_some_and(|c| dist < c) {
            return Ok(Outcome::NoProgress);
        }
        let Some((jc, gc)) = eval(&cand)? else { continue };
        if j - jc >= rule.alpha_arm / step * dist2 {
            return Ok(Outcome::Accepted { mu: cand, j: jc, grad: gc, k });
        }
    }
    Ok(Outcome::NoProgress)
}
