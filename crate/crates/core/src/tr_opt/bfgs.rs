use nalgebra::{DMatrix, DVector};

use crate::fom::ParameterBox;

/// Componentwise clamp onto the parameter box.
pub fn project_box(mu: &[f64], bounds: &ParameterBox) -> Vec<f64> {
    bounds.project(mu)
}

/// First-order criticality `‖μ − P(μ − g)‖`.
pub fn criticality(mu: &[f64], g: &[f64], bounds: &ParameterBox) -> f64 {
    let shifted: Vec<f64> = mu.iter().zip(g).map(|(m, gi)| m - gi).collect();
    let projected = bounds.project(&shifted);
    mu.iter().zip(&projected).map(|(m, p)| (m - p).powi(2)).sum::<f64>().sqrt()
}

/// Normalized quasi-Newton direction: `−Hg` when it is a descent direction,
/// `−g` otherwise; zero for a zero gradient.
pub fn bfgs_direction(h: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let gv = DVector::from_column_slice(g);
    let hg = h * &gv;
    let d = if -gv.dot(&hg) < 0.0 { -hg } else { -gv };
    let norm = d.norm();
    if norm > 0.0 && norm.is_finite() {
        (d / norm).iter().copied().collect()
    } else {
        vec![0.0; g.len()]
    }
}

/// Inverse-BFGS update `H' = (I − ρsyᵀ)H(I − ρysᵀ) + ρssᵀ`, `ρ = 1/(sᵀy)`;
/// skipped when the curvature condition fails.
pub fn bfgs_update(h: &DMatrix<f64>, s: &[f64], y: &[f64]) -> DMatrix<f64> {
    let s = DVector::from_column_slice(s);
    let y = DVector::from_column_slice(y);
    let sy = s.dot(&y);
    if !(sy > 1e-14 * s.norm() * y.norm()) {
        return h.clone();
    }
    let rho = 1.0 / sy;
    let n = s.len();
    let left = DMatrix::identity(n, n) - &s * y.transpose() * rho;
    let right = DMatrix::identity(n, n) - &y * s.transpose() * rho;
    left * h * right + &s * s.transpose() * rho
}
