//! Gaussian-kernel surrogate for reduced primal trajectories.
//!
//! The time-vectorized reduced trajectory `u^0..u^K` of length `(K+1)·N` is the
//! output of a vector-valued kernel interpolant with scalar Gaussian kernel
//! `K(x, y) = exp(−w‖x−y‖²)` on parameters mapped affinely onto `[−1, 1]^P`.
//! Training solves `(A + ηI)α = Y` once for all output components.
//!
//! By default the affine map is fitted to the training inputs of each model.
//! Optimization iterates cluster tightly, and under the fixed map of the whole
//! parameter box the nearly flat kernel matrix then has eigenvalues far below
//! `η`, so the regularization alone would spoil the interpolation property.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fom::{ParameterBox, Role, Trajectory};
use crate::numerics::solve_regularized_interpolation;
use crate::rb::{RbModel, TrainingBuffer};

/// How parameters are mapped onto `[−1, 1]^P` before the kernel is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Fixed map of the parameter box.
    Box,
    /// Min–max map of the training inputs of each model; coordinates in
    /// which all inputs coincide use the box width around their common value.
    Training,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSettings {
    pub width: f64,
    pub eta: f64,
    pub normalization: Normalization,
    /// Interpolate deviations from the mean target instead of the targets.
    pub center: bool,
}

impl Default for KernelSettings {
    fn default() -> Self {
        KernelSettings { width: 0.01, eta: 1e-12, normalization: Normalization::Training, center: true }
    }
}

/// ML objective and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct MlOutput {
    pub j: f64,
    pub grad: Vec<f64>,
}

/// Trained kernel interpolant plus the whitened output data for fast objectives.
#[derive(Debug, Clone)]
pub struct KernelModel {
    settings: KernelSettings,
    /// Normalization map: `lower ↦ −1`, `upper ↦ 1`.
    map: ParameterBox,
    /// Normalized centers, one per column.
    centers: DMatrix<f64>,
    /// Coefficient blocks, one time-vectorized block per row.
    alpha: DMatrix<f64>,
    /// Training targets, same layout.
    targets: DMatrix<f64>,
    /// Mean target (zero unless centering is enabled).
    offset: DVector<f64>,
    n_rb: usize,
    steps: usize,
    /// `Lᵀ α_i^k` for every center (row `i`, block `k−1`), with `D_r = LLᵀ`.
    whitened: DMatrix<f64>,
    /// `Lᵀ(a^k − ū^k)` stacked over `k = 1..K`, with `ū` the offset.
    whitened_proj: DVector<f64>,
    /// `L⁻¹(L^k − D_r a^k)` stacked over `k = 1..K`.
    whitened_defect: DVector<f64>,
    /// `Δt Σ_k ‖g^k − Φa^k‖²_D`.
    rest: f64,
    dt: f64,
    regularization_weight: f64,
    mu_hat: Vec<f64>,
}

impl KernelModel {
    /// Fits the interpolant to the buffer contents.
    pub fn train(buffer: &TrainingBuffer, rb: &RbModel, bounds: &ParameterBox, settings: KernelSettings) -> Result<Self> {
        if buffer.is_empty() {
            return Err(Error::InvalidInput("cannot train a kernel model on an empty buffer".into()));
        }
        if !(settings.width > 0.0) || !(settings.eta >= 0.0) {
            return Err(Error::InvalidInput("kernel width must be positive and eta nonnegative".into()));
        }
        let fom = rb.fom();
        let n_rb = rb.dim();
        let steps = fom.time.steps;
        let p = bounds.dim();
        let len = (steps + 1) * n_rb;
        let m = buffer.len();
        let mut targets = DMatrix::zeros(m, len);
        for (i, (mu, coeffs)) in buffer.iter().enumerate() {
            if coeffs.shape() != (n_rb, steps + 1) || mu.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "training entry {:?} does not match basis dimension {n_rb}",
                    coeffs.shape()
                )));
            }
            targets.row_mut(i).copy_from(&DVector::from_column_slice(coeffs.as_slice()).transpose());
        }
        let map = match settings.normalization {
            Normalization::Box => bounds.clone(),
            Normalization::Training => training_map(buffer, bounds)?,
        };
        let mut centers = DMatrix::zeros(p, m);
        for (i, (mu, _)) in buffer.iter().enumerate() {
            centers.set_column(i, &normalize(&map, mu));
        }
        let gram = DMatrix::from_fn(m, m, |i, j| kernel(settings.width, &centers.column(i), &centers.column(j)));
        let offset = if settings.center {
            targets.row_mean().transpose()
        } else {
            DVector::zeros(len)
        };
        let mut centered = targets.clone();
        for mut row in centered.row_iter_mut() {
            row -= offset.transpose();
        }
        let alpha = solve_regularized_interpolation(&gram, settings.eta, &centered)?;

        let (proj, defect, rest) = rb.tracking_projection();
        let chol = if n_rb > 0 {
            Some(rb.output_r.clone().cholesky().ok_or_else(|| {
                Error::SingularSystem("projected output matrix is not positive definite".into())
            })?)
        } else {
            None
        };
        let mut whitened = DMatrix::zeros(m, steps * n_rb);
        // The whitened offset is folded into the projection term.
        let mut whitened_proj = DVector::zeros(steps * n_rb);
        let mut whitened_defect = DVector::zeros(steps * n_rb);
        if let Some(chol) = &chol {
            let lt = chol.l().transpose();
            for k in 1..=steps {
                let block = (k - 1) * n_rb;
                for i in 0..m {
                    let u = alpha.row(i).columns(k * n_rb, n_rb).transpose();
                    whitened.row_mut(i).columns_mut(block, n_rb).copy_from(&(&lt * u).transpose());
                }
                let shifted = proj.column(k - 1) - offset.rows(k * n_rb, n_rb);
                whitened_proj.rows_mut(block, n_rb).copy_from(&(&lt * shifted));
                let mut e = defect.column(k - 1).into_owned();
                chol.l().solve_lower_triangular_mut(&mut e);
                whitened_defect.rows_mut(block, n_rb).copy_from(&e);
            }
        }
        let dt = fom.time.dt;
        Ok(KernelModel {
            settings,
            map,
            centers,
            alpha,
            targets,
            offset,
            n_rb,
            steps,
            whitened,
            whitened_proj,
            whitened_defect,
            rest: dt * rest.iter().sum::<f64>(),
            dt,
            regularization_weight: fom.lambda,
            mu_hat: fom.mu_hat.clone(),
        })
    }

    pub fn num_centers(&self) -> usize {
        self.centers.ncols()
    }

    pub fn basis_dim(&self) -> usize {
        self.n_rb
    }

    pub fn settings(&self) -> KernelSettings {
        self.settings
    }

    /// The normalization map in use.
    pub fn normalization_map(&self) -> &ParameterBox {
        &self.map
    }

    fn kernel_vector(&self, mu: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let x = normalize(&self.map, mu);
        let kv = DVector::from_iterator(
            self.num_centers(),
            self.centers.column_iter().map(|c| kernel(self.settings.width, &x.as_view(), &c)),
        );
        (x, kv)
    }

    /// Kernel vector `k(μ)` and its parameter derivatives.
    fn weights(&self, mu: &[f64], with_grad: bool) -> (DVector<f64>, Vec<DVector<f64>>) {
        let (x, kv) = self.kernel_vector(mu);
        let mut dc = Vec::new();
        if with_grad {
            for j in 0..self.map.dim() {
                let scale = 2.0 / (self.map.upper[j] - self.map.lower[j]);
                let dk = DVector::from_iterator(
                    self.num_centers(),
                    self.centers
                        .column_iter()
                        .zip(kv.iter())
                        .map(|(cen, k)| -2.0 * self.settings.width * (x[j] - cen[j]) * k * scale),
                );
                dc.push(dk);
            }
        }
        (kv, dc)
    }

    fn to_trajectory(&self, flat: DVector<f64>) -> Trajectory {
        let mut coeffs = DMatrix::from_column_slice(self.n_rb, self.steps + 1, flat.as_slice());
        coeffs.column_mut(0).fill(0.0);
        Trajectory { role: Role::Primal, coeffs }
    }

    /// Predicted reduced trajectory; the initial column is exactly zero.
    pub fn predict(&self, mu: &[f64]) -> Trajectory {
        let (c, _) = self.weights(mu, false);
        self.to_trajectory(self.alpha.tr_mul(&c) + &self.offset)
    }

    /// Parameter derivatives of the prediction, one trajectory per parameter.
    pub fn predict_grad(&self, mu: &[f64]) -> Vec<Trajectory> {
        let (_, dc) = self.weights(mu, true);
        dc.into_iter().map(|d| self.to_trajectory(self.alpha.tr_mul(&d))).collect()
    }

    /// Largest relative error of the predictions at the training points.
    pub fn training_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.num_centers() {
            let kv = DVector::from_iterator(
                self.num_centers(),
                self.centers.column_iter().map(|c| kernel(self.settings.width, &self.centers.column(i), &c)),
            );
            let pred = self.alpha.tr_mul(&kv) + &self.offset;
            let target = self.targets.row(i).transpose();
            let err = (&pred - &target).norm();
            let scale = target.norm();
            worst = worst.max(if scale > 0.0 { err / scale } else { err });
        }
        worst
    }

    /// Relative deviation of [`predict_grad`](Self::predict_grad) from central
    /// differences at `mu`. The step is `rel_step` in normalized coordinates,
    /// i.e. `rel_step · (U_j − L_j)/2` in parameter units.
    pub fn derivative_check(&self, mu: &[f64], rel_step: f64) -> f64 {
        let analytic = self.predict_grad(mu);
        let mut worst: f64 = 0.0;
        for (j, a) in analytic.iter().enumerate() {
            let h = rel_step * 0.5 * (self.map.upper[j] - self.map.lower[j]);
            let mut plus = mu.to_vec();
            let mut minus = mu.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let fd = (self.predict(&plus).coeffs - self.predict(&minus).coeffs) / (2.0 * h);
            let scale = a.coeffs.norm().max(fd.norm());
            let err = (&a.coeffs - fd).norm();
            worst = worst.max(if scale > 0.0 { err / scale } else { err });
        }
        worst
    }

    /// ML objective and chain-rule gradient
    /// `Δt Σ_k [2d(u^k, ∂u^k) + l^k(∂u^k)] + λ∂R`, evaluated in the whitened output
    /// space `v^k = Lᵀ(u^k − a^k)`. With `v = Wᵀk − p̂` the gradient reduces to
    /// `2Δt ∂kᵀW(v − ê)`, one long product shared by all directions.
    pub fn eval_output_ml(&self, rb: &RbModel, mu: &[f64]) -> Result<MlOutput> {
        if rb.dim() != self.n_rb {
            return Err(Error::DimensionMismatch(format!(
                "kernel model trained for basis dimension {}, basis has {}",
                self.n_rb,
                rb.dim()
            )));
        }
        let (c, dc) = self.weights(mu, true);
        let v = self.whitened.tr_mul(&c) - &self.whitened_proj;
        let misfit = v.norm_squared() - 2.0 * v.dot(&self.whitened_defect);
        let reg: f64 = mu.iter().zip(&self.mu_hat).map(|(m, h)| (m - h).powi(2)).sum();
        let j = self.dt * misfit + self.rest + self.regularization_weight * reg;
        let z = &self.whitened * (&v - &self.whitened_defect);
        let grad = dc
            .iter()
            .enumerate()
            .map(|(i, d)| {
                self.dt * 2.0 * d.dot(&z) + 2.0 * self.regularization_weight * (mu[i] - self.mu_hat[i])
            })
            .collect();
        Ok(MlOutput { j, grad })
    }
}

fn training_map(buffer: &TrainingBuffer, bounds: &ParameterBox) -> Result<ParameterBox> {
    let p = bounds.dim();
    let mut lower = vec![f64::INFINITY; p];
    let mut upper = vec![f64::NEG_INFINITY; p];
    for (mu, _) in buffer.iter() {
        for j in 0..p {
            lower[j] = lower[j].min(mu[j]);
            upper[j] = upper[j].max(mu[j]);
        }
    }
    for j in 0..p {
        let width = bounds.upper[j] - bounds.lower[j];
        if !(upper[j] - lower[j] > 1e-12 * width) {
            let mid = 0.5 * (upper[j] + lower[j]);
            lower[j] = mid - 0.5 * width;
            upper[j] = mid + 0.5 * width;
        }
    }
    ParameterBox::new(lower, upper)
}

/// Affine map of a box onto `[−1, 1]^P`.
pub fn normalize(bounds: &ParameterBox, mu: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        mu.len(),
        mu.iter().zip(bounds.lower.iter().zip(&bounds.upper)).map(|(m, (l, u))| 2.0 * (m - l) / (u - l) - 1.0),
    )
}

/// Gaussian kernel `exp(−w‖x−y‖²)`.
pub fn kernel<'a, 'b>(
    width: f64,
    x: &nalgebra::DVectorView<'a, f64>,
    y: &nalgebra::DVectorView<'b, f64>,
) -> f64 {
    (-width * (x - y).norm_squared()).exp()
}
