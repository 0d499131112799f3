use nalgebra::DMatrix;

use crate::fom::FomModel;
use crate::numerics::{orthonormalize_against, EnvelopeCholesky};

/// Relative size below which an image member counts as already represented.
const IMAGE_DROP_TOL: f64 = 1e-14;

/// Offline data for residual dual norms.
///
/// Riesz representatives (w.r.t. the energy product) of every functional that
/// can appear in a primal or adjoint residual span the image space. An
/// energy-orthonormal basis `Q` of that space is kept, and every functional `ℓ`
/// is stored through its coordinates `Qᵀℓ`; the dual norm of a combination of
/// functionals is then the Euclidean norm of the combined coordinates.
///
/// Members: the load components, `v ↦ a^q(φ_n, v)`, `v ↦ (φ_n, v)_{L²}`,
/// `v ↦ d(φ_n, v)` for every basis vector, and `v ↦ d(g^k, v)` for every step.
#[derive(Debug, Clone)]
pub struct ResidualOffline {
    q: DMatrix<f64>,
    /// Coordinates of the load components (m × Q_f).
    pub s_load: DMatrix<f64>,
    /// Coordinates of `A^q Φ` (m × N each).
    pub s_stiff: Vec<DMatrix<f64>>,
    /// Coordinates of `M Φ`.
    pub s_mass: DMatrix<f64>,
    /// Coordinates of `M_D Φ`.
    pub s_output: DMatrix<f64>,
    /// Coordinates of `M_D g^k`, k = 1..K (m × K).
    pub s_track: DMatrix<f64>,
}

impl ResidualOffline {
    /// Image data for the empty reduced basis.
    pub fn new(fom: &FomModel, riesz: &EnvelopeCholesky) -> Self {
        let n = fom.dim();
        let forms = &fom.forms;
        let loads = DMatrix::from_columns(&forms.loads);
        let track = forms.output.mul_mat(&fom.g_ref.interior().into_owned());
        let mut members = DMatrix::zeros(n, loads.ncols() + track.ncols());
        members.columns_mut(0, loads.ncols()).copy_from(&loads);
        members.columns_mut(loads.ncols(), track.ncols()).copy_from(&track);
        let reps = riesz.solve_mat(&members);
        let q = orthonormalize_against(&forms.energy, &DMatrix::zeros(n, 0), &reps, IMAGE_DROP_TOL);
        let qt = q.transpose();
        ResidualOffline {
            s_load: &qt * &loads,
            s_stiff: forms.stiffness.iter().map(|_| DMatrix::zeros(q.ncols(), 0)).collect(),
            s_mass: DMatrix::zeros(q.ncols(), 0),
            s_output: DMatrix::zeros(q.ncols(), 0),
            s_track: &qt * &track,
            q,
        }
    }

    /// Energy-orthonormal basis of the image space.
    pub fn image_basis(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn image_dim(&self) -> usize {
        self.q.ncols()
    }

    /// Adds the members of the new basis vectors `basis[:, old_n..]`.
    pub fn extend(&mut self, fom: &FomModel, riesz: &EnvelopeCholesky, basis: &DMatrix<f64>, old_n: usize) {
        let forms = &fom.forms;
        let n_new = basis.ncols() - old_n;
        if n_new == 0 {
            return;
        }
        let old = basis.columns(0, old_n).into_owned();
        let fresh = basis.columns(old_n, n_new).into_owned();

        // Functionals of the new basis vectors, grouped by kind.
        let mut new_members: Vec<DMatrix<f64>> = forms.stiffness.iter().map(|a| a.mul_mat(&fresh)).collect();
        new_members.push(forms.mass.mul_mat(&fresh));
        new_members.push(forms.output.mul_mat(&fresh));
        let stacked = DMatrix::from_columns(
            &new_members.iter().flat_map(|m| m.column_iter().map(|c| c.into_owned())).collect::<Vec<_>>(),
        );
        let reps = riesz.solve_mat(&stacked);
        let q_add = orthonormalize_against(&forms.energy, &self.q, &reps, IMAGE_DROP_TOL);
        let q_add_t = q_add.transpose();

        // New rows for existing members.
        let grow_rows = |s: &DMatrix<f64>, members: &DMatrix<f64>| -> DMatrix<f64> {
            let extra = &q_add_t * members;
            let mut out = DMatrix::zeros(s.nrows() + extra.nrows(), s.ncols());
            out.rows_mut(0, s.nrows()).copy_from(s);
            out.rows_mut(s.nrows(), extra.nrows()).copy_from(&extra);
            out
        };
        let loads = DMatrix::from_columns(&forms.loads);
        self.s_load = grow_rows(&self.s_load, &loads);
        let track = forms.output.mul_mat(&fom.g_ref.interior().into_owned());
        self.s_track = grow_rows(&self.s_track, &track);
        let old_stiff: Vec<DMatrix<f64>> = forms.stiffness.iter().map(|a| a.mul_mat(&old)).collect();
        for (s, m) in self.s_stiff.iter_mut().zip(&old_stiff) {
            *s = grow_rows(s, m);
        }
        self.s_mass = grow_rows(&self.s_mass, &forms.mass.mul_mat(&old));
        self.s_output = grow_rows(&self.s_output, &forms.output.mul_mat(&old));

        // Append the new image vectors, then new columns for the new members.
        let mut q = DMatrix::zeros(self.q.nrows(), self.q.ncols() + q_add.ncols());
        q.columns_mut(0, self.q.ncols()).copy_from(&self.q);
        q.columns_mut(self.q.ncols(), q_add.ncols()).copy_from(&q_add);
        self.q = q;
        let qt = self.q.transpose();
        let grow_cols = |s: &DMatrix<f64>, members: &DMatrix<f64>| -> DMatrix<f64> {
            let extra = &qt * members;
            let mut out = DMatrix::zeros(extra.nrows(), s.ncols() + extra.ncols());
            out.columns_mut(0, s.ncols()).copy_from(s);
            out.columns_mut(s.ncols(), extra.ncols()).copy_from(&extra);
            out
        };
        let q_count = forms.stiffness.len();
        for (s, m) in self.s_stiff.iter_mut().zip(&new_members[..q_count]) {
            *s = grow_cols(s, m);
        }
        self.s_mass = grow_cols(&self.s_mass, &new_members[q_count]);
        self.s_output = grow_cols(&self.s_output, &new_members[q_count + 1]);
    }
}
