use nalgebra::DVector;
use std::sync::Arc;

use super::geometry::{Assignment, Geometry};
use super::mesh::Mesh;
use crate::error::{Error, Result};
use crate::numerics::{Pattern, SparseMatrix};

/// Coefficient function of one affine term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    /// Θ(μ) = μ_i.
    Parameter(usize),
    /// Θ(μ) = c.
    Constant(f64),
}

impl Coefficient {
    pub fn eval(&self, mu: &[f64]) -> f64 {
        match *self {
            Coefficient::Parameter(i) => mu[i],
            Coefficient::Constant(c) => c,
        }
    }

    /// ∂Θ/∂μ_i.
    pub fn derivative(&self, i: usize) -> f64 {
        match *self {
            Coefficient::Parameter(j) if j == i => 1.0,
            _ => 0.0,
        }
    }
}

/// Parameter-separable discrete forms on the free (non-Dirichlet) nodes.
#[derive(Debug, Clone)]
pub struct AffineForms {
    pub mass: SparseMatrix,
    pub stiffness: Vec<SparseMatrix>,
    pub stiffness_coefficients: Vec<Coefficient>,
    pub loads: Vec<DVector<f64>>,
    pub load_coefficients: Vec<Coefficient>,
    /// Energy product a(·,·; μ̄).
    pub energy: SparseMatrix,
    /// Output product (F·, F·)_D.
    pub output: SparseMatrix,
    pub reference_parameter: Vec<f64>,
    pub num_parameters: usize,
    pub free_nodes: Vec<usize>,
    pub num_nodes: usize,
}

impl AffineForms {
    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn theta_a(&self, mu: &[f64]) -> Vec<f64> {
        self.stiffness_coefficients.iter().map(|c| c.eval(mu)).collect()
    }

    pub fn theta_f(&self, mu: &[f64]) -> Vec<f64> {
        self.load_coefficients.iter().map(|c| c.eval(mu)).collect()
    }

    /// A(μ) = Σ Θ_q(μ) A^q.
    pub fn stiffness_at(&self, mu: &[f64]) -> SparseMatrix {
        let theta = self.theta_a(mu);
        let terms: Vec<_> = theta.iter().copied().zip(self.stiffness.iter()).collect();
        SparseMatrix::linear_combination(&terms).expect("components share a pattern")
    }

    /// `c_m·M + A(μ)`, the implicit-Euler system matrix for `c_m = 1/Δt`.
    pub fn system_matrix(&self, mu: &[f64], mass_factor: f64) -> SparseMatrix {
        let theta = self.theta_a(mu);
        let mut terms: Vec<_> = theta.iter().copied().zip(self.stiffness.iter()).collect();
        terms.push((mass_factor, &self.mass));
        SparseMatrix::linear_combination(&terms).expect("components share a pattern")
    }

    pub fn load_at(&self, mu: &[f64]) -> DVector<f64> {
        let mut f = DVector::zeros(self.dim());
        for (c, fq) in self.load_coefficients.iter().zip(&self.loads) {
            f.axpy(c.eval(mu), fq, 1.0);
        }
        f
    }

    /// ∂_{μ_i} f.
    pub fn load_derivative(&self, i: usize) -> DVector<f64> {
        let mut f = DVector::zeros(self.dim());
        for (c, fq) in self.load_coefficients.iter().zip(&self.loads) {
            f.axpy(c.derivative(i), fq, 1.0);
        }
        f
    }

    /// ∂_{μ_i} A.
    pub fn stiffness_derivative(&self, i: usize) -> SparseMatrix {
        let terms: Vec<_> = self
            .stiffness_coefficients
            .iter()
            .map(|c| c.derivative(i))
            .zip(self.stiffness.iter())
            .collect();
        SparseMatrix::linear_combination(&terms).expect("components share a pattern")
    }
}

/// Options for [`assemble`].
#[derive(Debug, Clone)]
pub struct AssemblyOptions {
    pub reference_parameter: Vec<f64>,
    /// Weight of the L² output product, `(F u, F v)_D = weight·(u, v)_{L²}`.
    pub output_weight: f64,
}

/// P1 mass matrix on all nodes.
pub fn mass_matrix(mesh: &Mesh) -> SparseMatrix {
    let pattern = full_pattern(mesh);
    let mut m = SparseMatrix::zeros(pattern, true);
    for t in 0..mesh.num_triangles() {
        let area = mesh.signed_area(t);
        let tri = mesh.triangles[t];
        for a in 0..3 {
            for b in 0..3 {
                let w = if a == b { 2.0 } else { 1.0 };
                m.add_to(tri[a], tri[b], w * area / 12.0);
            }
        }
    }
    m
}

fn full_pattern(mesh: &Mesh) -> Arc<Pattern> {
    let mut rows = vec![Vec::new(); mesh.num_nodes()];
    for tri in &mesh.triangles {
        for &a in tri {
            rows[a].extend_from_slice(tri);
        }
    }
    Arc::new(Pattern::from_rows(mesh.num_nodes(), rows))
}

/// Element stiffness for κ = 1.
fn element_stiffness(mesh: &Mesh, t: usize) -> [[f64; 3]; 3] {
    let tri = mesh.triangles[t];
    let p = tri.map(|i| mesh.coords[i]);
    let area = mesh.signed_area(t);
    // Gradients of the barycentric functions: ∇λ_a = (y_b − y_c, x_c − x_b) / (2|T|).
    let mut g = [[0.0; 2]; 3];
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        g[a] = [(p[b][1] - p[c][1]) / (2.0 * area), (p[c][0] - p[b][0]) / (2.0 * area)];
    }
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

/// Assembles the affine decomposition for a building layout.
///
/// One stiffness component per parameter group (Θ = μ_group) plus one fixed
/// component (Θ ≡ 1) collecting background and prescribed conductivities. The
/// heater load is parameter independent. Coefficients are sampled at triangle
/// centroids; boundary rows and columns are removed.
pub fn assemble(geometry: &Geometry, mesh: &Mesh, options: &AssemblyOptions) -> Result<AffineForms> {
    let p = geometry.num_parameters();
    let mu_bar = &options.reference_parameter;
    if mu_bar.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "reference parameter has {} components, layout has {p} groups",
            mu_bar.len()
        )));
    }
    if mu_bar.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidInput("reference parameter must be positive".into()));
    }
    let pattern = full_pattern(mesh);
    let mut stiff: Vec<SparseMatrix> = (0..=p).map(|_| SparseMatrix::zeros(pattern.clone(), true)).collect();
    let mut load = DVector::zeros(mesh.num_nodes());
    let mut group_used = vec![false; p];
    for t in 0..mesh.num_triangles() {
        let [cx, cy] = mesh.centroid(t);
        let (component, kappa) = match geometry.conductivity_at(cx, cy) {
            Assignment::Group(g) => {
                group_used[g] = true;
                (g, 1.0)
            }
            Assignment::Fixed(v) => (p, v),
            Assignment::Heat(_) => unreachable!("heaters carry no conductivity"),
        };
        let ke = element_stiffness(mesh, t);
        let tri = mesh.triangles[t];
        for a in 0..3 {
            for b in 0..3 {
                stiff[component].add_to(tri[a], tri[b], kappa * ke[a][b]);
            }
        }
        let heat = geometry.heat_at(cx, cy);
        if heat != 0.0 {
            let area = mesh.signed_area(t);
            for &a in &tri {
                load[a] += heat * area / 3.0;
            }
        }
    }
    if let Some(g) = group_used.iter().position(|u| !u) {
        return Err(Error::Layout(format!(
            "parameter group '{}' covers no mesh element",
            geometry.groups[g]
        )));
    }

    let free = mesh.free_nodes();
    let mass = mass_matrix(mesh).restrict(&free);
    let shared = mass.pattern().clone();
    let restrict = |m: &SparseMatrix| {
        let mut r = m.restrict(&free);
        r.share_pattern(&shared);
        r
    };
    let stiffness: Vec<SparseMatrix> = stiff.iter().map(restrict).collect();
    let mut stiffness_coefficients: Vec<Coefficient> = (0..p).map(Coefficient::Parameter).collect();
    stiffness_coefficients.push(Coefficient::Constant(1.0));
    let loads = vec![DVector::from_iterator(free.len(), free.iter().map(|&i| load[i]))];

    let theta_bar: Vec<f64> = stiffness_coefficients.iter().map(|c| c.eval(mu_bar)).collect();
    let terms: Vec<_> = theta_bar.iter().copied().zip(stiffness.iter()).collect();
    let energy = SparseMatrix::linear_combination(&terms)?;
    let output = mass.scaled(options.output_weight);

    Ok(AffineForms {
        mass,
        stiffness,
        stiffness_coefficients,
        loads,
        load_coefficients: vec![Coefficient::Constant(1.0)],
        energy,
        output,
        reference_parameter: mu_bar.clone(),
        num_parameters: p,
        free_nodes: free,
        num_nodes: mesh.num_nodes(),
    })
}
