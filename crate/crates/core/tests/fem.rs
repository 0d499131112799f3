mod common;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfopt::fem::{mass_matrix, triangulate, Assignment, BoxKind, Coefficient, Geometry};

#[test]
fn default_layout_values() {
    let g = Geometry::default_layout();
    assert_eq!(g.num_parameters(), 2);
    assert_eq!((g.width, g.height), (2.0, 1.0));
    let heaters: Vec<_> = g.boxes.iter().filter(|b| b.kind == BoxKind::Heater).collect();
    assert!(!heaters.is_empty());
    assert!(heaters.iter().all(|b| b.assignment == Assignment::Heat(80.0)));
    let fixed: Vec<_> =
        g.boxes.iter().filter(|b| matches!(b.kind, BoxKind::WindowWall)).map(|b| b.assignment.clone()).collect();
    assert!(!fixed.is_empty());
    assert!(fixed.iter().all(|a| *a == Assignment::Fixed(5.0e-3)));
    assert!(g.boxes.iter().any(|b| b.assignment == Assignment::Group(0)));
    assert!(g.boxes.iter().any(|b| b.assignment == Assignment::Group(1)));
}

#[test]
fn background_is_air() {
    let g = Geometry::default_layout();
    // Find a point in no box by scanning a grid.
    let free = (1..200)
        .flat_map(|i| (1..100).map(move |j| (i as f64 / 100.0, j as f64 / 100.0)))
        .find(|&(x, y)| g.boxes.iter().all(|b| !b.contains(x, y)))
        .expect("some point lies outside every box");
    assert_eq!(g.conductivity_at(free.0, free.1), Assignment::Fixed(0.5));
    assert_eq!(g.heat_at(free.0, free.1), 0.0);
}

#[test]
fn layout_errors() {
    let base = common::TWO_HALVES;
    assert!(Geometry::from_toml(&base.replace("group = \"right\"", "group = \"nope\"")).is_err());
    assert!(Geometry::from_toml(&base.replace("x1 = 2.0", "x1 = 3.0")).is_err());
    assert!(Geometry::from_toml(&base.replace("air_conductivity = 0.5", "air_conductivity = -1.0")).is_err());
    assert!(Geometry::from_toml("not toml [").is_err());
}

#[test]
fn triangulation_counts_and_area() {
    let m = triangulate(2, 1, 2.0, 1.0);
    assert_eq!((m.num_nodes(), m.num_triangles()), (6, 4));
    let m = triangulate(64, 32, 2.0, 1.0);
    assert_eq!(m.num_nodes(), 2145);
    let area: f64 = (0..m.num_triangles()).map(|t| m.signed_area(t)).sum();
    assert!((area - 2.0).abs() < 1e-12);
    assert!((0..m.num_triangles()).all(|t| m.signed_area(t) > 0.0));
    assert_eq!(m.free_nodes().len(), 63 * 31);
}

#[test]
fn mass_matrix_integrates_one() {
    let m = triangulate(16, 8, 2.0, 1.0);
    assert!((mass_matrix(&m).sum() - 2.0).abs() < 1e-12);
}

#[test]
fn energy_matrix_is_spd() {
    let forms = common::forms(&Geometry::default_layout(), 64, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let v = DVector::from_fn(forms.dim(), |_, _| rng.random_range(-1.0..1.0));
        assert!(forms.energy.inner(v.as_slice(), v.as_slice()) > 0.0);
    }
    forms.energy.check_invariants().unwrap();
    assert!(forms.energy.is_symmetric());
}

#[test]
fn affine_coefficients() {
    let forms = common::forms(&Geometry::default_layout(), 64, 32);
    let mu = [0.03, 0.07];
    let walls = Coefficient::Parameter(0);
    assert_eq!(walls.eval(&mu), 0.03);
    assert_eq!(walls.derivative(0), 1.0);
    assert_eq!(walls.derivative(1), 0.0);
    assert!(forms.stiffness_coefficients.contains(&Coefficient::Parameter(0)));
    assert!(forms.stiffness_coefficients.contains(&Coefficient::Parameter(1)));
    // Energy product is the stiffness at the reference parameter.
    let a_ref = forms.stiffness_at(&forms.reference_parameter);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let v = DVector::from_fn(forms.dim(), |_, _| rng.random_range(-1.0..1.0));
    let e = forms.energy.inner(v.as_slice(), v.as_slice());
    assert!((a_ref.inner(v.as_slice(), v.as_slice()) - e).abs() <= 1e-12 * e);
}

#[test]
fn stiffness_derivative_matches_difference() {
    let forms = common::forms(&Geometry::default_layout(), 32, 16);
    let mu = [0.04, 0.06];
    let h = 1e-3;
    for i in 0..2 {
        let mut plus = mu;
        plus[i] += h;
        let fd = forms.stiffness_at(&plus).to_dense() - forms.stiffness_at(&mu).to_dense();
        let d = forms.stiffness_derivative(i).to_dense();
        assert!((fd / h - &d).amax() <= 1e-9 * d.amax());
    }
}
