use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfopt::numerics::{
    cg_solve, gram, hapod, max_gen_eig, orthonormality_defect, orthonormalize_against, pod, projection_error,
    solve_regularized_interpolation, EnvelopeCholesky, SparseMatrix,
};

fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * n as f64 * 0.1
}

/// 1-d Laplacian plus a mass term: sparse, SPD, banded.
fn laplacian(n: usize) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 2.1));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
    }
    SparseMatrix::from_triplets(n, &t, true).unwrap()
}

#[test]
fn cg_identity() {
    let a = SparseMatrix::identity(3);
    let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    let (x, _) = cg_solve(&a, &b, 1e-12, 100).unwrap();
    assert!((x - b).amax() < 1e-14);
}

#[test]
fn cg_two_by_two() {
    let a = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]), true);
    let (x, _) = cg_solve(&a, &DVector::from_vec(vec![1.0, 2.0]), 1e-14, 100).unwrap();
    assert!((x[0] - 1.0 / 11.0).abs() < 1e-13);
    assert!((x[1] - 7.0 / 11.0).abs() < 1e-13);
}

#[test]
fn cg_diagonal() {
    let a = SparseMatrix::from_dense(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0])), true);
    let (x, _) = cg_solve(&a, &DVector::from_vec(vec![2.0, 4.0]), 1e-14, 10).unwrap();
    assert!((x - DVector::from_vec(vec![1.0, 2.0])).amax() < 1e-14);
}

#[test]
fn cg_reports_nonconvergence() {
    let a = laplacian(200);
    let b = DVector::from_element(200, 1.0);
    assert!(cg_solve(&a, &b, 1e-14, 2).is_err());
}

#[test]
fn cg_and_cholesky_agree_with_dense() {
    let a = laplacian(60);
    let b = DVector::from_fn(60, |i, _| (i as f64).sin());
    let dense = a.to_dense().cholesky().unwrap().solve(&b);
    let (x, _) = cg_solve(&a, &b, 1e-13, 1000).unwrap();
    assert!((&x - &dense).amax() < 1e-10);
    let chol = EnvelopeCholesky::new(&a).unwrap();
    assert!((chol.solve(&b) - dense).amax() < 1e-12);
}

#[test]
fn pod_rank_one() {
    let g = SparseMatrix::identity(5);
    let v = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 1.0]);
    let s = DMatrix::from_columns(&[v.clone(), v.clone(), v.clone(), v]);
    assert_eq!(pod(&s, &g, 1e-12).unwrap().rank(), 1);
}

#[test]
fn pod_orthonormal_snapshots_keep_everything() {
    let g = laplacian(8);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let raw = DMatrix::from_fn(8, 4, |_, _| rng.random_range(-1.0..1.0));
    let s = orthonormalize_against(&g, &DMatrix::zeros(8, 0), &raw, 1e-12);
    let r = pod(&s, &g, 0.0).unwrap();
    assert_eq!(r.rank(), 4);
    assert!(projection_error(&s, &r.modes, &g) < 1e-20);
}

#[test]
fn pod_exact_rank_two() {
    let g = laplacian(10);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let basis = DMatrix::from_fn(10, 2, |_, _| rng.random_range(-1.0..1.0));
    let coeffs = DMatrix::from_fn(2, 5, |_, _| rng.random_range(-1.0..1.0));
    let s = basis * coeffs;
    let r = pod(&s, &g, 1e-12).unwrap();
    assert_eq!(r.rank(), 2);
    assert!(orthonormality_defect(&g, &r.modes) < 1e-12);
}

#[test]
fn hapod_single_chunk_equals_pod() {
    let g = laplacian(12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = DMatrix::from_fn(12, 6, |_, _| rng.random_range(-1.0..1.0));
    let a = pod(&s, &g, 1e-3).unwrap();
    let b = hapod(std::slice::from_ref(&s), &g, 1e-3, 0.9).unwrap();
    assert_eq!(a.rank(), b.rank());
    assert!(projection_error(&a.modes, &b.modes, &g) < 1e-20);
}

#[test]
fn hapod_identical_chunks_span_one_chunk() {
    let g = laplacian(12);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0));
    let flat = pod(&s, &g, 1e-12).unwrap();
    let tree = hapod(&[s.clone(), s.clone()], &g, 1e-12, 0.9).unwrap();
    assert_eq!(tree.rank(), flat.rank());
    assert!(projection_error(&flat.modes, &tree.modes, &g) < 1e-18);
}

#[test]
fn hapod_error_bound_on_random_chunks() {
    let g = laplacian(40);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let chunks: Vec<DMatrix<f64>> =
        (0..4).map(|_| DMatrix::from_fn(40, 10, |_, _| rng.random_range(-1.0..1.0))).collect();
    let all = DMatrix::from_columns(&chunks.iter().flat_map(|c| c.column_iter().map(|v| v.into_owned())).collect::<Vec<_>>());
    for eps in [1e-1, 1.0, 10.0] {
        let r = hapod(&chunks, &g, eps, 0.9).unwrap();
        assert!(projection_error(&all, &r.modes, &g) < eps, "eps {eps}");
    }
}

#[test]
fn max_gen_eig_trivial_cases() {
    let a = laplacian(15);
    assert!((max_gen_eig(&a, &a, 1e-12).unwrap() - 1.0).abs() < 1e-10);
    let b = SparseMatrix::from_dense(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 8.0])), true);
    let m = SparseMatrix::from_dense(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])), true);
    assert!((max_gen_eig(&b, &m, 1e-12).unwrap() - 4.0).abs() < 1e-10);
}

#[test]
fn max_gen_eig_matches_dense() {
    let n = 20;
    let a = random_spd(n, 8);
    let b = random_spd(n, 9);
    let l = a.clone().cholesky().unwrap().l();
    let li = l.clone().try_inverse().unwrap();
    let c = &li * &b * li.transpose();
    let dense = c.symmetric_eigen().eigenvalues.max();
    let got = max_gen_eig(&SparseMatrix::from_dense(&b, true), &SparseMatrix::from_dense(&a, true), 1e-12).unwrap();
    assert!((got - dense).abs() <= 1e-8 * dense, "{got} vs {dense}");
}

#[test]
fn regularized_interpolation() {
    let y = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let id = DMatrix::identity(3, 3);
    assert!((solve_regularized_interpolation(&id, 0.0, &y).unwrap() - &y).amax() < 1e-15);
    assert!((solve_regularized_interpolation(&id, 1.0, &y).unwrap() - &y / 2.0).amax() < 1e-15);

    let a = random_spd(12, 10);
    let y = DMatrix::from_fn(12, 3, |i, j| (i + 2 * j) as f64);
    let got = solve_regularized_interpolation(&a, 1e-12, &y).unwrap();
    let reg = &a + DMatrix::identity(12, 12) * 1e-12;
    let want = reg.lu().solve(&y).unwrap();
    assert!((&got - &want).amax() <= 1e-9 * want.amax());
}

#[test]
fn regularized_interpolation_rejects_bad_input() {
    let a = DMatrix::identity(2, 2);
    assert!(solve_regularized_interpolation(&a, -1.0, &DMatrix::zeros(2, 1)).is_err());
    assert!(solve_regularized_interpolation(&a, 0.0, &DMatrix::zeros(3, 1)).is_err());
}

#[test]
fn orthonormalization_survives_near_dependence() {
    let g = laplacian(50);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = DMatrix::from_fn(50, 10, |_, _| rng.random_range(-1.0..1.0));
    let q = orthonormalize_against(&g, &DMatrix::zeros(50, 0), &base, 1e-14);
    // New vectors that are combinations of `q` plus tiny independent parts.
    let noise = DMatrix::from_fn(50, 10, |_, _| rng.random_range(-1e-11..1e-11));
    let new = &q * DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0)) + noise;
    let add = orthonormalize_against(&g, &q, &new, 1e-14);
    let mut all = DMatrix::zeros(50, q.ncols() + add.ncols());
    all.columns_mut(0, q.ncols()).copy_from(&q);
    all.columns_mut(q.ncols(), add.ncols()).copy_from(&add);
    assert!(orthonormality_defect(&g, &all) < 1e-12, "{}", orthonormality_defect(&g, &all));
    assert!(gram(&g, &q, &add).amax() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cg_solves_random_systems(seed in 0u64..1000, n in 2usize..30) {
        let a = random_spd(n, seed);
        let sa = SparseMatrix::from_dense(&a, true);
        let b = DVector::from_fn(n, |i, _| (i as f64 + seed as f64).cos());
        let (x, _) = cg_solve(&sa, &b, 1e-12, 10 * n).unwrap();
        prop_assert!((&a * &x - &b).norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn pod_respects_tolerance(seed in 0u64..1000, eps in 1e-6f64..1.0) {
        let g = laplacian(15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = DMatrix::from_fn(15, 6, |_, _| rng.random_range(-1.0..1.0));
        let r = pod(&s, &g, eps).unwrap();
        prop_assert!(projection_error(&s, &r.modes, &g) < eps);
        prop_assert!(orthonormality_defect(&g, &r.modes) < 1e-10);
    }
}
