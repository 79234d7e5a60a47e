//! Cross-module properties: refined-path equivalence, residual optimality,
//! and filter boundedness over random windows.

use chebslice::driver::{run_cjssrr, run_cjssrrr, DegreeSpec, RemovalMode, SolverConfig};
use chebslice::filter::{degree_heuristic, map_window, scalar_filter_eval, FilterPlan};
use chebslice::matrix::{
    dense_qr, hermitian_eig, seeded_gaussian_block, DenseHermitian, SparseHermitian, SpectralBounds,
};
use chebslice::projection::{
    build_reduced_pencil, rayleigh_ritz, refined_vector, refined_vector_direct,
};
use nalgebra::{ComplexField, DMatrix};

fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let g = seeded_gaussian_block::<f64>(n, n, seed);
    (&g + g.transpose()).scale(0.5)
}

fn random_orthonormal(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
    dense_qr(&seeded_gaussian_block::<f64>(n, k, seed)).0
}

#[test]
fn refined_paths_agree_on_random_instances() {
    for trial in 0..10u64 {
        let n = 40 + 7 * trial as usize;
        let dense = random_symmetric(n, 1000 + trial);
        let a = DenseHermitian::new(dense).unwrap();
        let u = random_orthonormal(n, 5, 2000 + trial);
        let pencil = build_reduced_pencil(&a, &u).unwrap();
        let ritz = rayleigh_ritz(&a, &u);
        for &shift in ritz.values.iter().take(3) {
            let qr = refined_vector(&pencil, shift);
            let direct = refined_vector_direct(&a, &u, shift);
            assert!(
                (qr.sigma_min - direct.sigma_min).abs() <= 1e-10 * direct.sigma_min.max(1e-300),
                "sigma mismatch at trial {trial}"
            );
            assert!(
                qr.z.dotc(&direct.z).modulus() >= 1.0 - 1e-8,
                "vector mismatch at trial {trial}"
            );
        }
    }
}

#[test]
fn residual_optimality_holds_per_potential_pair() {
    // For every potential Ritz pair, the refined vector cannot do worse:
    // ||(A - lambda I) x_hat|| <= ||(A - lambda I) x_tilde|| + 1e-13 ||A||.
    for trial in 0..8u64 {
        let n = 60;
        let dense = random_symmetric(n, 3000 + trial);
        let a = DenseHermitian::new(dense.clone()).unwrap();
        let (lam, _) = hermitian_eig(&dense);
        let norm_a = lam[0].abs().max(lam[n - 1].abs());
        let u = random_orthonormal(n, 6, 4000 + trial);
        let pencil = build_reduced_pencil(&a, &u).unwrap();
        let ritz = rayleigh_ritz(&a, &u);
        for (i, &shift) in ritz.values.iter().enumerate() {
            let rv = refined_vector(&pencil, shift);
            let x_hat = &u * &rv.z;
            let lhs = (&dense * &x_hat - x_hat.scale(shift)).norm();
            let x_tilde = ritz.vectors.column(i).into_owned();
            let rhs = (&dense * &x_tilde - x_tilde.scale(shift)).norm();
            assert!(
                lhs <= rhs + 1e-13 * norm_a,
                "optimality violated: {lhs} > {rhs} (trial {trial}, pair {i})"
            );
        }
    }
}

#[test]
fn filter_stays_bounded_over_random_windows() {
    // Jackson damping keeps the indicator series inside [0, 1] up to the
    // coefficient quadrature tolerance.
    let mut seed = 0x5eed_u64;
    let bounds = SpectralBounds::exact(-1.0, 1.0);
    for _ in 0..6 {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let lo = -0.9 + 1.3 * ((seed >> 11) as f64 / (1u64 << 53) as f64);
        let width = 0.1 + 0.5 * ((seed >> 7) as f64 / (1u64 << 57) as f64);
        let hi = (lo + width).min(0.9);
        let w = map_window(&bounds, lo, hi).unwrap();
        let d = degree_heuristic(&w, 1, 2.0, 5.0).unwrap().min(1200);
        let plan = FilterPlan::build(w, 1, d).unwrap();
        for i in 0..=4000 {
            let t = -1.0 + 2.0 * i as f64 / 4000.0;
            let v = scalar_filter_eval(&plan, 0, t);
            assert!(
                (-1e-10..=1.0 + 1e-10).contains(&v),
                "window [{lo}, {hi}] d={d}: value {v} at {t}"
            );
        }
    }
}

#[test]
fn complex_hermitian_end_to_end() {
    // The whole pipeline runs on a complex Hermitian operator through the
    // same interfaces, conjugation included.
    type C = nalgebra::Complex<f64>;
    let n = 60;
    // A = Q diag Q^H with a complex unitary Q from the QR of a random
    // complex matrix.
    let re = seeded_gaussian_block::<f64>(n, n, 71);
    let im = seeded_gaussian_block::<f64>(n, n, 72);
    let g = DMatrix::from_fn(n, n, |i, j| C::new(re[(i, j)], im[(i, j)]));
    let (q, _) = dense_qr(&g);
    let mut d = DMatrix::<C>::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = C::new(i as f64 / (n - 1) as f64, 0.0);
    }
    let dense = &q * d * q.adjoint();
    let a = DenseHermitian::new(dense).unwrap();
    let bounds = SpectralBounds::exact(-0.01, 1.01);

    let lo = 19.5 / 59.0;
    let hi = 24.5 / 59.0;
    let mut config = SolverConfig::new(lo, hi);
    config.moments = 2;
    config.ell = Some(4);
    config.degree = DegreeSpec::Explicit { d: 300 };
    config.n_ev = Some(5);
    config.seed = 9;
    let report = run_cjssrrr(&a, &bounds, &config).unwrap();
    assert!(report.converged, "trace: {:?}", report.trace);
    assert_eq!(report.values.len(), 5);
    for (k, v) in report.values.iter().enumerate() {
        assert!((v - (20 + k) as f64 / 59.0).abs() <= 1e-10);
    }
}

#[test]
fn rr_and_rrr_agree_on_clean_problem() {
    let diag: Vec<f64> = (0..120).map(|i| i as f64 / 119.0).collect();
    let a = SparseHermitian::<f64>::from_diagonal(&diag);
    let bounds = SpectralBounds::exact(-0.01, 1.01);
    let lo = diag[50] - 1e-3;
    let hi = diag[54] + 1e-3;

    let mut base = SolverConfig::new(lo, hi);
    base.moments = 2;
    base.ell = Some(4);
    base.degree = DegreeSpec::Explicit { d: 300 };
    base.n_ev = Some(5);
    base.seed = 21;

    let rr = run_cjssrr(
        &a,
        &bounds,
        &base
            .clone()
            .with_mode(RemovalMode::Residual { delta: 1e-4 }),
    )
    .unwrap();
    let rrr = run_cjssrrr(&a, &bounds, &base).unwrap();
    assert!(rr.converged && rrr.converged);
    assert_eq!(rr.values.len(), 5);
    assert_eq!(rrr.values.len(), 5);
    for (x, y) in rr.values.iter().zip(rrr.values.iter()) {
        assert!((x - y).abs() <= 1e-11);
    }
    // The refined path converges at least as fast on the same seeds.
    assert!(rrr.restarts_used <= rr.restarts_used);
}
