//! Dense symmetric linear algebra against closed forms and residual checks.

use approx::assert_abs_diff_eq;
use ndarray::{arr1, arr2, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surfcast::linalg::{
    cholesky, cholesky_solve, cholesky_solve_mat, frobenius, psd_factor, spd_solve, sym_eigen,
};
use surfcast::Error;

fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = rng.random_range(-1.0..1.0);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    a
}

#[test]
fn eigen_2x2_matches_closed_form() {
    let (a, b, c) = (3.0_f64, 1.5, -2.0);
    let m = arr2(&[[a, b], [b, c]]);
    let disc = ((a - c).powi(2) + 4.0 * b * b).sqrt();
    let hi = 0.5 * (a + c + disc);
    let lo = 0.5 * (a + c - disc);
    let eig = sym_eigen(&m.view()).unwrap();
    assert_abs_diff_eq!(eig.values[0], hi, epsilon = 1e-12);
    assert_abs_diff_eq!(eig.values[1], lo, epsilon = 1e-12);
}

#[test]
fn eigen_tridiagonal_3x3_matches_closed_form() {
    // Toeplitz(1, 2, 1) of size 3 has eigenvalues 2 + 2cos(k*pi/4), k = 1..3.
    let m = arr2(&[[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]]);
    let eig = sym_eigen(&m.view()).unwrap();
    let sqrt2 = 2.0_f64.sqrt();
    assert_abs_diff_eq!(eig.values[0], 2.0 + sqrt2, epsilon = 1e-12);
    assert_abs_diff_eq!(eig.values[1], 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(eig.values[2], 2.0 - sqrt2, epsilon = 1e-12);
}

#[test]
fn eigen_residuals_orthonormality_and_order() {
    for (n, seed) in [(5usize, 11u64), (12, 12), (25, 13)] {
        let a = random_symmetric(n, seed);
        let norm = frobenius(&a.view());
        let eig = sym_eigen(&a.view()).unwrap();
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]), "descending order");

        for j in 0..n {
            let v = eig.vectors.column(j);
            let av = a.dot(&v);
            for i in 0..n {
                assert!(
                    (av[i] - eig.values[j] * v[i]).abs() <= 1e-10 * norm,
                    "residual too large at n={n} column {j}"
                );
            }
        }
        let vtv = eig.vectors.t().dot(&eig.vectors);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(vtv[[i, j]], want, epsilon = 1e-10);
            }
        }
        // Reconstruction A = V diag(values) V^T.
        let mut lam = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            lam[[j, j]] = eig.values[j];
        }
        let rec = eig.vectors.dot(&lam).dot(&eig.vectors.t());
        for (x, y) in rec.iter().zip(a.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10 * norm.max(1.0));
        }
    }
}

#[test]
fn eigen_rejects_non_square() {
    let a = Array2::<f64>::zeros((2, 3));
    assert!(matches!(sym_eigen(&a.view()), Err(Error::Dimension { .. })));
}

#[test]
fn cholesky_matches_hand_factor() {
    let a = arr2(&[[4.0, 12.0, -16.0], [12.0, 37.0, -43.0], [-16.0, -43.0, 98.0]]);
    let l = cholesky(&a.view()).unwrap();
    let want = arr2(&[[2.0, 0.0, 0.0], [6.0, 1.0, 0.0], [-8.0, 5.0, 3.0]]);
    for (x, y) in l.iter().zip(want.iter()) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-12);
    }
}

#[test]
fn cholesky_rejects_indefinite() {
    let a = arr2(&[[1.0, 2.0], [2.0, 1.0]]);
    assert!(matches!(cholesky(&a.view()), Err(Error::Singular { .. })));
}

#[test]
fn cholesky_solve_matches_hand_solution() {
    // [[4,2],[2,5]] x = [2,9] has solution (-0.5, 2): inverse is [[5,-2],[-2,4]]/16.
    let a = arr2(&[[4.0, 2.0], [2.0, 5.0]]);
    let l = cholesky(&a.view()).unwrap();
    let x = cholesky_solve(&l, &arr1(&[2.0, 9.0]));
    assert_abs_diff_eq!(x[0], -0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-12);
}

#[test]
fn matrix_solve_recovers_random_solutions() {
    let n = 7;
    let b = random_symmetric(n, 21);
    // b^T b + I is symmetric positive definite.
    let mut a = b.t().dot(&b);
    for i in 0..n {
        a[[i, i]] += 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let x_true = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
    let rhs = a.dot(&x_true);

    let l = cholesky(&a.view()).unwrap();
    let x1 = cholesky_solve_mat(&l, &rhs);
    let x2 = spd_solve(&a.view(), &rhs).unwrap();
    for (got, want) in x1.iter().zip(x_true.iter()) {
        assert_abs_diff_eq!(got, want, epsilon = 1e-9);
    }
    for (got, want) in x2.iter().zip(x_true.iter()) {
        assert_abs_diff_eq!(got, want, epsilon = 1e-9);
    }
}

#[test]
fn psd_factor_on_definite_matrix_is_cholesky() {
    let a = arr2(&[[4.0, 2.0], [2.0, 5.0]]);
    let f = psd_factor(&a.view()).unwrap();
    let l = cholesky(&a.view()).unwrap();
    assert_eq!(f, l);
}

#[test]
fn psd_factor_handles_rank_deficiency() {
    // Rank-1: outer product of (1, 2).
    let a = arr2(&[[1.0, 2.0], [2.0, 4.0]]);
    let f = psd_factor(&a.view()).unwrap();
    let rec = f.dot(&f.t());
    for (x, y) in rec.iter().zip(a.iter()) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-10);
    }
}

#[test]
fn psd_factor_rejects_negative_definite() {
    let a = arr2(&[[-1.0, 0.0], [0.0, -2.0]]);
    assert!(matches!(psd_factor(&a.view()), Err(Error::Numerical { .. })));
}

#[test]
fn frobenius_matches_hand_value() {
    let a = arr2(&[[3.0, 0.0], [4.0, 0.0]]);
    assert_abs_diff_eq!(frobenius(&a.view()), 5.0, epsilon = 1e-15);
}
