//! Dense symmetric linear algebra on small matrices.
//!
//! The model layer needs symmetric eigendecompositions (covariance operators,
//! Gram matrices), Cholesky factorizations (least squares, SPD solves), and a
//! positive-semidefinite square-root factor (innovation scales). Matrices here
//! are at most a few hundred rows, so a dependency-free cyclic Jacobi sweep
//! and textbook Cholesky are fast enough and stay generic over [`Scalar`];
//! large matrix products elsewhere go through ndarray's `dot`.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigendecomposition of a symmetric matrix.
///
/// `values` are sorted descending; column `j` of `vectors` is the unit
/// eigenvector paired with `values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen<S> {
    pub values: Vec<S>,
    pub vectors: Array2<S>,
}

fn check_square<S: Scalar>(op: &'static str, a: &ArrayView2<S>) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::dimension(op, format!("expected square matrix, got {r}x{c}")));
    }
    if r == 0 {
        return Err(Error::argument(op, "empty matrix"));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::argument(op, "matrix contains non-finite entries"));
    }
    Ok(r)
}

/// Full eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.
///
/// The input is symmetrized as (A + Aᵀ)/2 before iteration, so callers may
/// pass matrices that are symmetric only up to roundoff. Eigenvalues come back
/// sorted descending with matching orthonormal eigenvector columns.
pub fn sym_eigen<S: Scalar>(a: &ArrayView2<S>) -> Result<SymEigen<S>> {
    const OP: &str = "linalg::sym_eigen";
    let n = check_square(OP, a)?;
    let half = S::cast(0.5);

    // Work on flat row-major buffers; m stays symmetric throughout.
    let mut m = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = (a[[i, j]] + a[[j, i]]) * half;
        }
    }
    let mut v = vec![S::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = S::one();
    }

    let norm_sq: S = m.iter().map(|x| *x * *x).sum();
    let eps = S::epsilon() * S::from_index(n);
    let threshold_sq = eps * eps * norm_sq;

    let mut converged = norm_sq == S::zero();
    for _sweep in 0..64 {
        if converged {
            break;
        }
        let mut off_sq = S::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off_sq += m[p * n + q] * m[p * n + q];
            }
        }
        if off_sq <= threshold_sq {
            converged = true;
            break;
        }

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == S::zero() {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (apq + apq);
                // tan of the rotation angle; asymptotic form avoids theta^2 overflow.
                let t = if theta.abs() > S::one() / S::epsilon() {
                    (theta + theta).recip()
                } else {
                    let sign = if theta >= S::zero() { S::one() } else { -S::one() };
                    sign / (theta.abs() + (theta * theta + S::one()).sqrt())
                };
                let c = (t * t + S::one()).sqrt().recip();
                let s = t * c;
                let tau = s / (S::one() + c);

                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = S::zero();
                m[q * n + p] = S::zero();
                for i in 0..n {
                    if i != p && i != q {
                        let aip = m[i * n + p];
                        let aiq = m[i * n + q];
                        let new_ip = aip - s * (aiq + tau * aip);
                        let new_iq = aiq + s * (aip - tau * aiq);
                        m[i * n + p] = new_ip;
                        m[p * n + i] = new_ip;
                        m[i * n + q] = new_iq;
                        m[q * n + i] = new_iq;
                    }
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = vip - s * (viq + tau * vip);
                    v[i * n + q] = viq + s * (vip - tau * viq);
                }
            }
        }
    }
    if !converged {
        // 64 sweeps is far beyond the classical convergence bound; reaching it
        // means the input was pathological (e.g. overflow during rotation).
        let mut off_sq = S::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off_sq += m[p * n + q] * m[p * n + q];
            }
        }
        if off_sq > threshold_sq {
            return Err(Error::numerical(OP, "Jacobi sweep limit reached"));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[j * n + j].partial_cmp(&m[i * n + i]).expect("eigenvalues are finite")
    });

    let values: Vec<S> = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, col]] = v[row * n + src];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Lower Cholesky factor L with L·Lᵀ = A for symmetric positive definite A.
///
/// Fails with a singular-system error when a pivot is not strictly positive.
pub fn cholesky<S: Scalar>(a: &ArrayView2<S>) -> Result<Array2<S>> {
    const OP: &str = "linalg::cholesky";
    let n = check_square(OP, a)?;
    let mut l = Array2::zeros((n, n));
    for j in 0..n {
        for i in j..n {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(sum > S::zero()) || !sum.is_finite() {
                    return Err(Error::singular(
                        OP,
                        format!("non-positive pivot at column {j}"),
                    ));
                }
                l[[j, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves L·Lᵀ·x = b given the lower Cholesky factor.
pub fn cholesky_solve<S: Scalar>(l: &Array2<S>, b: &Array1<S>) -> Array1<S> {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    let mut x = b.clone();
    for i in 0..n {
        let mut sum = x[i];
        for k in 0..i {
            sum -= l[[i, k]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut sum = x[i];
        for k in (i + 1)..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    x
}

/// Column-wise [`cholesky_solve`] for a matrix right-hand side.
pub fn cholesky_solve_mat<S: Scalar>(l: &Array2<S>, b: &Array2<S>) -> Array2<S> {
    let n = l.nrows();
    let cols = b.ncols();
    debug_assert_eq!(b.nrows(), n);
    let mut x = b.clone();
    for c in 0..cols {
        for i in 0..n {
            let mut sum = x[[i, c]];
            for k in 0..i {
                sum -= l[[i, k]] * x[[k, c]];
            }
            x[[i, c]] = sum / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut sum = x[[i, c]];
            for k in (i + 1)..n {
                sum -= l[[k, i]] * x[[k, c]];
            }
            x[[i, c]] = sum / l[[i, i]];
        }
    }
    x
}

/// Solves A·X = B for symmetric positive definite A.
pub fn spd_solve<S: Scalar>(a: &ArrayView2<S>, b: &Array2<S>) -> Result<Array2<S>> {
    const OP: &str = "linalg::spd_solve";
    let n = check_square(OP, a)?;
    if b.nrows() != n {
        return Err(Error::dimension(
            OP,
            format!("rhs has {} rows, matrix has {n}", b.nrows()),
        ));
    }
    let l = cholesky(a)?;
    Ok(cholesky_solve_mat(&l, b))
}

/// A factor L with L·Lᵀ = A for symmetric positive semidefinite A.
///
/// Tries Cholesky first; on failure falls back to an eigenvalue square root,
/// clipping eigenvalues in [-tol, 0) to zero. The fallback factor is not
/// triangular. Matrices with an eigenvalue below -tol·max|λ| are rejected.
pub fn psd_factor<S: Scalar>(a: &ArrayView2<S>) -> Result<Array2<S>> {
    const OP: &str = "linalg::psd_factor";
    if let Ok(l) = cholesky(a) {
        return Ok(l);
    }
    let eig = sym_eigen(a)?;
    let scale = eig.values.iter().fold(S::zero(), |m, v| m.max(v.abs()));
    let tol = scale * S::cast(1e4) * S::epsilon();
    let n = eig.values.len();
    let mut factor = eig.vectors;
    for j in 0..n {
        let lambda = eig.values[j];
        if lambda < -tol {
            return Err(Error::numerical(
                OP,
                format!("matrix is not positive semidefinite (eigenvalue {lambda})"),
            ));
        }
        let root = lambda.max(S::zero()).sqrt();
        for i in 0..n {
            factor[[i, j]] *= root;
        }
    }
    Ok(factor)
}

/// Frobenius norm.
pub fn frobenius<S: Scalar>(a: &ArrayView2<S>) -> S {
    a.iter().map(|x| *x * *x).sum::<S>().sqrt()
}
