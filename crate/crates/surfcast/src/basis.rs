//! Tensor-product function bases on the unit square.
//!
//! Two 1D families are provided, both on [0, 1]:
//! cubic B-splines on an open uniform knot vector (boundary knots repeated
//! four times, interior knots equispaced), and the trigonometric system
//! {1, sqrt(2)·sin(2πkx), sqrt(2)·cos(2πkx), ...} truncated to the requested
//! length. A [`TensorBasis`] pairs one family per axis; tensor functions are
//! flattened row-major, basis (i, j) to index i·K2 + j, matching the
//! vectorization of grid fields.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::grid::{FtsDataset, GridDomain, SurfaceField};
use crate::linalg;
use crate::scalar::Scalar;

/// 1D basis family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Cubic (order 4) B-splines, open uniform knots.
    BsplineCubic,
    /// Constant plus sine/cosine pairs at integer frequencies, unit-normalized.
    Fourier,
}

/// A 1D basis: family plus number of functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisSystem1D {
    kind: BasisKind,
    n_basis: usize,
}

impl BasisSystem1D {
    /// Cubic B-splines need at least 4 functions; the trigonometric system at
    /// least 1 (the constant).
    pub fn new(kind: BasisKind, n_basis: usize) -> Result<Self> {
        const OP: &str = "basis::system";
        match kind {
            BasisKind::BsplineCubic if n_basis < 4 => Err(Error::argument(
                OP,
                format!("cubic B-splines need n_basis >= 4, got {n_basis}"),
            )),
            BasisKind::Fourier if n_basis < 1 => {
                Err(Error::argument(OP, "trigonometric basis needs n_basis >= 1"))
            }
            _ => Ok(BasisSystem1D { kind, n_basis }),
        }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Evaluates all basis functions at `x` in [0, 1].
    pub fn eval<S: Scalar>(&self, x: S) -> Result<Vec<S>> {
        const OP: &str = "basis::eval";
        if !(x >= S::zero() && x <= S::one()) {
            return Err(Error::argument(OP, format!("x = {x} outside [0, 1]")));
        }
        match self.kind {
            BasisKind::BsplineCubic => Ok(self.eval_bspline(x)),
            BasisKind::Fourier => Ok(self.eval_fourier(x)),
        }
    }

    fn eval_bspline<S: Scalar>(&self, x: S) -> Vec<S> {
        let nb = self.n_basis;
        let segments = nb - 3;
        // Open uniform knot vector of length nb + 4: four zeros, interior
        // knots i/segments, four ones.
        let knot = |idx: usize| -> S {
            if idx < 4 {
                S::zero()
            } else if idx >= nb {
                S::one()
            } else {
                S::from_index(idx - 3) / S::from_index(segments)
            }
        };

        // Knot span index: t[span] <= x < t[span + 1], with x = 1 assigned to
        // the last non-empty span.
        let cell = (x * S::from_index(segments)).floor().to_usize().unwrap_or(0);
        let span = (3 + cell.min(segments - 1)).min(nb - 1);

        // de Boor recursion for the 4 non-zero functions on this span.
        let mut nvals = [S::zero(); 4];
        nvals[0] = S::one();
        let mut left = [S::zero(); 4];
        let mut right = [S::zero(); 4];
        for j in 1..4 {
            left[j] = x - knot(span + 1 - j);
            right[j] = knot(span + j) - x;
            let mut saved = S::zero();
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = nvals[r] / denom;
                nvals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            nvals[j] = saved;
        }

        let mut out = vec![S::zero(); nb];
        for (r, v) in nvals.iter().enumerate() {
            out[span - 3 + r] = *v;
        }
        out
    }

    fn eval_fourier<S: Scalar>(&self, x: S) -> Vec<S> {
        let root2 = S::cast(2.0).sqrt();
        let two_pi = S::PI() + S::PI();
        (0..self.n_basis)
            .map(|j| {
                if j == 0 {
                    S::one()
                } else {
                    let k = S::from_index(j.div_ceil(2));
                    let arg = two_pi * k * x;
                    if j % 2 == 1 {
                        root2 * arg.sin()
                    } else {
                        root2 * arg.cos()
                    }
                }
            })
            .collect()
    }
}

/// Tensor product of two 1D bases, one per grid axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorBasis {
    u: BasisSystem1D,
    v: BasisSystem1D,
}

impl TensorBasis {
    pub fn new(u: BasisSystem1D, v: BasisSystem1D) -> Self {
        TensorBasis { u, v }
    }

    pub fn u(&self) -> &BasisSystem1D {
        &self.u
    }

    pub fn v(&self) -> &BasisSystem1D {
        &self.v
    }

    /// Total number of tensor functions K = K1·K2.
    pub fn len(&self) -> usize {
        self.u.n_basis * self.v.n_basis
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of tensor function (i, j).
    #[inline]
    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        i * self.v.n_basis + j
    }
}

/// Coefficients of frames expanded in a tensor basis; row t holds the K
/// coefficients of frame t.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisExpansion<S> {
    coefficients: Array2<S>,
    basis: TensorBasis,
}

impl<S: Scalar> BasisExpansion<S> {
    pub fn new(coefficients: Array2<S>, basis: TensorBasis) -> Result<Self> {
        if coefficients.ncols() != basis.len() {
            return Err(Error::dimension(
                "basis::expansion",
                format!("{} coefficient columns for {} basis functions", coefficients.ncols(), basis.len()),
            ));
        }
        Ok(BasisExpansion { coefficients, basis })
    }

    pub fn coefficients(&self) -> &Array2<S> {
        &self.coefficients
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    pub fn t_len(&self) -> usize {
        self.coefficients.nrows()
    }
}

/// Evaluates all K tensor functions on the grid as a K x (N1·N2) matrix.
///
/// Row ζ(i, j) = i·K2 + j holds the vectorized surface
/// Bu_i(u_p)·Bv_j(v_q) at flat grid index p·N2 + q.
pub fn eval_basis_matrix<S: Scalar>(tb: &TensorBasis, domain: &GridDomain<S>) -> Result<Array2<S>> {
    let (n1, n2) = domain.shape();
    let ku = tb.u().n_basis();
    let kv = tb.v().n_basis();

    let mut bu = Array2::<S>::zeros((ku, n1));
    for (p, &x) in domain.u().iter().enumerate() {
        for (i, val) in tb.u().eval(x)?.into_iter().enumerate() {
            bu[[i, p]] = val;
        }
    }
    let mut bv = Array2::<S>::zeros((kv, n2));
    for (q, &x) in domain.v().iter().enumerate() {
        for (j, val) in tb.v().eval(x)?.into_iter().enumerate() {
            bv[[j, q]] = val;
        }
    }

    let mut phi = Array2::<S>::zeros((ku * kv, n1 * n2));
    for i in 0..ku {
        for j in 0..kv {
            let row = tb.flat_index(i, j);
            for p in 0..n1 {
                let bup = bu[[i, p]];
                for q in 0..n2 {
                    phi[[row, p * n2 + q]] = bup * bv[[j, q]];
                }
            }
        }
    }
    Ok(phi)
}

/// Evaluates the tensor functions as a list of surface fields.
pub fn eval_basis<S: Scalar>(tb: &TensorBasis, domain: &GridDomain<S>) -> Result<Vec<SurfaceField<S>>> {
    let (n1, n2) = domain.shape();
    let phi = eval_basis_matrix(tb, domain)?;
    Ok(phi
        .rows()
        .into_iter()
        .map(|row| {
            SurfaceField::new(
                Array2::from_shape_vec((n1, n2), row.to_vec()).expect("row has N1·N2 entries"),
            )
        })
        .collect())
}

/// Quadrature Gram matrix of the tensor functions: W_kl = <phi_k, phi_l>.
pub fn gram_matrix<S: Scalar>(tb: &TensorBasis, domain: &GridDomain<S>) -> Result<Array2<S>> {
    let phi = eval_basis_matrix(tb, domain)?;
    let mut g = phi.dot(&phi.t());
    let scale = domain.quad_scale();
    g.mapv_inplace(|x| x * scale);
    Ok(g)
}

/// Least-squares projection of every frame onto the tensor basis.
///
/// Solves the grid normal equations (Φ·Φᵀ)·c_t = Φ·y_t per frame. Fails with
/// a singular-system error when the basis is rank-deficient on this grid
/// (e.g. more basis functions than distinguishable grid columns).
pub fn project_onto_basis<S: Scalar>(
    ds: &FtsDataset<S>,
    tb: &TensorBasis,
) -> Result<BasisExpansion<S>> {
    const OP: &str = "basis::project";
    let phi = eval_basis_matrix(tb, ds.domain())?;
    let gram = phi.dot(&phi.t());
    let l = linalg::cholesky(&gram.view()).map_err(|_| {
        Error::singular(OP, format!("tensor basis of size {} is rank-deficient on this grid", tb.len()))
    })?;

    let t_len = ds.t_len();
    let n = phi.ncols();
    let mut y = Array2::<S>::zeros((n, t_len));
    for (t, frame) in ds.frames().iter().enumerate() {
        for (idx, val) in frame.values().iter().enumerate() {
            y[[idx, t]] = *val;
        }
    }
    let rhs = phi.dot(&y);
    let coeffs_cols = linalg::cholesky_solve_mat(&l, &rhs);
    let coefficients = coeffs_cols.t().to_owned();
    BasisExpansion::new(coefficients, *tb)
}

/// Reconstructs frames from coefficients on the given grid.
///
/// The result carries no mask or timestamps; callers re-attach metadata.
pub fn synthesize<S: Scalar>(
    expansion: &BasisExpansion<S>,
    domain: &GridDomain<S>,
) -> Result<FtsDataset<S>> {
    let phi = eval_basis_matrix(expansion.basis(), domain)?;
    let frames_flat = expansion.coefficients().dot(&phi);
    let (n1, n2) = domain.shape();
    let frames = frames_flat
        .rows()
        .into_iter()
        .map(|row| {
            SurfaceField::new(
                Array2::from_shape_vec((n1, n2), row.to_vec()).expect("row has N1·N2 entries"),
            )
        })
        .collect();
    FtsDataset::new(domain.clone(), frames, None, None)
}

/// Synthesizes a single coefficient vector into a surface field.
pub fn synthesize_one<S: Scalar>(
    coeffs: &Array1<S>,
    tb: &TensorBasis,
    domain: &GridDomain<S>,
) -> Result<SurfaceField<S>> {
    const OP: &str = "basis::synthesize_one";
    if coeffs.len() != tb.len() {
        return Err(Error::dimension(
            OP,
            format!("{} coefficients for {} basis functions", coeffs.len(), tb.len()),
        ));
    }
    let phi = eval_basis_matrix(tb, domain)?;
    let flat = coeffs
        .view()
        .insert_axis(ndarray::Axis(0))
        .dot(&phi)
        .index_axis_move(ndarray::Axis(0), 0);
    let (n1, n2) = domain.shape();
    Ok(SurfaceField::new(
        Array2::from_shape_vec((n1, n2), flat.to_vec()).expect("shape matches domain"),
    ))
}
