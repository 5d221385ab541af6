//! Functional principal component analysis for surface data.
//!
//! Input frames are expected to be centered already (the model layer centers
//! by the training mean). Two routes produce the same decomposition:
//!
//! * [`fpca_discretized`] works on vectorized grid values. It picks the
//!   cheaper of two equivalent eigenproblems: the N x N covariance when
//!   T' >= N, or the T' x T' frame Gram ("snapshot" route) when T' < N.
//! * [`fpca_basis`] works on basis coefficients given the basis Gram matrix,
//!   solving the symmetrized K x K problem.
//!
//! Eigenfunctions are normalized to unit quadrature norm and sign-fixed so
//! their largest-magnitude grid value is positive; scores follow the same
//! scaling and signs. The full positive spectrum is retained next to the kept
//! components so variance-fraction selection sees every positive eigenvalue.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::grid::{FtsDataset, SurfaceField};
use crate::linalg;
use crate::scalar::Scalar;

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentSelector<S> {
    /// Exactly M components; fails if fewer positive components exist.
    FixedM(usize),
    /// Smallest M whose eigenvalues explain at least this fraction of the
    /// total positive variance; in (0, 1].
    VarianceThreshold(S),
}

/// Which route produced a decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpcaMethod {
    Discretized,
    Basis,
}

/// Result of an FPCA fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FpcaResult<S> {
    method: FpcaMethod,
    eigenvalues: Vec<S>,
    components: Vec<SurfaceField<S>>,
    scores: Array2<S>,
    total_variance: S,
}

impl<S: Scalar> FpcaResult<S> {
    pub fn method(&self) -> FpcaMethod {
        self.method
    }

    /// Full positive spectrum, descending (not truncated to kept components).
    pub fn eigenvalues(&self) -> &[S] {
        &self.eigenvalues
    }

    /// Eigenvalues of the kept components.
    pub fn kept_eigenvalues(&self) -> &[S] {
        &self.eigenvalues[..self.components.len()]
    }

    /// Kept eigenfunctions, unit quadrature norm, sign-fixed.
    pub fn components(&self) -> &[SurfaceField<S>] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    /// Scores of the fitted frames: row t, column k = <frame_t, component_k>.
    pub fn scores(&self) -> &Array2<S> {
        &self.scores
    }

    /// Sum of the positive spectrum.
    pub fn total_variance(&self) -> S {
        self.total_variance
    }
}

/// Smallest M with cumulative variance fraction >= threshold.
///
/// The cumulative and total sums use the same left-to-right summation order,
/// so a threshold of exactly 1 selects every positive component.
pub fn select_num_components<S: Scalar>(eigenvalues: &[S], threshold: S) -> Result<usize> {
    const OP: &str = "fpca::select_num_components";
    if eigenvalues.is_empty() {
        return Err(Error::argument(OP, "empty eigenvalue list"));
    }
    if eigenvalues.iter().any(|l| !(*l >= S::zero()) || !l.is_finite()) {
        return Err(Error::argument(OP, "eigenvalues must be finite and non-negative"));
    }
    if !(threshold > S::zero() && threshold <= S::one()) {
        return Err(Error::argument(OP, format!("threshold {threshold} outside (0, 1]")));
    }
    let mut total = S::zero();
    for l in eigenvalues {
        total += *l;
    }
    if !(total > S::zero()) {
        return Err(Error::degenerate(OP, "total variance is zero"));
    }
    let target = threshold * total;
    let mut cum = S::zero();
    for (m, l) in eigenvalues.iter().enumerate() {
        cum += *l;
        if cum >= target {
            return Ok(m + 1);
        }
    }
    // Roundoff can leave cum a hair under threshold·total when threshold < 1;
    // with the shared summation order cum equals total at the end, so this is
    // only reachable for threshold < 1 and keeping everything is correct.
    Ok(eigenvalues.len())
}

fn resolve_selector<S: Scalar>(
    op: &'static str,
    selector: &ComponentSelector<S>,
    eigenvalues: &[S],
) -> Result<usize> {
    match selector {
        ComponentSelector::FixedM(m) => {
            if *m == 0 {
                return Err(Error::argument(op, "cannot keep zero components"));
            }
            if *m > eigenvalues.len() {
                return Err(Error::argument(
                    op,
                    format!("requested {m} components, only {} are positive", eigenvalues.len()),
                ));
            }
            Ok(*m)
        }
        ComponentSelector::VarianceThreshold(th) => select_num_components(eigenvalues, *th),
    }
}

/// Copies the selected frames into a T' x N matrix, row-major vectorized,
/// with cells outside the mask zeroed.
fn stack_frames<S: Scalar>(ds: &FtsDataset<S>, indices: &[usize]) -> Array2<S> {
    let (n1, n2) = ds.domain().shape();
    let n = n1 * n2;
    let mut y = Array2::<S>::zeros((indices.len(), n));
    for (row, &t) in indices.iter().enumerate() {
        match ds.mask() {
            None => {
                for (k, v) in ds.frame(t).values().iter().enumerate() {
                    y[[row, k]] = *v;
                }
            }
            Some(m) => {
                for (k, (v, inside)) in
                    ds.frame(t).values().iter().zip(m.values().iter()).enumerate()
                {
                    y[[row, k]] = if *inside { *v } else { S::zero() };
                }
            }
        }
    }
    y
}

fn check_indices(op: &'static str, indices: &[usize], t_len: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::argument(op, "index set is empty"));
    }
    if let Some(&bad) = indices.iter().find(|&&t| t >= t_len) {
        return Err(Error::argument(op, format!("index {bad} out of range (T = {t_len})")));
    }
    Ok(())
}

/// The N x N matrix (1/T')·YᵀY over the selected (mask-zeroed) frames.
///
/// This is the unweighted grid covariance; quadrature weights enter the
/// eigenvalue scaling, not this matrix. Intended for small grids.
pub fn covariance_matrix<S: Scalar>(ds: &FtsDataset<S>, indices: &[usize]) -> Result<Array2<S>> {
    const OP: &str = "fpca::covariance_matrix";
    check_indices(OP, indices, ds.t_len())?;
    let y = stack_frames(ds, indices);
    let inv_t = S::one() / S::from_index(indices.len());
    let mut c = y.t().dot(&y);
    c.mapv_inplace(|x| x * inv_t);
    Ok(c)
}

/// Flips the field (in place) so its largest-magnitude entry is positive;
/// first occurrence in row-major order breaks ties. Returns true if flipped.
fn fix_sign<S: Scalar>(field: &mut SurfaceField<S>) -> bool {
    let mut best = S::zero();
    let mut best_val = S::zero();
    for v in field.values().iter() {
        if v.abs() > best {
            best = v.abs();
            best_val = *v;
        }
    }
    if best_val < S::zero() {
        field.values_mut().mapv_inplace(|x| -x);
        true
    } else {
        false
    }
}

/// Positive spectrum cutoff relative to the leading eigenvalue.
fn positive_spectrum<S: Scalar>(op: &'static str, values: &[S]) -> Result<Vec<S>> {
    let lead = values.first().copied().unwrap_or(S::zero());
    if !(lead > S::zero()) {
        return Err(Error::degenerate(op, "data has no positive variance component"));
    }
    let cutoff = lead * S::epsilon() * S::cast(1e4);
    Ok(values.iter().copied().take_while(|l| *l > cutoff).collect())
}

/// FPCA of vectorized grid frames.
///
/// The frames selected by `indices` must already be centered. Chooses the
/// direct N x N eigenproblem when T' >= N and the T' x T' snapshot problem
/// otherwise; both give eigenvalues on the quadrature scale and unit
/// quadrature-norm eigenfunctions.
pub fn fpca_discretized<S: Scalar>(
    ds: &FtsDataset<S>,
    indices: &[usize],
    selector: &ComponentSelector<S>,
) -> Result<FpcaResult<S>> {
    const OP: &str = "fpca::discretized";
    check_indices(OP, indices, ds.t_len())?;
    let (n1, n2) = ds.domain().shape();
    let n = n1 * n2;
    let t_len = indices.len();
    let quad = ds.domain().quad_scale();
    let y = stack_frames(ds, indices);

    let (eigenvalues, mut components) = if t_len >= n {
        // Direct route: eigen of (1/T')YᵀY, eigenvalues scaled by the cell
        // weight, eigenvectors rescaled to unit quadrature norm.
        let cov = {
            let inv_t = S::one() / S::from_index(t_len);
            let mut c = y.t().dot(&y);
            c.mapv_inplace(|x| x * inv_t);
            c
        };
        let eig = linalg::sym_eigen(&cov.view())?;
        let scaled: Vec<S> = eig.values.iter().map(|l| *l * quad).collect();
        let spectrum = positive_spectrum(OP, &scaled)?;
        let inv_root_quad = quad.sqrt().recip();
        let comps: Vec<SurfaceField<S>> = (0..spectrum.len())
            .map(|k| {
                let col = eig.vectors.index_axis(Axis(1), k);
                let vals: Vec<S> = col.iter().map(|x| *x * inv_root_quad).collect();
                SurfaceField::new(Array2::from_shape_vec((n1, n2), vals).expect("N entries"))
            })
            .collect();
        (spectrum, comps)
    } else {
        // Snapshot route: eigen of the scaled frame Gram (quad/T')·YYᵀ gives
        // the eigenvalues directly; eigenfunctions are score-weighted frame
        // combinations, normalized afterwards.
        let gram = {
            let scale = quad / S::from_index(t_len);
            let mut g = y.dot(&y.t());
            g.mapv_inplace(|x| x * scale);
            g
        };
        let eig = linalg::sym_eigen(&gram.view())?;
        let spectrum = positive_spectrum(OP, &eig.values)?;
        let comps: Vec<SurfaceField<S>> = (0..spectrum.len())
            .map(|k| {
                let u = eig.vectors.index_axis(Axis(1), k);
                let flat = u.insert_axis(Axis(0)).dot(&y).index_axis_move(Axis(0), 0);
                let norm_sq: S = flat.iter().map(|x| *x * *x).sum::<S>() * quad;
                let inv_norm = norm_sq.sqrt().recip();
                let vals: Vec<S> = flat.iter().map(|x| *x * inv_norm).collect();
                SurfaceField::new(Array2::from_shape_vec((n1, n2), vals).expect("N entries"))
            })
            .collect();
        (spectrum, comps)
    };

    let m = resolve_selector(OP, selector, &eigenvalues)?;
    components.truncate(m);
    for c in components.iter_mut() {
        fix_sign(c);
    }

    // Scores via quadrature against the kept components; Y rows are already
    // mask-zeroed so the plain product is the masked inner product.
    let mut comp_mat = Array2::<S>::zeros((m, n));
    for (k, c) in components.iter().enumerate() {
        for (idx, v) in c.values().iter().enumerate() {
            comp_mat[[k, idx]] = *v;
        }
    }
    let mut scores = y.dot(&comp_mat.t());
    scores.mapv_inplace(|x| x * quad);

    let mut total = S::zero();
    for l in &eigenvalues {
        total += *l;
    }
    Ok(FpcaResult {
        method: FpcaMethod::Discretized,
        eigenvalues,
        components,
        scores,
        total_variance: total,
    })
}

/// FPCA of basis coefficients.
///
/// `expansion` holds centered coefficient rows; `w` is the basis Gram matrix
/// on the evaluation grid. Solves the symmetrized eigenproblem
/// W^{1/2}·(1/T')·CᵀC·W^{1/2}, maps eigenvectors back through W^{-1/2}, and
/// synthesizes eigenfunctions on `domain` for normalization, sign fixing, and
/// downstream quadrature use.
pub fn fpca_basis<S: Scalar>(
    expansion: &crate::basis::BasisExpansion<S>,
    w: &Array2<S>,
    selector: &ComponentSelector<S>,
    domain: &crate::grid::GridDomain<S>,
) -> Result<FpcaResult<S>> {
    const OP: &str = "fpca::basis";
    let k = expansion.basis().len();
    if w.dim() != (k, k) {
        return Err(Error::dimension(
            OP,
            format!("Gram matrix is {:?}, basis has {k} functions", w.dim()),
        ));
    }
    let t_len = expansion.t_len();
    if t_len == 0 {
        return Err(Error::argument(OP, "expansion has no frames"));
    }

    // W^{1/2} and W^{-1/2} from the Gram eigendecomposition.
    let weig = linalg::sym_eigen(&w.view())?;
    let wmax = weig.values.first().copied().unwrap_or(S::zero());
    if !(wmax > S::zero()) {
        return Err(Error::numerical(OP, "basis Gram matrix is not positive"));
    }
    let wtol = wmax * S::epsilon() * S::cast(1e4);
    if weig.values.iter().any(|mu| *mu < -wtol) {
        return Err(Error::numerical(OP, "basis Gram matrix is not positive semidefinite"));
    }
    if weig.values.iter().any(|mu| *mu <= wtol) {
        return Err(Error::singular(OP, "basis Gram matrix is rank-deficient"));
    }
    let mut root = Array2::<S>::zeros((k, k));
    let mut inv_root = Array2::<S>::zeros((k, k));
    for j in 0..k {
        let r = weig.values[j].sqrt();
        for i in 0..k {
            root[[i, j]] = weig.vectors[[i, j]] * r;
            inv_root[[i, j]] = weig.vectors[[i, j]] / r;
        }
    }
    let w_half = root.dot(&weig.vectors.t());
    let w_inv_half = inv_root.dot(&weig.vectors.t());

    let c = expansion.coefficients();
    let inner = {
        let inv_t = S::one() / S::from_index(t_len);
        let mut m = c.t().dot(c);
        m.mapv_inplace(|x| x * inv_t);
        m
    };
    let b = w_half.dot(&inner).dot(&w_half);
    let eig = linalg::sym_eigen(&b.view())?;
    let eigenvalues = positive_spectrum(OP, &eig.values)?;
    let m = resolve_selector(OP, selector, &eigenvalues)?;

    let mut components = Vec::with_capacity(m);
    let mut coeff_cols = Array2::<S>::zeros((k, m));
    for j in 0..m {
        let theta = eig.vectors.index_axis(Axis(1), j);
        let bj = w_inv_half.dot(&theta);
        let mut field = crate::basis::synthesize_one(&bj, expansion.basis(), domain)?;
        let quad = domain.quad_scale();
        let norm_sq: S = field.values().iter().map(|x| *x * *x).sum::<S>() * quad;
        if !(norm_sq > S::zero()) {
            return Err(Error::numerical(OP, "eigenfunction synthesized to zero"));
        }
        let mut scale = norm_sq.sqrt().recip();
        field.values_mut().mapv_inplace(|x| x * scale);
        if fix_sign(&mut field) {
            scale = -scale;
        }
        for i in 0..k {
            coeff_cols[[i, j]] = bj[i] * scale;
        }
        components.push(field);
    }

    // Scores in coefficient space: <Y_t, xi_j> = c_tᵀ·W·b_j, with b_j already
    // carrying the normalization and sign of the synthesized eigenfunction.
    let scores = c.dot(&w.dot(&coeff_cols));

    let mut total = S::zero();
    for l in &eigenvalues {
        total += *l;
    }
    Ok(FpcaResult {
        method: FpcaMethod::Basis,
        eigenvalues,
        components,
        scores,
        total_variance: total,
    })
}

/// Quadrature scores of one field against the kept components.
pub fn project_scores<S: Scalar>(field: &SurfaceField<S>, res: &FpcaResult<S>) -> Result<Vec<S>> {
    const OP: &str = "fpca::project_scores";
    let Some(first) = res.components().first() else {
        return Err(Error::argument(OP, "result has no components"));
    };
    if field.shape() != first.shape() {
        return Err(Error::dimension(
            OP,
            format!("field shape {:?} does not match components {:?}", field.shape(), first.shape()),
        ));
    }
    let (n1, n2) = field.shape();
    let quad = S::one() / S::from_index(n1 * n2);
    Ok(res
        .components()
        .iter()
        .map(|c| {
            let mut sum = S::zero();
            for (a, b) in field.values().iter().zip(c.values().iter()) {
                sum += *a * *b;
            }
            sum * quad
        })
        .collect())
}
