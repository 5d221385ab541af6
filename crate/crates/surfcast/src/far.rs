//! Functional autoregressive point predictors for surface series.
//!
//! All predictors share one contract: given the last observed frame x, return
//! a prediction of the next frame, zeroed outside the dataset mask. Training
//! only ever reads the frames reachable from the training index set (the
//! frames themselves plus the lag-1 neighbors the chosen pair rule needs), so
//! calibration-only frames cannot influence a fit.
//!
//! Variants:
//! * `naive` predicts the input unchanged.
//! * `oracle` applies a known coefficient-space operator (basis, Ψ, Gram).
//! * `concurrent` fits one lag-1 regression slope per grid cell.
//! * `ek` estimates the autoregression operator on the leading principal
//!   components, dividing lag-1 cross-projections by component variances.
//! * `ek+` is `ek` with a variance ridge: each divisor is shifted by
//!   1.5·(λ1 + λ2) before inversion.
//! * `var` fits an unregularized least-squares transition on score vectors.

use ndarray::{Array1, Array2, Axis};

use crate::basis::{eval_basis_matrix, TensorBasis};
use crate::error::{Error, Result};
use crate::fpca::{fpca_discretized, project_scores, ComponentSelector, FpcaResult};
use crate::grid::{inner_product, pointwise_mean, FtsDataset, Mask, SurfaceField};
use crate::linalg;
use crate::scalar::Scalar;

/// Point-predictor family member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FarVariant {
    Naive,
    Oracle,
    Concurrent,
    Ek,
    EkPlus,
    VarScores,
}

impl FarVariant {
    /// Stable short name used in CSV output and on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            FarVariant::Naive => "naive",
            FarVariant::Oracle => "oracle",
            FarVariant::Concurrent => "concurrent",
            FarVariant::Ek => "ek",
            FarVariant::EkPlus => "ek+",
            FarVariant::VarScores => "var",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "naive" => Some(FarVariant::Naive),
            "oracle" => Some(FarVariant::Oracle),
            "concurrent" => Some(FarVariant::Concurrent),
            "ek" => Some(FarVariant::Ek),
            "ek+" => Some(FarVariant::EkPlus),
            "var" => Some(FarVariant::VarScores),
            _ => None,
        }
    }
}

impl std::fmt::Display for FarVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FarVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        FarVariant::parse(s).ok_or_else(|| {
            format!("unknown method '{s}' (expected naive, oracle, concurrent, ek, ek+, var)")
        })
    }
}

/// Which lag-1 pairs feed the cross-covariance (and the slope estimators).
///
/// With training set I1 of size m (indices ascending):
/// * `TrimForward`: pairs (t, t+1) for all but the last training index;
///   divisor m-1. Successor frames may lie outside I1.
/// * `TrimBackward`: pairs (t-1, t) for all but the first training index;
///   divisor m-1.
/// * `BurnIn` (default): pairs (t-1, t) for every training index; divisor m.
///   Requires every training index to have a predecessor, which the split
///   layer guarantees by reserving frame 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gamma1Variant {
    TrimForward,
    TrimBackward,
    #[default]
    BurnIn,
}

impl Gamma1Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Gamma1Variant::TrimForward => "trim-forward",
            Gamma1Variant::TrimBackward => "trim-backward",
            Gamma1Variant::BurnIn => "burn-in",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "trim-forward" => Some(Gamma1Variant::TrimForward),
            "trim-backward" => Some(Gamma1Variant::TrimBackward),
            "burn-in" => Some(Gamma1Variant::BurnIn),
            _ => None,
        }
    }
}

/// Form of the component-variance divisor in the `ek` transfer matrix.
///
/// `Inverted` divides lag-1 cross-projections by the component variances (the
/// pseudo-inverse construction); `PrintedUninverted` multiplies instead,
/// preserved for comparison with a published variant of the formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EkEigenvalueForm {
    #[default]
    Inverted,
    PrintedUninverted,
}

/// Options shared by the estimating variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig<S> {
    /// Component count rule for the score-space variants.
    pub selector: ComponentSelector<S>,
    /// Lag-1 pair rule.
    pub gamma1: Gamma1Variant,
    /// Divisor form for `ek`/`ek+`.
    pub ek_eigenvalues: EkEigenvalueForm,
}

impl<S: Scalar> Default for FitConfig<S> {
    fn default() -> Self {
        FitConfig {
            selector: ComponentSelector::VarianceThreshold(S::cast(0.8)),
            gamma1: Gamma1Variant::default(),
            ek_eigenvalues: EkEigenvalueForm::default(),
        }
    }
}

/// A known autoregression kernel in tensor-coefficient form.
///
/// The kernel is psi(point, point') = phi(point)ᵀ·Ψ·W·phi(point'), where phi
/// stacks the tensor basis functions, Ψ is the coefficient matrix, and W is
/// the basis Gram matrix on the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueKernel<S> {
    basis: TensorBasis,
    psi: Array2<S>,
    gram: Array2<S>,
}

impl<S: Scalar> TrueKernel<S> {
    pub fn new(basis: TensorBasis, psi: Array2<S>, gram: Array2<S>) -> Result<Self> {
        const OP: &str = "far::true_kernel";
        let k = basis.len();
        if psi.dim() != (k, k) {
            return Err(Error::dimension(OP, format!("psi is {:?}, basis has {k} functions", psi.dim())));
        }
        if gram.dim() != (k, k) {
            return Err(Error::dimension(OP, format!("gram is {:?}, basis has {k} functions", gram.dim())));
        }
        Ok(TrueKernel { basis, psi, gram })
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    pub fn psi(&self) -> &Array2<S> {
        &self.psi
    }

    pub fn gram(&self) -> &Array2<S> {
        &self.gram
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Payload<S> {
    Naive,
    Concurrent {
        slope: SurfaceField<S>,
    },
    Scores {
        components: Vec<SurfaceField<S>>,
        transfer: Array2<S>,
    },
    Oracle {
        phi: Array2<S>,
        chol: Array2<S>,
        op: Array2<S>,
    },
}

/// A fitted (or oracle) one-step point predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct FarPredictor<S> {
    variant: FarVariant,
    shape: (usize, usize),
    mean: SurfaceField<S>,
    mask: Option<Mask>,
    payload: Payload<S>,
}

impl<S: Scalar> FarPredictor<S> {
    pub fn variant(&self) -> FarVariant {
        self.variant
    }

    /// Pointwise training mean the fit centered by (all zeros for naive and
    /// oracle).
    pub fn train_mean(&self) -> &SurfaceField<S> {
        &self.mean
    }

    pub fn mask(&self) -> Option<&Mask> {
        self.mask.as_ref()
    }

    /// Score-space transition matrix for `ek`/`ek+`/`var`, the coefficient
    /// operator Ψ·W for `oracle`, `None` otherwise.
    pub fn transfer_matrix(&self) -> Option<&Array2<S>> {
        match &self.payload {
            Payload::Scores { transfer, .. } => Some(transfer),
            Payload::Oracle { op, .. } => Some(op),
            _ => None,
        }
    }

    /// Kept principal components for the score-space variants.
    pub fn components(&self) -> Option<&[SurfaceField<S>]> {
        match &self.payload {
            Payload::Scores { components, .. } => Some(components),
            _ => None,
        }
    }

    /// Per-cell slope field for the concurrent variant.
    pub fn concurrent_slope(&self) -> Option<&SurfaceField<S>> {
        match &self.payload {
            Payload::Concurrent { slope } => Some(slope),
            _ => None,
        }
    }

    /// Frobenius norm of the transfer matrix, when one exists.
    ///
    /// A stationary autoregression has operator norm below 1; the Frobenius
    /// norm is an upper bound, so a value >= 1 is only a hint, not proof of
    /// non-stationarity. Callers may surface it as a warning.
    pub fn transfer_frobenius(&self) -> Option<S> {
        self.transfer_matrix().map(|t| linalg::frobenius(&t.view()))
    }

    /// One-step prediction for covariate frame `x`, zeroed outside the mask.
    pub fn predict(&self, x: &SurfaceField<S>) -> Result<SurfaceField<S>> {
        const OP: &str = "far::predict";
        if x.shape() != self.shape {
            return Err(Error::dimension(
                OP,
                format!("input shape {:?}, predictor expects {:?}", x.shape(), self.shape),
            ));
        }
        let mut out = match &self.payload {
            Payload::Naive => x.clone(),
            Payload::Concurrent { slope } => {
                let mut o = self.mean.clone();
                ndarray::Zip::from(o.values_mut())
                    .and(x.values())
                    .and(self.mean.values())
                    .and(slope.values())
                    .for_each(|o, &xv, &mu, &b| {
                        *o = mu + b * (xv - mu);
                    });
                o
            }
            Payload::Scores { components, transfer } => {
                let mut centered = x.clone();
                *centered.values_mut() -= self.mean.values();
                centered.zero_outside(self.mask.as_ref());
                let (n1, n2) = self.shape;
                let quad = S::one() / S::from_index(n1 * n2);
                let a: Vec<S> = components
                    .iter()
                    .map(|c| {
                        let mut sum = S::zero();
                        for (p, q) in centered.values().iter().zip(c.values().iter()) {
                            sum += *p * *q;
                        }
                        sum * quad
                    })
                    .collect();
                let b = transfer.dot(&Array1::from_vec(a));
                let mut o = self.mean.clone();
                for (k, comp) in components.iter().enumerate() {
                    let w = b[k];
                    ndarray::Zip::from(o.values_mut()).and(comp.values()).for_each(|o, &cv| {
                        *o += w * cv;
                    });
                }
                o
            }
            Payload::Oracle { phi, chol, op } => {
                let flat = Array1::from_iter(x.values().iter().copied());
                let rhs = phi.dot(&flat);
                let coeffs = linalg::cholesky_solve(chol, &rhs);
                let next = op.dot(&coeffs);
                let out_flat = next.insert_axis(Axis(0)).dot(phi).index_axis_move(Axis(0), 0);
                let (n1, n2) = self.shape;
                SurfaceField::new(
                    Array2::from_shape_vec((n1, n2), out_flat.to_vec()).expect("grid-sized output"),
                )
            }
        };
        out.zero_outside(self.mask.as_ref());
        Ok(out)
    }
}

fn validate_train(op: &'static str, ds_len: usize, train: &[usize]) -> Result<()> {
    if ds_len < 3 {
        return Err(Error::argument(op, format!("need at least 3 frames to fit, got {ds_len}")));
    }
    if train.is_empty() {
        return Err(Error::argument(op, "empty training index set"));
    }
    if train.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::argument(op, "training indices must be strictly increasing"));
    }
    if *train.last().expect("non-empty") >= ds_len {
        return Err(Error::argument(
            op,
            format!("training index {} out of range (T = {ds_len})", train.last().expect("non-empty")),
        ));
    }
    Ok(())
}

/// (covariate, response) index pairs for the chosen rule; see [`Gamma1Variant`].
fn training_pairs(
    op: &'static str,
    train: &[usize],
    variant: Gamma1Variant,
) -> Result<Vec<(usize, usize)>> {
    if train.len() < 2 {
        return Err(Error::argument(op, "need at least 2 training indices to form lag-1 pairs"));
    }
    match variant {
        Gamma1Variant::BurnIn => {
            if train[0] == 0 {
                return Err(Error::argument(
                    op,
                    "burn-in pair rule requires a predecessor for every training index; frame 0 has none",
                ));
            }
            Ok(train.iter().map(|&t| (t - 1, t)).collect())
        }
        Gamma1Variant::TrimForward => {
            Ok(train[..train.len() - 1].iter().map(|&t| (t, t + 1)).collect())
        }
        Gamma1Variant::TrimBackward => Ok(train[1..].iter().map(|&t| (t - 1, t)).collect()),
    }
}

fn centered_frame<S: Scalar>(
    ds: &FtsDataset<S>,
    mean: &SurfaceField<S>,
    t: usize,
) -> SurfaceField<S> {
    let mut f = ds.frame(t).clone();
    *f.values_mut() -= mean.values();
    f.zero_outside(ds.mask());
    f
}

fn degenerate_if_constant<S: Scalar>(
    op: &'static str,
    ds: &FtsDataset<S>,
    mean: &SurfaceField<S>,
    train: &[usize],
) -> Result<()> {
    let mut max_abs = S::zero();
    for &t in train {
        let c = centered_frame(ds, mean, t);
        for v in c.values().iter() {
            max_abs = max_abs.max(v.abs());
        }
    }
    if max_abs == S::zero() {
        return Err(Error::degenerate(op, "training frames are identical after centering"));
    }
    Ok(())
}

/// Shared state for the score-space variants: training mean, FPCA of the
/// centered training frames, and score rows for the lag-1 pairs.
///
/// Preparing this once lets `ek`, `ek+`, and `var` be fitted from a single
/// decomposition of the same replication.
#[derive(Debug, Clone)]
pub struct ScoreFitState<S> {
    mean: SurfaceField<S>,
    fpca: FpcaResult<S>,
    sx: Array2<S>,
    sy: Array2<S>,
    mask: Option<Mask>,
    shape: (usize, usize),
}

impl<S: Scalar> ScoreFitState<S> {
    pub fn fpca(&self) -> &FpcaResult<S> {
        &self.fpca
    }

    pub fn train_mean(&self) -> &SurfaceField<S> {
        &self.mean
    }
}

/// Centers the training frames, runs FPCA, and projects the lag-1 pair frames
/// onto the kept components.
pub fn prepare_score_state<S: Scalar>(
    ds: &FtsDataset<S>,
    train: &[usize],
    cfg: &FitConfig<S>,
) -> Result<ScoreFitState<S>> {
    const OP: &str = "far::prepare_score_state";
    validate_train(OP, ds.t_len(), train)?;
    let pairs = training_pairs(OP, train, cfg.gamma1)?;
    let mean = pointwise_mean(ds, train)?;
    degenerate_if_constant(OP, ds, &mean, train)?;

    let centered_train: Vec<SurfaceField<S>> =
        train.iter().map(|&t| centered_frame(ds, &mean, t)).collect();
    let centered_ds = FtsDataset::new(
        ds.domain().clone(),
        centered_train,
        ds.mask().cloned(),
        None,
    )?;
    let all: Vec<usize> = (0..train.len()).collect();
    let fpca = fpca_discretized(&centered_ds, &all, &cfg.selector)?;

    let m = fpca.num_components();
    let mut sx = Array2::<S>::zeros((pairs.len(), m));
    let mut sy = Array2::<S>::zeros((pairs.len(), m));
    for (row, &(cov, resp)) in pairs.iter().enumerate() {
        let xc = centered_frame(ds, &mean, cov);
        for (k, v) in project_scores(&xc, &fpca)?.into_iter().enumerate() {
            sx[[row, k]] = v;
        }
        let yc = centered_frame(ds, &mean, resp);
        for (k, v) in project_scores(&yc, &fpca)?.into_iter().enumerate() {
            sy[[row, k]] = v;
        }
    }
    Ok(ScoreFitState {
        mean,
        fpca,
        sx,
        sy,
        mask: ds.mask().cloned(),
        shape: ds.domain().shape(),
    })
}

/// Fits `ek`, `ek+`, or `var` from a prepared score state.
pub fn fit_scored<S: Scalar>(
    variant: FarVariant,
    state: &ScoreFitState<S>,
    cfg: &FitConfig<S>,
) -> Result<FarPredictor<S>> {
    const OP: &str = "far::fit_scored";
    let m = state.fpca.num_components();
    let n_pairs = state.sx.nrows();
    let inv_pairs = S::one() / S::from_index(n_pairs);
    // Lag-1 cross-projection matrix: G1[i][j] = (1/div)·sum_p sy[p][i]·sx[p][j].
    let mut g1 = state.sy.t().dot(&state.sx);
    g1.mapv_inplace(|x| x * inv_pairs);

    let transfer = match variant {
        FarVariant::Ek | FarVariant::EkPlus => {
            let lambda = state.fpca.kept_eigenvalues();
            let spectrum = state.fpca.eigenvalues();
            let ridge = if variant == FarVariant::EkPlus {
                let l1 = spectrum.first().copied().unwrap_or(S::zero());
                let l2 = spectrum.get(1).copied().unwrap_or(S::zero());
                S::cast(1.5) * (l1 + l2)
            } else {
                S::zero()
            };
            let mut t = g1;
            for j in 0..m {
                let denom = lambda[j] + ridge;
                if !(denom > S::zero()) {
                    return Err(Error::degenerate(OP, format!("component variance {j} is not positive")));
                }
                let w = match cfg.ek_eigenvalues {
                    EkEigenvalueForm::Inverted => denom.recip(),
                    EkEigenvalueForm::PrintedUninverted => denom,
                };
                for i in 0..m {
                    t[[i, j]] *= w;
                }
            }
            t
        }
        FarVariant::VarScores => {
            // Least squares score transition: minimize sum_p |sy_p - B·sx_p|^2.
            let sxx = state.sx.t().dot(&state.sx);
            let sxy = state.sx.t().dot(&state.sy);
            let bt = linalg::spd_solve(&sxx.view(), &sxy).map_err(|_| {
                Error::singular(OP, "score design matrix is singular")
            })?;
            bt.t().to_owned()
        }
        other => {
            return Err(Error::argument(OP, format!("variant {other} is not score-based")));
        }
    };

    Ok(FarPredictor {
        variant,
        shape: state.shape,
        mean: state.mean.clone(),
        mask: state.mask.clone(),
        payload: Payload::Scores {
            components: state.fpca.components().to_vec(),
            transfer,
        },
    })
}

/// Fits a predictor on the training index set.
///
/// `Oracle` is rejected here because it is not estimated from data; build it
/// with [`fit_oracle`].
pub fn fit<S: Scalar>(
    variant: FarVariant,
    ds: &FtsDataset<S>,
    train: &[usize],
    cfg: &FitConfig<S>,
) -> Result<FarPredictor<S>> {
    const OP: &str = "far::fit";
    validate_train(OP, ds.t_len(), train)?;
    match variant {
        FarVariant::Oracle => Err(Error::argument(
            OP,
            "the oracle predictor is built from a known kernel; use fit_oracle",
        )),
        FarVariant::Naive => {
            let mean = pointwise_mean(ds, train)?;
            Ok(FarPredictor {
                variant,
                shape: ds.domain().shape(),
                mean,
                mask: ds.mask().cloned(),
                payload: Payload::Naive,
            })
        }
        FarVariant::Concurrent => {
            let pairs = training_pairs(OP, train, cfg.gamma1)?;
            let mean = pointwise_mean(ds, train)?;
            degenerate_if_constant(OP, ds, &mean, train)?;
            let (n1, n2) = ds.domain().shape();
            let mut num = Array2::<S>::zeros((n1, n2));
            let mut den = Array2::<S>::zeros((n1, n2));
            for &(cov, resp) in &pairs {
                let xc = centered_frame(ds, &mean, cov);
                let yc = centered_frame(ds, &mean, resp);
                ndarray::Zip::from(&mut num)
                    .and(&mut den)
                    .and(xc.values())
                    .and(yc.values())
                    .for_each(|n, d, &x, &y| {
                        *n += x * y;
                        *d += x * x;
                    });
            }
            let mut slope = Array2::<S>::zeros((n1, n2));
            ndarray::Zip::from(&mut slope).and(&num).and(&den).for_each(|s, &n, &d| {
                // Cells with no covariate variation get slope 0 (predict the mean).
                *s = if d > S::zero() { n / d } else { S::zero() };
            });
            Ok(FarPredictor {
                variant,
                shape: (n1, n2),
                mean,
                mask: ds.mask().cloned(),
                payload: Payload::Concurrent { slope: SurfaceField::new(slope) },
            })
        }
        FarVariant::Ek | FarVariant::EkPlus | FarVariant::VarScores => {
            let state = prepare_score_state(ds, train, cfg)?;
            fit_scored(variant, &state, cfg)
        }
    }
}

/// Builds the oracle predictor from a known kernel on the dataset's grid.
pub fn fit_oracle<S: Scalar>(ds: &FtsDataset<S>, truth: &TrueKernel<S>) -> Result<FarPredictor<S>> {
    const OP: &str = "far::fit_oracle";
    let domain = ds.domain();
    let phi = eval_basis_matrix(truth.basis(), domain)?;
    let gram_grid = phi.dot(&phi.t());
    let chol = linalg::cholesky(&gram_grid.view()).map_err(|_| {
        Error::singular(OP, "kernel basis is rank-deficient on this grid")
    })?;
    let op = truth.psi().dot(truth.gram());
    let (n1, n2) = domain.shape();
    Ok(FarPredictor {
        variant: FarVariant::Oracle,
        shape: (n1, n2),
        mean: SurfaceField::zeros(n1, n2),
        mask: ds.mask().cloned(),
        payload: Payload::Oracle { phi, chol, op },
    })
}

/// Applies the empirical lag-1 covariance operator to a field:
/// (1/div)·sum over pairs of <cov_frame, x>·resp_frame, on raw frames.
pub fn lag1_covariance_apply<S: Scalar>(
    ds: &FtsDataset<S>,
    indices: &[usize],
    variant: Gamma1Variant,
    x: &SurfaceField<S>,
) -> Result<SurfaceField<S>> {
    const OP: &str = "far::lag1_covariance_apply";
    validate_train(OP, ds.t_len(), indices)?;
    let pairs = training_pairs(OP, indices, variant)?;
    let (n1, n2) = ds.domain().shape();
    let mut acc = SurfaceField::zeros(n1, n2);
    for &(cov, resp) in &pairs {
        let w = inner_product(ds.frame(cov), x, ds.domain(), ds.mask())?;
        ndarray::Zip::from(acc.values_mut())
            .and(ds.frame(resp).values())
            .for_each(|a, &r| {
                *a += w * r;
            });
    }
    let inv = S::one() / S::from_index(pairs.len());
    acc.values_mut().mapv_inplace(|v| v * inv);
    acc.zero_outside(ds.mask());
    Ok(acc)
}
