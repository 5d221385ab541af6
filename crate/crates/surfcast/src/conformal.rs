//! Split-conformal prediction bands with blockwise calibration permutations.
//!
//! The band around a point prediction g is {y : |y - g| <= k·s on the mask},
//! with a data-driven modulation s (unit mask integral) and a radius k chosen
//! from calibration nonconformity scores. Membership is decided through the
//! score max|y - g|/s <= k, which is the same predicate evaluated with the
//! same float operations as the permutation p-value test p(y) > alpha, so the
//! closed form and the test agree exactly, ties included.
//!
//! Calibration scores are indexed by their temporal position; a block size
//! b >= 1 thins the usable permutation family to cyclic shifts by multiples
//! of b, which for the radius means ranking only the scores at positions
//! b, 2b, ... within the calibration segment.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::far::FarPredictor;
use crate::grid::{pointwise_std, FtsDataset, Mask, SurfaceField};
use crate::rng::derive_rng;
use crate::scalar::Scalar;

/// How the usable indices are partitioned into training and calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Seeded uniform partition.
    Random,
    /// First indices train, the rest calibrate.
    Sequential,
}

impl SplitMode {
    pub fn name(&self) -> &'static str {
        match self {
            SplitMode::Random => "random",
            SplitMode::Sequential => "sequential",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random" => Some(SplitMode::Random),
            "sequential" => Some(SplitMode::Sequential),
            _ => None,
        }
    }
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A train/calibration partition of the usable frame indices.
///
/// Frame 0 is the burn-in frame: it belongs to neither set and stays
/// available as the lag-1 predecessor of index 1. Both index lists are
/// ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub calib: Vec<usize>,
    pub mode: SplitMode,
    pub seed: u64,
    pub burn_in: usize,
}

impl SplitPlan {
    /// Training set size m.
    pub fn m(&self) -> usize {
        self.train.len()
    }

    /// Calibration set size l.
    pub fn l(&self) -> usize {
        self.calib.len()
    }

    /// Re-partitions so the calibration size works with block size `b` at
    /// miscoverage `alpha`: (l+1) divisible by b and a finite band possible
    /// (b/(l+1) <= alpha). Among feasible sizes, ones where alpha·(l+1)/b is
    /// an integer (the band sits at an exact level) are preferred, then
    /// closeness to the current l, then the smaller l. No-op when the current
    /// l already qualifies. The same seed reproduces the same random draw.
    pub fn adjust_for_blocking<S: Scalar>(&self, b: usize, alpha: S) -> Result<SplitPlan> {
        const OP: &str = "conformal::adjust_for_blocking";
        if b == 0 {
            return Err(Error::argument(OP, "block size must be at least 1"));
        }
        validate_alpha(OP, alpha)?;
        let feasible = |l: usize| -> bool {
            (l + 1) % b == 0 && S::one() / S::from_index((l + 1) / b) <= alpha
        };
        let l = self.l();
        if feasible(l) {
            return Ok(self.clone());
        }
        let usable = self.m() + l;
        let lo = 2.max(b.saturating_sub(1));
        if usable < lo + 2 {
            return Err(Error::argument(
                OP,
                format!("only {usable} usable frames; block size {b} needs more"),
            ));
        }
        let exact = |l: usize| -> bool {
            let prod = alpha * S::from_index((l + 1) / b);
            (prod - prod.round()).abs() < S::cast(1e-6)
        };
        let mut best: Option<(bool, usize, usize)> = None;
        for cand in lo..=(usable - 2) {
            if !feasible(cand) {
                continue;
            }
            let key = (!exact(cand), cand.abs_diff(l), cand);
            if best.is_none_or(|k| key < k) {
                best = Some(key);
            }
        }
        let Some((_, _, new_l)) = best else {
            return Err(Error::argument(
                OP,
                format!("no feasible calibration size for block size {b} at level {alpha}"),
            ));
        };
        let (train, calib) = split_indices(usable, usable - new_l, self.mode, self.seed);
        Ok(SplitPlan { train, calib, mode: self.mode, seed: self.seed, burn_in: self.burn_in })
    }
}

/// Partitions indices 1..=usable into (train of size m, calibration), both
/// ascending. Random mode uses a partial Fisher-Yates pass.
fn split_indices(usable: usize, m: usize, mode: SplitMode, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (1..=usable).collect();
    match mode {
        SplitMode::Sequential => {}
        SplitMode::Random => {
            let mut rng = derive_rng(seed, &[]);
            for i in 0..m.min(usable.saturating_sub(1)) {
                let j = rand::Rng::random_range(&mut rng, i..usable);
                idx.swap(i, j);
            }
        }
    }
    let mut train: Vec<usize> = idx[..m].to_vec();
    let mut calib: Vec<usize> = idx[m..].to_vec();
    train.sort_unstable();
    calib.sort_unstable();
    (train, calib)
}

/// Builds a split of `t_len` frames: frame 0 is reserved as burn-in, and the
/// remaining `t_len - 1` usable indices are partitioned with training
/// fraction `ratio` (training size floor(usable·ratio)).
pub fn make_split(t_len: usize, ratio: f64, mode: SplitMode, seed: u64) -> Result<SplitPlan> {
    const OP: &str = "conformal::make_split";
    if t_len < 3 {
        return Err(Error::argument(OP, format!("need at least 3 frames, got {t_len}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::argument(OP, format!("ratio {ratio} outside (0, 1)")));
    }
    let usable = t_len - 1;
    let m = ((usable as f64) * ratio).floor() as usize;
    if m == 0 || m >= usable {
        return Err(Error::argument(
            OP,
            format!("ratio {ratio} leaves an empty set ({usable} usable frames)"),
        ));
    }
    let (train, calib) = split_indices(usable, m, mode, seed);
    Ok(SplitPlan { train, calib, mode, seed, burn_in: 1 })
}

/// The cyclic family of blockwise index shifts on l+1 slots.
///
/// Member i (0-based, i = 0 the identity) maps 0-based slot j to
/// (j + i·b) mod (l+1). The family has (l+1)/b members and is closed under
/// composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationFamily {
    l: usize,
    b: usize,
}

impl PermutationFamily {
    pub fn new(l: usize, b: usize) -> Result<Self> {
        const OP: &str = "conformal::permutation_family";
        if l == 0 {
            return Err(Error::argument(OP, "calibration size l must be at least 1"));
        }
        if b == 0 {
            return Err(Error::argument(OP, "block size must be at least 1"));
        }
        if (l + 1) % b != 0 {
            return Err(Error::argument(
                OP,
                format!("block size {b} does not divide l + 1 = {}", l + 1),
            ));
        }
        Ok(PermutationFamily { l, b })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn b(&self) -> usize {
        self.b
    }

    /// Number of members, (l+1)/b.
    pub fn size(&self) -> usize {
        (self.l + 1) / self.b
    }

    /// Image of 0-based slot `j` under member `i`.
    #[inline]
    pub fn apply(&self, i: usize, j: usize) -> usize {
        (j + i * self.b) % (self.l + 1)
    }

    /// Member `i` as a full 0-based mapping of the l+1 slots.
    pub fn permutation(&self, i: usize) -> Result<Vec<usize>> {
        if i >= self.size() {
            return Err(Error::argument(
                "conformal::permutation",
                format!("member {i} out of range (family size {})", self.size()),
            ));
        }
        Ok((0..=self.l).map(|j| self.apply(i, j)).collect())
    }

    /// 0-based positions within the ascending calibration list whose scores
    /// the non-identity members select: i·b - 1 for i = 1..size.
    ///
    /// Each non-identity shift moves a different calibration response into
    /// the forecast slot, so its score equals one calibration score; no
    /// within-block aggregation takes place.
    pub fn selected_positions(&self) -> Vec<usize> {
        (1..self.size()).map(|i| i * self.b - 1).collect()
    }
}

fn validate_alpha<S: Scalar>(op: &'static str, alpha: S) -> Result<()> {
    if !(alpha > S::zero() && alpha <= S::one()) {
        return Err(Error::argument(op, format!("alpha {alpha} outside (0, 1]")));
    }
    Ok(())
}

/// Where the modulation function comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModulationSource {
    /// Pointwise standard deviation of the raw training frames (default).
    #[default]
    TrainingStd,
    /// Pointwise standard deviation of training one-step residuals.
    ResidualStd,
}

/// Floors a raw pointwise spread at 1e-8 of its in-mask maximum, zeroes it
/// outside the mask, and scales it to unit mask integral.
fn finalize_modulation<S: Scalar>(
    op: &'static str,
    mut s: SurfaceField<S>,
    ds: &FtsDataset<S>,
) -> Result<SurfaceField<S>> {
    let max_std = s.values().iter().fold(S::zero(), |m, v| m.max(*v));
    if !(max_std > S::zero()) {
        return Err(Error::degenerate(op, "training spread is zero everywhere on the mask"));
    }
    let floor = S::cast(1e-8) * max_std;
    match ds.mask() {
        None => s.values_mut().mapv_inplace(|v| v.max(floor)),
        Some(m) => {
            ndarray::Zip::from(s.values_mut()).and(m.values()).for_each(|v, &inside| {
                if inside {
                    *v = v.max(floor);
                }
            });
        }
    }
    let quad = ds.domain().quad_scale();
    let integral = s.values().iter().copied().sum::<S>() * quad;
    let inv = integral.recip();
    s.values_mut().mapv_inplace(|v| v * inv);
    Ok(s)
}

/// Modulation from the pointwise standard deviation of the training frames.
///
/// Fails with a degenerate-data error when the training frames have zero
/// spread everywhere on the mask (see [`uniform_modulation`] for the
/// fallback used by [`conformal_band`]).
pub fn modulation_function<S: Scalar>(
    ds: &FtsDataset<S>,
    plan: &SplitPlan,
) -> Result<SurfaceField<S>> {
    const OP: &str = "conformal::modulation_function";
    let s = pointwise_std(ds, &plan.train)?;
    finalize_modulation(OP, s, ds)
}

/// Modulation from the pointwise standard deviation of training one-step
/// residuals y_t - g(y_{t-1}), t in the training set.
pub fn modulation_function_residual<S: Scalar>(
    ds: &FtsDataset<S>,
    plan: &SplitPlan,
    predictor: &FarPredictor<S>,
) -> Result<SurfaceField<S>> {
    const OP: &str = "conformal::modulation_function_residual";
    if plan.train.len() < 2 {
        return Err(Error::argument(OP, "need at least two training frames for residuals"));
    }
    if plan.train.first() == Some(&0) {
        return Err(Error::argument(OP, "training index 0 has no predecessor for a residual"));
    }
    let (n1, n2) = ds.domain().shape();
    let mut residuals: Vec<SurfaceField<S>> = Vec::with_capacity(plan.train.len());
    for &t in &plan.train {
        let g = predictor.predict(ds.frame(t - 1))?;
        let mut r = ds.frame(t).clone();
        *r.values_mut() -= g.values();
        residuals.push(r);
    }
    let count = S::from_index(residuals.len());
    let mut mean = Array2::<S>::zeros((n1, n2));
    for r in &residuals {
        mean += r.values();
    }
    mean.mapv_inplace(|v| v / count);
    let mut var = Array2::<S>::zeros((n1, n2));
    for r in &residuals {
        ndarray::Zip::from(&mut var).and(r.values()).and(&mean).for_each(|a, &x, &mu| {
            let d = x - mu;
            *a += d * d;
        });
    }
    let inv = S::one() / S::from_index(residuals.len() - 1);
    var.mapv_inplace(|v| (v * inv).sqrt());
    let mut s = SurfaceField::new(var);
    s.zero_outside(ds.mask());
    finalize_modulation(OP, s, ds)
}

/// The constant modulation 1/area on the mask (unit mask integral); the
/// fallback when the data-driven spread is degenerate.
pub fn uniform_modulation<S: Scalar>(ds: &FtsDataset<S>) -> SurfaceField<S> {
    let (n1, n2) = ds.domain().shape();
    let value = match ds.mask() {
        None => S::one(),
        Some(m) => m.area::<S>().recip(),
    };
    let mut s = SurfaceField::new(Array2::from_elem((n1, n2), value));
    s.zero_outside(ds.mask());
    s
}

/// Supremum over the mask of |y - center|/s.
///
/// Fails if the modulation is not strictly positive somewhere on the mask.
pub fn nonconformity_score<S: Scalar>(
    y: &SurfaceField<S>,
    center: &SurfaceField<S>,
    s: &SurfaceField<S>,
    mask: Option<&Mask>,
) -> Result<S> {
    const OP: &str = "conformal::nonconformity_score";
    if y.shape() != center.shape() || y.shape() != s.shape() {
        return Err(Error::dimension(OP, "field shapes differ"));
    }
    if let Some(m) = mask {
        if m.shape() != y.shape() {
            return Err(Error::dimension(OP, "mask shape does not match fields"));
        }
    }
    let mut max = S::zero();
    let mut update = |yv: S, cv: S, sv: S| -> Result<()> {
        if !(sv > S::zero()) {
            return Err(Error::degenerate(OP, "modulation must be positive inside the mask"));
        }
        let r = (yv - cv).abs() / sv;
        max = max.max(r);
        Ok(())
    };
    match mask {
        None => {
            for ((yv, cv), sv) in y.values().iter().zip(center.values().iter()).zip(s.values().iter()) {
                update(*yv, *cv, *sv)?;
            }
        }
        Some(m) => {
            for (((yv, cv), sv), inside) in y
                .values()
                .iter()
                .zip(center.values().iter())
                .zip(s.values().iter())
                .zip(m.values().iter())
            {
                if *inside {
                    update(*yv, *cv, *sv)?;
                }
            }
        }
    }
    Ok(max)
}

/// Nonconformity scores of the calibration pairs, in ascending index order:
/// for each calibration index t, the score of frame t against the prediction
/// from frame t-1.
pub fn calibration_scores<S: Scalar>(
    ds: &FtsDataset<S>,
    plan: &SplitPlan,
    predictor: &FarPredictor<S>,
    s: &SurfaceField<S>,
) -> Result<Vec<S>> {
    const OP: &str = "conformal::calibration_scores";
    if plan.calib.is_empty() {
        return Err(Error::argument(OP, "calibration set is empty"));
    }
    let mut out = Vec::with_capacity(plan.calib.len());
    for &t in &plan.calib {
        if t == 0 {
            return Err(Error::argument(OP, "calibration index 0 has no predecessor"));
        }
        if t >= ds.t_len() {
            return Err(Error::argument(OP, format!("calibration index {t} out of range")));
        }
        let g = predictor.predict(ds.frame(t - 1))?;
        out.push(nonconformity_score(ds.frame(t), &g, s, ds.mask())?);
    }
    Ok(out)
}

/// Band radius outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandRadius<S> {
    /// Finite multiplier k of the modulation.
    Finite(S),
    /// The level is below the family's resolution (alpha < b/(l+1)); the band
    /// is the whole space.
    WholeSpace,
    /// alpha = 1; the band contains nothing.
    Empty,
}

impl<S: Copy> BandRadius<S> {
    pub fn finite(&self) -> Option<S> {
        match self {
            BandRadius::Finite(k) => Some(*k),
            _ => None,
        }
    }
}

/// Number of permutation members whose score must tie or exceed the
/// candidate for membership: the smallest q >= 0 with (1 + q)/size > alpha,
/// using the same float comparison as [`p_value`]. Returns size when even
/// q = size - 1 fails (alpha = 1).
fn membership_quota<S: Scalar>(size: usize, alpha: S) -> usize {
    for a in 0..size {
        if S::from_index(1 + a) / S::from_index(size) > alpha {
            return a;
        }
    }
    size
}

/// Closed-form band radius from calibration scores.
///
/// Selects the scores at the blockwise positions, sorts them, and returns the
/// order statistic that makes score <= radius exactly equivalent to
/// p-value > alpha.
pub fn band_radius<S: Scalar>(
    scores: &[S],
    family: &PermutationFamily,
    alpha: S,
) -> Result<BandRadius<S>> {
    const OP: &str = "conformal::band_radius";
    validate_alpha(OP, alpha)?;
    if scores.len() != family.l() {
        return Err(Error::dimension(
            OP,
            format!("{} scores for calibration size {}", scores.len(), family.l()),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::argument(OP, "scores must be finite"));
    }
    let size = family.size();
    let q = membership_quota(size, alpha);
    if q == 0 {
        return Ok(BandRadius::WholeSpace);
    }
    let n = size - 1;
    if q > n {
        return Ok(BandRadius::Empty);
    }
    let mut selected: Vec<S> =
        family.selected_positions().into_iter().map(|p| scores[p]).collect();
    selected.sort_unstable_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    // Membership needs at least q of the n non-identity members to tie or
    // exceed the candidate, i.e. score <= (n - q + 1)-th smallest selected.
    Ok(BandRadius::Finite(selected[n - q]))
}

/// Permutation p-value of a candidate score: the fraction of family members
/// (identity included) whose score ties or exceeds it.
pub fn p_value<S: Scalar>(
    candidate_score: S,
    scores: &[S],
    family: &PermutationFamily,
) -> Result<S> {
    const OP: &str = "conformal::p_value";
    if scores.len() != family.l() {
        return Err(Error::dimension(
            OP,
            format!("{} scores for calibration size {}", scores.len(), family.l()),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::argument(OP, "scores must be finite"));
    }
    if candidate_score.is_nan() {
        return Err(Error::argument(OP, "candidate score is NaN"));
    }
    // The identity member reproduces the candidate's own score and always
    // counts once.
    let mut count = 1usize;
    for p in family.selected_positions() {
        if scores[p] >= candidate_score {
            count += 1;
        }
    }
    Ok(S::from_index(count) / S::from_index(family.size()))
}

/// A simultaneous prediction band for the next frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalBand<S> {
    center: SurfaceField<S>,
    modulation: SurfaceField<S>,
    radius: BandRadius<S>,
    mask: Option<Mask>,
    alpha: S,
}

impl<S: Scalar> ConformalBand<S> {
    pub fn new(
        center: SurfaceField<S>,
        modulation: SurfaceField<S>,
        radius: BandRadius<S>,
        mask: Option<Mask>,
        alpha: S,
    ) -> Result<Self> {
        const OP: &str = "conformal::band";
        if center.shape() != modulation.shape() {
            return Err(Error::dimension(OP, "center and modulation shapes differ"));
        }
        if let Some(m) = &mask {
            if m.shape() != center.shape() {
                return Err(Error::dimension(OP, "mask shape does not match fields"));
            }
        }
        validate_alpha(OP, alpha)?;
        Ok(ConformalBand { center, modulation, radius, mask, alpha })
    }

    pub fn center(&self) -> &SurfaceField<S> {
        &self.center
    }

    pub fn modulation(&self) -> &SurfaceField<S> {
        &self.modulation
    }

    pub fn radius(&self) -> &BandRadius<S> {
        &self.radius
    }

    pub fn mask(&self) -> Option<&Mask> {
        self.mask.as_ref()
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    /// Membership test for a candidate next frame.
    ///
    /// Evaluated through the nonconformity score so it is float-identical to
    /// the permutation test it inverts.
    pub fn contains(&self, y: &SurfaceField<S>) -> Result<bool> {
        const OP: &str = "conformal::contains";
        if y.shape() != self.center.shape() {
            return Err(Error::dimension(
                OP,
                format!("candidate shape {:?}, band shape {:?}", y.shape(), self.center.shape()),
            ));
        }
        match self.radius {
            BandRadius::WholeSpace => Ok(true),
            BandRadius::Empty => Ok(false),
            BandRadius::Finite(k) => {
                let score =
                    nonconformity_score(y, &self.center, &self.modulation, self.mask.as_ref())?;
                Ok(score <= k)
            }
        }
    }

    /// Integrated band width: 2k times the mask integral of the modulation
    /// (which is 1 up to roundoff), infinite for a whole-space band, 0 for an
    /// empty band.
    pub fn size(&self) -> S {
        match self.radius {
            BandRadius::WholeSpace => S::infinity(),
            BandRadius::Empty => S::zero(),
            BandRadius::Finite(k) => {
                let (n1, n2) = self.modulation.shape();
                let quad = S::one() / S::from_index(n1 * n2);
                let integral = self.modulation.values().iter().copied().sum::<S>() * quad;
                (k + k) * integral
            }
        }
    }

    /// Pointwise lower and upper band surfaces (finite radius only); zero
    /// outside the mask.
    pub fn bounds(&self) -> Result<(SurfaceField<S>, SurfaceField<S>)> {
        const OP: &str = "conformal::bounds";
        let BandRadius::Finite(k) = self.radius else {
            return Err(Error::argument(OP, "band radius is not finite"));
        };
        let mut lo = self.center.clone();
        let mut hi = self.center.clone();
        ndarray::Zip::from(lo.values_mut())
            .and(hi.values_mut())
            .and(self.modulation.values())
            .for_each(|l, h, &sv| {
                let d = k * sv;
                *l -= d;
                *h += d;
            });
        lo.zero_outside(self.mask.as_ref());
        hi.zero_outside(self.mask.as_ref());
        Ok((lo, hi))
    }
}

/// Builds the split-conformal band for the frame after `x_next`.
///
/// `x_next` is the covariate (normally the last observed frame); the band
/// centers on `predictor.predict(x_next)`. A degenerate training spread falls
/// back to the uniform modulation so constant histories still produce a
/// (zero-radius) band.
pub fn conformal_band<S: Scalar>(
    ds: &FtsDataset<S>,
    plan: &SplitPlan,
    predictor: &FarPredictor<S>,
    family: &PermutationFamily,
    alpha: S,
    x_next: &SurfaceField<S>,
) -> Result<ConformalBand<S>> {
    conformal_band_with(ds, plan, predictor, family, alpha, x_next, ModulationSource::TrainingStd)
}

/// [`conformal_band`] with an explicit modulation source.
pub fn conformal_band_with<S: Scalar>(
    ds: &FtsDataset<S>,
    plan: &SplitPlan,
    predictor: &FarPredictor<S>,
    family: &PermutationFamily,
    alpha: S,
    x_next: &SurfaceField<S>,
    source: ModulationSource,
) -> Result<ConformalBand<S>> {
    const OP: &str = "conformal::band";
    validate_alpha(OP, alpha)?;
    if family.l() != plan.l() {
        return Err(Error::dimension(
            OP,
            format!("family built for l = {}, plan has l = {}", family.l(), plan.l()),
        ));
    }
    let s = match source {
        ModulationSource::TrainingStd => modulation_function(ds, plan),
        ModulationSource::ResidualStd => modulation_function_residual(ds, plan, predictor),
    };
    let s = match s {
        Ok(s) => s,
        Err(Error::Degenerate { .. }) => uniform_modulation(ds),
        Err(e) => return Err(e),
    };
    let scores = calibration_scores(ds, plan, predictor, &s)?;
    let radius = band_radius(&scores, family, alpha)?;
    let center = predictor.predict(x_next)?;
    ConformalBand::new(center, s, radius, ds.mask().cloned(), alpha)
}
