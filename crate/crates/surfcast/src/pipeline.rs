//! Case-study machinery: stationarizing second differences, band
//! back-transformation to the original scale, and the rolling backtest with
//! pointwise coverage and width maps.
//!
//! A raw series is stationarized by the lagged second difference
//! d_k = raw_{k+2L} - 2·raw_{k+L} + raw_k; models and bands live on that
//! scale. A band for the next differenced frame converts to a band for the
//! next raw frame by translating its center with the two most recent lagged
//! raw frames; radius and modulation are unchanged, so band width and
//! membership are translation-invariant. The rolling backtest evaluates
//! membership on the differenced scale, where the calibration scores were
//! computed — by that invariance this is the membership of the raw frame in
//! the back-transformed band, with per-cell hits decided by the same
//! arithmetic as the global score, so a covered shift is exactly an
//! every-cell-hit shift.

use ndarray::Array2;
use rayon::prelude::*;

use crate::conformal::{
    conformal_band_with, make_split, BandRadius, ConformalBand, ModulationSource,
    PermutationFamily, SplitMode,
};
use crate::error::{Error, Result};
use crate::far::{
    fit, fit_oracle, fit_scored, prepare_score_state, FarVariant, FitConfig, TrueKernel,
};
use crate::grid::{FtsDataset, SurfaceField};
use crate::rng::mix_seed;
use crate::scalar::Scalar;
use crate::simulate::CiMethod;
use crate::stats::{clopper_pearson_ci99, normal_ci99};

/// Second difference at lag 1: frame k = raw_{k+2} - 2·raw_{k+1} + raw_k.
pub fn second_difference<S: Scalar>(ds: &FtsDataset<S>) -> Result<FtsDataset<S>> {
    second_difference_lagged(ds, 1)
}

/// Second difference at lag `lag` for k = 0..T-2·lag:
/// frame k = raw_{k+2·lag} - 2·raw_{k+lag} + raw_k. The domain and mask
/// carry over; timestamps keep the label of the newest frame entering each
/// difference.
pub fn second_difference_lagged<S: Scalar>(ds: &FtsDataset<S>, lag: usize) -> Result<FtsDataset<S>> {
    const OP: &str = "pipeline::second_difference";
    if lag == 0 {
        return Err(Error::argument(OP, "lag must be at least 1"));
    }
    let t = ds.t_len();
    if t <= 2 * lag {
        return Err(Error::argument(
            OP,
            format!("need more than {} frames to difference at lag {lag}, got {t}", 2 * lag),
        ));
    }
    let two = S::cast(2.0);
    let mut frames = Vec::with_capacity(t - 2 * lag);
    for k in 0..t - 2 * lag {
        let mut d = ds.frame(k + 2 * lag).clone();
        ndarray::Zip::from(d.values_mut())
            .and(ds.frame(k + lag).values())
            .and(ds.frame(k).values())
            .for_each(|dv, &mid, &old| {
                *dv = *dv - two * mid + old;
            });
        frames.push(d);
    }
    let timestamps = ds.timestamps().map(|ts| ts[2 * lag..].to_vec());
    FtsDataset::new(ds.domain().clone(), frames, ds.mask().cloned(), timestamps)
}

/// Converts a band for the next differenced frame into a band for the next
/// raw frame by shifting the center by 2·`raw_minus_lag` - `raw_minus_two_lag`
/// (the raw frames at lag and two lags before the target). Radius, modulation,
/// and mask are unchanged, so the band size is too, and a raw frame belongs to
/// the result precisely when its second difference belongs to the original
/// band (identical up to floating-point rounding of the translation).
pub fn back_transform_band<S: Scalar>(
    band: &ConformalBand<S>,
    raw_minus_lag: &SurfaceField<S>,
    raw_minus_two_lag: &SurfaceField<S>,
) -> Result<ConformalBand<S>> {
    const OP: &str = "pipeline::back_transform_band";
    let shape = band.center().shape();
    if raw_minus_lag.shape() != shape || raw_minus_two_lag.shape() != shape {
        return Err(Error::dimension(
            OP,
            format!(
                "band shape {:?}, raw frame shapes {:?} and {:?}",
                shape,
                raw_minus_lag.shape(),
                raw_minus_two_lag.shape()
            ),
        ));
    }
    let two = S::cast(2.0);
    let mut center = band.center().clone();
    ndarray::Zip::from(center.values_mut())
        .and(raw_minus_lag.values())
        .and(raw_minus_two_lag.values())
        .for_each(|c, &a, &b| {
            *c = *c + two * a - b;
        });
    center.zero_outside(band.mask());
    ConformalBand::new(
        center,
        band.modulation().clone(),
        *band.radius(),
        band.mask().cloned(),
        band.alpha(),
    )
}

/// Rolling backtest specification.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingConfig<S> {
    /// Differenced frames per window.
    pub window: usize,
    pub n_shifts: usize,
    pub alpha: S,
    pub block_size: usize,
    pub method: FarVariant,
    pub fit: FitConfig<S>,
    pub split_mode: SplitMode,
    pub split_ratio: f64,
    pub master_seed: u64,
    /// Differencing lag (1 = consecutive frames).
    pub diff_lag: usize,
    pub modulation: ModulationSource,
    /// Known differenced-scale kernel; required by the oracle method. A
    /// linear kernel commutes with differencing, so the kernel that drives a
    /// raw autoregression also drives its second differences.
    pub truth: Option<TrueKernel<S>>,
    pub ci: CiMethod,
}

impl<S: Scalar> RollingConfig<S> {
    /// Backtest with the given window, shift count, and method; every other
    /// knob at its default (alpha 0.1, block size 1, lag 1, random split with
    /// ratio 0.5, training-spread modulation, normal-approximation CI).
    pub fn new(window: usize, n_shifts: usize, method: FarVariant) -> Self {
        RollingConfig {
            window,
            n_shifts,
            alpha: S::cast(0.1),
            block_size: 1,
            method,
            fit: FitConfig::default(),
            split_mode: SplitMode::Random,
            split_ratio: 0.5,
            master_seed: 0,
            diff_lag: 1,
            modulation: ModulationSource::TrainingStd,
            truth: None,
            ci: CiMethod::Normal,
        }
    }
}

/// One completed shift.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftRecord<S> {
    pub shift: usize,
    pub covered: bool,
    pub band_size: S,
    pub seed: u64,
}

/// A shift that produced no band.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingFailure {
    pub shift: usize,
    pub seed: u64,
    pub message: String,
}

/// Backtest output: per-shift records, pointwise maps, and aggregates over
/// the completed shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingReport<S> {
    pub shifts: Vec<ShiftRecord<S>>,
    pub failures: Vec<RollingFailure>,
    /// Per-cell count of shifts whose band covered the cell's raw value;
    /// zero off the mask, at most `n_ok` everywhere.
    pub hit_counts: Array2<u64>,
    /// Per-cell band width 2·k·s averaged over completed shifts; zero off
    /// the mask.
    pub width_mean: Array2<S>,
    /// Completed shifts.
    pub n_ok: usize,
    pub coverage: S,
    pub ci_low: S,
    pub ci_high: S,
    pub mean_band_size: S,
}

struct ShiftOutcome<S> {
    shift: usize,
    seed: u64,
    result: std::result::Result<ShiftSuccess<S>, String>,
}

struct ShiftSuccess<S> {
    covered: bool,
    band_size: S,
    hits: Array2<bool>,
    widths: Array2<S>,
}

fn run_one_shift<S: Scalar>(
    raw: &FtsDataset<S>,
    diffed: &FtsDataset<S>,
    cfg: &RollingConfig<S>,
    shift: usize,
    seed: u64,
) -> Result<ShiftSuccess<S>> {
    let t = cfg.window;
    let frames = diffed.frames()[shift..shift + t].to_vec();
    let window_ds = FtsDataset::new(raw.domain().clone(), frames, raw.mask().cloned(), None)?;
    let plan = make_split(t, cfg.split_ratio, cfg.split_mode, seed)?
        .adjust_for_blocking(cfg.block_size, cfg.alpha)?;
    let family = PermutationFamily::new(plan.l(), cfg.block_size)?;
    let predictor = match cfg.method {
        FarVariant::Oracle => {
            let truth = cfg.truth.as_ref().expect("validated by rolling_run");
            fit_oracle(&window_ds, truth)?
        }
        FarVariant::Naive | FarVariant::Concurrent => {
            fit(cfg.method, &window_ds, &plan.train, &cfg.fit)?
        }
        FarVariant::Ek | FarVariant::EkPlus | FarVariant::VarScores => {
            let state = prepare_score_state(&window_ds, &plan.train, &cfg.fit)?;
            fit_scored(cfg.method, &state, &cfg.fit)?
        }
    };
    let x_next = window_ds.frame(t - 1);
    let band = conformal_band_with(
        &window_ds,
        &plan,
        &predictor,
        &family,
        cfg.alpha,
        x_next,
        cfg.modulation,
    )?;
    // The held-out differenced frame; its raw counterpart is
    // raw[shift + t + 2·lag], and membership there in the back-transformed
    // band is this membership, translated.
    let d_test = diffed.frame(shift + t);
    let covered = band.contains(d_test)?;
    let band_size = band.size();

    let (n1, n2) = raw.domain().shape();
    let mut hits = Array2::from_elem((n1, n2), false);
    let mut widths = Array2::<S>::zeros((n1, n2));
    let on_mask = |i: usize, j: usize| raw.mask().is_none_or(|m| m.is_inside(i, j));
    match *band.radius() {
        BandRadius::Finite(k) => {
            for i in 0..n1 {
                for j in 0..n2 {
                    if !on_mask(i, j) {
                        continue;
                    }
                    let sv = band.modulation().values()[[i, j]];
                    let r = (d_test.values()[[i, j]] - band.center().values()[[i, j]]).abs() / sv;
                    hits[[i, j]] = r <= k;
                    widths[[i, j]] = (k + k) * sv;
                }
            }
        }
        BandRadius::WholeSpace => {
            for i in 0..n1 {
                for j in 0..n2 {
                    if on_mask(i, j) {
                        hits[[i, j]] = true;
                        widths[[i, j]] = S::infinity();
                    }
                }
            }
        }
        BandRadius::Empty => {}
    }
    Ok(ShiftSuccess { covered, band_size, hits, widths })
}

/// Runs the rolling backtest: for each shift s, fit and calibrate on the
/// differenced window [s, s + window), band the next differenced frame from
/// the window's last frame, and score coverage of the held-out frame globally
/// and per cell.
///
/// The raw series must hold `window + 2·diff_lag + n_shifts` frames. Each
/// shift re-splits with a seed derived from the master seed and the shift
/// index, so results do not depend on the worker count. Failed shifts are
/// reported with their reason and excluded from the maps and aggregates; it
/// is an error for every shift to fail.
pub fn rolling_run<S: Scalar>(raw: &FtsDataset<S>, cfg: &RollingConfig<S>) -> Result<RollingReport<S>> {
    const OP: &str = "pipeline::rolling_run";
    if cfg.n_shifts == 0 {
        return Err(Error::argument(OP, "n_shifts must be at least 1"));
    }
    if cfg.diff_lag == 0 {
        return Err(Error::argument(OP, "diff_lag must be at least 1"));
    }
    if cfg.window < 3 {
        return Err(Error::argument(OP, format!("window {} is too short", cfg.window)));
    }
    let needed = cfg.window + 2 * cfg.diff_lag + cfg.n_shifts;
    if raw.t_len() < needed {
        return Err(Error::argument(
            OP,
            format!(
                "series length {} < window {} + 2·lag {} + n_shifts {} = {needed}",
                raw.t_len(),
                cfg.window,
                cfg.diff_lag,
                cfg.n_shifts
            ),
        ));
    }
    if cfg.method == FarVariant::Oracle && cfg.truth.is_none() {
        return Err(Error::argument(OP, "the oracle method needs a known kernel"));
    }

    let diffed = second_difference_lagged(raw, cfg.diff_lag)?;
    let mut outcomes: Vec<ShiftOutcome<S>> = (0..cfg.n_shifts)
        .into_par_iter()
        .map(|shift| {
            let seed = mix_seed(cfg.master_seed, &[shift as u64]);
            let result = run_one_shift(raw, &diffed, cfg, shift, seed)
                .map_err(|e| e.to_string());
            ShiftOutcome { shift, seed, result }
        })
        .collect();
    outcomes.sort_by_key(|o| o.shift);

    let (n1, n2) = raw.domain().shape();
    let mut shifts = Vec::new();
    let mut failures = Vec::new();
    let mut hit_counts = Array2::<u64>::zeros((n1, n2));
    let mut width_sum = Array2::<S>::zeros((n1, n2));
    let mut n_cov = 0usize;
    let mut size_sum = S::zero();
    for out in outcomes {
        match out.result {
            Ok(s) => {
                if s.covered {
                    n_cov += 1;
                }
                size_sum += s.band_size;
                ndarray::Zip::from(&mut hit_counts).and(&s.hits).for_each(|c, &h| {
                    if h {
                        *c += 1;
                    }
                });
                width_sum += &s.widths;
                shifts.push(ShiftRecord {
                    shift: out.shift,
                    covered: s.covered,
                    band_size: s.band_size,
                    seed: out.seed,
                });
            }
            Err(message) => {
                failures.push(RollingFailure { shift: out.shift, seed: out.seed, message });
            }
        }
    }
    let n_ok = shifts.len();
    if n_ok == 0 {
        let first = failures.first().expect("n_shifts >= 1");
        return Err(Error::degenerate(
            OP,
            format!("every shift failed; first failure (shift {}): {}", first.shift, first.message),
        ));
    }
    let inv = S::one() / S::from_index(n_ok);
    let width_mean = width_sum.mapv(|w| w * inv);
    let coverage = S::from_index(n_cov) / S::from_index(n_ok);
    let (ci_low, ci_high) = match cfg.ci {
        CiMethod::Normal => normal_ci99(coverage, n_ok),
        CiMethod::ClopperPearson => {
            let (lo, hi) = clopper_pearson_ci99(n_cov, n_ok);
            (S::cast(lo), S::cast(hi))
        }
    };
    Ok(RollingReport {
        shifts,
        failures,
        hit_counts,
        width_mean,
        n_ok,
        coverage,
        ci_low,
        ci_high,
        mean_band_size: size_sum * inv,
    })
}
