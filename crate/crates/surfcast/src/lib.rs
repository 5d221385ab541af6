//! Forecasting for two-dimensional functional time series — surfaces
//! observed on a grid, evolving in time — with simultaneous prediction bands
//! that hold without distributional assumptions.
//!
//! The pieces, bottom up:
//!
//! - [`grid`]: grid domains, masks, surface frames, datasets, and the
//!   quadrature they share.
//! - [`basis`]: tensor-product B-spline and Fourier bases, projection and
//!   synthesis.
//! - [`linalg`]: the small dense symmetric routines everything leans on
//!   (Jacobi eigendecomposition, Cholesky).
//! - [`fpca`]: principal component analysis of surface samples, directly on
//!   the grid or through a basis.
//! - [`far`]: one-step point predictors for a first-order functional
//!   autoregression — persistence, per-cell concurrent regression,
//!   eigenkernel estimators with plain or ridged component variances, a
//!   score-space least-squares transition, and an oracle built from a known
//!   kernel.
//! - [`conformal`]: split-conformal bands around any of those predictors,
//!   with blockwise calibration permutations for serial dependence;
//!   membership, p-values, and the closed-form radius agree exactly.
//! - [`simulate`]: a seeded surface-autoregression generator and the
//!   replication study driver (coverage and band size across methods,
//!   series lengths, and block sizes).
//! - [`pipeline`]: second differencing, band back-transformation to the raw
//!   scale, and the rolling backtest with pointwise coverage and width maps.
//! - [`stats`]: the two coverage confidence intervals reports use.
//!
//! Everything numeric is generic over [`Scalar`] (`f64` or `f32`); the
//! aliases at the crate root fix `f64`, the precision the studies run at.
//! All randomness flows from explicit seeds through counter-derived streams,
//! so every result is reproducible bit for bit at any thread count.

// Validation guards are written `!(x > 0)` rather than `x <= 0` so that NaN
// lands on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod conformal;
pub mod error;
pub mod far;
pub mod fpca;
pub mod grid;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// A surface frame at `f64` precision.
pub type Field = grid::SurfaceField<f64>;
/// A grid domain at `f64` precision.
pub type Domain = grid::GridDomain<f64>;
/// A surface time series at `f64` precision.
pub type Dataset = grid::FtsDataset<f64>;
/// A fitted one-step predictor at `f64` precision.
pub type Predictor = far::FarPredictor<f64>;
/// A simultaneous prediction band at `f64` precision.
pub type Band = conformal::ConformalBand<f64>;
