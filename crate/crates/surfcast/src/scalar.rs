//! Floating-point scalar abstraction.
//!
//! Every numeric routine in the crate is generic over [`Scalar`], which is
//! implemented for `f32` and `f64`. The trait bundles the num-traits float
//! machinery with the two distribution draws the simulator needs; those are
//! trait methods with concrete per-type implementations so generic code never
//! has to thread rand_distr bounds around.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::float::FloatConst;
use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Floating-point element type for fields, matrices, and statistics.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts a finite `f64` constant into this scalar type.
    #[inline]
    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant must convert")
    }

    /// Converts a count or index into this scalar type.
    #[inline]
    fn from_index(i: usize) -> Self {
        Self::from_usize(i).expect("usize must convert to float")
    }

    /// Draws one standard normal variate.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draws one chi-square variate with `df > 0` degrees of freedom.
    fn chi_square<R: Rng + ?Sized>(rng: &mut R, df: Self) -> Result<Self>;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn chi_square<R: Rng + ?Sized>(rng: &mut R, df: Self) -> Result<Self> {
                let dist = ChiSquared::new(df).map_err(|e| {
                    Error::argument("scalar::chi_square", format!("df = {df}: {e}"))
                })?;
                Ok(dist.sample(rng))
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
