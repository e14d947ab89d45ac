use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the pipeline is generic over (`f32` or `f64`).
///
/// Every signal container and numeric routine in this crate takes a `Scalar`
/// type parameter; configuration values stay `f64` and are converted at the
/// point of use via [`Scalar::from_config`].
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + rustfft::FftNum
    + 'static
{
    /// Converts a finite `f64` configuration value into this scalar type.
    fn from_config(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 config value converts to any float scalar")
    }
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + LowerExp
        + Send
        + Sync
        + rustfft::FftNum
        + 'static
{
}
