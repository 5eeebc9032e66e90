use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type used by every network, dataset and metric.
///
/// Implemented for `f32`, `f64` and the double-double [`Extended`] type. Values that cross the library boundary
/// (hyperparameters, metrics, file contents) are exchanged as `f64` and
/// converted with [`Scalar::of`] / [`Scalar::as_f64`].
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Short name written into file headers.
    const NAME: &'static str;

    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

mod extended;

pub use extended::Extended;

impl Scalar for Extended {
    const NAME: &'static str = "f64x2";

    #[inline]
    fn of(v: f64) -> Self {
        Extended::from(v)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.hi() + self.lo()
    }
}
