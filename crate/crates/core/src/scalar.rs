use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar used by the numeric modules: f32 or f64.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative tolerance used by inclusive threshold comparisons.
    #[inline]
    fn threshold_tolerance() -> Self {
        let eps = Self::epsilon() * Self::lit(4.0);
        let floor = Self::lit(1e-9);
        if eps > floor {
            eps
        } else {
            floor
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `x >= bound`, inclusive up to a relative tolerance that absorbs the
/// representation error of decimal ratios such as `1.1`.
#[inline]
pub fn at_or_above<T: Scalar>(x: T, bound: T) -> bool {
    x >= bound - T::threshold_tolerance() * bound.abs().max(T::one())
}

/// `x <= bound`, inclusive up to the same relative tolerance.
#[inline]
pub fn at_or_below<T: Scalar>(x: T, bound: T) -> bool {
    x <= bound + T::threshold_tolerance() * bound.abs().max(T::one())
}
