//! Scalar abstraction shared by every numeric module.
//!
//! All dispatch math is written against [`Real`], which is implemented for
//! any `num_traits::Float` that also round-trips through `f64`. In practice
//! that means `f32` and `f64`; spectral checks always widen to `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar used by the graph, consensus, agent, oracle and
/// engine modules.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite `f64` values at all, which no float type does.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal representable in Real")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in Real")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Clamps `x` into `[lo, hi]`. Assumes `lo <= hi`.
#[inline]
pub fn clip<T: Real>(x: T, lo: T, hi: T) -> T {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

/// Maximum of a slice; `None` when empty.
pub fn max_of<T: Real>(xs: &[T]) -> Option<T> {
    xs.iter().copied().reduce(T::max)
}

/// Minimum of a slice; `None` when empty.
pub fn min_of<T: Real>(xs: &[T]) -> Option<T> {
    xs.iter().copied().reduce(T::min)
}
