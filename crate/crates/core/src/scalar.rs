//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by the solvers.
///
/// Method calls such as `abs`, `sqrt` and `exp` resolve through
/// [`nalgebra::ComplexField`]; conversions go through `num-traits`.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal, rounding to the nearest representable value.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the type.
    fn eps() -> Self;
}

impl Scalar for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// Largest absolute entry of a slice, zero when empty.
pub fn max_abs<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    values.into_iter().fold(
        T::zero(),
        |acc, v| if v.abs() > acc { v.abs() } else { acc },
    )
}

/// Pearson correlation of two equally long vectors. Returns zero when either
/// side has no variance.
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "pearson: length mismatch");
    if a.is_empty() {
        return T::zero();
    }
    let n = T::from_usize_lossy(a.len());
    let mean_a = a.iter().fold(T::zero(), |s, &x| s + x) / n;
    let mean_b = b.iter().fold(T::zero(), |s, &x| s + x) / n;
    let (mut cov, mut var_a, mut var_b) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a <= T::zero() || var_b <= T::zero() {
        return T::zero();
    }
    cov / (var_a * var_b).sqrt()
}
