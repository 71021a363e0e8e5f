//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Compensated left-to-right accumulator.
///
/// Every reduction in the crate goes through this type so results do not
/// depend on how a loop happens to be scheduled.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan<T> {
    sum: T,
    carry: T,
}

impl<T: Real> Kahan<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn total(&self) -> T {
        self.sum
    }
}

/// Compensated sum in iteration order.
pub fn kahan_sum<T: Real, I: IntoIterator<Item = T>>(values: I) -> T {
    let mut acc = Kahan::new();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

/// Largest absolute value (0 for an empty sequence).
pub fn max_abs<T: Real, I: IntoIterator<Item = T>>(values: I) -> T {
    values
        .into_iter()
        .fold(T::zero(), |acc, v| if v.abs() > acc { v.abs() } else { acc })
}
