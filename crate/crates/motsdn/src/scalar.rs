//! Scalar abstractions shared by every numerical module.
//!
//! [`Real`] is the floating point type the library is generic over (`f32` or
//! `f64`). [`Dual`] is the smaller arithmetic interface implemented both by
//! plain reals and by the forward-mode jets in [`crate::jet`], so that closed
//! form expressions can be written once and evaluated either as numbers or as
//! truncated Taylor expansions.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Arithmetic shared by reals and jets.
///
/// Method names carry a `d` prefix so that they never collide with the
/// inherent `Float` methods when `Self` is a plain real.
pub trait Dual<T>:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<T, Output = Self>
    + Sub<T, Output = Self>
    + Mul<T, Output = Self>
    + Div<T, Output = Self>
{
    /// Constant with vanishing derivatives.
    fn cst(v: T) -> Self;
    /// Value part.
    fn val(&self) -> T;
    fn dexp(self) -> Self;
    fn dln(self) -> Self;
    fn dsqrt(self) -> Self;
    fn dsin(self) -> Self;
    fn dcos(self) -> Self;
    fn drecip(self) -> Self;
    fn dpowi(self, n: i32) -> Self;
    /// Composes with a scalar function whose value and first two
    /// derivatives at `self.val()` are `f`, `df` and `ddf`.
    fn dapply(self, f: T, df: T, ddf: T) -> Self;
}

/// Floating point scalar the library is generic over.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Dual<Self>
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Converts an integer count into `Self`.
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Lossy conversion to `f64` for reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Dual<$t> for $t {
            #[inline]
            fn cst(v: $t) -> Self {
                v
            }
            #[inline]
            fn val(&self) -> $t {
                *self
            }
            #[inline]
            fn dexp(self) -> Self {
                self.exp()
            }
            #[inline]
            fn dln(self) -> Self {
                self.ln()
            }
            #[inline]
            fn dsqrt(self) -> Self {
                self.sqrt()
            }
            #[inline]
            fn dsin(self) -> Self {
                self.sin()
            }
            #[inline]
            fn dcos(self) -> Self {
                self.cos()
            }
            #[inline]
            fn drecip(self) -> Self {
                self.recip()
            }
            #[inline]
            fn dpowi(self, n: i32) -> Self {
                self.powi(n)
            }
            #[inline]
            fn dapply(self, f: $t, _df: $t, _ddf: $t) -> Self {
                f
            }
        }

        impl Real for $t {}
    };
}

impl_real!(f32);
impl_real!(f64);

/// Squares a value.
#[inline]
pub fn sq<D: Copy + Mul<Output = D>>(x: D) -> D {
    x * x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_round_trip() {
        assert_eq!(f64::lit(0.25), 0.25);
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(f64::count(7), 7.0);
    }

    #[test]
    fn dual_on_reals_matches_float() {
        let x = 0.7f64;
        assert_eq!(x.dexp(), x.exp());
        assert_eq!(x.dpowi(3), x.powi(3));
        assert_eq!(<f64 as Dual<f64>>::cst(2.0).val(), 2.0);
    }
}
