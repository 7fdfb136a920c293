//! Scalar abstractions.
//!
//! Model construction, the truncated-chain oracle and the metric summations
//! only need field arithmetic and an ordering, so they are written against
//! [`Scalar`], which is implemented for `f32`, `f64` and exact rationals.
//! The spectral solver needs eigen-decompositions and is written against
//! [`Real`], the floating point subset.

use std::fmt::Debug;

use nalgebra::RealField;
use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// An ordered field element usable for rates and probabilities.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    /// Nearest representable value. Exact for rationals whenever `x` is finite.
    fn from_f64(x: f64) -> Self;

    fn to_f64(&self) -> f64;

    fn from_usize(n: usize) -> Self {
        Self::from_f64(n as f64)
    }

    fn magnitude(&self) -> Self {
        if *self < Self::zero() {
            Self::zero() - self.clone()
        } else {
            self.clone()
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

macro_rules! impl_scalar_float {
    ($f:ty) => {
        impl Scalar for $f {
            fn from_f64(x: f64) -> Self {
                x as $f
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn from_usize(n: usize) -> Self {
                n as $f
            }

            fn magnitude(&self) -> Self {
                <$f>::abs(*self)
            }
        }
    };
}

impl_scalar_float!(f32);
impl_scalar_float!(f64);

impl Scalar for Ratio<i64> {
    fn from_f64(x: f64) -> Self {
        Ratio::<i64>::approximate_float(x).expect("value not representable as Ratio<i64>")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_usize(n: usize) -> Self {
        Ratio::from_integer(n as i64)
    }

    fn magnitude(&self) -> Self {
        Signed::abs(self)
    }
}

impl Scalar for BigRational {
    fn from_f64(x: f64) -> Self {
        <BigRational as FromPrimitive>::from_f64(x).expect("non-finite value")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_usize(n: usize) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn magnitude(&self) -> Self {
        Signed::abs(self)
    }
}

/// Floating point scalars for the eigenvalue-based solvers.
pub trait Real: Scalar + RealField + Copy {}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand used by the generic solvers for literal constants.
pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x)
}

/// The exact rational `num / den`.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_from_f64_is_exact_for_dyadics() {
        assert_eq!(<BigRational as Scalar>::from_f64(2.5), rational(5, 2));
        assert_eq!(<Ratio<i64> as Scalar>::from_f64(0.25), Ratio::new(1, 4));
    }

    #[test]
    fn magnitude_and_max() {
        assert_eq!((-3.0f64).magnitude(), 3.0);
        assert_eq!(rational(-1, 3).magnitude(), rational(1, 3));
        assert_eq!(f64::max_of(1.0, 2.0), 2.0);
    }
}
