//! Floating-point types for the spectral and kernel routines.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};

use num_traits::{FromPrimitive, Num, One, Zero};
use twofloat::TwoFloat;

use crate::qcore::Scalar;

/// Arithmetic the eigensolver and kernel checks run in.
pub trait Real: Scalar + Copy {
    fn lift(v: f64) -> Self;
    fn lower(self) -> f64;
    fn unit_roundoff() -> Self;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn max(self, other: Self) -> Self;
    fn is_finite(self) -> bool;
}

impl Real for f64 {
    fn lift(v: f64) -> Self {
        v
    }
    fn lower(self) -> f64 {
        self
    }
    fn unit_roundoff() -> Self {
        f64::EPSILON
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn max(self, other: Self) -> Self {
        f64::max(self, other)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// Double-double number (about 32 significant digits) on top of
/// [`twofloat::TwoFloat`].
///
/// Division refines the `TwoFloat` quotient by one residual step: the
/// upstream two-word division loses the low word when the reciprocal of the
/// divisor's high part is inexact.
#[derive(Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct DoubleDouble(TwoFloat);

impl DoubleDouble {
    pub fn hi(self) -> f64 {
        self.0.hi()
    }

    pub fn lo(self) -> f64 {
        self.0.lo()
    }
}

impl fmt::Debug for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DoubleDouble({:e} + {:e})", self.hi(), self.lo())
    }
}

impl From<f64> for DoubleDouble {
    fn from(v: f64) -> Self {
        Self(TwoFloat::from(v))
    }
}

macro_rules! forward_op {
    ($tr:ident, $m:ident) => {
        impl $tr for DoubleDouble {
            type Output = Self;
            fn $m(self, rhs: Self) -> Self {
                Self($tr::$m(self.0, rhs.0))
            }
        }
    };
}

forward_op!(Add, add);
forward_op!(Sub, sub);
forward_op!(Mul, mul);
forward_op!(Rem, rem);

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.0 / rhs.0;
        let r = self.0 - q * rhs.0;
        Self(q + r / rhs.0.hi())
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl Zero for DoubleDouble {
    fn zero() -> Self {
        Self(TwoFloat::zero())
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl One for DoubleDouble {
    fn one() -> Self {
        Self(TwoFloat::one())
    }
}

impl Num for DoubleDouble {
    type FromStrRadixErr = <TwoFloat as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        TwoFloat::from_str_radix(s, radix).map(Self)
    }
}

impl FromPrimitive for DoubleDouble {
    fn from_i64(n: i64) -> Option<Self> {
        TwoFloat::from_i64(n).map(Self)
    }
    fn from_u64(n: u64) -> Option<Self> {
        TwoFloat::from_u64(n).map(Self)
    }
    fn from_f64(n: f64) -> Option<Self> {
        Some(Self::from(n))
    }
}

impl Real for DoubleDouble {
    fn lift(v: f64) -> Self {
        Self::from(v)
    }
    fn lower(self) -> f64 {
        self.hi() + self.lo()
    }
    fn unit_roundoff() -> Self {
        Self::from(f64::EPSILON * f64::EPSILON)
    }
    fn abs(self) -> Self {
        Self(self.0.abs())
    }
    fn sqrt(self) -> Self {
        Self(self.0.sqrt())
    }
    fn max(self, other: Self) -> Self {
        match self.partial_cmp(&other) {
            Some(Ordering::Less) => other,
            _ => self,
        }
    }
    fn is_finite(self) -> bool {
        self.hi().is_finite() && self.lo().is_finite()
    }
}
