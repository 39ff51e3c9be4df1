//! q-calculus primitives shared by every other module.
//!
//! All functions are generic over [`Scalar`], which covers both `f64` and the
//! arbitrary-precision [`Rational`]. `0^0` is taken to be `1` throughout, so
//! `q = 0` specializes the formulas correctly.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num};

/// Exact rational scalar.
pub type Rational = BigRational;

/// A field element usable by the recurrences: either `f64` or [`Rational`].
pub trait Scalar: Clone + Debug + PartialOrd + Num + Neg<Output = Self> + FromPrimitive {}

impl<T> Scalar for T where T: Clone + Debug + PartialOrd + Num + Neg<Output = Self> + FromPrimitive {}

/// Embeds a machine integer.
pub fn int<T: Scalar>(n: i64) -> T {
    T::from_i64(n).expect("every scalar type embeds i64")
}

/// Builds the exact rational `num / den`.
///
/// Panics if `den == 0`.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Lossy conversion of an exact rational to `f64`.
pub fn rat_to_f64(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

/// `q^e` for a nonnegative exponent, with `0^0 = 1`.
pub fn qpow<T: Scalar>(q: &T, e: u32) -> T {
    let mut acc = T::one();
    for _ in 0..e {
        acc = acc * q.clone();
    }
    acc
}

/// `q^e` for a signed exponent. Negative powers require `q != 0`.
pub fn qpow_signed<T: Scalar>(q: &T, e: i64) -> T {
    if e >= 0 {
        qpow(q, e as u32)
    } else {
        assert!(!q.is_zero(), "negative power of zero");
        T::one() / qpow(q, e.unsigned_abs() as u32)
    }
}

/// The q-integer `[n]_q = 1 + q + ... + q^{n-1}`; `[0]_q = 0`.
pub fn q_int<T: Scalar>(n: u32, q: &T) -> T {
    let mut sum = T::zero();
    let mut term = T::one();
    for _ in 0..n {
        sum = sum + term.clone();
        term = term * q.clone();
    }
    sum
}

/// `[n]_q` for a signed argument; negative `n` yields `0`.
///
/// Callers only use this where the value is multiplied by a vanishing
/// connection coefficient, so the choice for `n < 0` never leaks.
pub fn q_int_signed<T: Scalar>(n: i64, q: &T) -> T {
    if n <= 0 {
        T::zero()
    } else {
        q_int(n as u32, q)
    }
}

/// The q-factorial `[n]_q! = [1]_q [2]_q ... [n]_q`; `[0]_q! = 1`.
pub fn q_factorial<T: Scalar>(n: u32, q: &T) -> T {
    (1..=n).fold(T::one(), |acc, i| acc * q_int(i, q))
}

/// The Gaussian binomial `[n k]_q`.
///
/// Computed by the q-Pascal rule `[n k] = [n-1 k-1] + q^k [n-1 k]`, which
/// needs no division and is therefore valid for every `q`, including `q = -1`.
pub fn q_binomial<T: Scalar>(n: i64, k: i64, q: &T) -> T {
    if n < 0 || k < 0 || k > n {
        return T::zero();
    }
    if k == 0 || k == n {
        return T::one();
    }
    let k = k.min(n) as usize;
    let n = n as usize;
    // row[i] holds [m i]_q for the current m.
    let mut row = vec![T::zero(); k + 1];
    row[0] = T::one();
    for m in 1..=n {
        for i in (1..=k.min(m)).rev() {
            let shifted = qpow(q, i as u32) * row[i].clone();
            row[i] = row[i - 1].clone() + shifted;
        }
    }
    row[k].clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::{One, Zero};

    #[test]
    fn q_int_conventions() {
        let q = rat(3, 7);
        assert_eq!(q_int(0, &q), Rational::zero());
        assert_eq!(q_int::<Rational>(5, &Rational::one()), int(5));
        assert_eq!(q_int(3, &rat(1, 2)), rat(7, 4));
    }

    #[test]
    fn q_int_at_minus_one_alternates() {
        let q: Rational = int(-1);
        for n in 0..20u32 {
            let expect = if n % 2 == 0 { 0 } else { 1 };
            assert_eq!(q_int(n, &q), int(expect));
        }
    }

    #[test]
    fn q_factorial_small() {
        let q = rat(2, 5);
        assert_eq!(q_factorial(0, &q), Rational::one());
        assert_eq!(q_factorial::<Rational>(3, &Rational::one()), int(6));
        assert_eq!(q_factorial(2, &q), Rational::one() + q.clone());
    }

    #[test]
    fn q_binomial_edges() {
        let q = rat(-3, 11);
        for n in 0..8 {
            assert_eq!(q_binomial(n, 0, &q), Rational::one());
            assert_eq!(q_binomial(n, n, &q), Rational::one());
            assert_eq!(q_binomial(n, -1, &q), Rational::zero());
            assert_eq!(q_binomial(n, n + 1, &q), Rational::zero());
        }
        assert_eq!(q_binomial::<Rational>(4, 2, &Rational::one()), int(6));
    }

    #[test]
    fn q_binomial_four_two_expansion() {
        // 1 + q + 2q^2 + q^3 + q^4 expanded by hand, compared at several q.
        for (a, b) in [(1, 2), (-2, 3), (5, 7), (-19, 20)] {
            let q = rat(a, b);
            let poly = Rational::one()
                + q.clone()
                + int::<Rational>(2) * qpow(&q, 2)
                + qpow(&q, 3)
                + qpow(&q, 4);
            assert_eq!(q_binomial(4, 2, &q), poly);
        }
    }

    #[test]
    fn q_binomial_matches_product_formula() {
        // prod_{i=1}^k (1 - q^{n-k+i}) / (1 - q^i), independent of the Pascal route.
        for (a, b) in [(1, 3), (-4, 9), (13, 17)] {
            let q = rat(a, b);
            for n in 0..10i64 {
                for k in 0..=n {
                    let mut num = Rational::one();
                    let mut den = Rational::one();
                    for i in 1..=k {
                        num = num * (Rational::one() - qpow(&q, (n - k + i) as u32));
                        den = den * (Rational::one() - qpow(&q, i as u32));
                    }
                    assert_eq!(q_binomial(n, k, &q), num / den, "n={n} k={k}");
                }
            }
        }
    }

    #[test]
    fn q_binomial_matches_factorial_ratio() {
        let q = rat(7, 9);
        for n in 0..9u32 {
            for k in 0..=n {
                let ratio = q_factorial(n, &q) / (q_factorial(n - k, &q) * q_factorial(k, &q));
                assert_eq!(q_binomial(n as i64, k as i64, &q), ratio);
            }
        }
    }

    #[test]
    fn zero_to_the_zero_is_one() {
        assert_eq!(qpow(&Rational::zero(), 0), Rational::one());
        assert_eq!(qpow(&0.0f64, 0), 1.0);
        assert_eq!(q_int(1, &0.0f64), 1.0);
        assert_eq!(q_int(4, &0.0f64), 1.0);
    }

    #[test]
    fn float_mode_agrees_with_exact() {
        let q = 0.375f64;
        let qr = rat(3, 8);
        for n in 0..12i64 {
            for k in 0..=n {
                let exact = rat_to_f64(&q_binomial(n, k, &qr));
                assert!((q_binomial(n, k, &q) - exact).abs() <= 1e-12 * exact.abs().max(1.0));
            }
        }
    }
}
