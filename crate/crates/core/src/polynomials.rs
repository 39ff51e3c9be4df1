//! Martingale polynomials `p_n(x; t)` and the conditional family
//! `Q_n(y; x, t, s)`, both evaluated by forward three-term recurrence.
//!
//! The conditional family satisfies
//!
//! ```text
//! y Q_n = Q_{n+1} + A_n(x, t, s) Q_n + B_n(x, t, s) Q_{n-1},   Q_{-1} = 0, Q_0 = 1,
//! A_n = q^n x + [n]_q (tη + θ - [2]_q q^{n-1} sη),
//! B_n = [n]_q (t - s q^{n-1}) {1 + ηx q^{n-1} + [n-1]_q η(θ - sη q^{n-1})},
//! ```
//!
//! with `A_0 = x`, `B_0 = 0`, and `p_n(x; t) = Q_n(x; 0, t, 0)`.

use serde::Serialize;
use thiserror::Error;

use crate::qcore::{q_int, qpow, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("q must lie in [-1, 1], got {0}")]
    QOutOfRange(String),
    #[error("1+ηθ < max(q,0): 1 + ({eta})·({theta}) < max({q}, 0)")]
    Inadmissible { eta: String, theta: String, q: String },
    #[error("parameters must be finite")]
    NonFinite,
}

/// The triple `(η, θ, q)` of a bi-Poisson process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnessParams<T = f64> {
    pub eta: T,
    pub theta: T,
    pub q: T,
}

impl<T: Scalar> HarnessParams<T> {
    /// Validates `q ∈ [-1, 1]` and `1 + ηθ ≥ max(q, 0)`.
    pub fn new(eta: T, theta: T, q: T) -> Result<Self, ParamError> {
        let one = T::one();
        // NaN is the only value not equal to itself.
        #[allow(clippy::eq_op)]
        if q != q || eta != eta || theta != theta {
            return Err(ParamError::NonFinite);
        }
        if q < -one.clone() || q > one.clone() {
            return Err(ParamError::QOutOfRange(format!("{q:?}")));
        }
        let floor = if q > T::zero() { q.clone() } else { T::zero() };
        if one + eta.clone() * theta.clone() < floor {
            return Err(ParamError::Inadmissible {
                eta: format!("{eta:?}"),
                theta: format!("{theta:?}"),
                q: format!("{q:?}"),
            });
        }
        Ok(Self { eta, theta, q })
    }

    /// Skips admissibility; the recurrences are polynomial identities and
    /// hold for any parameter values.
    pub fn new_unchecked(eta: T, theta: T, q: T) -> Self {
        Self { eta, theta, q }
    }

    /// `ηθ + 1 - q`, the quantity governing the absolutely continuous support.
    pub fn spread(&self) -> T {
        self.eta.clone() * self.theta.clone() + T::one() - self.q.clone()
    }
}

impl HarnessParams<f64> {
    pub fn is_finite(&self) -> bool {
        self.eta.is_finite() && self.theta.is_finite() && self.q.is_finite()
    }
}

/// Diagonal coefficient `A_n(x, t, s)`.
pub fn coeff_a<T: Scalar>(n: u32, x: &T, t: &T, s: &T, params: &HarnessParams<T>) -> T {
    if n == 0 {
        return x.clone();
    }
    let q = &params.q;
    let two_q = T::one() + q.clone();
    qpow(q, n) * x.clone()
        + q_int(n, q)
            * (t.clone() * params.eta.clone() + params.theta.clone()
                - two_q * qpow(q, n - 1) * s.clone() * params.eta.clone())
}

/// Off-diagonal coefficient `B_n(x, t, s)`.
pub fn coeff_b<T: Scalar>(n: u32, x: &T, t: &T, s: &T, params: &HarnessParams<T>) -> T {
    if n == 0 {
        return T::zero();
    }
    let q = &params.q;
    let (eta, theta) = (&params.eta, &params.theta);
    let qn1 = qpow(q, n - 1);
    let bracket = T::one()
        + eta.clone() * x.clone() * qn1.clone()
        + q_int(n - 1, q) * eta.clone() * (theta.clone() - s.clone() * eta.clone() * qn1.clone());
    q_int(n, q) * (t.clone() - s.clone() * qn1) * bracket
}

/// `Q_0..=Q_{n_max}` at `y`, by forward recurrence.
pub fn eval_q_all<T: Scalar>(n_max: u32, y: &T, x: &T, t: &T, s: &T, params: &HarnessParams<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(n_max as usize + 1);
    let mut prev = T::zero();
    let mut cur = T::one();
    out.push(cur.clone());
    for k in 0..n_max {
        let next = (y.clone() - coeff_a(k, x, t, s, params)) * cur.clone()
            - coeff_b(k, x, t, s, params) * prev;
        prev = cur;
        cur = next;
        out.push(cur.clone());
    }
    out
}

/// `Q_n(y; x, t, s)`.
pub fn eval_q<T: Scalar>(n: u32, y: &T, x: &T, t: &T, s: &T, params: &HarnessParams<T>) -> T {
    eval_q_all(n, y, x, t, s, params).pop().expect("nonempty")
}

/// `p_0..=p_{n_max}` at `x`.
pub fn eval_p_all<T: Scalar>(n_max: u32, x: &T, t: &T, params: &HarnessParams<T>) -> Vec<T> {
    let zero = T::zero();
    let mut out = Vec::with_capacity(n_max as usize + 1);
    let mut prev = T::zero();
    let mut cur = T::one();
    out.push(cur.clone());
    let q = &params.q;
    let drift = params.theta.clone() + t.clone() * params.eta.clone();
    let eta_theta = params.eta.clone() * params.theta.clone();
    for k in 0..n_max {
        // Written directly from the martingale recurrence rather than via
        // coeff_a/coeff_b at x = s = 0, so the specialization stays testable.
        let a = drift.clone() * q_int(k, q);
        let b = if k == 0 {
            zero.clone()
        } else {
            t.clone() * (T::one() + eta_theta.clone() * q_int(k - 1, q)) * q_int(k, q)
        };
        let next = (x.clone() - a) * cur.clone() - b * prev;
        prev = cur;
        cur = next;
        out.push(cur.clone());
    }
    out
}

/// `p_n(x; t)`.
pub fn eval_p<T: Scalar>(n: u32, x: &T, t: &T, params: &HarnessParams<T>) -> T {
    eval_p_all(n, x, t, params).pop().expect("nonempty")
}

/// Which polynomial family a recurrence describes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Family {
    /// `p_n(·; t)`, orthogonal under the marginal law at time `t`.
    Martingale { t: f64 },
    /// `Q_n(·; x, t, s)`, orthogonal under the transition law from `(s, x)` to time `t`.
    Conditional { x: f64, t: f64, s: f64 },
    /// Explicit coefficient tables; `offdiag[0]` must be `0`.
    Custom { diag: Vec<f64>, offdiag: Vec<f64> },
}

/// Source of monic three-term recurrence coefficients `(A_n, B_n)`.
#[derive(Debug, Clone)]
pub struct OrthoRecurrence {
    family: Family,
    params: HarnessParams<f64>,
}

impl OrthoRecurrence {
    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn params(&self) -> &HarnessParams<f64> {
        &self.params
    }

    /// Number of available coefficients (`None` when unbounded).
    pub fn len(&self) -> Option<usize> {
        match &self.family {
            Family::Custom { diag, offdiag } => Some(diag.len().min(offdiag.len())),
            _ => None,
        }
    }

    pub fn diag(&self, n: u32) -> f64 {
        match &self.family {
            Family::Martingale { t } => coeff_a(n, &0.0, t, &0.0, &self.params),
            Family::Conditional { x, t, s } => coeff_a(n, x, t, s, &self.params),
            Family::Custom { diag, .. } => diag[n as usize],
        }
    }

    pub fn offdiag(&self, n: u32) -> f64 {
        match &self.family {
            Family::Martingale { t } => coeff_b(n, &0.0, t, &0.0, &self.params),
            Family::Conditional { x, t, s } => coeff_b(n, x, t, s, &self.params),
            Family::Custom { offdiag, .. } => offdiag[n as usize],
        }
    }
}

/// Packages the coefficients of a family for the spectral layer.
pub fn recurrence_for(family: Family, params: &HarnessParams<f64>) -> OrthoRecurrence {
    OrthoRecurrence {
        family,
        params: params.clone(),
    }
}
