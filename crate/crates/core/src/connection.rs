//! Connection coefficients between the conditional polynomial families and
//! exact verification of the expansion identities they satisfy.
//!
//! Every `verify_*` function works in exact rational arithmetic and reports
//! a residual rather than failing: a residual of exactly zero is a pass.
//! Sweeps draw random rational tuples from a fixed seed.

use std::fmt;

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::polynomials::{coeff_a, coeff_b, eval_p_all, eval_q_all, HarnessParams};
use crate::qcore::{q_binomial, q_int_signed, qpow, qpow_signed, rat, Rational, Scalar};

/// Index triple of a connection coefficient `γ_{n,k,j}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GammaIndex {
    pub n: i64,
    pub k: i64,
    pub j: i64,
}

impl GammaIndex {
    pub fn new(n: i64, k: i64, j: i64) -> Self {
        Self { n, k, j }
    }

    /// True when the conventions force the coefficient to vanish.
    fn vanishes(&self) -> bool {
        let Self { n, k, j } = *self;
        j < 0 || k < 0 || j > k || k > n || (k == n && j > 0)
    }
}

fn ascending_q_ints<T: Scalar>(from: i64, count: i64, q: &T) -> T {
    (0..count).fold(T::one(), |acc, i| acc * q_int_signed(from + i, q))
}

/// The connection coefficient `γ_{n,k,j}`.
///
/// Evaluated in the division-free form
/// `(sη)^j q^{(2k-1-j)j/2} [n k-j]_q [n-k+j j]_q Π_{i=n-k}^{n-k+j-1} [i]_q`,
/// which equals the factorial ratio whenever the latter is defined and
/// reproduces the boundary conventions (`γ_{n,n,0} = 1`, `γ_{n,k,0} = [n k]_q`).
pub fn gamma_coeff<T: Scalar>(idx: GammaIndex, s: &T, params: &HarnessParams<T>) -> T {
    if idx.vanishes() {
        return T::zero();
    }
    let GammaIndex { n, k, j } = idx;
    let twice = (2 * k - 1 - j) * j;
    debug_assert!(twice % 2 == 0, "q-exponent must be an integer");
    let q = &params.q;
    let mut out = qpow(&(s.clone() * params.eta.clone()), j as u32) * qpow(q, (twice / 2) as u32);
    out = out * q_binomial(n, k - j, q) * q_binomial(n - k + j, j, q);
    out * ascending_q_ints(n - k, j, q)
}

/// The generalized coefficient `γ̃_{n,k,j}(t)`.
///
/// Same q-factorial ratio as [`gamma_coeff`], with `(sη)^j q^{...}` replaced
/// by `(-η)^j Π_{r=k-j}^{k-1} (t - s q^r)`.
pub fn gamma_tilde<T: Scalar>(idx: GammaIndex, t: &T, s: &T, params: &HarnessParams<T>) -> T {
    if idx.vanishes() {
        return T::zero();
    }
    let GammaIndex { n, k, j } = idx;
    let q = &params.q;
    let mut out = qpow(&(-params.eta.clone()), j as u32);
    for r in (k - j)..k {
        out = out * (t.clone() - s.clone() * qpow(q, r as u32));
    }
    out * q_binomial(n, k - j, q) * q_binomial(n - k + j, j, q) * ascending_q_ints(n - k, j, q)
}

fn b_from_values<T: Scalar>(n: i64, k: i64, qvals: &[T], coeff: impl Fn(GammaIndex) -> T) -> T {
    if k < 0 || k > n {
        return T::zero();
    }
    (0..=k).fold(T::zero(), |acc, j| {
        acc + coeff(GammaIndex::new(n, k, j)) * qvals[(k - j) as usize].clone()
    })
}

/// `b_k^{(n)}(y; x, s) = Σ_j γ_{n,k,j} Q_{k-j}(y; x, 0, s)`; zero outside `0 ≤ k ≤ n`.
pub fn b_poly<T: Scalar>(n: i64, k: i64, y: &T, x: &T, s: &T, params: &HarnessParams<T>) -> T {
    if k < 0 || k > n {
        return T::zero();
    }
    let qvals = eval_q_all(k as u32, y, x, &T::zero(), s, params);
    b_from_values(n, k, &qvals, |idx| gamma_coeff(idx, s, params))
}

/// `b̃_k^{(n)}(y; x, t, s) = Σ_j γ̃_{n,k,j}(t) Q_{k-j}(y; x, t, s)`.
pub fn b_tilde<T: Scalar>(n: i64, k: i64, y: &T, x: &T, t: &T, s: &T, params: &HarnessParams<T>) -> T {
    if k < 0 || k > n {
        return T::zero();
    }
    let qvals = eval_q_all(k as u32, y, x, t, s, params);
    b_from_values(n, k, &qvals, |idx| gamma_tilde(idx, t, s, params))
}

/// Names of the identities checked by this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum IdentityId {
    #[serde(rename = "expansion-11")]
    Expansion,
    #[serde(rename = "representation-12")]
    Representation,
    #[serde(rename = "recursion-13")]
    Recursion,
    #[serde(rename = "coeff-25")]
    Coeff25,
    #[serde(rename = "coeff-26")]
    Coeff26,
    #[serde(rename = "abcd")]
    Abcd,
    #[serde(rename = "ABCD")]
    AbcdUpper,
    #[serde(rename = "tilde-general")]
    TildeGeneral,
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        write!(f, "{}", s.as_str().unwrap_or("?"))
    }
}

/// A point at which identities are evaluated. Not every identity reads
/// every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTuple {
    pub z: Rational,
    pub y: Rational,
    pub x: Rational,
    pub u: Rational,
    pub t: Rational,
    pub s: Rational,
    pub params: HarnessParams<Rational>,
}

impl IdentityTuple {
    fn named(&self) -> [(&'static str, &Rational); 9] {
        [
            ("z", &self.z),
            ("y", &self.y),
            ("x", &self.x),
            ("u", &self.u),
            ("t", &self.t),
            ("s", &self.s),
            ("eta", &self.params.eta),
            ("theta", &self.params.theta),
            ("q", &self.params.q),
        ]
    }

    /// Same tuple with `t` replaced.
    pub fn with_t(&self, t: Rational) -> Self {
        Self { t, ..self.clone() }
    }
}

impl Serialize for IdentityTuple {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let named = self.named();
        let mut map = serializer.serialize_map(Some(named.len()))?;
        for (k, v) in named {
            map.serialize_entry(k, &v.to_string())?;
        }
        map.end()
    }
}

fn serialize_rational<S: Serializer>(r: &Rational, serializer: S) -> Result<S::Ok, S::Error> {
    serializer.serialize_str(&r.to_string())
}

/// Outcome of one exact identity check. `pass` holds exactly when the
/// residual is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub identity: IdentityId,
    pub n: i64,
    pub k: Option<i64>,
    pub j: Option<i64>,
    pub tuple: IdentityTuple,
    #[serde(serialize_with = "serialize_rational")]
    pub residual: Rational,
    pub pass: bool,
    /// For composite checks, the first sub-quantity found to be nonzero.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_part: Option<String>,
}

impl IdentityReport {
    fn new(identity: IdentityId, n: i64, k: Option<i64>, j: Option<i64>, tuple: &IdentityTuple, residual: Rational) -> Self {
        let pass = residual.is_zero();
        Self {
            identity,
            n,
            k,
            j,
            tuple: tuple.clone(),
            residual,
            pass,
            failed_part: None,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Expansion of `Q_n(z; x, u, s)` in the basis `Q_k(z; y, u, 0)`.
pub fn verify_expansion(n: i64, tuple: &IdentityTuple) -> IdentityReport {
    let IdentityTuple { z, y, x, u, s, params, .. } = tuple;
    let zero = Rational::zero();
    let nn = n as u32;
    let lhs = eval_q_all(nn, z, x, u, s, params).pop().expect("nonempty");
    let basis = eval_q_all(nn, z, y, u, &zero, params);
    let qy = eval_q_all(nn, y, x, &zero, s, params);
    let rhs = (0..=n).fold(Rational::zero(), |acc, k| {
        let b = b_from_values(n, n - k, &qy, |idx| gamma_coeff(idx, s, params));
        acc + b * basis[k as usize].clone()
    });
    IdentityReport::new(IdentityId::Expansion, n, None, None, tuple, lhs - rhs)
}

/// Representation of `Q_n(z; x, u, s)` through differences of martingale polynomials.
pub fn verify_representation(n: i64, tuple: &IdentityTuple) -> IdentityReport {
    let IdentityTuple { z, x, u, s, params, .. } = tuple;
    let zero = Rational::zero();
    let nn = n as u32;
    let lhs = eval_q_all(nn, z, x, u, s, params).pop().expect("nonempty");
    let pz = eval_p_all(nn, z, u, params);
    let px = eval_p_all(nn, x, s, params);
    let q0 = eval_q_all(nn, &zero, x, &zero, s, params);
    let rhs = (1..=n).fold(Rational::zero(), |acc, k| {
        let b = b_from_values(n, n - k, &q0, |idx| gamma_coeff(idx, s, params));
        acc + b * (pz[k as usize].clone() - px[k as usize].clone())
    });
    let residual = if n == 0 { lhs - Rational::one() } else { lhs - rhs };
    IdentityReport::new(IdentityId::Representation, n, None, None, tuple, residual)
}

/// Memoised `b_k^{(m)}(y; x, s)` for one tuple.
struct BTable<'a> {
    qvals: Vec<Rational>,
    s: &'a Rational,
    params: &'a HarnessParams<Rational>,
}

impl<'a> BTable<'a> {
    fn new(n_max: i64, tuple: &'a IdentityTuple) -> Self {
        let qvals = eval_q_all(n_max.max(0) as u32, &tuple.y, &tuple.x, &Rational::zero(), &tuple.s, &tuple.params);
        Self {
            qvals,
            s: &tuple.s,
            params: &tuple.params,
        }
    }

    fn b(&self, n: i64, k: i64) -> Rational {
        if n < 0 {
            return Rational::zero();
        }
        b_from_values(n, k, &self.qvals, |idx| gamma_coeff(idx, self.s, self.params))
    }
}

/// `Σ_i factor_i · b_i` where a vanishing `b_i` skips evaluating its coefficient
/// (coefficients at negative indices are undefined but always multiply zero).
fn lazy_term(b: Rational, coef: impl FnOnce() -> Rational) -> Rational {
    if b.is_zero() {
        b
    } else {
        b * coef()
    }
}

/// `RHS(u) - LHS` of the three-term recursion for `b_k^{(n+1)}`.
fn recursion13_residual(n: i64, k: i64, u: &Rational, tuple: &IdentityTuple, table: &BTable) -> Rational {
    let IdentityTuple { y, x, s, params, .. } = tuple;
    let zero = Rational::zero();
    let lhs = table.b(n + 1, k);
    let r1 = lazy_term(table.b(n, k - 1), || {
        coeff_a((n + 1 - k) as u32, y, u, &zero, params) - coeff_a(n as u32, x, u, s, params)
    });
    let r2 = lazy_term(table.b(n, k - 2), || coeff_b((n + 2 - k) as u32, y, u, &zero, params));
    let r3 = lazy_term(table.b(n - 1, k - 2), || coeff_b(n as u32, x, u, s, params));
    r1 + r2 - r3 + table.b(n, k) - lhs
}

/// The recursion satisfied by `b_k^{(n+1)}`, evaluated at the tuple's `u`.
pub fn verify_recursion13(n: i64, k: i64, tuple: &IdentityTuple) -> IdentityReport {
    let table = BTable::new(n + 1, tuple);
    let residual = recursion13_residual(n, k, &tuple.u, tuple, &table);
    IdentityReport::new(IdentityId::Recursion, n, Some(k), None, tuple, residual)
}

/// General expansion of `Q_n(z; x, u, s)` in the basis `Q_k(z; y, u, t)`.
pub fn verify_tilde_general(n: i64, tuple: &IdentityTuple) -> IdentityReport {
    let IdentityTuple { z, y, x, u, t, s, params } = tuple;
    let nn = n as u32;
    let lhs = eval_q_all(nn, z, x, u, s, params).pop().expect("nonempty");
    let basis = eval_q_all(nn, z, y, u, t, params);
    let qy = eval_q_all(nn, y, x, t, s, params);
    let rhs = (0..=n).fold(Rational::zero(), |acc, k| {
        let b = b_from_values(n, n - k, &qy, |idx| gamma_tilde(idx, t, s, params));
        acc + b * basis[k as usize].clone()
    });
    IdentityReport::new(IdentityId::TildeGeneral, n, None, None, tuple, lhs - rhs)
}

/// Evaluation context for the coefficient-matching quantities of one `(n, k)`.
struct Coeffs<'a> {
    n: i64,
    k: i64,
    x: &'a Rational,
    s: &'a Rational,
    params: &'a HarnessParams<Rational>,
}

impl Coeffs<'_> {
    fn g(&self, n: i64, k: i64, j: i64) -> Rational {
        gamma_coeff(GammaIndex::new(n, k, j), self.s, self.params)
    }
    fn qi(&self, m: i64) -> Rational {
        q_int_signed(m, &self.params.q)
    }
    fn qp(&self, e: i64) -> Rational {
        qpow_signed(&self.params.q, e)
    }
    fn es(&self) -> Rational {
        self.params.eta.clone() * self.s.clone()
    }
    /// `A_j(x, 0, s)`.
    fn a_at(&self, j: i64) -> Rational {
        coeff_a(j as u32, self.x, &Rational::zero(), self.s, self.params)
    }
    /// `B_j(x, 0, s)`.
    fn b_at(&self, j: i64) -> Rational {
        coeff_b(j as u32, self.x, &Rational::zero(), self.s, self.params)
    }
    /// `1 + ηq^{n-1}x + [n-1]_q η(θ - ηq^{n-1}s)`, the bracket of `B_n(x, ·, s)`.
    fn bracket_x(&self) -> Rational {
        let HarnessParams { eta, theta, .. } = self.params;
        let qn1 = self.qp(self.n - 1);
        Rational::one()
            + eta.clone() * qn1.clone() * self.x.clone()
            + self.qi(self.n - 1) * eta.clone() * (theta.clone() - eta.clone() * qn1 * self.s.clone())
    }

    fn big_c(&self, j: i64) -> Rational {
        let (n, k) = (self.n, self.k);
        let HarnessParams { eta, theta, .. } = self.params;
        let top = self.qp(n + 1 - k);
        let mut out = -eta.clone() * self.qi(k - 1) * top.clone() * self.g(n, k - 1, k - 1 - j);
        let inner = self.g(n, k - 2, k - 1 - j)
            + lazy_term(self.g(n, k - 2, k - 2 - j), || self.a_at(j))
            + lazy_term(self.g(n, k - 2, k - 3 - j), || self.b_at(j + 1));
        out = out + eta.clone() * self.qi(n + 2 - k) * top * inner;
        out = out
            + self.qi(n + 2 - k)
                * (Rational::one() + self.qi(n + 1 - k) * eta.clone() * theta.clone())
                * self.g(n, k - 2, k - 2 - j);
        out - lazy_term(self.g(n - 1, k - 2, k - 2 - j), || self.qi(n) * self.bracket_x())
    }

    fn big_d(&self, j: i64) -> Rational {
        let (n, k) = (self.n, self.k);
        let HarnessParams { eta, theta, q } = self.params;
        let top = self.qp(n + 1 - k);
        let g1 = self.g(n, k - 1, k - 1 - j);
        let mut out = self.g(n + 1, k, k - j) - top.clone() * self.g(n, k - 1, k - j);
        out = out - lazy_term(g1.clone(), || top.clone() * self.a_at(j));
        out = out - lazy_term(self.g(n, k - 1, k - 2 - j), || top.clone() * self.b_at(j + 1));
        let drift = self.qi(n + 1 - k) * theta.clone()
            - self.qp(n) * self.x.clone()
            - self.qi(n)
                * (theta.clone() - (Rational::one() + q.clone()) * self.qp(n - 1) * eta.clone() * self.s.clone());
        out = out - drift * g1;
        out = out
            - lazy_term(self.g(n - 1, k - 2, k - 2 - j), || {
                self.qi(n) * self.qp(n - 1) * self.s.clone() * self.bracket_x()
            });
        out - self.g(n, k, k - j)
    }

    /// Parts `(a, b, c, d)` with `C = ηθ[n+2-k]a + q^{n+1-k+j}ηx[n+2-k]b + q^{n+1-k}ηc + d`.
    fn lower_parts(&self, j: i64) -> [Rational; 4] {
        let (n, k) = (self.n, self.k);
        let q = &self.params.q;
        let es = self.es();
        let g22 = self.g(n, k - 2, k - 2 - j);
        let g23 = self.g(n, k - 2, k - 3 - j);
        let gm = self.g(n - 1, k - 2, k - 2 - j);
        let w = self.qi(n + 2 - k);

        let a = self.qi(j) * self.qp(n + 1 - k) * g22.clone()
            - lazy_term(g23.clone(), || self.qp(n + 1 - k) * self.qi(j) * self.qi(j + 1) * self.qp(j) * es.clone())
            + self.qi(n + 1 - k) * g22.clone()
            - self.qi(n) * self.qi(n - 1) / w.clone() * gm.clone();

        let b = g22.clone()
            - lazy_term(g23.clone(), || self.qi(j + 1) * self.qp(j) * es.clone())
            - lazy_term(gm.clone(), || self.qi(n) / w.clone() * self.qp(k - 2 - j));

        let shift = if j == 0 {
            Rational::zero()
        } else {
            self.qi(j) * (Rational::one() + q.clone()) * self.qp(j - 1) * es.clone() * g22.clone()
        };
        let c = -self.qi(k - 1) * self.g(n, k - 1, k - 1 - j)
            + lazy_term(gm.clone(), || self.qi(n) * self.qi(n - 1) * self.qp(k - 2) * es.clone())
            + w.clone()
                * (self.g(n, k - 2, k - 1 - j) - shift
                    + lazy_term(g23.clone(), || {
                        self.qi(j) * self.qi(j + 1) * self.qp(2 * j) * es.clone() * es.clone()
                    }));

        let d = -lazy_term(g23, || w.clone() * self.qi(j + 1) * self.qp(n + 1 - k + j) * es.clone())
            + w * g22
            - self.qi(n) * gm;
        [a, b, c, d]
    }

    /// Parts `(A, B, C, D)` with `D = q^{n+1-k+j}xA + q^{n+1-k}θB + q^{n+1-k+j}sC + D`.
    fn upper_parts(&self, j: i64) -> [Rational; 4] {
        let (n, k) = (self.n, self.k);
        let q = &self.params.q;
        let es = self.es();
        let g11 = self.g(n, k - 1, k - 1 - j);
        let g12 = self.g(n, k - 1, k - 2 - j);
        let gm = self.g(n - 1, k - 2, k - 2 - j);
        let one_q = Rational::one() + q.clone();

        let big_a = -g11.clone()
            + lazy_term(g12.clone(), || self.qi(j + 1) * self.qp(j) * es.clone())
            + self.qp(k - 1 - j) * g11.clone()
            - lazy_term(gm.clone(), || self.qi(n) * self.qp(n - 3 + k - j) * es.clone());

        let big_b = -self.qi(j) * g11.clone()
            + lazy_term(g12.clone(), || self.qi(j + 1) * self.qi(j) * self.qp(j) * es.clone())
            + self.qi(k - 1) * g11.clone()
            - lazy_term(gm.clone(), || self.qi(n) * self.qi(n - 1) * self.qp(k - 2) * es.clone());

        let big_c = self.qi(j + 1) * g12.clone() - lazy_term(gm.clone(), || self.qi(n) * self.qp(k - 2 - j));

        let mid = if j == 0 {
            Rational::zero()
        } else {
            self.qi(j) * one_q.clone() * self.qp(n - k + j) * es.clone() * g11.clone()
        };
        let big_d = self.g(n + 1, k, k - j) - self.qp(n + 1 - k) * self.g(n, k - 1, k - j) + mid
            - lazy_term(g12, || self.qi(j + 1) * self.qi(j) * self.qp(n + 1 - k + 2 * j) * es.clone() * es.clone())
            - self.qi(n) * one_q * self.qp(n - 1) * es.clone() * g11
            + lazy_term(gm, || self.qi(n) * self.qi(n - 1) * self.qp(2 * n - 2) * es.clone() * es.clone())
            - self.g(n, k, k - j);
        [big_a, big_b, big_c, big_d]
    }
}

/// Every quantity computed by [`appendix_breakdown`] for one `(n, k, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AppendixBreakdown {
    /// `C_{n,k,j}` and `D_{n,k,j}` as displayed (aggregates).
    pub c_aggregate: Rational,
    pub d_aggregate: Rational,
    /// `a, b, c, d`.
    pub lower: [Rational; 4],
    /// `A, B, C, D`.
    pub upper: [Rational; 4],
    /// Aggregate minus its reconstruction from the four parts.
    pub c_split_gap: Rational,
    pub d_split_gap: Rational,
}

/// All coefficient-matching quantities for one `(n, k, j)`.
pub fn appendix_breakdown(n: i64, k: i64, j: i64, tuple: &IdentityTuple) -> AppendixBreakdown {
    let cx = Coeffs {
        n,
        k,
        x: &tuple.x,
        s: &tuple.s,
        params: &tuple.params,
    };
    let HarnessParams { eta, theta, .. } = &tuple.params;
    let x = &tuple.x;
    let s = &tuple.s;
    let c_aggregate = cx.big_c(j);
    let d_aggregate = cx.big_d(j);
    let lower = cx.lower_parts(j);
    let upper = cx.upper_parts(j);
    let w = cx.qi(n + 2 - k);
    let top = cx.qp(n + 1 - k);
    let top_j = cx.qp(n + 1 - k + j);
    let c_rebuilt = eta.clone() * theta.clone() * w.clone() * lower[0].clone()
        + top_j.clone() * eta.clone() * x.clone() * w * lower[1].clone()
        + top.clone() * eta.clone() * lower[2].clone()
        + lower[3].clone();
    let d_rebuilt = top_j.clone() * x.clone() * upper[0].clone()
        + top * theta.clone() * upper[1].clone()
        + top_j * s.clone() * upper[2].clone()
        + upper[3].clone();
    AppendixBreakdown {
        c_split_gap: c_aggregate.clone() - c_rebuilt,
        d_split_gap: d_aggregate.clone() - d_rebuilt,
        c_aggregate,
        d_aggregate,
        lower,
        upper,
    }
}

/// `LHS - RHS` of the slope (coefficient of `u`) identity for `(n, k)`.
fn coeff25_gap(n: i64, k: i64, tuple: &IdentityTuple, table: &BTable) -> Rational {
    let cx = Coeffs {
        n,
        k,
        x: &tuple.x,
        s: &tuple.s,
        params: &tuple.params,
    };
    let HarnessParams { eta, theta, .. } = &tuple.params;
    let lhs = lazy_term(table.b(n, k - 2), || {
        cx.qi(n + 2 - k)
            * (Rational::one()
                + eta.clone() * cx.qp(n + 1 - k) * tuple.y.clone()
                + cx.qi(n + 1 - k) * eta.clone() * theta.clone())
    });
    let rhs = eta.clone() * cx.qi(k - 1) * cx.qp(n + 1 - k) * table.b(n, k - 1)
        + lazy_term(table.b(n - 1, k - 2), || cx.qi(n) * cx.bracket_x());
    lhs - rhs
}

/// `LHS - RHS` of the intercept identity for `(n, k)`.
fn coeff26_gap(n: i64, k: i64, tuple: &IdentityTuple, table: &BTable) -> Rational {
    let cx = Coeffs {
        n,
        k,
        x: &tuple.x,
        s: &tuple.s,
        params: &tuple.params,
    };
    let HarnessParams { eta, theta, q } = &tuple.params;
    let lhs = table.b(n + 1, k);
    let drift = cx.qp(n + 1 - k) * tuple.y.clone() + cx.qi(n + 1 - k) * theta.clone()
        - cx.qp(n) * tuple.x.clone()
        - cx.qi(n) * (theta.clone() - eta.clone() * (Rational::one() + q.clone()) * cx.qp(n - 1) * tuple.s.clone());
    let rhs = drift * table.b(n, k - 1)
        + lazy_term(table.b(n - 1, k - 2), || cx.qi(n) * cx.qp(n - 1) * tuple.s.clone() * cx.bracket_x())
        + table.b(n, k);
    lhs - rhs
}

/// Coefficient-matching proof of the recursion for `(n, k, j)`.
///
/// Requires `n ≥ 1`, `1 ≤ k ≤ n + 1` and `0 ≤ j ≤ k - 1`. Checks, in order:
/// the eight parts, the two aggregates, the reconstruction of each aggregate
/// from its parts, the direct slope and intercept identities, their
/// equivalence with `Σ_j C_{n,k,j}Q_j` and `Σ_j D_{n,k,j}Q_j`, and the split
/// of the recursion into slope and intercept by evaluating it at `u = 0, 1`.
pub fn verify_appendix(n: i64, k: i64, j: i64, tuple: &IdentityTuple) -> IdentityReport {
    assert!(n >= 1 && (1..=n + 1).contains(&k) && (0..k).contains(&j), "index out of range");
    let bd = appendix_breakdown(n, k, j, tuple);
    let table = BTable::new(n + 1, tuple);
    let gap25 = coeff25_gap(n, k, tuple, &table);
    let gap26 = coeff26_gap(n, k, tuple, &table);

    let cx = Coeffs {
        n,
        k,
        x: &tuple.x,
        s: &tuple.s,
        params: &tuple.params,
    };
    let qv = &table.qvals;
    let (mut sum_c, mut sum_d) = (Rational::zero(), Rational::zero());
    for i in 0..=k {
        sum_c = sum_c + cx.big_c(i) * qv[i as usize].clone();
        sum_d = sum_d + cx.big_d(i) * qv[i as usize].clone();
    }
    let at0 = recursion13_residual(n, k, &Rational::zero(), tuple, &table);
    let at1 = recursion13_residual(n, k, &Rational::one(), tuple, &table);
    let slope = at1 - at0.clone();

    let checks: Vec<(String, Rational)> = ["a", "b", "c", "d"]
        .iter()
        .zip(bd.lower.iter())
        .chain(["A", "B", "C", "D"].iter().zip(bd.upper.iter()))
        .map(|(name, v)| (name.to_string(), v.clone()))
        .chain([
            ("C_nkj".to_string(), bd.c_aggregate.clone()),
            ("D_nkj".to_string(), bd.d_aggregate.clone()),
            ("C_split".to_string(), bd.c_split_gap.clone()),
            ("D_split".to_string(), bd.d_split_gap.clone()),
            ("eq25".to_string(), gap25.clone()),
            ("eq26".to_string(), gap26.clone()),
            ("eq27_vs_25".to_string(), sum_c - gap25.clone()),
            ("eq33_vs_26".to_string(), sum_d - gap26.clone()),
            ("eq13_slope".to_string(), slope.clone() - gap25),
            ("eq13_intercept".to_string(), at0.clone() + gap26),
            ("eq13_u0".to_string(), at0),
            ("eq13_u1".to_string(), slope),
        ])
        .collect();

    let first_bad = checks.into_iter().find(|(_, v)| !v.is_zero());
    let (residual, failed_part) = match first_bad {
        Some((name, v)) => (v, Some(name)),
        None => (Rational::zero(), None),
    };
    let mut report = IdentityReport::new(IdentityId::Abcd, n, Some(k), Some(j), tuple, residual);
    if let Some(part) = &failed_part {
        if ["A", "B", "C", "D", "D_nkj", "D_split", "eq26", "eq33_vs_26"].contains(&part.as_str()) {
            report.identity = IdentityId::AbcdUpper;
        }
    }
    report.failed_part = failed_part;
    report
}

/// Slope identity alone, as a separate report.
pub fn verify_coeff25(n: i64, k: i64, tuple: &IdentityTuple) -> IdentityReport {
    let table = BTable::new(n + 1, tuple);
    IdentityReport::new(IdentityId::Coeff25, n, Some(k), None, tuple, coeff25_gap(n, k, tuple, &table))
}

/// Intercept identity alone, as a separate report.
pub fn verify_coeff26(n: i64, k: i64, tuple: &IdentityTuple) -> IdentityReport {
    let table = BTable::new(n + 1, tuple);
    IdentityReport::new(IdentityId::Coeff26, n, Some(k), None, tuple, coeff26_gap(n, k, tuple, &table))
}

/// How `q` is drawn for a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QDraw {
    /// Random rational in `(-1, 1) \ {0}`.
    Interior,
    /// `q = 0` exactly.
    Zero,
}

/// Seeded source of admissible random rational tuples.
///
/// Numerators and denominators are drawn from `[-20, 20] \ {0}`; tuples with
/// `1 + ηθ < max(q, 0)` or violating `0 ≤ s ≤ t ≤ u` are rejected.
pub struct TupleSampler {
    rng: ChaCha8Rng,
    q_draw: QDraw,
}

impl TupleSampler {
    pub fn new(seed: u64, q_draw: QDraw) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            q_draw,
        }
    }

    fn component(&mut self) -> i64 {
        loop {
            let v = self.rng.random_range(-20i64..=20);
            if v != 0 {
                return v;
            }
        }
    }

    fn rational(&mut self) -> Rational {
        let num = self.component();
        let den = self.component();
        rat(num, den)
    }

    fn q(&mut self) -> Rational {
        match self.q_draw {
            QDraw::Zero => Rational::zero(),
            QDraw::Interior => loop {
                let q = self.rational();
                if q.abs() < Rational::one() {
                    return q;
                }
            },
        }
    }

    pub fn draw(&mut self) -> IdentityTuple {
        loop {
            let q = self.q();
            let eta = self.rational();
            let theta = self.rational();
            let floor = if q.is_positive() { q.clone() } else { Rational::zero() };
            if Rational::one() + eta.clone() * theta.clone() < floor {
                continue;
            }
            let (s, t, u) = (self.rational(), self.rational(), self.rational());
            if s.is_negative() || s > t || t > u {
                continue;
            }
            let (z, y, x) = (self.rational(), self.rational(), self.rational());
            return IdentityTuple {
                z,
                y,
                x,
                u,
                t,
                s,
                params: HarnessParams::new_unchecked(eta, theta, q),
            };
        }
    }
}

/// The exact identity families that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Expansion,
    Representation,
    Recursion,
    Appendix,
    Tilde,
}

/// Runs one identity family over `tuples` random tuples for every index
/// combination up to `n_max`.
///
/// Index ranges: expansion, representation and tilde use `0..=n_max`;
/// recursion uses `0..=n_max` and `0..=n+1`; appendix uses `1..=n_max`,
/// `1..=n+1` and `0..k`. Reports are ordered by tuple, then index.
pub fn sweep(kind: Sweep, n_max: i64, tuples: usize, seed: u64, q_draw: QDraw) -> Vec<IdentityReport> {
    let mut sampler = TupleSampler::new(seed, q_draw);
    let mut out = Vec::new();
    for _ in 0..tuples {
        let tuple = sampler.draw();
        match kind {
            Sweep::Expansion => out.extend((0..=n_max).map(|n| verify_expansion(n, &tuple))),
            Sweep::Representation => out.extend((0..=n_max).map(|n| verify_representation(n, &tuple))),
            Sweep::Tilde => out.extend((0..=n_max).map(|n| verify_tilde_general(n, &tuple))),
            Sweep::Recursion => {
                for n in 0..=n_max {
                    out.extend((0..=n + 1).map(|k| verify_recursion13(n, k, &tuple)));
                }
            }
            Sweep::Appendix => {
                for n in 1..=n_max {
                    for k in 1..=n + 1 {
                        out.extend((0..k).map(|j| verify_appendix(n, k, j, &tuple)));
                    }
                }
            }
        }
    }
    out
}

/// Helper for tests and callers building tuples by hand.
pub fn tuple_from_ints(values: [(i64, i64); 9]) -> IdentityTuple {
    let r = |(a, b): (i64, i64)| rat(a, b);
    IdentityTuple {
        z: r(values[0]),
        y: r(values[1]),
        x: r(values[2]),
        u: r(values[3]),
        t: r(values[4]),
        s: r(values[5]),
        params: HarnessParams::new_unchecked(r(values[6]), r(values[7]), r(values[8])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomials::eval_q;
    use crate::qcore::q_factorial;

    fn sample() -> IdentityTuple {
        // z, y, x, u, t, s, eta, theta, q
        tuple_from_ints([(3, 7), (-2, 5), (5, 9), (11, 4), (3, 2), (2, 3), (4, 5), (-7, 6), (-3, 8)])
    }

    /// Literal factorial-ratio form of γ, valid when no q-factorial of a
    /// negative argument appears (0 ≤ j ≤ k < n).
    fn gamma_ratio(n: i64, k: i64, j: i64, s: &Rational, p: &HarnessParams<Rational>) -> Rational {
        let q = &p.q;
        let f = |m: i64| q_factorial(m as u32, q);
        qpow(&(s.clone() * p.eta.clone()), j as u32) * qpow(q, ((2 * k - 1 - j) * j / 2) as u32) * f(n) * f(n - k + j - 1)
            / (f(n - k) * f(n - k - 1) * f(j) * f(k - j))
    }

    #[test]
    fn gamma_matches_factorial_ratio() {
        let t = sample();
        for n in 1..9 {
            for k in 0..n {
                for j in 0..=k {
                    assert_eq!(
                        gamma_coeff(GammaIndex::new(n, k, j), &t.s, &t.params),
                        gamma_ratio(n, k, j, &t.s, &t.params),
                        "({n},{k},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn gamma_conventions() {
        let t = sample();
        let g = |n, k, j| gamma_coeff(GammaIndex::new(n, k, j), &t.s, &t.params);
        for n in 0..7 {
            for k in 0..=n {
                assert_eq!(g(n, k, 0), q_binomial(n, k, &t.params.q));
            }
            assert_eq!(g(n, n, 0), Rational::one());
            for j in 1..=n {
                assert_eq!(g(n, n, j), Rational::zero());
            }
            assert_eq!(g(n, -1, 0), Rational::zero());
            assert_eq!(g(n, n + 1, 0), Rational::zero());
            assert_eq!(g(n, 2, 3), Rational::zero());
            assert_eq!(g(n, 2, -1), Rational::zero());
        }
        let es = t.s.clone() * t.params.eta.clone();
        assert_eq!(g(2, 1, 1), es * (Rational::one() + t.params.q.clone()));
    }

    #[test]
    fn gamma_exponent_is_integral() {
        for k in -10i64..10 {
            for j in -10i64..10 {
                assert_eq!(((2 * k - 1 - j) * j).rem_euclid(2), 0);
            }
        }
    }

    #[test]
    fn b_poly_low_cases() {
        let t = sample();
        let IdentityTuple { y, x, s, params, .. } = &t;
        for n in 0..6 {
            assert_eq!(b_poly(n, 0, y, x, s, params), Rational::one());
            assert_eq!(b_poly(n, n, y, x, s, params), eval_q(n as u32, y, x, &Rational::zero(), s, params));
            assert_eq!(b_poly(n, n + 1, y, x, s, params), Rational::zero());
            assert_eq!(b_poly(n, -1, y, x, s, params), Rational::zero());
        }
        let expect = (Rational::one() + params.q.clone()) * (y.clone() - x.clone() + s.clone() * params.eta.clone());
        assert_eq!(b_poly(2, 1, y, x, s, params), expect);
    }

    #[test]
    fn tilde_reduces_at_t_zero() {
        let t = sample();
        let IdentityTuple { y, x, s, params, .. } = &t;
        let zero = Rational::zero();
        for n in 0..6 {
            for k in 0..=n {
                assert_eq!(
                    b_tilde(n, k, y, x, &zero, s, params),
                    b_poly(n, k, y, x, s, params),
                    "n={n} k={k}"
                );
                assert_eq!(
                    gamma_tilde(GammaIndex::new(n, k, 0), &t.t, s, params),
                    q_binomial(n, k, &params.q)
                );
            }
            assert_eq!(b_tilde(n, 0, y, x, &t.t, s, params), Rational::one());
            assert_eq!(
                b_tilde(n, n, y, x, &t.t, s, params),
                eval_q(n as u32, y, x, &t.t, s, params)
            );
        }
    }

    #[test]
    fn identities_hold_on_a_fixed_tuple() {
        let t = sample();
        for n in 0..6 {
            assert!(verify_expansion(n, &t).pass, "expansion n={n}");
            assert!(verify_representation(n, &t).pass, "representation n={n}");
            assert!(verify_tilde_general(n, &t).pass, "tilde n={n}");
            for k in 0..=n + 1 {
                assert!(verify_recursion13(n, k, &t).pass, "recursion n={n} k={k}");
            }
        }
        for n in 1..6 {
            for k in 1..=n + 1 {
                assert!(verify_coeff25(n, k, &t).pass);
                assert!(verify_coeff26(n, k, &t).pass);
                for j in 0..k {
                    let r = verify_appendix(n, k, j, &t);
                    assert!(r.pass, "appendix ({n},{k},{j}): {:?} = {}", r.failed_part, r.residual);
                }
            }
        }
    }

    #[test]
    fn representation_vanishes_at_its_start() {
        let mut t = sample();
        t.z = t.x.clone();
        t.u = t.s.clone();
        for n in 1..6 {
            let r = verify_representation(n, &t);
            assert!(r.pass);
            let q = eval_q(n as u32, &t.z, &t.x, &t.u, &t.s, &t.params);
            assert_eq!(q, Rational::zero());
        }
    }

    #[test]
    fn expansion_detects_a_perturbed_coefficient() {
        // Corrupting θ between the two sides must leave a nonzero residual.
        let t = sample();
        let report = verify_expansion(3, &t);
        assert!(report.pass);
        let mut wrong = t.clone();
        wrong.params.theta = wrong.params.theta.clone() + rat(1, 1000);
        let lhs = eval_q(3, &t.z, &t.x, &t.u, &t.s, &t.params);
        let rhs_wrong = {
            let r = verify_expansion(3, &wrong);
            eval_q(3, &wrong.z, &wrong.x, &wrong.u, &wrong.s, &wrong.params) - r.residual
        };
        assert_ne!(lhs, rhs_wrong);
    }

    #[test]
    fn report_serializes_as_json_line() {
        let r = verify_recursion13(2, 1, &sample());
        let line = r.to_json_line();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["identity"], "recursion-13");
        assert_eq!(v["n"], 2);
        assert_eq!(v["k"], 1);
        assert_eq!(v["residual"], "0");
        assert_eq!(v["pass"], true);
        assert_eq!(v["tuple"]["q"], "-3/8");
    }

    #[test]
    fn sampler_respects_constraints() {
        let mut s = TupleSampler::new(11, QDraw::Interior);
        for _ in 0..200 {
            let t = s.draw();
            let q = &t.params.q;
            assert!(q.abs() < Rational::one() && !q.is_zero());
            let floor = if q.is_positive() { q.clone() } else { Rational::zero() };
            assert!(Rational::one() + t.params.eta.clone() * t.params.theta.clone() >= floor);
            assert!(!t.s.is_negative() && t.s <= t.t && t.t <= t.u);
        }
        let mut z = TupleSampler::new(11, QDraw::Zero);
        assert!(z.draw().params.q.is_zero());
    }

    #[test]
    fn q_zero_sweeps_pass() {
        for kind in [Sweep::Expansion, Sweep::Recursion, Sweep::Tilde, Sweep::Representation] {
            assert!(sweep(kind, 5, 5, 3, QDraw::Zero).iter().all(|r| r.pass), "{kind:?}");
        }
        assert!(sweep(Sweep::Appendix, 5, 3, 3, QDraw::Zero).iter().all(|r| r.pass));
    }
}
