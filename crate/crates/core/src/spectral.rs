//! Orthogonality measures through Jacobi matrices and Gauss quadrature,
//! plus the closed-form support description of the marginal laws.

use serde::Serialize;
use thiserror::Error;

use crate::polynomials::{Family, HarnessParams, OrthoRecurrence};

/// Absolute tolerance below which a recurrence coefficient `B_n` is treated as zero.
pub const TOL_CLAMP: f64 = 1e-12;

/// Default number of quadrature nodes.
pub const DEFAULT_ORDER: usize = 200;

/// Cap on the number of atoms reported per side when the list is infinite.
pub const MAX_ATOMS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("B_{n} = {value:e} is negative beyond tolerance")]
    NegativeBeta { n: usize, value: f64 },
    #[error("tridiagonal eigensolver did not converge (order {order})")]
    EigenFailure { order: usize },
    #[error("absolutely continuous part degenerates when ηθ + 1 − q = 0")]
    DegenerateAC,
    #[error("q = {0} is outside (-1, 1)")]
    UnsupportedQ(f64),
    #[error("quadrature order must be positive")]
    ZeroOrder,
    #[error("non-finite recurrence coefficient at n = {0}")]
    NonFinite(usize),
}

pub use crate::precision::{DoubleDouble, Real};

/// Symmetric tridiagonal realization of a monic recurrence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobiMatrix<F = f64> {
    pub diag: Vec<F>,
    pub subdiag: Vec<F>,
}

impl<F: Real> JacobiMatrix<F> {
    pub fn order(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, v: &[F], out: &mut [F], reach: usize) {
        let n = v.len();
        for i in 0..=reach.min(n - 1) {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc = acc + self.subdiag[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                acc = acc + self.subdiag[i] * v[i + 1];
            }
            out[i] = acc;
        }
    }

    /// `∫ x^k dμ_N` computed as `(J^k)_{00}`, for every `k ≤ k_max`.
    pub fn moments(&self, k_max: usize) -> Vec<F> {
        let width = (k_max + 1).min(self.order());
        let mut v = vec![F::zero(); width];
        let mut next = vec![F::zero(); width];
        v[0] = F::one();
        let mut out = vec![F::one()];
        for k in 1..=k_max {
            self.apply(&v, &mut next, k);
            std::mem::swap(&mut v, &mut next);
            out.push(v[0]);
        }
        out
    }

    /// `∫ P_m dμ_N` for `m = 0..=m_max`, where `P` is the monic family with
    /// recurrence coefficients `(a, b)`; computed as `(P_m(J))_{00}`.
    pub fn integrate_monic(&self, m_max: usize, a: &[F], b: &[F]) -> Vec<F> {
        let width = (m_max + 1).min(self.order());
        let mut prev = vec![F::zero(); width];
        let mut cur = vec![F::zero(); width];
        let mut jv = vec![F::zero(); width];
        cur[0] = F::one();
        let mut out = vec![F::one()];
        for m in 0..m_max {
            self.apply(&cur, &mut jv, m + 1);
            let next: Vec<F> = (0..width).map(|i| jv[i] - a[m] * cur[i] - b[m] * prev[i]).collect();
            prev = cur;
            cur = next;
            out.push(cur[0]);
        }
        out
    }
}

fn check_q(params: &HarnessParams) -> Result<(), SpectralError> {
    if params.q.abs() >= 1.0 || params.q.is_nan() {
        Err(SpectralError::UnsupportedQ(params.q))
    } else {
        Ok(())
    }
}

/// First `n` pairs `(A_k, B_k)` of the conditional family `Q_k(·; x, t, s)`
/// (the martingale family is `x = s = 0`), with running powers of `q` so the
/// cost is linear in `n`.
pub fn conditional_coefficients<F: Real>(x: F, t: F, s: F, params: &HarnessParams, n: usize) -> (Vec<F>, Vec<F>) {
    let (eta, theta, q) = (F::lift(params.eta), F::lift(params.theta), F::lift(params.q));
    let (zero, one) = (F::zero(), F::one());
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    // qn = q^k, qn1 = q^{k-1}, qk = [k]_q, qk1 = [k-1]_q.
    let (mut qn, mut qn1, mut qk, mut qk1) = (one, zero, zero, zero);
    for k in 0..n {
        if k == 0 {
            a.push(x);
            b.push(zero);
        } else {
            a.push(qn * x + qk * (t * eta + theta - (one + q) * qn1 * s * eta));
            let bracket = one + eta * x * qn1 + qk1 * eta * (theta - s * eta * qn1);
            b.push(qk * (t - s * qn1) * bracket);
        }
        qk1 = qk;
        qk = qk + qn;
        qn1 = qn;
        qn = qn * q;
    }
    (a, b)
}

/// First `n` pairs `(A_k, B_k)` of a recurrence.
pub fn coefficients_in<F: Real>(rec: &OrthoRecurrence, n: usize) -> (Vec<F>, Vec<F>) {
    let (x, t, s) = match rec.family() {
        Family::Martingale { t } => (0.0, *t, 0.0),
        Family::Conditional { x, t, s } => (*x, *t, *s),
        Family::Custom { .. } => {
            return (0..n)
                .map(|k| (F::lift(rec.diag(k as u32)), F::lift(rec.offdiag(k as u32))))
                .unzip();
        }
    };
    conditional_coefficients(F::lift(x), F::lift(t), F::lift(s), rec.params(), n)
}

/// First `n` pairs `(A_k, B_k)` of a recurrence in `f64`.
pub fn coefficients(rec: &OrthoRecurrence, n: usize) -> (Vec<f64>, Vec<f64>) {
    coefficients_in(rec, n)
}

/// Jacobi matrix from coefficient tables.
///
/// The order is truncated at the first `|B_k| ≤ TOL_CLAMP`: the measure is
/// then finitely supported on `k` points and later coefficients are irrelevant.
pub fn jacobi_from_coefficients<F: Real>(a: &[F], b: &[F]) -> Result<JacobiMatrix<F>, SpectralError> {
    let n = a.len();
    if n == 0 {
        return Err(SpectralError::ZeroOrder);
    }
    let tol = F::lift(TOL_CLAMP);
    let mut order = n;
    for k in 1..n {
        if !b[k].is_finite() {
            return Err(SpectralError::NonFinite(k));
        }
        if b[k].abs() <= tol {
            order = k;
            break;
        }
        if b[k] < F::zero() {
            return Err(SpectralError::NegativeBeta { n: k, value: b[k].lower() });
        }
    }
    if let Some(k) = a[..order].iter().position(|v| !v.is_finite()) {
        return Err(SpectralError::NonFinite(k));
    }
    Ok(JacobiMatrix {
        diag: a[..order].to_vec(),
        subdiag: b[1..order].iter().map(|v| v.sqrt()).collect(),
    })
}

/// Builds the order-`n` Jacobi matrix of `rec` in precision `F`.
pub fn jacobi_matrix_in<F: Real>(rec: &OrthoRecurrence, n: usize) -> Result<JacobiMatrix<F>, SpectralError> {
    if n == 0 {
        return Err(SpectralError::ZeroOrder);
    }
    if !matches!(rec.family(), Family::Custom { .. }) {
        check_q(rec.params())?;
    }
    let (a, b) = coefficients_in::<F>(rec, n);
    jacobi_from_coefficients(&a, &b)
}

/// Builds the order-`n` Jacobi matrix of `rec`.
pub fn jacobi_matrix(rec: &OrthoRecurrence, n: usize) -> Result<JacobiMatrix, SpectralError> {
    jacobi_matrix_in(rec, n)
}

/// Discrete probability measure on finitely many nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureMeasure<F = f64> {
    pub nodes: Vec<F>,
    pub weights: Vec<F>,
}

impl<F: Real> QuadratureMeasure<F> {
    pub fn point_mass(x: F) -> Self {
        Self {
            nodes: vec![x],
            weights: vec![F::one()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(F) -> F) -> F {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(F::zero(), |acc, (x, w)| acc + *w * f(*x))
    }

    pub fn mean(&self) -> F {
        self.integrate(|x| x)
    }

    pub fn variance(&self) -> F {
        let m = self.mean();
        self.integrate(|x| (x - m) * (x - m))
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: F) -> Option<usize> {
        (0..self.len()).min_by(|&i, &j| {
            let (di, dj) = ((self.nodes[i] - x).abs(), (self.nodes[j] - x).abs());
            di.partial_cmp(&dj).unwrap_or(std::cmp::Ordering::Equal)
        })
    }

    /// The same measure rounded to `f64`.
    pub fn to_f64(&self) -> QuadratureMeasure {
        QuadratureMeasure {
            nodes: self.nodes.iter().map(|v| v.lower()).collect(),
            weights: self.weights.iter().map(|v| v.lower()).collect(),
        }
    }
}

impl QuadratureMeasure {
    /// `node,weight` lines with round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,weight\n");
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            out.push_str(&format!("{x:.16e},{w:.16e}\n"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("finite measure serializes")
    }
}

/// Eigenvalues and first eigenvector components of a symmetric tridiagonal
/// matrix by implicit QL with Wilkinson-type shifts.
///
/// On return `d` holds the eigenvalues (unsorted) and `z0[i]` the first
/// component of the eigenvector for `d[i]`. Only that row of the eigenvector
/// matrix is accumulated, which keeps the cost quadratic in the order.
fn ql_first_row<F: Real>(d: &mut [F], sub: &[F], z0: &mut [F]) -> bool {
    let n = d.len();
    let (zero, one, two) = (F::zero(), F::one(), F::lift(2.0));
    let mut e = vec![zero; n];
    e[..n - 1].copy_from_slice(sub);
    z0.iter_mut().for_each(|v| *v = zero);
    z0[0] = one;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= F::unit_roundoff() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return false;
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = (g * g + one).sqrt();
            let signed = if g < zero { -r } else { r };
            g = d[m] - d[l] + e[l] / (g + signed);
            let (mut s, mut c, mut p) = (one, one, zero);
            let mut early = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r == zero {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = zero;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z0[i + 1];
                z0[i + 1] = s * z0[i] + c * zf;
                z0[i] = c * z0[i] - s * zf;
            }
            if early {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = zero;
        }
    }
    true
}

/// Gauss rule of a Jacobi matrix: eigenvalues as nodes, squared first
/// eigenvector components as weights.
pub fn gauss_rule<F: Real>(jm: &JacobiMatrix<F>) -> Result<QuadratureMeasure<F>, SpectralError> {
    let n = jm.order();
    if n == 1 {
        return Ok(QuadratureMeasure::point_mass(jm.diag[0]));
    }
    let mut d = jm.diag.clone();
    let mut z0 = vec![F::zero(); n];
    if !ql_first_row(&mut d, &jm.subdiag, &mut z0) {
        return Err(SpectralError::EigenFailure { order: n });
    }
    let mut pairs: Vec<(F, F)> = d.into_iter().zip(z0.into_iter().map(|z| z * z)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut nodes: Vec<F> = Vec::with_capacity(n);
    let mut weights: Vec<F> = Vec::with_capacity(n);
    for (x, w) in pairs {
        match nodes.last() {
            // Coincident eigenvalues only arise from rounding; merge them.
            Some(&last) if x <= last => {
                let lw = weights.last_mut().expect("paired");
                *lw = *lw + w;
            }
            _ => {
                nodes.push(x);
                weights.push(w);
            }
        }
    }
    let total = weights.iter().fold(F::zero(), |a, w| a + *w);
    weights.iter_mut().for_each(|w| *w = w.max(F::zero()) / total);
    Ok(QuadratureMeasure { nodes, weights })
}

/// Gauss quadrature for the orthogonality measure of `rec`.
pub fn quadrature(rec: &OrthoRecurrence, n: usize) -> Result<QuadratureMeasure, SpectralError> {
    gauss_rule(&jacobi_matrix(rec, n)?)
}

fn spread(params: &HarnessParams) -> f64 {
    params.eta * params.theta + 1.0 - params.q
}

/// Endpoints of the absolutely continuous part of the marginal law at `t`.
///
/// At `t = 0` the law is the point mass at `0`, reported as `(0, 0)`.
pub fn support_interval(t: f64, params: &HarnessParams) -> Result<(f64, f64), SpectralError> {
    check_q(params)?;
    if t == 0.0 {
        return Ok((0.0, 0.0));
    }
    let w = spread(params);
    if w == 0.0 {
        return Err(SpectralError::DegenerateAC);
    }
    let HarnessParams { eta, theta, q } = *params;
    let centre = theta + t * eta;
    let half = 2.0 * t.sqrt() * w.max(0.0).sqrt();
    Ok(((centre - half) / (1.0 - q), (centre + half) / (1.0 - q)))
}

/// Which family of atoms a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtomSource {
    ThetaSide,
    EtaSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub x: f64,
    pub k: u32,
    pub source: AtomSource,
}

/// Points carrying the discrete part of the marginal law at `t > 0`.
///
/// Each side is listed in increasing `k` and capped at [`MAX_ATOMS`].
pub fn discrete_atoms(t: f64, params: &HarnessParams) -> Vec<Atom> {
    let HarnessParams { eta, theta, q } = *params;
    let w = spread(params);
    let mut out = Vec::new();
    if t <= 0.0 || q.abs() >= 1.0 {
        return out;
    }
    let drift = t * eta + theta;
    let mut qk = 1.0;
    for k in 0..MAX_ATOMS as u32 {
        if k > 0 && q == 0.0 {
            break;
        }
        if !(t * w < qk * qk * theta * theta) {
            break;
        }
        let x = -(theta * qk + t * w / (theta * qk) - drift) / (1.0 - q);
        out.push(Atom { x, k, source: AtomSource::ThetaSide });
        qk *= q;
    }
    let mut qk = 1.0;
    for k in 0..MAX_ATOMS as u32 {
        if k > 0 && q == 0.0 {
            break;
        }
        if !(t * eta * eta * qk * qk > w) {
            break;
        }
        let x = -(t * eta * qk + w / (eta * qk) - drift) / (1.0 - q);
        out.push(Atom { x, k, source: AtomSource::EtaSide });
        qk *= q;
    }
    out
}

/// Membership of `x` in the set of states from which transitions out of
/// time `t` exist, tested through `B_1, ..., B_{n_max}` at `u = t + 1`.
///
/// The partial products are scanned by sign: a coefficient within
/// [`TOL_CLAMP`] of zero makes every later product zero, so the scan stops
/// there with a positive answer.
pub fn in_support_u(x: f64, t: f64, params: &HarnessParams, n_max: usize) -> bool {
    in_support_u_in(x, t, params, n_max)
}

/// [`in_support_u`] in precision `F`.
pub fn in_support_u_in<F: Real>(x: F, t: F, params: &HarnessParams, n_max: usize) -> bool {
    let (_, b) = conditional_coefficients(x, t + F::one(), t, params, n_max + 1);
    let tol = F::lift(TOL_CLAMP);
    for bk in &b[1..] {
        if bk.abs() <= tol {
            return true;
        }
        if *bk < F::zero() || !bk.is_finite() {
            return false;
        }
    }
    true
}
