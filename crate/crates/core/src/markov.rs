//! Transition kernels of the process for `|q| < 1`, the martingale,
//! Chapman–Kolmogorov and harness-moment checks, and path sampling.
//!
//! Kernels are Gauss rules of the conditional polynomial family. Where a
//! check needs a polynomial integral against a kernel at a node of another
//! kernel, the integral is taken through the Jacobi matrix as
//! `(f(J))_{00}`; for the Gauss rule of `J` this equals `Σ w_i f(x_i)`
//! exactly, without a second eigensolve.

use std::collections::HashMap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::polynomials::{eval_p_all, recurrence_for, Family, HarnessParams};
use crate::spectral::{
    conditional_coefficients, gauss_rule, in_support_u_in, jacobi_from_coefficients, jacobi_matrix_in, DoubleDouble,
    JacobiMatrix, QuadratureMeasure, Real, SpectralError, DEFAULT_ORDER,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarkovError {
    #[error("state {x} at time {time} is outside U_t")]
    OutsideSupport { x: f64, time: f64 },
    #[error("invalid times: {0}")]
    InvalidTimes(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// How a polynomial integral against an inner kernel is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerRule {
    /// `(f(J))_{00}` from the Jacobi matrix.
    Matrix,
    /// Explicit Gauss nodes and weights.
    Eigen,
}

/// Transition laws `P_{s,t}(x, ·)` discretized at `order` nodes.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    params: HarnessParams,
    order: usize,
    precision: Precision,
}

fn validate_pair(s: f64, t: f64) -> Result<(), MarkovError> {
    if !(s >= 0.0 && s < t && t.is_finite()) {
        return Err(MarkovError::InvalidTimes(format!("need 0 <= s < t, got s={s}, t={t}")));
    }
    Ok(())
}

fn validate_triple(s: f64, t: f64, u: f64) -> Result<(), MarkovError> {
    if !(s >= 0.0 && s < t && t < u && u.is_finite()) {
        return Err(MarkovError::InvalidTimes(format!(
            "need 0 <= s < t < u, got s={s}, t={t}, u={u}"
        )));
    }
    Ok(())
}

/// Max over `n = 1..=n_max` of `|lhs_n - rhs_n|`.
fn max_gap<F: Real>(lhs: &[F], rhs: &[F], n_max: usize) -> f64 {
    (1..=n_max).map(|n| (lhs[n] - rhs[n]).abs().lower()).fold(0.0, f64::max)
}

/// Table of the weak-form harness residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnessTable {
    pub rows: Vec<HarnessRow>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarnessRow {
    pub a: u32,
    pub b: u32,
    /// `E[X_s^a X_u^b X_t] - E[X_s^a X_u^b L]`.
    pub mean_residual: f64,
    /// `E[X_s^a X_u^b X_t^2] - E[X_s^a X_u^b (V + L^2)]`.
    pub var_residual: f64,
}

/// Arithmetic used by the numeric checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    F64,
    /// Double-double (about 32 significant digits).
    DoubleDouble,
    /// `f64`, repeated in double-double when a residual exceeds
    /// [`ESCALATE_ABOVE`].
    #[default]
    Auto,
}

/// Residual above which [`Precision::Auto`] recomputes in double-double.
pub const ESCALATE_ABOVE: f64 = 1e-10;

fn needs_escalation(r: f64) -> bool {
    !(r <= ESCALATE_ABOVE)
}

fn needs_escalation_abs(r: f64) -> bool {
    needs_escalation(r.abs())
}

impl TransitionKernel {
    pub fn new(params: HarnessParams, order: usize) -> Self {
        Self {
            params,
            order,
            precision: Precision::default(),
        }
    }

    pub fn with_default_order(params: HarnessParams) -> Self {
        Self::new(params, DEFAULT_ORDER)
    }

    /// Sets the arithmetic of the `check_*` methods. Laws returned by
    /// [`Self::marginal`] and [`Self::kernel`] are always `f64`.
    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn params(&self) -> &HarnessParams {
        &self.params
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    fn lifted<F: Real>(&self) -> HarnessParams<F> {
        HarnessParams::new_unchecked(F::lift(self.params.eta), F::lift(self.params.theta), F::lift(self.params.q))
    }

    fn marginal_in<F: Real>(&self, t: f64) -> Result<QuadratureMeasure<F>, MarkovError> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(MarkovError::InvalidTimes(format!("need t >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(QuadratureMeasure::point_mass(F::zero()));
        }
        let rec = recurrence_for(Family::Martingale { t }, &self.params);
        Ok(gauss_rule(&jacobi_matrix_in::<F>(&rec, self.order)?)?)
    }

    /// Law of `X_t`; `δ_0` at `t = 0`.
    pub fn marginal(&self, t: f64) -> Result<QuadratureMeasure, MarkovError> {
        self.marginal_in(t)
    }

    fn kernel_matrix_in<F: Real>(&self, s: f64, t: f64, x: F) -> Result<JacobiMatrix<F>, MarkovError> {
        validate_pair(s, t)?;
        if self.params.q.abs() >= 1.0 {
            return Err(SpectralError::UnsupportedQ(self.params.q).into());
        }
        if !in_support_u_in(x, F::lift(s), &self.params, self.order) {
            return Err(MarkovError::OutsideSupport { x: x.lower(), time: s });
        }
        let (a, b) = conditional_coefficients(x, F::lift(t), F::lift(s), &self.params, self.order);
        Ok(jacobi_from_coefficients(&a, &b)?)
    }

    /// Jacobi matrix of `P_{s,t}(x, ·)` after checking `x ∈ U_s`.
    pub fn kernel_matrix(&self, s: f64, t: f64, x: f64) -> Result<JacobiMatrix, MarkovError> {
        self.kernel_matrix_in(s, t, x)
    }

    fn kernel_in<F: Real>(&self, s: f64, t: f64, x: F) -> Result<QuadratureMeasure<F>, MarkovError> {
        Ok(gauss_rule(&self.kernel_matrix_in(s, t, x)?)?)
    }

    /// `P_{s,t}(x, ·)` as a Gauss rule.
    pub fn kernel(&self, s: f64, t: f64, x: f64) -> Result<QuadratureMeasure, MarkovError> {
        self.kernel_in(s, t, x)
    }

    fn p_integrals<F: Real>(&self, measure: &QuadratureMeasure<F>, u: f64, n_max: usize) -> Vec<F> {
        let params = self.lifted::<F>();
        let u = F::lift(u);
        let mut out = vec![F::zero(); n_max + 1];
        for (z, w) in measure.nodes.iter().zip(&measure.weights) {
            for (acc, p) in out.iter_mut().zip(eval_p_all(n_max as u32, z, &u, &params)) {
                *acc = *acc + *w * p;
            }
        }
        out
    }

    fn check_n_max(&self, n_max: usize) -> Result<(), MarkovError> {
        if n_max == 0 || 4 * n_max > self.order {
            return Err(MarkovError::InvalidArgument(format!(
                "need 1 <= n_max <= N/4, got n_max={n_max}, N={}",
                self.order
            )));
        }
        Ok(())
    }

    /// Martingale residual and, when `ck` is given, the composed-versus-direct
    /// residual through the intermediate time, sharing the direct kernel.
    fn residuals_in<F: Real>(
        &self,
        s: f64,
        u: f64,
        x: f64,
        n_max: usize,
        ck: Option<(f64, InnerRule)>,
    ) -> Result<(f64, Option<f64>), MarkovError> {
        let xf = F::lift(x);
        let direct = self.p_integrals(&self.kernel_in(s, u, xf)?, u, n_max);
        let start = eval_p_all(n_max as u32, &xf, &F::lift(s), &self.lifted::<F>());
        let mart = max_gap(&direct, &start, n_max);
        let Some((t, rule)) = ck else {
            return Ok((mart, None));
        };
        let outer = self.kernel_in(s, t, xf)?;
        let (pa, pb) = conditional_coefficients(F::zero(), F::lift(u), F::zero(), &self.params, n_max + 1);
        let mut composed = vec![F::zero(); n_max + 1];
        for (y, w) in outer.nodes.iter().zip(&outer.weights) {
            let inner = match rule {
                InnerRule::Matrix => self.kernel_matrix_in(t, u, *y)?.integrate_monic(n_max, &pa, &pb),
                InnerRule::Eigen => self.p_integrals(&self.kernel_in(t, u, *y)?, u, n_max),
            };
            for (acc, v) in composed.iter_mut().zip(inner) {
                *acc = *acc + *w * v;
            }
        }
        Ok((mart, Some(max_gap(&composed, &direct, n_max))))
    }

    fn residuals(
        &self,
        s: f64,
        u: f64,
        x: f64,
        n_max: usize,
        ck: Option<(f64, InnerRule)>,
    ) -> Result<(f64, Option<f64>), MarkovError> {
        self.check_n_max(n_max)?;
        match self.precision {
            Precision::F64 => self.residuals_in::<f64>(s, u, x, n_max, ck),
            Precision::DoubleDouble => self.residuals_in::<DoubleDouble>(s, u, x, n_max, ck),
            Precision::Auto => {
                let r = self.residuals_in::<f64>(s, u, x, n_max, ck)?;
                if needs_escalation(r.0) || r.1.is_some_and(needs_escalation) {
                    self.residuals_in::<DoubleDouble>(s, u, x, n_max, ck)
                } else {
                    Ok(r)
                }
            }
        }
    }

    /// `max_n |∫ p_n(z; u) P_{s,u}(x, dz) - p_n(x; s)|` for `1 ≤ n ≤ n_max`.
    pub fn check_martingale(&self, s: f64, u: f64, x: f64, n_max: usize) -> Result<f64, MarkovError> {
        validate_pair(s, u)?;
        Ok(self.residuals(s, u, x, n_max, None)?.0)
    }

    /// Composed-versus-direct comparison of `P_{s,u}(x, ·)` against the
    /// test functions `p_n(·; u)`, `1 ≤ n ≤ n_max`.
    pub fn check_ck(&self, s: f64, t: f64, u: f64, x: f64, n_max: usize) -> Result<f64, MarkovError> {
        self.check_ck_with(s, t, u, x, n_max, InnerRule::Matrix)
    }

    pub fn check_ck_with(
        &self,
        s: f64,
        t: f64,
        u: f64,
        x: f64,
        n_max: usize,
        rule: InnerRule,
    ) -> Result<f64, MarkovError> {
        validate_triple(s, t, u)?;
        Ok(self.residuals(s, u, x, n_max, Some((t, rule)))?.1.expect("requested"))
    }

    /// `(check_martingale(s, u, ..), check_ck(s, t, u, ..))` computed together.
    pub fn check_martingale_ck(&self, s: f64, t: f64, u: f64, x: f64, n_max: usize) -> Result<(f64, f64), MarkovError> {
        validate_triple(s, t, u)?;
        let (m, c) = self.residuals(s, u, x, n_max, Some((t, InnerRule::Matrix)))?;
        Ok((m, c.expect("requested")))
    }

    /// Weak-form check of the two-sided conditional mean and variance on
    /// the joint law of `(X_s, X_t, X_u)`.
    pub fn check_harness_moments(
        &self,
        s: f64,
        t: f64,
        u: f64,
        a_max: u32,
        b_max: u32,
    ) -> Result<HarnessTable, MarkovError> {
        self.harness_table(s, t, u, a_max, b_max, self.params.q)
    }

    /// As [`Self::check_harness_moments`], with `q_var` in place of `q` in the
    /// conditional-variance formula only.
    fn harness_table(
        &self,
        s: f64,
        t: f64,
        u: f64,
        a_max: u32,
        b_max: u32,
        q_var: f64,
    ) -> Result<HarnessTable, MarkovError> {
        validate_triple(s, t, u)?;
        if a_max > 3 || b_max > 3 {
            return Err(MarkovError::InvalidArgument("a_max and b_max must be at most 3".into()));
        }
        let dd = || self.harness_in::<DoubleDouble>(s, t, u, a_max, b_max, q_var);
        let (mean, var) = match self.precision {
            Precision::F64 => self.harness_in::<f64>(s, t, u, a_max, b_max, q_var)?,
            Precision::DoubleDouble => dd()?,
            Precision::Auto => {
                let r = self.harness_in::<f64>(s, t, u, a_max, b_max, q_var)?;
                if r.0.iter().chain(&r.1).copied().any(needs_escalation_abs) {
                    dd()?
                } else {
                    r
                }
            }
        };
        let nb = b_max as usize + 1;
        let mut rows = Vec::with_capacity(mean.len());
        let mut max_residual: f64 = 0.0;
        for (i, (m, v)) in mean.iter().zip(&var).enumerate() {
            let row = HarnessRow {
                a: (i / nb) as u32,
                b: (i % nb) as u32,
                mean_residual: *m,
                var_residual: *v,
            };
            max_residual = max_residual.max(m.abs()).max(v.abs());
            rows.push(row);
        }
        Ok(HarnessTable { rows, max_residual })
    }

    #[allow(clippy::type_complexity)]
    fn harness_in<F: Real>(
        &self,
        s: f64,
        t: f64,
        u: f64,
        a_max: u32,
        b_max: u32,
        q_var: f64,
    ) -> Result<(Vec<f64>, Vec<f64>), MarkovError> {
        let l = F::lift;
        let (eta, theta, q) = (l(self.params.eta), l(self.params.theta), l(q_var));
        let (sf, tf, uf) = (l(s), l(t), l(u));
        let one = F::one();
        let d = uf - sf;
        let scale = (uf - tf) * (tf - sf) / (uf - q * sf);
        let na = a_max as usize + 1;
        let nb = b_max as usize + 1;
        let mut mean = vec![F::zero(); na * nb];
        let mut var = vec![F::zero(); na * nb];
        let top = b_max as usize + 2;
        let marginal = self.marginal_in::<F>(s)?;
        for (x, wx) in marginal.nodes.iter().zip(&marginal.weights) {
            let x = *x;
            // L = l0 + l1 z, V + L^2 = c0 + c1 z + c2 z^2 with z = X_u.
            let l0 = (uf - tf) * x / d;
            let l1 = (tf - sf) / d;
            let v0 = scale * (one + eta * uf * x / d - theta * x / d + (one - q) * uf * x * x / (d * d));
            let v1 = scale * (-eta * sf / d + theta / d - (one - q) * (uf * x + sf * x) / (d * d));
            let v2 = scale * ((one - q) * sf / (d * d));
            let c = [v0 + l0 * l0, v1 + l(2.0) * l0 * l1, v2 + l1 * l1];
            let mid = self.kernel_in(s, t, x)?;
            // Accumulators of conditional moments given X_s = x.
            let mut m_t = vec![F::zero(); nb];
            let mut m_tt = vec![F::zero(); nb];
            let mut m_l = vec![F::zero(); nb];
            let mut m_c = vec![F::zero(); nb];
            for (y, wy) in mid.nodes.iter().zip(&mid.weights) {
                let (y, wy) = (*y, *wy);
                let mom = self.kernel_matrix_in(t, u, y)?.moments(top);
                for b in 0..nb {
                    m_t[b] = m_t[b] + wy * y * mom[b];
                    m_tt[b] = m_tt[b] + wy * y * y * mom[b];
                    m_l[b] = m_l[b] + wy * (l0 * mom[b] + l1 * mom[b + 1]);
                    m_c[b] = m_c[b] + wy * (c[0] * mom[b] + c[1] * mom[b + 1] + c[2] * mom[b + 2]);
                }
            }
            let mut xa = one;
            for a in 0..na {
                for b in 0..nb {
                    mean[a * nb + b] = mean[a * nb + b] + *wx * xa * (m_t[b] - m_l[b]);
                    var[a * nb + b] = var[a * nb + b] + *wx * xa * (m_tt[b] - m_c[b]);
                }
                xa = xa * x;
            }
        }
        let lower = |v: Vec<F>| v.into_iter().map(|x| x.lower()).collect();
        Ok((lower(mean), lower(var)))
    }
}

/// `P_{0,t}` law, as a free function.
pub fn marginal(t: f64, order: usize, params: &HarnessParams) -> Result<QuadratureMeasure, MarkovError> {
    TransitionKernel::new(params.clone(), order).marginal(t)
}

/// `P_{s,t}(x, ·)`, as a free function.
pub fn kernel(s: f64, t: f64, x: f64, order: usize, params: &HarnessParams) -> Result<QuadratureMeasure, MarkovError> {
    TransitionKernel::new(params.clone(), order).kernel(s, t, x)
}

/// One sampled path on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl Trajectory {
    /// `t,x` lines with round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x\n");
        for (t, x) in self.grid.iter().zip(&self.values) {
            out.push_str(&format!("{t:.16e},{x:.16e}\n"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }
}

/// Validates a sampling grid: ascending, finite, starting at 0.
pub fn validate_grid(grid: &[f64]) -> Result<(), MarkovError> {
    match grid.first() {
        Some(&t0) if t0 == 0.0 => {}
        _ => return Err(MarkovError::InvalidTimes("grid must start at 0".into())),
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MarkovError::InvalidTimes("grid must be strictly ascending".into()));
    }
    Ok(())
}

/// RNG for path `index` under `master_seed`; independent of how paths are
/// distributed over workers.
pub fn path_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Index drawn by inverse CDF on `weights` with uniform `v ∈ [0, 1)`.
pub fn inverse_cdf(weights: &[f64], v: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if v < acc {
            return i;
        }
    }
    weights.len() - 1
}

type KernelKey = (u64, u64, u64);

/// Path sampler that caches kernels by `(s, t, x)`, so repeated states on a
/// fixed grid cost one eigensolve each.
pub struct PathSampler {
    kernel: TransitionKernel,
    cache: HashMap<KernelKey, Rc<QuadratureMeasure>>,
}

impl PathSampler {
    pub fn new(kernel: TransitionKernel) -> Self {
        Self {
            kernel,
            cache: HashMap::new(),
        }
    }

    fn step_law(&mut self, s: f64, t: f64, x: f64) -> Result<Rc<QuadratureMeasure>, MarkovError> {
        let key = (s.to_bits(), t.to_bits(), x.to_bits());
        if let Some(m) = self.cache.get(&key) {
            return Ok(Rc::clone(m));
        }
        let m = Rc::new(self.kernel.kernel(s, t, x)?);
        self.cache.insert(key, Rc::clone(&m));
        Ok(m)
    }

    /// Draws one path with the given RNG.
    pub fn sample_with<R: Rng>(&mut self, grid: &[f64], rng: &mut R, seed: u64) -> Result<Trajectory, MarkovError> {
        validate_grid(grid)?;
        let mut values = Vec::with_capacity(grid.len());
        let mut x = 0.0;
        values.push(x);
        for w in grid.windows(2) {
            let law = self.step_law(w[0], w[1], x)?;
            x = law.nodes[inverse_cdf(&law.weights, rng.random::<f64>())];
            values.push(x);
        }
        Ok(Trajectory {
            grid: grid.to_vec(),
            values,
            seed,
        })
    }

    pub fn sample_path(&mut self, grid: &[f64], seed: u64) -> Result<Trajectory, MarkovError> {
        self.sample_with(grid, &mut path_rng(seed, 0), seed)
    }

    /// `n_paths` paths; path `i` uses stream `i` of the master seed.
    pub fn sample_paths(&mut self, grid: &[f64], n_paths: usize, master_seed: u64) -> Result<Vec<Trajectory>, MarkovError> {
        (0..n_paths)
            .map(|i| self.sample_with(grid, &mut path_rng(master_seed, i as u64), master_seed))
            .collect()
    }
}

/// One path from a fresh sampler.
pub fn sample_path(grid: &[f64], seed: u64, order: usize, params: &HarnessParams) -> Result<Trajectory, MarkovError> {
    PathSampler::new(TransitionKernel::new(params.clone(), order)).sample_path(grid, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomials::coeff_b;

    fn tk(eta: f64, theta: f64, q: f64, order: usize) -> TransitionKernel {
        TransitionKernel::new(HarnessParams::new(eta, theta, q).unwrap(), order)
    }

    #[test]
    fn marginal_at_zero_is_point_mass() {
        let m = tk(0.4, 0.3, 0.5, 50).marginal(0.0).unwrap();
        assert_eq!((m.nodes.clone(), m.weights.clone()), (vec![0.0], vec![1.0]));
    }

    #[test]
    fn kernel_from_origin_is_marginal() {
        let k = tk(0.4, 0.3, 0.5, 60);
        let a = k.kernel(0.0, 1.2, 0.0).unwrap();
        let b = k.marginal(1.2).unwrap();
        for (x, y) in a.nodes.iter().zip(&b.nodes) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_mean_and_variance() {
        let k = tk(0.4, 0.3, 0.5, 80);
        for x in [-0.5, 0.2, 1.7] {
            let m = k.kernel(0.5, 1.5, x).unwrap();
            assert!((m.mean() - x).abs() < 1e-10);
            let var = m.integrate(|y| (y - x) * (y - x));
            assert!((var - (1.0) * (1.0 + 0.4 * x)).abs() < 1e-9);
            assert!((var - coeff_b(1, &x, &1.5, &0.5, k.params())).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_support_is_reported() {
        let k = tk(1.0, 0.0, 0.0, 40);
        assert_eq!(
            k.kernel(1.0, 2.0, -3.0),
            Err(MarkovError::OutsideSupport { x: -3.0, time: 1.0 })
        );
    }

    #[test]
    fn equal_times_rejected() {
        let k = tk(0.4, 0.3, 0.5, 40);
        assert!(matches!(k.kernel(1.0, 1.0, 0.0), Err(MarkovError::InvalidTimes(_))));
        assert!(matches!(k.check_ck(0.5, 0.5, 1.0, 0.0, 4), Err(MarkovError::InvalidTimes(_))));
        assert!(matches!(k.check_martingale(0.5, 1.0, 0.0, 11), Err(MarkovError::InvalidArgument(_))));
    }

    #[test]
    fn martingale_from_origin() {
        let k = tk(0.4, 0.3, 0.5, 200);
        assert!(k.check_martingale(0.0, 1.0, 0.0, 8).unwrap() <= 1e-9);
    }

    #[test]
    fn martingale_reference_case() {
        let k = tk(0.4, 0.3, 0.5, 200);
        let nodes = k.marginal(0.5).unwrap().nodes;
        for x in nodes.iter().step_by(17) {
            assert!(k.check_martingale(0.5, 1.0, *x, 8).unwrap() <= 1e-8, "x={x}");
        }
    }

    #[test]
    fn double_double_clears_the_f64_floor() {
        // Upper nodes of π_{0.5} at q = 0.9, where |p_8| ~ 1e8.
        let base = tk(0.4, 0.3, 0.9, 200);
        let x = *base.marginal(0.5).unwrap().nodes.last().unwrap();
        let f64_run = base.clone().with_precision(Precision::F64);
        let dd_run = base.clone().with_precision(Precision::DoubleDouble);
        assert!(f64_run.check_martingale(0.5, 1.0, x, 8).unwrap() > 1e-9);
        assert!(dd_run.check_martingale(0.5, 1.0, x, 8).unwrap() < 1e-18);
        let (m, c) = base.check_martingale_ck(0.5, 1.0, 1.5, x, 8).unwrap();
        assert!(m <= ESCALATE_ABOVE && c <= ESCALATE_ABOVE, "{m} {c}");
    }

    #[test]
    fn ck_inner_rules_agree() {
        let k = tk(0.4, 0.3, 0.5, 40);
        for x in [0.0, 0.6] {
            let a = k.check_ck_with(0.5, 1.0, 1.5, x, 6, InnerRule::Matrix).unwrap();
            let b = k.check_ck_with(0.5, 1.0, 1.5, x, 6, InnerRule::Eigen).unwrap();
            assert!(a <= 2e-8 && b <= 2e-8 && (a - b).abs() < 1e-8, "{a} {b}");
        }
    }

    #[test]
    fn harness_reference_case() {
        let k = tk(0.4, 0.3, 0.5, 200);
        let table = k.check_harness_moments(0.5, 1.0, 1.5, 2, 2).unwrap();
        assert_eq!(table.rows.len(), 9);
        assert!(table.max_residual <= 1e-6, "{table:?}");
    }

    #[test]
    fn harness_detects_a_wrong_variance() {
        let k = tk(0.4, 0.3, 0.5, 60);
        let good = k.harness_table(0.5, 1.0, 1.5, 1, 1, 0.5).unwrap();
        assert!(good.max_residual < 1e-8);
        let bad = k.harness_table(0.5, 1.0, 1.5, 1, 1, 0.6).unwrap();
        assert!(bad.max_residual > 1e-3);
        assert!(bad.rows.iter().all(|r| r.mean_residual.abs() < 1e-8));
    }

    #[test]
    fn sampler_is_reproducible() {
        let k = tk(0.4, 0.3, 0.5, 50);
        let grid = [0.0, 0.5, 1.0, 2.0];
        let mut a = PathSampler::new(k.clone());
        let mut b = PathSampler::new(k);
        let pa = a.sample_paths(&grid, 20, 9).unwrap();
        let pb = b.sample_paths(&grid, 20, 9).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(pa[0].values[0], 0.0);
        assert_ne!(pa[0].values, pa[1].values);
    }

    #[test]
    fn trivial_grid() {
        let t = sample_path(&[0.0], 1, 20, &HarnessParams::new(0.4, 0.3, 0.5).unwrap()).unwrap();
        assert_eq!(t.values, vec![0.0]);
        assert!(t.to_csv().starts_with("t,x\n"));
        assert!(validate_grid(&[0.5, 1.0]).is_err());
        assert!(validate_grid(&[0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn inverse_cdf_edges() {
        assert_eq!(inverse_cdf(&[0.25, 0.75], 0.0), 0);
        assert_eq!(inverse_cdf(&[0.25, 0.75], 0.25), 1);
        assert_eq!(inverse_cdf(&[0.25, 0.75], 0.999_999_999), 1);
    }
}
