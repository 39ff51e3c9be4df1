//! The `q = -1` process: a two-state Markov chain on the roots of `p_2(·; t)`.

use rand::Rng;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::markov::{path_rng, validate_grid, MarkovError, Trajectory};
use crate::polynomials::HarnessParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Qm1Error {
    #[error("q = -1 module needs q = -1 and 1 + ηθ ≥ 0 (got η={eta}, θ={theta}, q={q})")]
    InvalidParams { eta: f64, theta: f64, q: f64 },
    #[error("invalid times: {0}")]
    InvalidTimes(String),
    #[error("conditioning event X_s = a_{alpha}(s), X_u = a_{gamma}(u) has probability 0")]
    DegenerateConditioning { alpha: char, gamma: char },
    #[error(transparent)]
    Grid(#[from] MarkovError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Qm1Params {
    pub eta: f64,
    pub theta: f64,
}

impl Qm1Params {
    pub fn new(eta: f64, theta: f64) -> Result<Self, Qm1Error> {
        if eta.is_finite() && theta.is_finite() && 1.0 + eta * theta >= 0.0 {
            Ok(Self { eta, theta })
        } else {
            Err(Qm1Error::InvalidParams { eta, theta, q: -1.0 })
        }
    }

    pub fn from_harness(p: &HarnessParams) -> Result<Self, Qm1Error> {
        if p.q != -1.0 {
            return Err(Qm1Error::InvalidParams {
                eta: p.eta,
                theta: p.theta,
                q: p.q,
            });
        }
        Self::new(p.eta, p.theta)
    }

    /// `tη + θ`.
    fn drift(&self, t: f64) -> f64 {
        t * self.eta + self.theta
    }

    /// `√(4t + (tη + θ)²)`, the gap `a_+(t) - a_-(t)`.
    fn root(&self, t: f64) -> f64 {
        (4.0 * t + self.drift(t).powi(2)).sqrt()
    }
}

/// Law of `X_t`: two atoms with their probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPointLaw {
    pub a_minus: f64,
    pub a_plus: f64,
    pub p_minus: f64,
    pub p_plus: f64,
}

impl TwoPointLaw {
    pub fn atoms(&self) -> [f64; 2] {
        [self.a_minus, self.a_plus]
    }

    pub fn probs(&self) -> [f64; 2] {
        [self.p_minus, self.p_plus]
    }

    pub fn mean(&self) -> f64 {
        self.a_minus * self.p_minus + self.a_plus * self.p_plus
    }

    pub fn second_moment(&self) -> f64 {
        self.a_minus.powi(2) * self.p_minus + self.a_plus.powi(2) * self.p_plus
    }
}

fn check_time(t: f64) -> Result<(), Qm1Error> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Qm1Error::InvalidTimes(format!("need t > 0, got {t}")))
    }
}

fn check_increasing(times: &[f64]) -> Result<(), Qm1Error> {
    if times.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(Qm1Error::InvalidTimes(format!("times must increase strictly: {times:?}")))
    }
}

/// Atoms `a_±(t)` and probabilities `p_±(t)`, `t > 0`.
pub fn atoms(t: f64, p: &Qm1Params) -> Result<TwoPointLaw, Qm1Error> {
    check_time(t)?;
    let (c, r) = (p.drift(t), p.root(t));
    Ok(TwoPointLaw {
        a_minus: (c - r) / 2.0,
        a_plus: (c + r) / 2.0,
        p_minus: 0.5 + c / (2.0 * r),
        p_plus: 0.5 - c / (2.0 * r),
    })
}

/// Transition probabilities between times `s < t`; index 0 is `-`, 1 is `+`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionMatrix2 {
    pub rows: [[f64; 2]; 2],
}

impl TransitionMatrix2 {
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn compose(&self, other: &Self) -> Self {
        let mut rows = [[0.0; 2]; 2];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..2).map(|k| self.rows[i][k] * other.rows[k][j]).sum();
            }
        }
        Self { rows }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (0..4)
            .map(|i| (self.rows[i / 2][i % 2] - other.rows[i / 2][i % 2]).abs())
            .fold(0.0, f64::max)
    }
}

impl Serialize for TransitionMatrix2 {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let mut st = ser.serialize_struct("TransitionMatrix2", 2)?;
        st.serialize_field("labels", &["-", "+"])?;
        st.serialize_field("rows", &self.rows)?;
        st.end()
    }
}

/// `P_{s,t}`; at `s = 0` both rows are the law of `X_t` (start at `δ_0`).
pub fn transition_matrix(s: f64, t: f64, p: &Qm1Params) -> Result<TransitionMatrix2, Qm1Error> {
    if !(s >= 0.0) {
        return Err(Qm1Error::InvalidTimes(format!("need s >= 0, got {s}")));
    }
    check_increasing(&[s, t])?;
    check_time(t)?;
    if s == 0.0 {
        let law = atoms(t, p)?;
        return Ok(TransitionMatrix2 {
            rows: [law.probs(), law.probs()],
        });
    }
    let (rs, rt) = (p.root(s), p.root(t));
    let de = (s - t) * p.eta;
    let den = 2.0 * rt;
    let pp = (de + rs + rt) / den;
    let mp = (de - rs + rt) / den;
    let pm = (-de - rs + rt) / den;
    let mm = (-de + rs + rt) / den;
    // At 1 + ηθ = 0 the `+` state is absorbing and rounding leaves entries
    // just outside [0, 1].
    let rows = [[mm, mp], [pm, pp]].map(|r| r.map(|v| v.clamp(0.0, 1.0)));
    Ok(TransitionMatrix2 { rows })
}

/// `Q_2(y; x, t, s)` at `q = -1`; vanishes on consecutive atoms.
pub fn q2(y: f64, x: f64, t: f64, s: f64, p: &Qm1Params) -> f64 {
    let q = -1.0;
    y * y + y * ((s * p.eta - x) * (1.0 + q) - t * p.eta - p.theta) + s - t + q * x * x + x * p.theta - q * s * x * p.eta
}

/// `max |P_{s,t} P_{t,u} - P_{s,u}|` entrywise.
pub fn check_ck_exact(s: f64, t: f64, u: f64, p: &Qm1Params) -> Result<f64, Qm1Error> {
    check_increasing(&[s, t, u])?;
    let composed = transition_matrix(s, t, p)?.compose(&transition_matrix(t, u, p)?);
    Ok(composed.max_abs_diff(&transition_matrix(s, u, p)?))
}

/// Residuals of the two-sided conditional mean and variance at one pair of
/// conditioning states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalResidual {
    pub alpha: char,
    pub gamma: char,
    pub mean_residual: f64,
    pub var_residual: f64,
}

/// Right sides of the conditional mean and variance formulas at `q = -1`.
pub fn harness_targets(s: f64, t: f64, u: f64, xs: f64, xu: f64, p: &Qm1Params) -> (f64, f64) {
    let q = -1.0;
    let d = u - s;
    let mean = ((u - t) * xs + (t - s) * xu) / d;
    let scale = (u - t) * (t - s) / (u - q * s);
    let var = scale
        * (1.0 + p.eta * (u * xs - s * xu) / d + p.theta * (xu - xs) / d
            - (1.0 - q) * (xu - xs) * (u * xs - s * xu) / (d * d));
    (mean, var)
}

/// Exact conditional mean and variance of `X_t` given `(X_s, X_u)` on all
/// four state pairs, compared with [`harness_targets`].
pub fn harness_exact_table(s: f64, t: f64, u: f64, p: &Qm1Params) -> Result<Vec<ConditionalResidual>, Qm1Error> {
    check_time(s)?;
    check_increasing(&[s, t, u])?;
    let (ps_t, pt_u, ps_u) = (transition_matrix(s, t, p)?, transition_matrix(t, u, p)?, transition_matrix(s, u, p)?);
    let (ls, lt, lu) = (atoms(s, p)?, atoms(t, p)?, atoms(u, p)?);
    let label = |i: usize| if i == 0 { '-' } else { '+' };
    let mut out = Vec::with_capacity(4);
    for a in 0..2 {
        for g in 0..2 {
            let denom = ps_u.get(a, g);
            if denom == 0.0 {
                return Err(Qm1Error::DegenerateConditioning {
                    alpha: label(a),
                    gamma: label(g),
                });
            }
            let w = [0, 1].map(|b| ps_t.get(a, b) * pt_u.get(b, g) / denom);
            let mean = w[0] * lt.a_minus + w[1] * lt.a_plus;
            let second = w[0] * lt.a_minus.powi(2) + w[1] * lt.a_plus.powi(2);
            let (target_mean, target_var) = harness_targets(s, t, u, ls.atoms()[a], lu.atoms()[g], p);
            out.push(ConditionalResidual {
                alpha: label(a),
                gamma: label(g),
                mean_residual: mean - target_mean,
                var_residual: second - mean * mean - target_var,
            });
        }
    }
    Ok(out)
}

/// Max absolute residual of [`harness_exact_table`].
pub fn check_harness_exact(s: f64, t: f64, u: f64, p: &Qm1Params) -> Result<f64, Qm1Error> {
    Ok(harness_exact_table(s, t, u, p)?
        .iter()
        .map(|r| r.mean_residual.abs().max(r.var_residual.abs()))
        .fold(0.0, f64::max))
}

/// Simulates the two-state chain on a grid starting at 0.
pub fn sample_qm1_with<R: Rng>(grid: &[f64], rng: &mut R, seed: u64, p: &Qm1Params) -> Result<Trajectory, Qm1Error> {
    validate_grid(grid)?;
    let mut values = vec![0.0];
    let mut state = 0;
    for w in grid.windows(2) {
        let m = transition_matrix(w[0], w[1], p)?;
        let v: f64 = rng.random();
        state = usize::from(v >= m.get(state, 0));
        values.push(atoms(w[1], p)?.atoms()[state]);
    }
    Ok(Trajectory {
        grid: grid.to_vec(),
        values,
        seed,
    })
}

pub fn sample_qm1_path(grid: &[f64], seed: u64, p: &Qm1Params) -> Result<Trajectory, Qm1Error> {
    sample_qm1_with(grid, &mut path_rng(seed, 0), seed, p)
}

/// `n_paths` paths; path `i` uses stream `i` of the master seed.
pub fn sample_qm1_paths(grid: &[f64], n_paths: usize, master_seed: u64, p: &Qm1Params) -> Result<Vec<Trajectory>, Qm1Error> {
    (0..n_paths)
        .map(|i| sample_qm1_with(grid, &mut path_rng(master_seed, i as u64), master_seed, p))
        .collect()
}
