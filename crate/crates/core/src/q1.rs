//! The `q = 1` process in closed form: Meixner-type transition laws, their
//! identification, and an exact sampler through the latent `Z` chain.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::Serialize;
use thiserror::Error;

use crate::markov::{path_rng, validate_grid, MarkovError, Trajectory};
use crate::polynomials::HarnessParams;

/// Relative tolerance for regime boundaries (`τ̃ = 0`, `θ̃² = 4τ̃`, integrality).
pub const REGIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Q1Error {
    #[error("q = 1 module needs q = 1 and η, θ > 0 (got η={eta}, θ={theta}, q={q})")]
    InvalidParams { eta: f64, theta: f64, q: f64 },
    #[error("no Meixner regime for θ̃={theta_tilde}, τ̃={tau_tilde}, t̃={t_tilde}")]
    UnidentifiableRegime { theta_tilde: f64, tau_tilde: f64, t_tilde: f64 },
    #[error(transparent)]
    Times(#[from] MarkovError),
}

/// Coefficients `(θ̃, τ̃, t̃)` of the recurrence
/// `y p̃_n = p̃_{n+1} + θ̃ n p̃_n + (t̃ + τ̃(n-1)) n p̃_{n-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeixnerParams {
    pub theta_tilde: f64,
    pub tau_tilde: f64,
    pub t_tilde: f64,
}

impl MeixnerParams {
    pub fn discriminant(&self) -> f64 {
        self.theta_tilde * self.theta_tilde - 4.0 * self.tau_tilde
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Law {
    Poisson { lambda: f64 },
    Gamma { shape: f64, scale: f64 },
    NegativeBinomial { r: f64, p: f64 },
    Binomial { n: u64, p: f64 },
    PointMass,
}

/// The law of `a·Z + c` with `Z` from `family` (`Z = 0` for a point mass).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistributionSpec {
    pub family: Law,
    pub scale: f64,
    pub shift: f64,
}

/// Positive parameters of the `q = 1` process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Q1Params {
    pub eta: f64,
    pub theta: f64,
}

impl Q1Params {
    pub fn new(eta: f64, theta: f64) -> Result<Self, Q1Error> {
        if eta > 0.0 && theta > 0.0 && eta.is_finite() && theta.is_finite() {
            Ok(Self { eta, theta })
        } else {
            Err(Q1Error::InvalidParams { eta, theta, q: 1.0 })
        }
    }

    pub fn from_harness(p: &HarnessParams) -> Result<Self, Q1Error> {
        if p.q != 1.0 {
            return Err(Q1Error::InvalidParams {
                eta: p.eta,
                theta: p.theta,
                q: p.q,
            });
        }
        Self::new(p.eta, p.theta)
    }

    /// The time `θ/η` where the transition laws change type.
    pub fn boundary(&self) -> f64 {
        self.theta / self.eta
    }

    fn side(&self, t: f64) -> Side {
        let b = self.boundary();
        if (t - b).abs() <= 1e-12 * b.max(1.0) {
            Side::At
        } else if t < b {
            Side::Below
        } else {
            Side::Above
        }
    }

    /// `Y_t` as a function of the latent `Z_t`.
    pub fn y_of_z(&self, t: f64, z: f64) -> f64 {
        let (eta, theta) = (self.eta, self.theta);
        match self.side(t) {
            Side::Below => (theta - eta * t) * z - t / theta,
            Side::At => z - 1.0 / eta,
            Side::Above => (eta * t - theta) * z - 1.0 / eta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Below,
    At,
    Above,
}

/// Recurrence coefficients of the law of `Y_t - Y_s` given `Y_s = x`.
pub fn transition_params(s: f64, t: f64, x: f64, p: &Q1Params) -> MeixnerParams {
    let (eta, theta) = (p.eta, p.theta);
    MeixnerParams {
        theta_tilde: t * eta + theta - 2.0 * s * eta,
        tau_tilde: eta * (theta - s * eta) * (t - s),
        t_tilde: (1.0 + eta * x) * (t - s),
    }
}

/// The law with orthogonal polynomials `p̃_n`, as an affine image of a
/// Poisson, gamma, negative binomial or binomial variable.
pub fn identify_meixner(mp: &MeixnerParams) -> Result<DistributionSpec, Q1Error> {
    let MeixnerParams {
        theta_tilde: th,
        tau_tilde: tau,
        t_tilde: tt,
    } = *mp;
    let unidentifiable = Q1Error::UnidentifiableRegime {
        theta_tilde: th,
        tau_tilde: tau,
        t_tilde: tt,
    };
    let scale = (th * th).max(tau.abs()).max(1.0);
    if tt.abs() <= REGIME_TOL * scale.max(tt.abs()) {
        return Ok(DistributionSpec {
            family: Law::PointMass,
            scale: 1.0,
            shift: 0.0,
        });
    }
    let disc = mp.discriminant();
    let spec = if tau.abs() <= REGIME_TOL * scale {
        if th == 0.0 {
            return Err(unidentifiable);
        }
        DistributionSpec {
            family: Law::Poisson { lambda: tt / (th * th) },
            scale: th,
            shift: -tt / th,
        }
    } else if tau > 0.0 && disc.abs() <= REGIME_TOL * scale {
        DistributionSpec {
            family: Law::Gamma {
                shape: tt / tau,
                scale: th.abs() / 2.0,
            },
            scale: th.signum(),
            shift: -2.0 * tt / th,
        }
    } else if tau > 0.0 && disc > 0.0 {
        let root = disc.sqrt();
        let sg = th.signum();
        DistributionSpec {
            family: Law::NegativeBinomial {
                r: tt / tau,
                p: 2.0 * root / (th.abs() + root),
            },
            scale: sg * root,
            shift: -sg * (th.abs() - root) / (2.0 * tau) * tt,
        }
    } else if tau < 0.0 {
        let n = -tt / tau;
        let rounded = n.round();
        if (n - rounded).abs() > REGIME_TOL * rounded.max(1.0) || rounded < 0.0 {
            return Err(unidentifiable);
        }
        let root = disc.sqrt();
        DistributionSpec {
            family: Law::Binomial {
                n: rounded as u64,
                p: 0.5 * (1.0 - th / root),
            },
            scale: root,
            shift: tt / (2.0 * tau) * (root - th),
        }
    } else {
        return Err(unidentifiable);
    };
    Ok(spec)
}

/// One draw of the family variable `Z`.
pub fn sample_law<R: Rng>(law: &Law, rng: &mut R) -> f64 {
    match *law {
        Law::PointMass => 0.0,
        Law::Poisson { lambda } => poisson(lambda, rng),
        Law::Gamma { shape, scale } => Gamma::new(shape, scale).expect("gamma parameters").sample(rng),
        Law::NegativeBinomial { r, p } => negative_binomial(r, p, rng),
        Law::Binomial { n, p } => binomial(n, p, rng),
    }
}

/// One draw of `a·Z + c`.
pub fn sample_affine<R: Rng>(spec: &DistributionSpec, rng: &mut R) -> f64 {
    spec.scale * sample_law(&spec.family, rng) + spec.shift
}

fn poisson<R: Rng>(lambda: f64, rng: &mut R) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    Poisson::new(lambda).expect("poisson rate").sample(rng)
}

/// Gamma–Poisson mixture: `NB(r, p)` counts failures before the `r`-th success.
fn negative_binomial<R: Rng>(r: f64, p: f64, rng: &mut R) -> f64 {
    if p >= 1.0 {
        return 0.0;
    }
    let rate = Gamma::new(r, (1.0 - p) / p).expect("gamma parameters").sample(rng);
    poisson(rate, rng)
}

fn binomial<R: Rng>(n: u64, p: f64, rng: &mut R) -> f64 {
    Binomial::new(n, p.clamp(0.0, 1.0)).expect("binomial parameters").sample(rng) as f64
}

/// Treatment of a step `s < θ/η < t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StraddleMode {
    /// Single negative binomial step.
    Direct,
    /// Gamma step to `θ/η`, then Poisson step.
    #[default]
    ThroughBoundary,
}

/// Exact sampler of the latent chain `(Z_t)` and the process `Y_t`.
#[derive(Debug, Clone)]
pub struct Q1Sampler {
    params: Q1Params,
    mode: StraddleMode,
}

impl Q1Sampler {
    pub fn new(params: Q1Params, mode: StraddleMode) -> Self {
        Self { params, mode }
    }

    pub fn params(&self) -> &Q1Params {
        &self.params
    }

    /// Law of `Z_t` given `Z_s = z` for `s < t` not straddling `θ/η`, or of a
    /// straddling step in one go.
    pub fn z_step_law(&self, s: f64, t: f64, z: f64) -> Law {
        let Q1Params { eta, theta } = self.params;
        let r = 1.0 / (eta * theta) + z;
        match (self.params.side(s), self.params.side(t)) {
            (Side::Below, Side::Below) => Law::NegativeBinomial {
                r,
                p: (theta - eta * t) / (theta - eta * s),
            },
            (Side::Below, Side::At) => Law::Gamma {
                shape: r,
                scale: theta - eta * s,
            },
            (Side::At, Side::Above) => Law::Poisson {
                lambda: z / (eta * t - theta),
            },
            (Side::Above, Side::Above) => {
                assert!(z.fract() == 0.0 && z >= 0.0, "binomial-regime state must be a count, got {z}");
                Law::Binomial {
                    n: z as u64,
                    p: (eta * s - theta) / (eta * t - theta),
                }
            }
            (Side::Below, Side::Above) => Law::NegativeBinomial {
                r,
                p: (eta * t - theta) / (eta * (t - s)),
            },
            _ => unreachable!("step must move forward in time"),
        }
    }

    /// `Z_t` given `Z_s = z`.
    pub fn z_step<R: Rng>(&self, s: f64, t: f64, z: f64, rng: &mut R) -> f64 {
        let (ss, st) = (self.params.side(s), self.params.side(t));
        if ss == Side::Below && st == Side::Above && self.mode == StraddleMode::ThroughBoundary {
            let b = self.params.boundary();
            let mid = self.z_step(s, b, z, rng);
            return self.z_step(b, t, mid, rng);
        }
        let draw = sample_law(&self.z_step_law(s, t, z), rng);
        // Below the boundary the law is of the increment.
        if ss == Side::Below && st == Side::Below {
            z + draw
        } else {
            draw
        }
    }

    pub fn sample_with<R: Rng>(&self, grid: &[f64], rng: &mut R, seed: u64) -> Result<Trajectory, Q1Error> {
        validate_grid(grid)?;
        let mut values = Vec::with_capacity(grid.len());
        values.push(0.0);
        let mut z = 0.0;
        for w in grid.windows(2) {
            z = self.z_step(w[0], w[1], z, rng);
            values.push(self.params.y_of_z(w[1], z));
        }
        Ok(Trajectory {
            grid: grid.to_vec(),
            values,
            seed,
        })
    }

    /// `n_paths` paths; path `i` uses stream `i` of the master seed.
    pub fn sample_paths(&self, grid: &[f64], n_paths: usize, master_seed: u64) -> Result<Vec<Trajectory>, Q1Error> {
        (0..n_paths)
            .map(|i| self.sample_with(grid, &mut path_rng(master_seed, i as u64), master_seed))
            .collect()
    }
}

/// One path of the `q = 1` process.
pub fn sample_q1_path(grid: &[f64], seed: u64, params: &Q1Params, mode: StraddleMode) -> Result<Trajectory, Q1Error> {
    Q1Sampler::new(*params, mode).sample_with(grid, &mut path_rng(seed, 0), seed)
}

/// `E Y_t^k`, `k = 1..=4`, from the recurrence at `s = 0`, `x = 0`.
pub fn exact_moments(t: f64, p: &Q1Params) -> [f64; 4] {
    let m = transition_params(0.0, t, 0.0, p);
    let (th, tau, tt) = (m.theta_tilde, m.tau_tilde, m.t_tilde);
    [0.0, tt, th * tt, 3.0 * tt * tt + (th * th + 2.0 * tau) * tt]
}

/// Sample moment `k` at one time against its exact value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub t: f64,
    pub k: u32,
    pub sample: f64,
    pub exact: f64,
    pub std_err: f64,
    /// `|sample - exact| / std_err`; `0` when both the error and the spread vanish.
    pub z_score: f64,
}

/// Mean and standard error of `values`.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub(crate) fn z_score(sample: f64, exact: f64, se: f64) -> f64 {
    let d = (sample - exact).abs();
    if d == 0.0 {
        0.0
    } else {
        d / se
    }
}

/// First four raw moments of `Y_t` over simulated paths at each grid time.
pub fn check_q1_moments(
    grid: &[f64],
    n_paths: usize,
    seed: u64,
    params: &Q1Params,
    mode: StraddleMode,
) -> Result<Vec<MomentRow>, Q1Error> {
    let paths = Q1Sampler::new(*params, mode).sample_paths(grid, n_paths, seed)?;
    let mut rows = Vec::new();
    for (i, &t) in grid.iter().enumerate() {
        let exact = exact_moments(t, params);
        for k in 1..=4u32 {
            let powers: Vec<f64> = paths.iter().map(|p| p.values[i].powi(k as i32)).collect();
            let (sample, std_err) = mean_and_se(&powers);
            rows.push(MomentRow {
                t,
                k,
                sample,
                exact: exact[k as usize - 1],
                std_err,
                z_score: z_score(sample, exact[k as usize - 1], std_err),
            });
        }
    }
    Ok(rows)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS distance between `Y_t` sampled in one step from `0` and `Y_t` sampled
/// through `mid`, with `n` draws each.
pub fn check_two_step_ks(mid: f64, t: f64, n: usize, seed: u64, params: &Q1Params) -> Result<f64, Q1Error> {
    validate_grid(&[0.0, mid, t])?;
    let direct = Q1Sampler::new(*params, StraddleMode::Direct);
    let one: Vec<f64> = (0..n)
        .map(|i| {
            let z = direct.z_step(0.0, t, 0.0, &mut path_rng(seed, i as u64));
            params.y_of_z(t, z)
        })
        .collect();
    let through = Q1Sampler::new(*params, StraddleMode::ThroughBoundary);
    let two: Vec<f64> = (0..n)
        .map(|i| *through.sample_with(&[0.0, mid, t], &mut path_rng(seed, (n + i) as u64), seed).expect("grid checked").values.last().expect("grid nonempty"))
        .collect();
    Ok(ks_distance(&one, &two))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Cumulants k2..k4 of the standard families, used to rebuild raw
    // moments of a·Z + c.
    fn cumulants(law: &Law) -> [f64; 4] {
        match *law {
            Law::PointMass => [0.0; 4],
            Law::Poisson { lambda } => [lambda; 4],
            Law::Gamma { shape, scale } => [
                shape * scale,
                shape * scale.powi(2),
                2.0 * shape * scale.powi(3),
                6.0 * shape * scale.powi(4),
            ],
            Law::NegativeBinomial { r, p } => {
                let q = 1.0 - p;
                [
                    r * q / p,
                    r * q / p.powi(2),
                    r * q * (1.0 + q) / p.powi(3),
                    r * q * (1.0 + 4.0 * q + q * q) / p.powi(4),
                ]
            }
            Law::Binomial { n, p } => {
                let n = n as f64;
                let v = n * p * (1.0 - p);
                [n * p, v, v * (1.0 - 2.0 * p), v * (1.0 - 6.0 * p * (1.0 - p))]
            }
        }
    }

    fn affine_moments(spec: &DistributionSpec) -> [f64; 4] {
        let k = cumulants(&spec.family);
        let a = spec.scale;
        let mean = a * k[0] + spec.shift;
        let (k2, k3, k4) = (a * a * k[1], a.powi(3) * k[2], a.powi(4) * k[3]);
        [
            mean,
            k2 + mean * mean,
            k3 + 3.0 * k2 * mean + mean.powi(3),
            k4 + 4.0 * k3 * mean + 3.0 * k2 * k2 + 6.0 * k2 * mean * mean + mean.powi(4),
        ]
    }

    fn recurrence_moments(mp: &MeixnerParams) -> [f64; 4] {
        let (th, tau, tt) = (mp.theta_tilde, mp.tau_tilde, mp.t_tilde);
        [0.0, tt, th * tt, 3.0 * tt * tt + (th * th + 2.0 * tau) * tt]
    }

    fn close(a: [f64; 4], b: [f64; 4]) {
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "{a:?} vs {b:?}");
        }
    }

    fn p11() -> Q1Params {
        Q1Params::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn transition_params_examples() {
        let p = Q1Params::new(0.7, 1.3).unwrap();
        let m = transition_params(0.0, 2.0, 0.0, &p);
        assert_eq!(m.theta_tilde, 2.0 * 0.7 + 1.3);
        assert!((m.tau_tilde - 0.7 * 1.3 * 2.0).abs() < 1e-15);
        assert_eq!(m.t_tilde, 2.0);
        for (s, t, x) in [(0.3, 1.1, 0.4), (2.0, 3.5, -0.2)] {
            let m = transition_params(s, t, x, &p);
            assert!((m.discriminant() - (t * 0.7 - 1.3f64).powi(2)).abs() < 1e-12);
        }
        assert_eq!(transition_params(0.5, 1.0, -1.0 / 0.7, &p).t_tilde, 0.0);
    }

    #[test]
    fn identified_laws_reproduce_recurrence_moments() {
        let cases = [
            MeixnerParams { theta_tilde: 1.5, tau_tilde: 0.0, t_tilde: 0.8 },
            MeixnerParams { theta_tilde: -1.5, tau_tilde: 0.0, t_tilde: 0.8 },
            MeixnerParams { theta_tilde: 2.0, tau_tilde: 1.0, t_tilde: 0.7 },
            MeixnerParams { theta_tilde: -2.0, tau_tilde: 1.0, t_tilde: 0.7 },
            MeixnerParams { theta_tilde: 3.0, tau_tilde: 1.0, t_tilde: 0.5 },
            MeixnerParams { theta_tilde: -3.0, tau_tilde: 1.0, t_tilde: 0.5 },
            MeixnerParams { theta_tilde: 0.4, tau_tilde: -0.25, t_tilde: 1.0 },
        ];
        for mp in cases {
            let spec = identify_meixner(&mp).unwrap();
            close(affine_moments(&spec), recurrence_moments(&mp));
        }
    }

    #[test]
    fn identification_regimes() {
        let f = |th, tau, tt| identify_meixner(&MeixnerParams { theta_tilde: th, tau_tilde: tau, t_tilde: tt }).map(|s| s.family);
        assert!(matches!(f(1.5, 0.0, 0.8), Ok(Law::Poisson { lambda }) if (lambda - 0.8 / 2.25).abs() < 1e-15));
        assert!(matches!(f(2.0, 1.0, 0.7), Ok(Law::Gamma { shape, scale }) if shape == 0.7 && scale == 1.0));
        assert!(matches!(f(3.0, 1.0, 0.5), Ok(Law::NegativeBinomial { .. })));
        assert!(matches!(f(0.4, -0.25, 1.0), Ok(Law::Binomial { n: 4, .. })));
        assert_eq!(f(1.0, 2.0, 0.0), Ok(Law::PointMass));
        assert!(matches!(f(0.4, -0.3, 1.0), Err(Q1Error::UnidentifiableRegime { .. })));
        assert!(matches!(f(1.0, 1.0, 1.0), Err(Q1Error::UnidentifiableRegime { .. })));
    }

    #[test]
    fn regime_dispatch_covers_all_layouts() {
        let p = Q1Params::new(0.8, 1.2).unwrap();
        let b = p.boundary();
        // Reachable starting state for each layout.
        let z_count = 3.0;
        let layouts = [
            (0.3, 1.0, p.y_of_z(0.3, 2.0)),
            (0.3, b, p.y_of_z(0.3, 2.0)),
            (b, 2.5, p.y_of_z(b, 1.7)),
            (2.0, 3.0, p.y_of_z(2.0, z_count)),
            (0.3, 2.5, p.y_of_z(0.3, 2.0)),
        ];
        let got: Vec<&str> = layouts
            .iter()
            .map(|&(s, t, x)| match identify_meixner(&transition_params(s, t, x, &p)).unwrap().family {
                Law::NegativeBinomial { .. } => "nb",
                Law::Gamma { .. } => "gamma",
                Law::Poisson { .. } => "poisson",
                Law::Binomial { .. } => "binomial",
                Law::PointMass => "point",
            })
            .collect();
        assert_eq!(got, ["nb", "gamma", "poisson", "binomial", "nb"]);
    }

    #[test]
    fn identified_law_matches_z_chain_law() {
        let p = Q1Params::new(0.8, 1.2).unwrap();
        let sampler = Q1Sampler::new(p, StraddleMode::Direct);
        let b = p.boundary();
        for (s, t, z) in [(0.3, 1.0, 2.0), (0.3, b, 2.0), (b, 2.5, 1.7), (2.0, 3.0, 3.0), (0.3, 2.5, 2.0)] {
            let x = p.y_of_z(s, z);
            let spec = identify_meixner(&transition_params(s, t, x, &p)).unwrap();
            // Y_t = x + spec; Y_t = y_of_z(t, Z_t) with Z_t from the chain.
            let mut chain_moments = [0.0; 4];
            let law = sampler.z_step_law(s, t, z);
            let offset = if p.side(s) == Side::Below && p.side(t) == Side::Below { z } else { 0.0 };
            let a = p.y_of_z(t, 1.0) - p.y_of_z(t, 0.0);
            let chain = DistributionSpec {
                family: law,
                scale: a,
                shift: p.y_of_z(t, offset) - x,
            };
            chain_moments.copy_from_slice(&affine_moments(&chain));
            close(chain_moments, affine_moments(&spec));
        }
    }

    #[test]
    fn affine_sample_means() {
        let mut rng = path_rng(11, 0);
        let n = 100_000;
        for (law, mean) in [
            (Law::Poisson { lambda: 2.5 }, 2.5),
            (Law::NegativeBinomial { r: 1.7, p: 0.4 }, 1.7 * 0.6 / 0.4),
            (Law::Gamma { shape: 2.0, scale: 0.5 }, 1.0),
            (Law::Binomial { n: 7, p: 0.3 }, 2.1),
        ] {
            let draws: Vec<f64> = (0..n).map(|_| sample_law(&law, &mut rng)).collect();
            let (m, se) = mean_and_se(&draws);
            assert!((m - mean).abs() < 4.0 * se, "{law:?}: {m} vs {mean}");
        }
        let spec = DistributionSpec {
            family: Law::Binomial { n: 0, p: 0.4 },
            scale: 2.0,
            shift: -0.3,
        };
        assert_eq!(sample_affine(&spec, &mut rng), -0.3);
    }

    #[test]
    fn path_starts_at_zero_and_respects_lower_bound() {
        let p = p11();
        let grid = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0];
        for seed in 0..200 {
            let path = sample_q1_path(&grid, seed, &p, StraddleMode::ThroughBoundary).unwrap();
            assert_eq!(path.values[0], 0.0);
            for (t, y) in grid.iter().zip(&path.values).skip(1) {
                assert!(*y >= -1.0 / p.eta - 1e-12, "t={t} y={y}");
            }
        }
    }

    #[test]
    fn moments_small_run() {
        let p = Q1Params::new(1.0, 1.0).unwrap();
        let rows = check_q1_moments(&[0.0, 0.5, 1.0, 2.0], 20_000, 3, &p, StraddleMode::ThroughBoundary).unwrap();
        assert!(rows.iter().all(|r| r.z_score < 4.5), "{rows:?}");
    }

    #[test]
    fn two_step_ks_small() {
        let p = p11();
        assert!(check_two_step_ks(1.0, 1.5, 20_000, 5, &p).unwrap() < 0.03);
        assert!(check_two_step_ks(0.3, 0.7, 20_000, 5, &p).unwrap() < 0.03);
    }

    #[test]
    fn ks_distance_basics() {
        assert_eq!(ks_distance(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_distance(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
        assert!((ks_distance(&[0.0, 1.0], &[1.0, 1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn from_harness_checks_q() {
        assert!(Q1Params::from_harness(&HarnessParams::new_unchecked(1.0, 1.0, 0.5)).is_err());
        assert!(Q1Params::new(-1.0, 1.0).is_err());
    }
}
