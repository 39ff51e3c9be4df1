//! Check suites over parameter grids, reported as [`CheckReport`] lines.

use num_traits::Zero;
use serde_json::json;

use crate::connection::{b_poly, b_tilde, sweep, IdentityReport, QDraw, Sweep, TupleSampler};
use crate::markov::{MarkovError, TransitionKernel};
use crate::polynomials::HarnessParams;
use crate::q1::{check_q1_moments, check_two_step_ks, identify_meixner, transition_params, Law, Q1Error, Q1Params, StraddleMode};
use crate::qm1::{atoms, check_ck_exact, check_harness_exact, Qm1Error, Qm1Params};
use crate::qcore::Rational;
use crate::report::CheckReport;

pub const TOL_MARTINGALE: f64 = 1e-8;
pub const TOL_CK: f64 = 2e-8;
pub const TOL_HARNESS: f64 = 1e-6;
pub const TOL_QM1_CK: f64 = 1e-12;
pub const TOL_QM1_HARNESS: f64 = 1e-10;
pub const TOL_QM1_VARIANCE: f64 = 1e-12;
/// Sample moments must lie within this many standard errors.
pub const MAX_Z_SCORE: f64 = 4.0;
pub const TOL_KS: f64 = 0.02;

/// The `(q, η, θ)` grid of the numeric suites, admissible points only.
pub fn numeric_grid() -> Vec<HarnessParams> {
    let mut out = Vec::new();
    for q in [-0.9, -0.5, 0.0, 0.5, 0.9] {
        for (eta, theta) in [(0.4, 0.3), (0.5, -0.2), (0.0, 0.7), (0.6, 0.0)] {
            if let Ok(p) = HarnessParams::new(eta, theta, q) {
                out.push(p);
            }
        }
    }
    out
}

fn params_json(p: &HarnessParams) -> serde_json::Value {
    json!({"eta": p.eta, "theta": p.theta, "q": p.q})
}

/// One exact sweep: residual is the number of nonzero residuals; failing
/// reports are returned for diagnostics.
pub fn exact_suite(kind: Sweep, n_max: i64, tuples: usize, seed: u64, q_draw: QDraw) -> (CheckReport, Vec<IdentityReport>) {
    let reports = sweep(kind, n_max, tuples, seed, q_draw);
    let failing: Vec<IdentityReport> = reports.iter().filter(|r| !r.pass).cloned().collect();
    let name = match kind {
        Sweep::Expansion => "expansion",
        Sweep::Representation => "representation",
        Sweep::Recursion => "recursion",
        Sweep::Appendix => "appendix",
        Sweep::Tilde => "tilde-general",
    };
    let report = CheckReport::new(
        name,
        json!({"n_max": n_max, "tuples": tuples, "seed": seed, "evaluations": reports.len(), "q_draw": format!("{q_draw:?}")}),
        failing.len() as f64,
        0.0,
    );
    (report, failing)
}

/// At `t = 0` the generalized coefficients equal the plain ones for every
/// `k ≤ n ≤ n_max`; residual is the number of mismatches.
pub fn tilde_at_zero_suite(n_max: i64, tuples: usize, seed: u64) -> CheckReport {
    let mut sampler = TupleSampler::new(seed, QDraw::Interior);
    let zero = Rational::zero();
    let mut mismatches = 0usize;
    let mut count = 0usize;
    for _ in 0..tuples {
        let tp = sampler.draw();
        for n in 0..=n_max {
            for k in 0..=n {
                count += 1;
                if b_tilde(n, k, &tp.y, &tp.x, &zero, &tp.s, &tp.params) != b_poly(n, k, &tp.y, &tp.x, &tp.s, &tp.params) {
                    mismatches += 1;
                }
            }
        }
    }
    CheckReport::new(
        "tilde-at-t0",
        json!({"n_max": n_max, "tuples": tuples, "seed": seed, "evaluations": count}),
        mismatches as f64,
        0.0,
    )
}

/// Martingale and Chapman–Kolmogorov residuals at every node of `π_s`
/// (or at the given states). States outside `U_s`, or whose kernels reach
/// states outside `U_t`, make the residual NaN and the report fail.
#[allow(clippy::too_many_arguments)]
pub fn martingale_ck_reports(
    params: &HarnessParams,
    order: usize,
    (s, t, u): (f64, f64, f64),
    n_max: usize,
    states: Option<&[f64]>,
    tol_martingale: f64,
    tol_ck: f64,
) -> Result<[CheckReport; 2], MarkovError> {
    let kernel = TransitionKernel::new(params.clone(), order);
    let nodes = match states {
        Some(x) => x.to_vec(),
        None => kernel.marginal(s)?.nodes,
    };
    let (mut mart, mut ck) = (0.0f64, 0.0f64);
    let mut outside = 0usize;
    let mut first_outside = None;
    for &x in &nodes {
        match kernel.check_martingale_ck(s, t, u, x, n_max) {
            Ok((m, c)) => {
                mart = mart.max(m);
                ck = ck.max(c);
            }
            Err(MarkovError::OutsideSupport { x: bad, time }) => {
                outside += 1;
                first_outside.get_or_insert(json!({"x": bad, "time": time}));
            }
            Err(e) => return Err(e),
        }
    }
    if outside > 0 {
        mart = f64::NAN;
        ck = f64::NAN;
    }
    let mut base = params_json(params);
    base["order"] = json!(order);
    base["n_max"] = json!(n_max);
    base["states"] = json!(nodes.len());
    base["outside_support"] = json!(outside);
    if let Some(first) = first_outside {
        base["first_outside"] = first;
    }
    let mut pm = base.clone();
    pm["s"] = json!(s);
    pm["u"] = json!(u);
    let mut pc = base;
    pc["times"] = json!([s, t, u]);
    Ok([
        CheckReport::new("martingale", pm, mart, tol_martingale),
        CheckReport::new("chapman-kolmogorov", pc, ck, tol_ck),
    ])
}

/// Harness weak-form table; an unreachable kernel state fails the report.
pub fn harness_report(
    params: &HarnessParams,
    order: usize,
    (s, t, u): (f64, f64, f64),
    ab_max: (u32, u32),
    tol: f64,
) -> Result<CheckReport, MarkovError> {
    let kernel = TransitionKernel::new(params.clone(), order);
    let mut p = params_json(params);
    p["order"] = json!(order);
    p["times"] = json!([s, t, u]);
    p["a_max"] = json!(ab_max.0);
    p["b_max"] = json!(ab_max.1);
    let residual = match kernel.check_harness_moments(s, t, u, ab_max.0, ab_max.1) {
        Ok(table) => table.max_residual,
        Err(MarkovError::OutsideSupport { x, time }) => {
            p["outside_support"] = json!({"x": x, "time": time});
            f64::NAN
        }
        Err(e) => return Err(e),
    };
    Ok(CheckReport::new("harness-moments", p, residual, tol))
}

/// Moment rows of the `q = 1` sampler as one report per `(t, k)`; residual
/// is the z-score.
pub fn q1_moment_reports(
    params: &Q1Params,
    grid: &[f64],
    n_paths: usize,
    seed: u64,
    mode: StraddleMode,
) -> Result<Vec<CheckReport>, Q1Error> {
    Ok(check_q1_moments(grid, n_paths, seed, params, mode)?
        .into_iter()
        .map(|r| {
            CheckReport::new(
                "q1-moment",
                json!({"eta": params.eta, "theta": params.theta, "t": r.t, "k": r.k, "sample": r.sample, "exact": r.exact, "std_err": r.std_err, "paths": n_paths, "seed": seed}),
                r.z_score,
                MAX_Z_SCORE,
            )
        })
        .collect())
}

/// Family identified for each of the five `(s, t)` layouts relative to
/// `θ/η`, against the expected sequence; residual is the number of mismatches.
pub fn q1_regime_report(params: &Q1Params) -> CheckReport {
    let b = params.boundary();
    let below = 0.4 * b;
    let above = 1.5 * b;
    let layouts = [
        (0.2 * b, below, params.y_of_z(0.2 * b, 2.0), "negative-binomial"),
        (0.2 * b, b, params.y_of_z(0.2 * b, 2.0), "gamma"),
        (b, above, params.y_of_z(b, 1.5), "poisson"),
        (1.2 * b, above, params.y_of_z(1.2 * b, 3.0), "binomial"),
        (0.2 * b, above, params.y_of_z(0.2 * b, 2.0), "negative-binomial"),
    ];
    let mut got = Vec::new();
    let mut mismatches = 0;
    for (s, t, x, want) in layouts {
        let name = match identify_meixner(&transition_params(s, t, x, params)).map(|d| d.family) {
            Ok(Law::NegativeBinomial { .. }) => "negative-binomial",
            Ok(Law::Gamma { .. }) => "gamma",
            Ok(Law::Poisson { .. }) => "poisson",
            Ok(Law::Binomial { .. }) => "binomial",
            Ok(Law::PointMass) => "point-mass",
            Err(_) => "unidentifiable",
        };
        if name != want {
            mismatches += 1;
        }
        got.push(name);
    }
    CheckReport::new(
        "q1-regimes",
        json!({"eta": params.eta, "theta": params.theta, "families": got}),
        mismatches as f64,
        0.0,
    )
}

/// KS distance between one-step and two-step draws of `Y_t`.
pub fn q1_ks_report(params: &Q1Params, mid: f64, t: f64, n: usize, seed: u64) -> Result<CheckReport, Q1Error> {
    let d = check_two_step_ks(mid, t, n, seed, params)?;
    Ok(CheckReport::new(
        "q1-two-step-ks",
        json!({"eta": params.eta, "theta": params.theta, "mid": mid, "t": t, "samples": n, "seed": seed}),
        d,
        TOL_KS,
    ))
}

/// Exact `q = -1` checks at one time triple.
pub fn qm1_reports(params: &Qm1Params, (s, t, u): (f64, f64, f64)) -> Result<Vec<CheckReport>, Qm1Error> {
    let p = json!({"eta": params.eta, "theta": params.theta, "q": -1.0, "times": [s, t, u]});
    let mut out = vec![
        CheckReport::new("qm1-chapman-kolmogorov", p.clone(), check_ck_exact(s, t, u, params)?, TOL_QM1_CK),
        CheckReport::new("qm1-harness", p.clone(), check_harness_exact(s, t, u, params)?, TOL_QM1_HARNESS),
    ];
    let var = [s, t, u]
        .iter()
        .map(|&r| atoms(r, params).map(|l| (l.second_moment() - r).abs()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    out.push(CheckReport::new("qm1-variance", p, var, TOL_QM1_VARIANCE));
    Ok(out)
}
