use num_traits::{One, Zero};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

use qharness::checks::q1_regime_report;
use qharness::markov::TransitionKernel;
use qharness::polynomials::{eval_p, eval_q};
use qharness::q1::Q1Params;
use qharness::qcore::{q_binomial, q_int, qpow, rat, Rational};
use qharness::qm1::{atoms, check_ck_exact, check_harness_exact, q2, transition_matrix, Qm1Params};
use qharness::HarnessParams;

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed_0001),
        failure_persistence: None,
        ..Config::default()
    }
}

fn small_rational() -> impl Strategy<Value = Rational> {
    (-20i64..=20, 1i64..=20).prop_map(|(n, d)| rat(n, d))
}

fn rational_q() -> impl Strategy<Value = Rational> {
    small_rational().prop_filter("|q| < 1", |q| q.clone() * q.clone() < Rational::one())
}

/// Admissible `(η, θ, q)` with `|q| ≤ 0.9` and the continuous part present.
fn numeric_params() -> impl Strategy<Value = HarnessParams> {
    (-1.0f64..1.0, -1.0f64..1.0, -0.9f64..0.9)
        .prop_filter("admissible", |&(e, t, q)| 1.0 + e * t - q.max(0.0) > 0.05 && e * t + 1.0 - q > 0.05)
        .prop_map(|(e, t, q)| HarnessParams::new(e, t, q).unwrap())
}

fn rational_params() -> impl Strategy<Value = HarnessParams<Rational>> {
    (small_rational(), small_rational(), rational_q()).prop_filter_map("admissible", |(e, t, q)| HarnessParams::new(e, t, q).ok())
}

proptest! {
    #![proptest_config(config(50))]

    #[test]
    fn q_subtraction(q in rational_q(), m in 0u32..=12, l in 0u32..=12) {
        prop_assume!(l <= m);
        prop_assert_eq!(q_int(m, &q) - q_int(l, &q), qpow(&q, l) * q_int(m - l, &q));
    }

    #[test]
    fn q_pascal(q in rational_q(), n in 1i64..=10, k in 0i64..=10) {
        prop_assume!(k <= n);
        let rhs = q_binomial(n - 1, k - 1, &q) + qpow(&q, k as u32) * q_binomial(n - 1, k, &q);
        prop_assert_eq!(q_binomial(n, k, &q), rhs);
    }

    #[test]
    fn conditional_family_specializes(p in rational_params(), y in small_rational(), t in (0i64..=20, 1i64..=20), n in 0u32..=8) {
        let t = rat(t.0, t.1);
        let zero = Rational::zero();
        prop_assert_eq!(eval_q(n, &y, &zero, &t, &zero, &p), eval_p(n, &y, &t, &p));
    }

    #[test]
    fn conditional_family_vanishes_at_start(p in rational_params(), x in small_rational(), s in (0i64..=20, 1i64..=20), n in 1u32..=8) {
        let s = rat(s.0, s.1);
        prop_assert!(eval_q(n, &x, &x, &s, &s, &p).is_zero());
    }

    #[test]
    fn polynomials_are_monic(p in rational_params(), x in small_rational(), s in (0i64..=20, 1i64..=20), t in (0i64..=20, 1i64..=20), n in 0u32..=6) {
        // The n-th forward difference with unit step is n! times the leading coefficient.
        let (s, t) = (rat(s.0, s.1), rat(t.0, t.1));
        let mut fact = Rational::one();
        for i in 1..=n {
            fact *= rat(i as i64, 1);
        }
        let diff = |f: &dyn Fn(&Rational) -> Rational| {
            let (mut acc, mut c) = (Rational::zero(), Rational::one());
            for i in 0..=n {
                let v = f(&rat(i as i64, 1));
                if (n - i) % 2 == 0 { acc += c.clone() * v } else { acc -= c.clone() * v }
                c = c * rat((n - i) as i64, (i + 1) as i64);
            }
            acc
        };
        prop_assert_eq!(diff(&|y| eval_p(n, y, &t, &p)), fact.clone());
        prop_assert_eq!(diff(&|y| eval_q(n, y, &x, &t, &s, &p)), fact);
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn kernel_variance_identity(p in numeric_params(), s in 0.1f64..1.5, dt in 0.05f64..1.5, pick in 0usize..40) {
        let kernel = TransitionKernel::new(p.clone(), 40);
        let m = kernel.marginal(s).unwrap();
        let x = m.nodes[pick % m.nodes.len()];
        let k = kernel.kernel(s, s + dt, x).unwrap();
        let var: f64 = k.nodes.iter().zip(&k.weights).map(|(y, w)| w * (y - x).powi(2)).sum();
        let want = dt * (1.0 + p.eta * x);
        prop_assert!((var - want).abs() <= 1e-9 * want.abs().max(1.0), "{} vs {}", var, want);
    }

    #[test]
    fn marginal_rule_is_orthogonal(p in numeric_params(), t in 0.1f64..2.0) {
        let order = 10;
        let m = TransitionKernel::new(p.clone(), order).marginal(t).unwrap();
        for n in 1..=(2 * order as u32 - 2) {
            let (mut acc, mut scale) = (0.0, 0.0);
            for (x, w) in m.nodes.iter().zip(&m.weights) {
                let v = w * eval_p(n, x, &t, &p);
                acc += v;
                scale += v.abs();
            }
            prop_assert!(acc.abs() <= 1e-9 * scale.max(1.0), "n={} residual {}", n, acc);
        }
    }

    #[test]
    fn marginal_nodes_are_ascending_with_unit_mass(p in numeric_params(), t in 0.1f64..2.0) {
        let m = TransitionKernel::new(p, 60).marginal(t).unwrap();
        prop_assert!(m.nodes.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(m.weights.iter().all(|&w| w >= 0.0));
        prop_assert!((m.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

fn qm1_setup() -> impl Strategy<Value = (Qm1Params, f64, f64, f64)> {
    (-2.0f64..2.0, -2.0f64..2.0, 0.01f64..3.0, 0.01f64..3.0, 0.01f64..3.0)
        .prop_filter_map("1 + ηθ ≥ 0", |(e, th, s, a, b)| Qm1Params::new(e, th).ok().map(|p| (p, s, s + a, s + a + b)))
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn qm1_entries_are_probabilities((p, s, t, _) in qm1_setup()) {
        let m = transition_matrix(s, t, &p).unwrap();
        for row in m.rows {
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row[0] + row[1] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn qm1_support_consistency((p, s, t, _) in qm1_setup()) {
        let (from, to) = (atoms(s, &p).unwrap(), atoms(t, &p).unwrap());
        let m = transition_matrix(s, t, &p).unwrap();
        for (i, &x) in from.atoms().iter().enumerate() {
            for (j, &y) in to.atoms().iter().enumerate() {
                // Only reachable targets are constrained.
                if m.rows[i][j] > 0.0 {
                    prop_assert!(q2(y, x, t, s, &p).abs() <= 1e-10, "Q2 = {}", q2(y, x, t, s, &p));
                }
            }
        }
    }

    #[test]
    fn qm1_exact_checks((p, s, t, u) in qm1_setup()) {
        prop_assert!(check_ck_exact(s, t, u, &p).unwrap() <= 1e-12);
        prop_assert!(check_harness_exact(s, t, u, &p).unwrap() <= 1e-10);
    }

    #[test]
    fn qm1_atoms_are_roots_of_p2((p, _, t, _) in qm1_setup()) {
        let hp = HarnessParams::new_unchecked(p.eta, p.theta, -1.0);
        for a in atoms(t, &p).unwrap().atoms() {
            prop_assert!(eval_p(2, &a, &t, &hp).abs() <= 1e-12 * (1.0 + a * a), "p2({}) = {}", a, eval_p(2, &a, &t, &hp));
        }
    }

    #[test]
    fn q1_regimes_cover_all_layouts(eta in 0.05f64..3.0, theta in 0.05f64..3.0) {
        let r = q1_regime_report(&Q1Params::new(eta, theta).unwrap());
        prop_assert!(r.pass, "{:?}", r.params);
    }
}
