//! Calibration invariants: analytic gradients against central finite
//! differences, transition-frequency recovery against a generator oracle, and
//! the behaviour of the time-change diagnostics under misspecification.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sdhawkes::calibrate::{estimate_transitions, log_likelihood, residual_diagnostics};
use sdhawkes::hawkes::{derive_seed, simulate, EventRecord, History, HawkesParams};

#[test]
fn gradient_matches_finite_differences_on_random_instances() {
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    let h = 1e-6;
    for case in 0..12 {
        let d_e = 1 + case % 3;
        let d_s = 1 + case % 2;
        let params = common::random_params(&mut rng, d_e, d_s, 0.55);
        let transitions = common::random_transitions(&mut rng, d_e, d_s);
        let horizon = 150.0;
        let history =
            simulate(&params, &transitions, 0, horizon, derive_seed(17, case as u64)).unwrap();
        if history.len() < 20 {
            continue;
        }
        let base = log_likelihood(&params, &history, horizon).unwrap();
        let mut check = |bump: &dyn Fn(&mut HawkesParams, f64), analytic: f64, tag: &str| {
            let mut up = params.clone();
            bump(&mut up, h);
            let mut dn = params.clone();
            bump(&mut dn, -h);
            let fd = (log_likelihood(&up, &history, horizon).unwrap().value
                - log_likelihood(&dn, &history, horizon).unwrap().value)
                / (2.0 * h);
            let denom = fd.abs().max(analytic.abs()).max(1e-6);
            assert!(
                ((fd - analytic) / denom).abs() < 1e-5,
                "case {case} {tag}: fd {fd} vs analytic {analytic}"
            );
        };
        for e in 0..d_e {
            check(&|p, eps| p.nu[e] += eps, base.grad_nu[e], "nu");
        }
        // A handful of kernel coordinates per instance.
        for probe in 0..4usize {
            let i = (probe * 7 + case) % params.alpha.len();
            check(&|p, eps| p.alpha[i] += eps, base.grad_alpha[i], "alpha");
            check(&|p, eps| p.beta[i] += eps, base.grad_beta[i], "beta");
        }
    }
}

/// Generator oracle for transition recovery: a Markov chain over states driven
/// by known per-type matrices, with iid arrival times. Independent of the
/// Hawkes engine.
fn synthetic_markov_history<R: Rng>(
    rng: &mut R,
    phi: &sdhawkes::hawkes::TransitionMatrices,
    n_events: usize,
) -> History {
    let d_e = phi.d_e;
    let mut events = Vec::with_capacity(n_events);
    let mut state = 0usize;
    let mut t = 0.0f64;
    for _ in 0..n_events {
        t += 0.1 + rng.random::<f64>();
        let event_type = rng.random_range(0..d_e);
        let row = phi.row(event_type, state);
        let mut u: f64 = rng.random();
        let mut next = phi.d_s - 1;
        for (x, &p) in row.iter().enumerate() {
            if u < p {
                next = x;
                break;
            }
            u -= p;
        }
        events.push(EventRecord { time: t, event_type, state_after: next });
        state = next;
    }
    History { initial_state: 0, events }
}

#[test]
fn transition_estimation_recovers_generator() {
    let mut rng = ChaCha12Rng::seed_from_u64(808);
    let d_e = 2;
    let d_s = 3;
    let phi = common::random_transitions(&mut rng, d_e, d_s);
    let history = synthetic_markov_history(&mut rng, &phi, 200_000);
    let (fitted, flagged) = estimate_transitions(&history, d_e, d_s).unwrap();
    assert!(flagged.is_empty());
    let mut worst = 0.0f64;
    for e in 0..d_e {
        for x in 0..d_s {
            for y in 0..d_s {
                worst = worst.max((fitted.prob(e, x, y) - phi.prob(e, x, y)).abs());
            }
        }
    }
    assert!(worst < 0.01, "max transition error {worst}");
    // Rows stay exactly stochastic.
    for e in 0..d_e {
        for x in 0..d_s {
            assert_eq!(fitted.row(e, x).iter().sum::<f64>(), 1.0);
        }
    }
}

#[test]
fn misspecified_fit_is_rejected_by_ks() {
    // Strongly clustered data read through a Poisson lens: the time-change
    // residuals are far from Exp(1).
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let mut params = common::random_params(&mut rng, 1, 1, 0.85);
    params.nu[0] = 0.3;
    let transitions = sdhawkes::hawkes::TransitionMatrices::identity(1, 1);
    let runs = 20;
    let mut rejected = 0;
    for s in 0..runs {
        let horizon = 900.0;
        let h = simulate(&params, &transitions, 0, horizon, derive_seed(515, s)).unwrap();
        if h.len() < 40 {
            continue;
        }
        // The (wrong) model: constant rate at the realised average.
        let poisson = HawkesParams::poisson(1, 1, vec![h.len() as f64 / horizon]);
        let diag = residual_diagnostics(&poisson, &h, horizon).unwrap();
        if diag.by_type[0].ks_pvalue.is_some_and(|p| p < 0.05) {
            rejected += 1;
        }
    }
    assert!(rejected >= runs * 9 / 10, "rejected only {rejected}/{runs}");
}

#[test]
fn qq_pairs_are_ordered_and_match_residual_count() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let params = common::random_params(&mut rng, 2, 2, 0.5);
    let transitions = common::random_transitions(&mut rng, 2, 2);
    let h = simulate(&params, &transitions, 0, 400.0, 1).unwrap();
    let diag = residual_diagnostics(&params, &h, 400.0).unwrap();
    for t in &diag.by_type {
        assert_eq!(t.qq.len(), t.residuals.len());
        for w in t.qq.windows(2) {
            assert!(w[0].0 <= w[1].0);
            assert!(w[0].1 <= w[1].1);
        }
    }
}
