//! Parameter-recovery harness: simulate windows from a known model, refit,
//! and report the recovery quality of base rates and kernel norms.

use rayon::prelude::*;
use sdhawkes::calibrate::{fit_hawkes_windows, OptimizerConfig};
use sdhawkes::hawkes::{derive_seed, simulate, History, HawkesParams, TransitionMatrices};
use std::time::Instant;

fn truth(d_e: usize, d_s: usize) -> HawkesParams {
    // Sparse excitation graph with strong channels concentrated on the core
    // states the transition design actually visits; off-core kernels stay
    // below the reporting threshold.
    let mut params = HawkesParams {
        d_e,
        d_s,
        nu: vec![0.25, 0.25, 0.12, 0.12],
        alpha: vec![0.0; d_e * d_s * d_e],
        beta: vec![2.0; d_e * d_s * d_e],
    };
    let base = [
        [0.55, 0.0, 0.30, 0.0],
        [0.0, 0.55, 0.0, 0.30],
        [0.35, 0.0, 0.45, 0.0],
        [0.0, 0.35, 0.0, 0.45],
    ];
    for src in 0..d_e {
        for x in 0..d_s {
            let core = (3..=5).contains(&x);
            for tgt in 0..d_e {
                let beta = 2.2 + 0.15 * ((src + 2 * tgt) % 7) as f64;
                let i = params.idx(src, x, tgt);
                params.beta[i] = beta;
                let norm = if core { base[src][tgt] } else { base[src][tgt] * 0.12 };
                params.alpha[i] = norm * (beta - 1.0);
            }
        }
    }
    let radius = params.spectral_radius_heuristic();
    let scale = 0.62 / radius;
    for a in params.alpha.iter_mut() {
        *a *= scale;
    }
    params
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let target_events: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let max_iterations: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(250);
    let d_e = 4;
    let d_s = 9;
    let params = truth(d_e, d_s);
    println!("truth radius = {:.4}", params.spectral_radius_heuristic());
    let mut transitions = TransitionMatrices::identity(d_e, d_s);
    {
        let row = [0.02, 0.02, 0.02, 0.30, 0.29, 0.27, 0.02, 0.03, 0.03];
        for e in 0..d_e {
            for x in 0..d_s {
                transitions.set_row(e, x, &row);
            }
        }
    }
    let window_t: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(450.0);
    let t0 = Instant::now();
    let mut histories: Vec<History> = Vec::new();
    let mut total = 0usize;
    let mut batch = 0u64;
    while total < target_events {
        let new: Vec<History> = (0..8)
            .into_par_iter()
            .map(|i| {
                simulate(&params, &transitions, 0, window_t, derive_seed(777, batch * 8 + i))
                    .unwrap()
            })
            .collect();
        for h in new {
            total += h.len();
            histories.push(h);
        }
        batch += 1;
    }
    println!(
        "simulated {} events in {} windows, {:.1}s",
        total,
        histories.len(),
        t0.elapsed().as_secs_f64()
    );
    let horizons = vec![window_t; histories.len()];
    let config = OptimizerConfig {
        restarts: 1,
        max_iterations,
        ..Default::default()
    };
    let t1 = Instant::now();
    let fit = fit_hawkes_windows(&histories, &horizons, d_e, d_s, &config).unwrap();
    println!("fit in {:.1}s", t1.elapsed().as_secs_f64());
    // Log-likelihood of truth vs fit over the same windows.
    let ll_of = |p: &HawkesParams| -> f64 {
        histories
            .par_iter()
            .map(|h| {
                sdhawkes::calibrate::log_likelihood(p, h, window_t).unwrap().value
            })
            .sum()
    };
    let ll_truth = ll_of(&params);
    let ll_fit = ll_of(&fit.params);
    println!("ll(truth) = {ll_truth:.2}, ll(fit) = {ll_fit:.2}, fit - truth = {:.2}", ll_fit - ll_truth);
    for tf in &fit.by_type {
        println!(
            "  type {}: iters {}, converged {}, nu {:.4} (true {:.4})",
            tf.target, tf.iterations, tf.converged, tf.nu, params.nu[tf.target]
        );
    }
    // Recovery quality.
    let mut nu_worst: f64 = 0.0;
    for e in 0..d_e {
        nu_worst = nu_worst.max((fit.params.nu[e] - params.nu[e]).abs() / params.nu[e]);
    }
    let mut eligible = 0usize;
    let mut within = 0usize;
    let mut worst: f64 = 0.0;
    for src in 0..d_e {
        for x in 0..d_s {
            for tgt in 0..d_e {
                let true_norm = params.kernel_l1_norm(src, x, tgt);
                if true_norm < 0.1 {
                    continue;
                }
                eligible += 1;
                let rel = (fit.params.kernel_l1_norm(src, x, tgt) - true_norm).abs() / true_norm;
                worst = worst.max(rel);
                if rel <= 0.10 {
                    within += 1;
                }
            }
        }
    }
    println!(
        "nu worst rel err {:.4}; norms >=0.1: {within}/{eligible} within 10% (worst {:.3})",
        nu_worst, worst
    );
}
