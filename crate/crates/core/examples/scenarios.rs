//! Scenario-ordering harness: mean impact scores of the three liquidation
//! schedules on the synthetic reference calibration.

use sdhawkes::impact::{monte_carlo_profiles, LiquidationConfig};
use sdhawkes::model::MarketModel;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let paths: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let q0: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let model = MarketModel::synthetic_reference();
    println!("radius = {:.4}", model.params.spectral_radius_heuristic());
    // Quick market-density probe.
    let t = Instant::now();
    let h = sdhawkes::hawkes::simulate(&model.params, &model.transitions, 4, 500.0, 1).unwrap();
    println!("market rate ~ {:.3}/s ({} events in 500s, {:.2}s)", h.len() as f64 / 500.0, h.len(), t.elapsed().as_secs_f64());
    let initial = sdhawkes::lob::StateVariable::new(0, 0, model.k).unwrap().flat_index();
    let scenarios = [
        ("S1 small ", 0.03, 0.0, 0.075, 2500.0),
        ("S2 large ", 0.03, 0.0, 0.5, 1000.0),
        ("S3 cluster", 0.0, 0.25, 0.015, 3000.0),
    ];
    for (name, nu0, a, c, horizon) in scenarios {
        let t = Instant::now();
        let config = LiquidationConfig::new(q0, nu0, a, c, 0.0).unwrap();
        let mc = monte_carlo_profiles(&model, &config, initial, horizon, paths, 99, 64).unwrap();
        println!(
            "{name}: mean score {:.6} (sd {:.6}), completed {}/{}, {:.1}s",
            mc.mean_score, mc.sd_score, mc.completed_paths, mc.n_paths,
            t.elapsed().as_secs_f64()
        );
    }
}
