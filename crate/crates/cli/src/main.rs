//! Command-line pipeline for the order-book model: ingest and calibrate from
//! LOBSTER files, simulate liquidations, stress the calibration, and run
//! goodness-of-fit diagnostics. Every command is a pure function of its
//! inputs, flags and seeds: re-running produces bit-identical artifacts.

use clap::{Args, Parser, Subcommand};
use sdhawkes::calibrate::{
    estimate_transitions, fit_dirichlet, fit_hawkes, residual_diagnostics, CalibrationReport,
    OptimizerConfig, ResidualDiagnostics,
};
use sdhawkes::hawkes::{derive_seed, simulate_with_liquidator};
use sdhawkes::impact::{ImpactEvaluator, LiquidationConfig};
use sdhawkes::lobster::{
    assemble_history, classify, dedup_and_order, parse_pair, read_events_csv, renormalise_tick,
    volumes_by_state, write_events_csv, write_volumes_csv,
};
use sdhawkes::model::{MarketModel, MODEL_SCHEMA_VERSION};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "sdhawkes", version, about = "State-dependent Hawkes order-book model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the model from a LOBSTER message/orderbook pair.
    Calibrate(CalibrateArgs),
    /// Simulate a liquidation and write impact profiles.
    Liquidate(LiquidateArgs),
    /// Re-run a scenario under joint parameter shocks.
    Stress(StressArgs),
    /// Goodness-of-fit diagnostics of a model against an event file.
    Diagnose(DiagnoseArgs),
    /// Write the built-in synthetic reference calibration (for demos and
    /// scenario work without proprietary data).
    SyntheticModel(SyntheticModelArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// LOBSTER message file.
    #[arg(long)]
    messages: PathBuf,
    /// LOBSTER orderbook file, row-aligned with the message file.
    #[arg(long)]
    orderbook: PathBuf,
    /// Book depth n used for imbalance and volumes.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Imbalance buckets K (odd).
    #[arg(long, default_value_t = 3)]
    buckets: u32,
    /// Tick renormalisation multiple m.
    #[arg(long = "tick-multiple", default_value_t = 1)]
    tick_multiple: u32,
    /// Tick size in 1e-4 currency units.
    #[arg(long = "tick-size", default_value_t = 100)]
    tick_size: i64,
    /// Output model path; the report, QQ data and canonical files are
    /// written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Fail on the first malformed input row instead of skipping.
    #[arg(long, default_value_t = false)]
    strict: bool,
    /// Optimizer restarts.
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    /// Optimizer iteration cap per event type.
    #[arg(long = "max-iterations", default_value_t = 5000)]
    max_iterations: usize,
    /// Seed for optimizer restarts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LiquidateArgs {
    /// Calibrated model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Inventory, normalised to the n-level book depth.
    #[arg(long = "Q0")]
    q0: f64,
    /// Liquidator base rate.
    #[arg(long)]
    nu0: f64,
    /// Clustering rate.
    #[arg(long)]
    a: f64,
    /// Child order size as a fraction of bid depth.
    #[arg(long)]
    c: f64,
    /// Liquidation start time.
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    /// Simulation horizon in seconds.
    #[arg(long)]
    horizon: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    paths: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Initial flat state index (defaults to neutral mid, neutral imbalance).
    #[arg(long = "initial-state")]
    initial_state: Option<usize>,
    /// Mid-price level anchoring the proxy column.
    #[arg(long, default_value_t = 0.0)]
    mid0: f64,
    /// Tick size for the proxy column.
    #[arg(long = "tick-size", default_value_t = 100)]
    tick_size: i64,
}

#[derive(Args)]
struct StressArgs {
    #[arg(long)]
    model: PathBuf,
    /// Scenario JSON file (see the README for the schema).
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated multiplicative shocks, e.g. "-0.05,0,0.05".
    #[arg(long = "shock-grid", default_value = "-0.05,0,0.05", allow_hyphen_values = true)]
    shock_grid: String,
    /// Paths per shock (overrides the scenario file when set).
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    model: PathBuf,
    /// Canonical event CSV (time_ns, event_type, x1, x2, imbalance, mid).
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Tick size for the mid-price proxy comparison.
    #[arg(long = "tick-size", default_value_t = 100)]
    tick_size: i64,
}

#[derive(Args)]
struct SyntheticModelArgs {
    #[arg(long)]
    out: PathBuf,
}

/// Exit classes: 0 success, 1 numerical failure, 2 input error.
enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => m,
        }
    }
    fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Numerical(_) => "numerical",
        }
    }
}

fn input_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn numerical_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Liquidate(args) => cmd_liquidate(args),
        Command::Stress(args) => cmd_stress(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::SyntheticModel(args) => cmd_synthetic_model(args),
    };
    if let Err(e) = result {
        eprintln!(
            "{}",
            serde_json::json!({
                "schema_version": 1,
                "error": e.message(),
                "kind": e.kind(),
            })
        );
        std::process::exit(e.exit_code());
    }
}

// --- output plumbing ---------------------------------------------------------

/// FNV-1a hash of the canonical flag string, stamped into every artifact.
fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Serialize)]
struct Meta {
    tool_version: &'static str,
    config_hash: String,
    seed: u64,
}

impl Meta {
    fn new(config: &str, seed: u64) -> Self {
        Self { tool_version: env!("CARGO_PKG_VERSION"), config_hash: config_hash(config), seed }
    }
    fn header_lines(&self) -> Vec<String> {
        vec![
            format!("tool_version={}", self.tool_version),
            format!("config_hash={}", self.config_hash),
            format!("seed={}", self.seed),
        ]
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| input_err(format!("writing {}: {e}", path.display())))
}

fn write_json_value(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(numerical_err)?;
    text.push('\n');
    write_text(path, &text)
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| input_err(format!("creating {}: {e}", path.display())))
}

fn csv_header(meta: &Meta, columns: &str) -> String {
    let mut s = String::new();
    for line in meta.header_lines() {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "{columns}");
    s
}

fn residuals_csv(meta: &Meta, diagnostics: &ResidualDiagnostics) -> String {
    let mut s = csv_header(meta, "event_type,index,residual,theoretical_quantile");
    for t in &diagnostics.by_type {
        // Event labels in files are 1-based.
        let label = t.event_type + 1;
        for (i, (theoretical, empirical)) in t.qq.iter().enumerate() {
            let _ = writeln!(s, "{label},{i},{empirical},{theoretical}");
        }
    }
    s
}

// --- calibrate ---------------------------------------------------------------

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    if args.buckets == 0 || args.buckets % 2 == 0 {
        return Err(CliError::Input(format!("buckets must be odd, got {}", args.buckets)));
    }
    if args.depth == 0 {
        return Err(CliError::Input("depth must be positive".into()));
    }
    let config_string = format!(
        "calibrate messages={} orderbook={} depth={} buckets={} tick_multiple={} tick_size={} \
         strict={} restarts={} max_iterations={} seed={}",
        args.messages.display(),
        args.orderbook.display(),
        args.depth,
        args.buckets,
        args.tick_multiple,
        args.tick_size,
        args.strict,
        args.restarts,
        args.max_iterations,
        args.seed,
    );
    let meta = Meta::new(&config_string, args.seed);

    let parse_depth = args.depth * args.tick_multiple.max(1) as usize;
    let parsed = parse_pair(&args.messages, &args.orderbook, parse_depth, args.strict)
        .map_err(input_err)?;
    let (events, classify_stats) = classify(&parsed.rows, args.depth, args.buckets, None);
    let (events, dedup_stats) = dedup_and_order(events);
    let events =
        renormalise_tick(&events, args.tick_multiple, args.tick_size, args.depth, args.buckets);
    let (history, base_ns) = assemble_history(&events)
        .ok_or_else(|| CliError::Input("no events after filtering".into()))?;
    let horizon = history.events.last().map(|e| e.time).unwrap_or(0.0);

    let d_e = 4;
    let d_s = sdhawkes::lob::StateVariable::state_count(args.buckets);
    let (transitions, transition_flags) =
        estimate_transitions(&history, d_e, d_s).map_err(numerical_err)?;
    let optimizer = OptimizerConfig {
        restarts: args.restarts,
        max_iterations: args.max_iterations,
        seed: args.seed,
        ..Default::default()
    };
    let fit = fit_hawkes(&history, horizon, d_e, d_s, &optimizer).map_err(numerical_err)?;
    let volumes = volumes_by_state(&events, args.depth, args.buckets);
    let dirichlet = fit_dirichlet(&volumes, args.depth, args.buckets).map_err(numerical_err)?;
    let diagnostics =
        residual_diagnostics(&fit.params, &history, horizon).map_err(numerical_err)?;

    let model = MarketModel {
        n_levels: args.depth,
        k: args.buckets,
        params: fit.params.clone(),
        transitions: transitions.clone(),
        gamma: dirichlet.params.clone(),
    };
    model.validate().map_err(numerical_err)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    model.write_json(&args.out).map_err(input_err)?;

    let stem = args.out.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
    let dir = args.out.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));

    let report = CalibrationReport {
        params: fit.params.clone(),
        transitions,
        gamma: dirichlet.params,
        log_likelihood_by_type: fit.by_type.iter().map(|t| t.log_likelihood).collect(),
        converged_by_type: fit.by_type.iter().map(|t| t.converged).collect(),
        degenerate_by_type: fit.by_type.iter().map(|t| t.degenerate).collect(),
        iterations_by_type: fit.by_type.iter().map(|t| t.iterations).collect(),
        transition_flags,
        dirichlet_flags: dirichlet.flags,
        ks_statistics: diagnostics.by_type.iter().map(|t| t.ks_statistic).collect(),
        ks_pvalues: diagnostics.by_type.iter().map(|t| t.ks_pvalue).collect(),
        spectral_radius: fit.params.spectral_radius_heuristic(),
    };
    let report_value = serde_json::json!({
        "schema_version": MODEL_SCHEMA_VERSION,
        "meta": meta,
        "base_time_ns": base_ns,
        "horizon": horizon,
        "events": history.len(),
        "malformed_rows": parsed.malformed,
        "classify": {
            "dropped_halts": classify_stats.dropped_halts,
            "dropped_cross_trades": classify_stats.dropped_cross_trades,
            "dropped_unmoved_limit_rows": classify_stats.dropped_unmoved_limit_rows,
            "skipped_degenerate_books": classify_stats.skipped_degenerate_books,
        },
        "dedup": {
            "absorbed_price_moves": dedup_stats.absorbed_price_moves,
            "dropped_cancelling_groups": dedup_stats.dropped_cancelling_groups,
            "nudged_ties": dedup_stats.nudged_ties,
        },
        "report": report,
    });
    write_json_value(&dir.join(format!("{stem}_report.json")), &report_value)?;
    write_text(&dir.join(format!("{stem}_qq.csv")), &residuals_csv(&meta, &diagnostics))?;
    write_events_csv(&events, &dir.join(format!("{stem}_events.csv")), &meta.header_lines())
        .map_err(input_err)?;
    write_volumes_csv(
        &events,
        args.depth,
        &dir.join(format!("{stem}_volumes.csv")),
        &meta.header_lines(),
    )
    .map_err(input_err)?;
    Ok(())
}

// --- liquidate ---------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioConfig {
    #[serde(rename = "Q0")]
    q0: f64,
    nu0: f64,
    a: f64,
    c: f64,
    #[serde(default)]
    t0: f64,
    horizon: f64,
    seed: u64,
    #[serde(default = "default_paths")]
    paths: usize,
    #[serde(default)]
    initial_state: Option<usize>,
}

fn default_paths() -> usize {
    100
}

struct PathResult {
    seed: u64,
    tau: Option<f64>,
    score: f64,
    completed: bool,
    executed: f64,
    fills: Vec<sdhawkes::hawkes::LiquidatorFill>,
    grid_values: Vec<f64>,
}

/// Runs the scenario paths, optionally writing one profile CSV per path.
#[allow(clippy::too_many_arguments)]
fn run_scenario(
    model: &MarketModel,
    config: &LiquidationConfig,
    horizon: f64,
    paths: usize,
    seed: u64,
    initial_state: usize,
    grid_points: usize,
    per_path_output: Option<(&Path, &Meta, f64, i64)>,
) -> Result<(Vec<PathResult>, Vec<f64>), CliError> {
    let (params, transitions) = model.with_liquidator(config).map_err(numerical_err)?;
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| {
            config.start_time + (horizon - config.start_time) * i as f64 / (grid_points - 1) as f64
        })
        .collect();
    let mut results = Vec::with_capacity(paths);
    for path in 0..paths {
        let path_seed = derive_seed(seed, path as u64);
        let outcome = simulate_with_liquidator(
            &params,
            &transitions,
            config,
            &model.gamma,
            initial_state,
            horizon,
            path_seed,
        )
        .map_err(numerical_err)?;
        if outcome.fills.is_empty() {
            results.push(PathResult {
                seed: path_seed,
                tau: None,
                score: 0.0,
                completed: false,
                executed: 0.0,
                fills: Vec::new(),
                grid_values: vec![0.0; grid.len()],
            });
            continue;
        }
        let evaluator = ImpactEvaluator::new(model, config, &outcome).map_err(numerical_err)?;
        // Transient window: up to twice the execution span past termination.
        let profile_horizon = match outcome.termination {
            Some(tau) => (tau + 2.0 * (tau - config.start_time)).min(horizon),
            None => horizon,
        };
        let profile = evaluator.impact_profile(profile_horizon, &grid);
        if let Some((dir, meta, mid0, tick_size)) = per_path_output {
            let mut csv = csv_header(meta, "time,dir,indir,profile,inventory,midprice_proxy");
            let mut fill_idx = 0usize;
            let mut executed = 0.0f64;
            let mut proxy = mid0;
            let mut ev_idx = 0usize;
            for (i, &t) in profile.breakpoints.iter().enumerate() {
                while fill_idx < outcome.fills.len() && outcome.fills[fill_idx].time <= t {
                    executed += outcome.fills[fill_idx].size;
                    fill_idx += 1;
                }
                while ev_idx < outcome.history.events.len()
                    && outcome.history.events[ev_idx].time <= t
                {
                    let ev = &outcome.history.events[ev_idx];
                    let state = sdhawkes::lob::StateVariable::from_flat(ev.state_after, model.k)
                        .map_err(numerical_err)?;
                    proxy += tick_size as f64 / 2.0 * state.x1 as f64;
                    ev_idx += 1;
                }
                let inventory = (config.inventory - executed).max(0.0);
                let _ = writeln!(
                    csv,
                    "{t},{},{},{},{inventory},{proxy}",
                    profile.dir_series[i], profile.indir_series[i], profile.values[i]
                );
            }
            write_text(&dir.join(format!("path_{path:04}.csv")), &csv)?;
        }
        results.push(PathResult {
            seed: path_seed,
            tau: outcome.termination,
            score: profile.score,
            completed: outcome.completed,
            executed: outcome.executed,
            fills: outcome.fills,
            grid_values: grid.iter().map(|&t| profile.value_before(t)).collect(),
        });
    }
    Ok((results, grid))
}

fn score_stats(results: &[PathResult]) -> (f64, f64) {
    let n = results.len().max(1) as f64;
    let mean = results.iter().map(|r| r.score).sum::<f64>() / n;
    let var = results.iter().map(|r| (r.score - mean) * (r.score - mean)).sum::<f64>()
        / (results.len().max(2) - 1) as f64;
    (mean, var.sqrt())
}

fn quantile_of(mut column: Vec<f64>, q: f64) -> f64 {
    column.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (column.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        column[lo]
    } else {
        column[lo] + (pos - lo as f64) * (column[hi] - column[lo])
    }
}

fn cmd_liquidate(args: LiquidateArgs) -> Result<(), CliError> {
    let model = MarketModel::read_json(&args.model).map_err(input_err)?;
    let config =
        LiquidationConfig::new(args.q0, args.nu0, args.a, args.c, args.t0).map_err(input_err)?;
    if args.paths == 0 {
        return Err(CliError::Input("paths must be positive".into()));
    }
    if !(args.horizon > args.t0) {
        return Err(CliError::Input("horizon must exceed the start time".into()));
    }
    let initial_state = args
        .initial_state
        .unwrap_or_else(|| sdhawkes::lob::StateVariable::new(0, 0, model.k).unwrap().flat_index());
    if initial_state >= model.d_s() {
        return Err(CliError::Input(format!("initial state {initial_state} out of range")));
    }
    let config_string = format!(
        "liquidate model={} Q0={} nu0={} a={} c={} t0={} horizon={} seed={} paths={} \
         initial_state={initial_state} mid0={} tick_size={}",
        args.model.display(),
        args.q0,
        args.nu0,
        args.a,
        args.c,
        args.t0,
        args.horizon,
        args.seed,
        args.paths,
        args.mid0,
        args.tick_size,
    );
    let meta = Meta::new(&config_string, args.seed);
    ensure_dir(&args.out)?;

    let (results, grid) = run_scenario(
        &model,
        &config,
        args.horizon,
        args.paths,
        args.seed,
        initial_state,
        201,
        Some((&args.out, &meta, args.mid0, args.tick_size)),
    )?;

    let (mean_score, sd_score) = score_stats(&results);
    let completed = results.iter().filter(|r| r.completed).count();
    let mean_tau = {
        let taus: Vec<f64> = results.iter().filter_map(|r| r.tau).collect();
        if taus.is_empty() {
            None
        } else {
            Some(taus.iter().sum::<f64>() / taus.len() as f64)
        }
    };
    // Liquidator transition estimate pooled over every path's fills, reported
    // as the full matrix and as the mid-move marginal by imbalance bucket.
    let pooled: Vec<sdhawkes::hawkes::LiquidatorFill> =
        results.iter().flat_map(|r| r.fills.iter().copied()).collect();
    let phi0_block = if pooled.is_empty() {
        serde_json::Value::Null
    } else {
        let est = sdhawkes::impact::estimate_phi0(&pooled, model.d_s()).map_err(numerical_err)?;
        let partition = sdhawkes::impact::StatePartition::new(model.k);
        let mut marginal = Vec::new();
        for x2 in -((model.k as i32 - 1) / 2)..=((model.k as i32 - 1) / 2) {
            // Average the x1-move probabilities over source states sharing x2.
            let mut down = 0.0;
            let mut up = 0.0;
            let mut weight = 0;
            for x1 in -1..=1 {
                let from = sdhawkes::lob::StateVariable::new(x1, x2, model.k)
                    .unwrap()
                    .flat_index();
                if est.flagged_rows.contains(&from) {
                    continue;
                }
                let row = est.row(from);
                down += partition.deflationary_mass(row);
                up += partition.inflationary.iter().map(|&x| row[x]).sum::<f64>();
                weight += 1;
            }
            let w = weight.max(1) as f64;
            marginal.push(serde_json::json!({
                "x2": x2,
                "p_down": down / w,
                "p_flat": 1.0 - (down + up) / w,
                "p_up": up / w,
                "visited_rows": weight,
            }));
        }
        serde_json::json!({
            "matrix": (0..model.d_s()).map(|from| est.row(from).to_vec()).collect::<Vec<_>>(),
            "flagged_rows": est.flagged_rows,
            "midprice_move_by_bucket": marginal,
        })
    };

    let summary = serde_json::json!({
        "schema_version": MODEL_SCHEMA_VERSION,
        "meta": meta,
        "Q0": args.q0,
        "nu0": args.nu0,
        "a": args.a,
        "c": args.c,
        "t0": args.t0,
        "horizon": args.horizon,
        "tau": mean_tau,
        "score": mean_score,
        "converged": completed == results.len(),
        "score_sd": sd_score,
        "completed_paths": completed,
        "phi0": phi0_block,
        "paths": results.iter().enumerate().map(|(i, r)| serde_json::json!({
            "path": i,
            "seed": r.seed,
            "tau": r.tau,
            "score": r.score,
            "converged": r.completed,
            "executed": r.executed,
            "fills": r.fills.len(),
        })).collect::<Vec<_>>(),
    });
    write_json_value(&args.out.join("summary.json"), &summary)?;

    if args.paths > 1 {
        let mut csv = csv_header(&meta, "time,q25,median,q75");
        for (i, &t) in grid.iter().enumerate() {
            let column: Vec<f64> = results.iter().map(|r| r.grid_values[i]).collect();
            let _ = writeln!(
                csv,
                "{t},{},{},{}",
                quantile_of(column.clone(), 0.25),
                quantile_of(column.clone(), 0.5),
                quantile_of(column, 0.75)
            );
        }
        write_text(&args.out.join("quantiles.csv"), &csv)?;
    }
    Ok(())
}

// --- stress ------------------------------------------------------------------

fn cmd_stress(args: StressArgs) -> Result<(), CliError> {
    let model = MarketModel::read_json(&args.model).map_err(input_err)?;
    let scenario_text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| input_err(format!("reading {}: {e}", args.scenario.display())))?;
    let scenario: ScenarioConfig = serde_json::from_str(&scenario_text).map_err(input_err)?;
    let shocks: Vec<f64> = args
        .shock_grid
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| input_err(format!("bad shock grid: {e}")))?;
    if shocks.is_empty() {
        return Err(CliError::Input("shock grid is empty".into()));
    }
    let paths = args.paths.unwrap_or(scenario.paths);
    let config =
        LiquidationConfig::new(scenario.q0, scenario.nu0, scenario.a, scenario.c, scenario.t0)
            .map_err(input_err)?;
    let initial_state = scenario
        .initial_state
        .unwrap_or_else(|| sdhawkes::lob::StateVariable::new(0, 0, model.k).unwrap().flat_index());
    let config_string = format!(
        "stress model={} scenario={} shocks={:?} paths={paths}",
        args.model.display(),
        args.scenario.display(),
        shocks,
    );
    let meta = Meta::new(&config_string, scenario.seed);
    ensure_dir(&args.out)?;

    // Unshocked baseline, then the grid.
    let (baseline_results, _) = run_scenario(
        &model,
        &config,
        scenario.horizon,
        paths,
        scenario.seed,
        initial_state,
        101,
        None,
    )?;
    let (baseline_mean, baseline_sd) = score_stats(&baseline_results);

    let mut rows = Vec::new();
    for &shock in &shocks {
        let shocked = model.shocked(shock).map_err(numerical_err)?;
        let (results, _) = run_scenario(
            &shocked,
            &config,
            scenario.horizon,
            paths,
            scenario.seed,
            initial_state,
            101,
            None,
        )?;
        let (mean, sd) = score_stats(&results);
        let rel_change = if baseline_mean != 0.0 { mean / baseline_mean - 1.0 } else { 0.0 };
        let completed = results.iter().filter(|r| r.completed).count();
        rows.push(serde_json::json!({
            "shock": shock,
            "mean_score": mean,
            "sd_score": sd,
            "rel_change_vs_baseline": rel_change,
            "completed_paths": completed,
            "paths": paths,
        }));
    }

    let mut csv =
        csv_header(&meta, "shock,mean_score,sd_score,rel_change_vs_baseline,completed_paths,paths");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            row["shock"],
            row["mean_score"],
            row["sd_score"],
            row["rel_change_vs_baseline"],
            row["completed_paths"],
            row["paths"]
        );
    }
    write_text(&args.out.join("stress.csv"), &csv)?;
    write_json_value(
        &args.out.join("stress.json"),
        &serde_json::json!({
            "schema_version": MODEL_SCHEMA_VERSION,
            "meta": meta,
            "baseline": { "mean_score": baseline_mean, "sd_score": baseline_sd, "paths": paths },
            "scenario": scenario,
            "shocks": rows,
        }),
    )?;
    Ok(())
}

// --- diagnose ----------------------------------------------------------------

fn cmd_diagnose(args: DiagnoseArgs) -> Result<(), CliError> {
    let model = MarketModel::read_json(&args.model).map_err(input_err)?;
    let events = read_events_csv(&args.events, model.k).map_err(input_err)?;
    if events.is_empty() {
        return Err(CliError::Input(format!("no events in {}", args.events.display())));
    }
    let (history, base_ns) = assemble_history(&events)
        .ok_or_else(|| CliError::Input("events are not strictly increasing".into()))?;
    let horizon = history.events.last().map(|e| e.time).unwrap_or(0.0);
    let config_string = format!(
        "diagnose model={} events={} tick_size={}",
        args.model.display(),
        args.events.display(),
        args.tick_size,
    );
    let meta = Meta::new(&config_string, 0);
    ensure_dir(&args.out)?;

    let diagnostics =
        residual_diagnostics(&model.params, &history, horizon).map_err(numerical_err)?;
    write_text(&args.out.join("residuals.csv"), &residuals_csv(&meta, &diagnostics))?;

    // Mid-price proxy against the recorded mid. The proxy starts from the mid
    // implied before the first event.
    let mut csv = csv_header(&meta, "time_ns,recorded_mid,proxy_mid,diff");
    let p0 = events[0].mid - events[0].state.x1 as f64 * args.tick_size as f64 / 2.0;
    let mut proxy = p0;
    for ev in &events {
        proxy += args.tick_size as f64 / 2.0 * ev.state.x1 as f64;
        let diff = ev.mid - proxy;
        let _ = writeln!(csv, "{},{},{proxy},{diff}", ev.time_ns, ev.mid);
    }
    write_text(&args.out.join("proxy_vs_mid.csv"), &csv)?;

    let counts = history.counts_by_type(4, horizon);
    write_json_value(
        &args.out.join("diagnose.json"),
        &serde_json::json!({
            "schema_version": MODEL_SCHEMA_VERSION,
            "meta": meta,
            "base_time_ns": base_ns,
            "horizon": horizon,
            "events_by_type": counts,
            "spectral_radius": model.params.spectral_radius_heuristic(),
            "ks": diagnostics.by_type.iter().map(|t| serde_json::json!({
                "event_type": t.event_type + 1,
                "statistic": t.ks_statistic,
                "pvalue": t.ks_pvalue,
                "skipped": t.skipped,
                "residuals": t.residuals.len(),
            })).collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}

fn cmd_synthetic_model(args: SyntheticModelArgs) -> Result<(), CliError> {
    let model = MarketModel::synthetic_reference();
    model.write_json(&args.out).map_err(input_err)?;
    Ok(())
}
