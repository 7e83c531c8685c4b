//! End-to-end tests of the command-line surface: pipeline wiring, output
//! schemas, exit codes, and bit-identical reruns.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdhawkes"))
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("sdhawkes_cli_tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_synthetic_model(dir: &Path) -> PathBuf {
    let path = dir.join("model.json");
    sdhawkes::model::MarketModel::synthetic_reference().write_json(&path).unwrap();
    path
}

#[test]
fn calibrate_golden_writes_model_and_reports() {
    let dir = tmp("calibrate_golden");
    let model_path = dir.join("model.json");
    let out = run(bin()
        .arg("calibrate")
        .arg("--messages")
        .arg(golden("golden_message.csv"))
        .arg("--orderbook")
        .arg(golden("golden_orderbook.csv"))
        .arg("--out")
        .arg(&model_path)
        .args(["--restarts", "1", "--max-iterations", "60"]));
    assert_success(&out);

    let model = sdhawkes::model::MarketModel::read_json(&model_path).unwrap();
    assert_eq!(model.d_e(), 4);
    assert_eq!(model.d_s(), 9);
    assert_eq!(model.k, 3);

    for suffix in ["_report.json", "_qq.csv", "_events.csv", "_volumes.csv"] {
        assert!(dir.join(format!("model{suffix}")).exists(), "missing model{suffix}");
    }
    // Header block with tool version, config hash and seed.
    let events = std::fs::read_to_string(dir.join("model_events.csv")).unwrap();
    assert!(events.starts_with("# tool_version="));
    assert!(events.contains("# config_hash="));
    assert!(events.contains("# seed="));

    // Re-running produces a bit-identical model document.
    let first = std::fs::read(&model_path).unwrap();
    let out = run(bin()
        .arg("calibrate")
        .arg("--messages")
        .arg(golden("golden_message.csv"))
        .arg("--orderbook")
        .arg(golden("golden_orderbook.csv"))
        .arg("--out")
        .arg(&model_path)
        .args(["--restarts", "1", "--max-iterations", "60"]));
    assert_success(&out);
    let second = std::fs::read(&model_path).unwrap();
    assert_eq!(first, second);
}

#[test]
fn calibrate_missing_file_exits_two_with_error_json() {
    let dir = tmp("calibrate_missing");
    let out = run(bin()
        .arg("calibrate")
        .arg("--messages")
        .arg(dir.join("absent.csv"))
        .arg("--orderbook")
        .arg(golden("golden_orderbook.csv"))
        .arg("--out")
        .arg(dir.join("model.json")));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let err: serde_json::Value = serde_json::from_str(stderr.trim()).expect("error is JSON");
    assert_eq!(err["kind"], "input");
    assert!(err["error"].as_str().unwrap().contains("absent.csv"));
}

#[test]
fn liquidate_scenario_shape_and_determinism() {
    let dir = tmp("liquidate_det");
    let model = write_synthetic_model(&dir);
    let out_dir = dir.join("runs");
    let args = |out: &Path| {
        let mut c = bin();
        c.arg("liquidate")
            .arg("--model")
            .arg(&model)
            .args(["--Q0", "0.2", "--nu0", "0.03", "--a", "0", "--c", "0.075"])
            .args(["--horizon", "2500", "--seed", "7", "--paths", "3"])
            .arg("--out")
            .arg(out);
        c
    };
    assert_success(&run(&mut args(&out_dir)));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    // Table-7-style summary: parameters, termination, score and the phi0 block.
    assert_eq!(summary["Q0"], 0.2);
    assert_eq!(summary["nu0"], 0.03);
    assert_eq!(summary["a"], 0.0);
    assert_eq!(summary["c"], 0.075);
    assert!(summary["tau"].is_number());
    assert!(summary["score"].is_number());
    assert!(summary["converged"].is_boolean());
    assert!(summary["phi0"]["matrix"].is_array());
    assert!(summary["phi0"]["midprice_move_by_bucket"].is_array());
    assert_eq!(summary["paths"].as_array().unwrap().len(), 3);
    assert!(out_dir.join("quantiles.csv").exists());
    for i in 0..3 {
        let path_csv = out_dir.join(format!("path_{i:04}.csv"));
        let text = std::fs::read_to_string(&path_csv).unwrap();
        assert!(text.contains("time,dir,indir,profile,inventory,midprice_proxy"));
    }

    // Identical reruns are bit-identical across every artifact.
    let rerun_dir = dir.join("rerun");
    assert_success(&run(&mut args(&rerun_dir)));
    for name in ["summary.json", "quantiles.csv", "path_0000.csv", "path_0002.csv"] {
        let a = std::fs::read(out_dir.join(name)).unwrap();
        let b = std::fs::read(rerun_dir.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn liquidate_clustering_scenario_runs() {
    let dir = tmp("liquidate_cluster");
    let model = write_synthetic_model(&dir);
    let out_dir = dir.join("runs");
    let out = run(bin()
        .arg("liquidate")
        .arg("--model")
        .arg(&model)
        .args(["--Q0", "0.1", "--nu0", "0", "--a", "0.25", "--c", "0.015"])
        .args(["--horizon", "4000", "--seed", "11", "--paths", "2"])
        .arg("--out")
        .arg(&out_dir));
    assert_success(&out);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["nu0"], 0.0);
    assert_eq!(summary["a"], 0.25);
}

#[test]
fn liquidate_rejects_bad_inventory() {
    let dir = tmp("liquidate_bad");
    let model = write_synthetic_model(&dir);
    let out = run(bin()
        .arg("liquidate")
        .arg("--model")
        .arg(&model)
        .args(["--Q0", "0", "--nu0", "0.03", "--a", "0", "--c", "0.075"])
        .args(["--horizon", "100", "--seed", "1", "--paths", "1"])
        .arg("--out")
        .arg(dir.join("x")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stress_grid_covers_baseline_and_shocks() {
    let dir = tmp("stress");
    let model = write_synthetic_model(&dir);
    let scenario = dir.join("scenario.json");
    std::fs::write(
        &scenario,
        r#"{"Q0": 0.15, "nu0": 0.05, "a": 0.0, "c": 0.2, "t0": 0.0, "horizon": 600.0, "seed": 5, "paths": 3}"#,
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = run(bin()
        .arg("stress")
        .arg("--model")
        .arg(&model)
        .arg("--scenario")
        .arg(&scenario)
        .arg("--shock-grid=-0.05,0,0.05")
        .arg("--out")
        .arg(&out_dir));
    assert_success(&out);
    let csv = std::fs::read_to_string(out_dir.join("stress.csv")).unwrap();
    assert!(csv.contains("shock,mean_score,sd_score,rel_change_vs_baseline"));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("stress.json")).unwrap())
            .unwrap();
    let shocks = doc["shocks"].as_array().unwrap();
    assert_eq!(shocks.len(), 3);
    // The zero shock is the baseline by construction.
    let zero = shocks.iter().find(|s| s["shock"] == 0.0).unwrap();
    assert_eq!(zero["rel_change_vs_baseline"], 0.0);
    assert!(shocks.iter().any(|s| s["shock"] == -0.05));
    assert!(shocks.iter().any(|s| s["shock"] == 0.05));
    for s in shocks {
        assert!(s["sd_score"].is_number());
        assert!(s["mean_score"].is_number());
    }
}

#[test]
fn diagnose_writes_reports_and_rejects_empty_events() {
    let dir = tmp("diagnose");
    let model_path = write_synthetic_model(&dir);

    // Produce an events file via calibrate on the golden pair.
    let cal_model = dir.join("golden").join("model.json");
    std::fs::create_dir_all(cal_model.parent().unwrap()).unwrap();
    assert_success(&run(bin()
        .arg("calibrate")
        .arg("--messages")
        .arg(golden("golden_message.csv"))
        .arg("--orderbook")
        .arg(golden("golden_orderbook.csv"))
        .arg("--out")
        .arg(&cal_model)
        .args(["--restarts", "1", "--max-iterations", "40"])));
    let events = cal_model.parent().unwrap().join("model_events.csv");

    let out_dir = dir.join("out");
    assert_success(&run(bin()
        .arg("diagnose")
        .arg("--model")
        .arg(&model_path)
        .arg("--events")
        .arg(&events)
        .arg("--out")
        .arg(&out_dir)));
    for name in ["residuals.csv", "proxy_vs_mid.csv", "diagnose.json"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("diagnose.json")).unwrap())
            .unwrap();
    assert!(doc["spectral_radius"].is_number());
    assert_eq!(doc["ks"].as_array().unwrap().len(), 4);

    // Empty events file: exit 2.
    let empty = dir.join("empty.csv");
    std::fs::write(&empty, "time_ns,event_type,x1,x2,imbalance,mid\n").unwrap();
    let out = run(bin()
        .arg("diagnose")
        .arg("--model")
        .arg(&model_path)
        .arg("--events")
        .arg(&empty)
        .arg("--out")
        .arg(dir.join("out2")));
    assert_eq!(out.status.code(), Some(2));
}
