mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::jet_eval;
use pisr::expr::PostfixExpr;

fn pisr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pisr")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_of_bundled_candidate_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = pisr(&["eval", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("eq7"));
    assert!(stdout.contains("no data"));
    assert!(dir.path().join("loss_report.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&pisr(&[])), 2);
    assert_eq!(code(&pisr(&["frobnicate"])), 2);
    assert_eq!(code(&pisr(&["gen-data"])), 2);
}

#[test]
fn malformed_candidate_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&pisr(&["eval", "--candidate", s(&bad)])), 2);
}

#[test]
fn unknown_operator_in_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[grammar]\nunary = [\"sech\", \"erf\"]\n").unwrap();
    let o = pisr(&["search", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("erf"));
}

#[test]
fn missing_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = pisr(&["resume", "--checkpoint", s(&dir.path().join("none.json"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn missing_dataset_is_an_error_unless_physics_only() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    assert_eq!(code(&pisr(&["eval", "--dataset", s(&missing)])), 2);

    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[problem]\nphysics_only = true\n").unwrap();
    let o = pisr(&["eval", "--config", s(&cfg), "--dataset", s(&missing)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn plot_data_columns_match_independent_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let plot = dir.path().join("p.csv");
    assert_eq!(code(&pisr(&["gen-data", "--out", s(&data)])), 0);
    let o = pisr(&["plot-data", "--dataset", s(&data), "--out", s(&plot)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let mut rdr = csv::Reader::from_path(&plot).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["x", "u", "n", "a", "density_model", "density_data", "a_data"]);
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 127);

    let golden: serde_json::Value = serde_json::from_str(pisr::cli::GOLDEN_JSON).unwrap();
    let c: Vec<f64> = serde_json::from_value(golden["constants"].clone()).unwrap();
    let u_src: Vec<String> = serde_json::from_value(golden["functions"][0]["postfix"].clone()).unwrap();
    let u = PostfixExpr::parse(&u_src.join(" ")).unwrap();
    let gamma0 = c[0];
    for &i in &[0usize, 30, 63, 90, 126] {
        let r = &rows[i];
        let uv = jet_eval(&u, r[0], &c).v;
        let a = uv.sinh() - 0.4 * gamma0 * uv.tanh();
        assert!((r[1] - uv).abs() <= 1e-12 * (1.0 + uv.abs()));
        assert!((r[3] - a).abs() <= 1e-10 * (1.0 + a.abs()), "row {i}: {} vs {a}", r[3]);
        // generated from the same candidate
        assert_eq!(r[3], r[6]);
        assert_eq!(r[4], r[5]);
    }
}

#[test]
fn plot_data_rejects_mismatched_grid() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[grid]\nn_points = 63\n").unwrap();
    assert_eq!(code(&pisr(&["gen-data", "--config", s(&cfg), "--out", s(&data)])), 0);
    let o = pisr(&["plot-data", "--dataset", s(&data), "--out", s(&dir.path().join("p.csv"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn planted_brute_force_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "[problem]\nkind = \"planted\"\ntarget = \"x sech\"\n\n[grammar]\ndepth = 2\nunary = [\"sech\", \"tanh\"]\nbinary = [\"add\", \"mul\"]\nleaves = [\"variable\"]\n\n[search]\ndriver = \"brute\"\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = pisr(&["search", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let best: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("best_candidate.json")).unwrap()).unwrap();
    assert_eq!(best["functions"][0]["postfix"], serde_json::json!(["x", "sech"]));
    assert!(out.join("config.toml").exists());
}

#[test]
fn resume_extends_a_search() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[search]\nmax_evaluations = 300\n\n[grammar]\ndepth = 2\n").unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&pisr(&["search", "--config", s(&cfg), "--out", s(&out)])), 0);
    let before = std::fs::read_to_string(out.join("trace.csv")).unwrap().lines().count();
    let o = pisr(&["resume", "--out", s(&out), "--max-evaluations", "600"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let after = std::fs::read_to_string(out.join("trace.csv")).unwrap().lines().count();
    assert!(after > before);
}
