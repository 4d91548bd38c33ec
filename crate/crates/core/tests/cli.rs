// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GEN: &str = "ar1:phi=0.95,n=8,len=128";

fn ant(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ant"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ANT_OUT_DIR")
        .output()
        .unwrap()
}

fn ok(output: &Output) {
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
}

fn find(dir: &Path, prefix: &str, suffix: &str) -> PathBuf {
    let mut hits: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let n = p.file_name().unwrap().to_string_lossy();
            n.starts_with(prefix) && n.ends_with(suffix)
        })
        .collect();
    assert_eq!(hits.len(), 1, "{prefix}*{suffix} in {hits:?}");
    hits.pop().unwrap()
}

fn rank_rows(dir: &Path) -> Vec<serde_json::Value> {
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(find(dir, "rank_", "seed0.json")).unwrap()).unwrap();
    json["results"].as_array().unwrap().clone()
}

#[test]
fn rank_default_grid_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = ant(&["rank", "--gen", GEN], dir.path());
    ok(&out);
    let rows = rank_rows(dir.path());
    assert_eq!(rows.len(), 35);
    let scores: Vec<f64> = rows.iter().map(|r| r["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));
    let csv = fs::read_to_string(find(dir.path(), "rank_", ".csv")).unwrap();
    assert_eq!(csv.lines().count(), 36);
    let winner: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(find(dir.path(), "rank_", "_winner.json")).unwrap()).unwrap();
    assert_eq!(winner["spec"], rows[0]["spec"]);
    assert_eq!(winner["beta"].as_array().unwrap().len() as u64, winner["T"].as_u64().unwrap());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 6);
}

#[test]
fn rank_max_steps_filters() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ant(&["rank", "--gen", GEN, "--max-steps", "50"], dir.path()));
    let rows = rank_rows(dir.path());
    assert_eq!(rows.len(), 21);
    for r in rows {
        let spec: ant_core::schedule::ScheduleSpec = r["spec"].as_str().unwrap().parse().unwrap();
        assert!(spec.steps() <= 50);
    }
}

#[test]
fn rank_explicit_grid_and_empty_filter() {
    let dir = tempfile::tempdir().unwrap();
    let grid_file = dir.path().join("grid.txt");
    fs::write(&grid_file, "# two candidates\nlin:T=10\ncos:T=20,tau=2.0\n").unwrap();
    let grid_arg = format!("@{}", grid_file.display());
    ok(&ant(&["rank", "--gen", GEN, "--grid", &grid_arg], dir.path()));
    assert_eq!(rank_rows(dir.path()).len(), 2);
    let other = tempfile::tempdir().unwrap();
    ok(&ant(&["rank", "--gen", GEN, "--grid", "lin:T=10;sig:T=20,tau=0.5;cos:T=10,tau=1.0"], other.path()));
    assert_eq!(rank_rows(other.path()).len(), 3);
    let none = ant(&["rank", "--gen", GEN, "--grid", "lin:T=100", "--max-steps", "20"], dir.path());
    assert_eq!(none.status.code(), Some(1));
}

#[test]
fn rank_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&ant(&["rank", "--gen", GEN, "--seed", "3", "--jobs", "1"], a.path()));
    ok(&ant(&["rank", "--gen", GEN, "--seed", "3", "--jobs", "3"], b.path()));
    for suffix in ["seed3.json", "seed3.csv", "_winner.json"] {
        assert_eq!(
            fs::read(find(a.path(), "rank_", suffix)).unwrap(),
            fs::read(find(b.path(), "rank_", suffix)).unwrap()
        );
    }
}

#[test]
fn curve_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ant(&["curve", "--gen", GEN, "--schedule", "cos:T=75,tau=2.0", "--svg"], dir.path()));
    let csv = fs::read_to_string(find(dir.path(), "curve_", ".csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,raw,normalized");
    assert_eq!(lines.len(), 76);
    assert!(lines[1].starts_with("1,") && lines[1].ends_with(",1"));
    let svg = fs::read_to_string(find(dir.path(), "curve_", ".svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn stats_on_alternating_series() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("alt.csv");
    fs::write(&data, "id,x1,x2,x3,x4\nalt,1,-1,1,-1\n").unwrap();
    ok(&ant(&["stats", "--data", data.to_str().unwrap(), "--stat", "lag1ac"], dir.path()));
    let csv = fs::read_to_string(find(dir.path(), "stats_alt", ".csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let value: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!(row.starts_with("alt,lag1ac,"));
    assert!((value + 0.75).abs() < 1e-12);
}

#[test]
fn stats_defaults_to_every_statistic() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ant(&["stats", "--gen", GEN], dir.path()));
    let csv = fs::read_to_string(find(dir.path(), "stats_", ".csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8 * 5);
}

#[test]
fn corrupt_rows_and_step_filter() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ant(&["corrupt", "--gen", "ar1:phi=0.9,n=2,len=16", "--schedule", "lin:T=10", "--steps", "1,10"], dir.path()));
    let csv = fs::read_to_string(find(dir.path(), "corrupt_", ".csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("series_id,t,coord_index,value"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 16);
    let bad = ant(&["corrupt", "--gen", GEN, "--schedule", "lin:T=10", "--steps", "11"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn toy_train_then_trace() {
    let dir = tempfile::tempdir().unwrap();
    let train = [
        "toy", "train", "--gen", GEN, "--schedule", "lin:T=20", "--window", "16", "--hidden", "16", "--steps", "50", "--batch", "8",
    ];
    ok(&ant(&train, dir.path()));
    let params = find(dir.path(), "toy-train_", "_params.json");
    let loss = fs::read_to_string(find(dir.path(), "toy-train_", "_loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 51);
    let p = params.to_str().unwrap();
    ok(&ant(&["toy", "trace", "--params", p, "--schedule", "lin:T=20", "--count", "4"], dir.path()));
    let trace = fs::read_to_string(find(dir.path(), "toy-trace_", ".csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 21);
    assert!(trace.lines().nth(1).unwrap().starts_with("20,"));
    assert!(trace.lines().last().unwrap().starts_with("0,"));
    find(dir.path(), "toy-trace_", ".svg");
    ok(&ant(&["toy", "sample", "--params", p, "--schedule", "lin:T=20", "--count", "3"], dir.path()));
    let samples = fs::read_to_string(find(dir.path(), "toy-sample_", ".csv")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 3 * 16);
}

#[test]
fn toy_ablate_and_proxy_reports() {
    let dir = tempfile::tempdir().unwrap();
    let ablate = [
        "toy", "ablate", "--gen", GEN, "--schedule", "cos:T=10,tau=1.0", "--window", "8", "--hidden", "8", "--steps", "20", "--batch",
        "4", "--samples", "2",
    ];
    ok(&ant(&ablate, dir.path()));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(find(dir.path(), "ablate_", ".json")).unwrap()).unwrap();
    assert_eq!(report["experiment"], "de-ablation");
    assert!(report["results"]["with_embedding"]["final_loss"].is_number());

    let proxy = ["proxy", "--gen", GEN, "--schedule", "lin:T=5", "--window", "16", "--epochs", "2", "--train-per-class", "8", "--test-per-class", "4"];
    ok(&ant(&proxy, dir.path()));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(find(dir.path(), "proxy_", "seed0.json")).unwrap()).unwrap();
    assert_eq!(report["results"]["confusion"].as_array().unwrap().len(), 5);
    let confusion = fs::read_to_string(find(dir.path(), "proxy_", "_confusion.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 1 + 25);
    let features = fs::read_to_string(find(dir.path(), "proxy_", "_features.csv")).unwrap();
    assert_eq!(features.lines().count(), 1 + 5 * 4 * 4 * 14);
}

#[test]
fn scan_writes_tables_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = ant(&["scan", "--gen", GEN, "--families", "lin:T=100;cos:T=100,tau=1.0", "--steps", "10,20"], dir.path());
    ok(&out);
    let summary = fs::read_to_string(find(dir.path(), "scan_", "_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let curves = fs::read_to_string(find(dir.path(), "scan_", "_curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2 * 30);
    find(dir.path(), "scan_", "_family0.svg");
    find(dir.path(), "scan_", "_family1.svg");
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ant"))
        .args(["score", "--gen", GEN, "--schedule", "lin:T=10"])
        .env("ANT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(find(dir.path(), "score_", ".json")).unwrap()).unwrap();
    assert_eq!(report["spec"], "lin:T=10");
    assert!(report["results"]["score"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ant(&["frobnicate"], dir.path()).status.code(), Some(2));
    let bad_schedule = ant(&["curve", "--gen", GEN, "--schedule", "cos:T=0"], dir.path());
    assert_eq!(bad_schedule.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&bad_schedule.stderr).is_empty());
    let no_data = ant(&["stats"], dir.path());
    assert_eq!(no_data.status.code(), Some(1));
    let bad_gen = ant(&["stats", "--gen", "walk:n=3"], dir.path());
    assert_eq!(bad_gen.status.code(), Some(1));
    let missing = ant(&["stats", "--data", "/nonexistent/x.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
}
