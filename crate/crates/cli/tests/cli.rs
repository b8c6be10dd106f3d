use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rlmlab::automaton::fixtures;

fn rlmlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlmlab"))
        .args(args)
        .env_remove("RLMLAB_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = rlmlab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    files
}

#[test]
fn analyze_reports_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("geometric.json");
    fixtures::geometric(0.5).save(&path).unwrap();
    let stdout = ok(&["analyze", "--automaton", p(&path)]);
    assert!(stdout.contains("H = 2 bits"), "{stdout}");
    assert!(stdout.contains("E[len] = 1\n"), "{stdout}");

    let report: serde_json::Value = serde_json::from_str(&ok(&["analyze", "--automaton", p(&path), "--json"])).unwrap();
    assert!((report["report"]["entropy_bits"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn self_scores_give_kl_near_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["--seed", "5", "generate", "--states", "3", "--alphabet", "2", "--out-dir", p(&d.join("automata"))]);
    let automaton = json_files(&d.join("automata")).pop().expect("a kept member");
    let corpus = d.join("corpus.jsonl");
    let scores = d.join("scores.jsonl");
    ok(&["--seed", "6", "sample", "--automaton", p(&automaton), "--size", "3000", "--out", p(&corpus)]);
    ok(&["score", "--corpus", p(&corpus), "--automaton", p(&automaton), "--units", "bits", "--out", p(&scores)]);
    let kl: serde_json::Value =
        serde_json::from_str(&ok(&["kl", "--automaton", p(&automaton), "--corpus", p(&corpus), "--scores", p(&scores)]))
            .unwrap();
    let (k, se) = (kl["kl_bits"].as_f64().unwrap(), kl["stderr_bits"].as_f64().unwrap());
    assert!(k.abs() <= 3.0 * se, "kl {k} ± {se}");
}

#[test]
fn trained_model_can_be_scored() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let automaton = d.join("geometric.json");
    fixtures::geometric(0.5).save(&automaton).unwrap();
    let corpus = d.join("corpus.jsonl");
    let model = d.join("models/rnn.json");
    let scores = d.join("scores.jsonl");
    ok(&["--seed", "1", "sample", "--automaton", p(&automaton), "--size", "4000", "--min-test", "1000", "--out", p(&corpus)]);
    ok(&["--seed", "2", "train", "--corpus", p(&corpus), "--alphabet", "1", "--hidden", "3", "--epochs", "1", "--out", p(&model)]);
    ok(&["score", "--corpus", p(&corpus), "--model", p(&model), "--model-id", "rnn-D3", "--out", p(&scores)]);
    let kl: serde_json::Value =
        serde_json::from_str(&ok(&["kl", "--automaton", p(&automaton), "--corpus", p(&corpus), "--scores", p(&scores)]))
            .unwrap();
    assert!(kl["kl_bits"].as_f64().unwrap().is_finite());
    assert_eq!(kl["n_strings"].as_u64().unwrap(), 1000);
}

#[test]
fn usage_errors_exit_with_two() {
    let out = rlmlab(&["score", "--corpus", "c.jsonl", "--out", "s.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let out = rlmlab(&["export-plot", "--results", "r.tsv", "--rows", "R"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn domain_errors_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = rlmlab(&["generate", "--states", "0", "--alphabet", "2", "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_string() && err["message"].is_string(), "{err}");

    let out = rlmlab(&["analyze", "--automaton", p(&dir.path().join("missing.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");
}

#[test]
fn run_honours_output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("runs");
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{
  "generation": {"state_sizes": [2, 3], "alphabet_sizes": [1, 2], "master_seed": 3},
  "dataset": {"size": 400, "max_len": 256, "min_test": 150},
  "train": {"epochs": 1},
  "d_grid": [2, 3],
  "replicates": 3
}"#,
    )
    .unwrap();
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_rlmlab"))
            .args(["run", "--config", p(&config), "--report"])
            .env("RLMLAB_OUTPUT_DIR", &out_dir)
            .output()
            .unwrap()
    };
    let first = run();
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    let rows = summary["rows"].as_u64().unwrap();
    assert!(rows > 0);
    assert!(out_dir.join("results.tsv").exists());
    assert!(out_dir.join("manifest.json").exists());
    assert!(out_dir.join("plots/kl_bits__D_x_R.tsv").exists());
    assert_eq!(summary["plots"].as_array().unwrap().len(), 6);

    let second: serde_json::Value = serde_json::from_slice(&run().stdout).unwrap();
    assert_eq!(second["reused"].as_u64().unwrap(), rows);
    assert_eq!(second["recomputed"].as_u64().unwrap(), 0);
}

#[test]
fn export_plot_writes_grids() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.tsv");
    fs::write(
        &results,
        "automaton_id\tmodel_id\tD\t|Q|\t|Σ|\t|Q||Σ|\tR\texp_len\tmin(|Q|,|Σ|+1)\tH_bits\tkl_bits\tkl_stderr_bits\n\
         a\trnn-D2\t2\t2\t2\t4\t1\t1.5\t2\t3\t0.5\t0.1\n\
         b\trnn-D2\t2\t2\t2\t4\t2\t1.5\t2\t3\t1.5\t0.1\n\
         c\trnn-D4\t4\t2\t2\t4\t2\t1.5\t2\t3\t0.5\t0.1\n",
    )
    .unwrap();
    let plots = dir.path().join("plots");
    ok(&["export-plot", "--results", p(&results), "--rows", "D", "--cols", "R", "--value", "kl_bits", "--out-dir", p(&plots)]);
    let means = fs::read_to_string(plots.join("kl_bits__D_x_R.tsv")).unwrap();
    assert_eq!(means, "D\\R\t1\t2\n2\t0.5\t1.5\n4\tNA\t0.5\n");
    assert!(plots.join("kl_bits__D_x_R.counts.tsv").exists());
}
