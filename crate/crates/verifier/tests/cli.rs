use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::AtomicBool;

use appi_verify::cli::cmd_verify;
use appi_verify::config::AppConfig;
use appi_verify::manifest::{RunManifest, RunStatus};
use appi_verify_core::metrics::EvaluationReport;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_appi-verify"))
        .current_dir(dir)
        .args(args)
        .env("APPI_CLI_TEST_KEY", "sk-test")
        .output()
        .unwrap()
}

fn stdout_path(out: &Output) -> PathBuf {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().lines().last().unwrap().trim())
}

fn generate(dir: &Path) -> PathBuf {
    dir.join(stdout_path(&bin(dir, &["--out", "runs", "generate"]))).join("corpus.jsonl")
}

#[test]
fn full_pipeline_writes_complete_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let corpus = generate(d);
    let corpus_s = corpus.to_str().unwrap();

    let single = stdout_path(&bin(d, &["--mode", "single", "verify", "--corpus", corpus_s, "--flip", "0.3"]));
    let multi = stdout_path(&bin(d, &["--mode", "multi", "verify", "--corpus", corpus_s, "--flip", "0.3"]));
    assert!(single.ends_with("verify-single-0001"));
    assert!(multi.ends_with("verify-multi-0001"));
    for run in [&single, &multi] {
        let m = RunManifest::load_verified(&d.join(run)).unwrap();
        assert_eq!(m.status, RunStatus::Complete);
        assert!(m.corpus_manifest_hash.is_some());
    }

    let sd = d.join(&single).join("decisions.jsonl");
    let md = d.join(&multi).join("decisions.jsonl");
    let eval = d.join(stdout_path(&bin(
        d,
        &["evaluate", "--corpus", corpus_s, "--decisions", sd.to_str().unwrap(), md.to_str().unwrap()],
    )));
    for f in ["report-single.json", "report-multi.json", "comparison.md", "cases-multi.csv"] {
        assert!(eval.join(f).exists(), "{f}");
    }
    let multi_report: EvaluationReport =
        serde_json::from_str(&std::fs::read_to_string(eval.join("report-multi.json")).unwrap()).unwrap();
    let single_report: EvaluationReport =
        serde_json::from_str(&std::fs::read_to_string(eval.join("report-single.json")).unwrap()).unwrap();
    assert_eq!(multi_report.cases, 200);
    for r in [&single_report, &multi_report] {
        assert!(r.overall.accuracy > 0.5 && r.overall.accuracy < 1.0);
        assert!((r.overall.recall - r.overall.accuracy).abs() < 1e-12);
    }

    let cmp = bin(
        d,
        &["compare", eval.join("report-single.json").to_str().unwrap(), eval.join("report-multi.json").to_str().unwrap()],
    );
    assert!(cmp.status.success());
    assert!(String::from_utf8_lossy(&cmp.stdout).contains("| Multi-Agent |"));

    let cal = bin(d, &["calibrate", "--corpus", corpus_s, "--decisions", md.to_str().unwrap()]);
    assert!(cal.status.success());
}

#[test]
fn missing_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(tmp.path(), &["verify", "--corpus", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn configuration_problems_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.toml"), "paralel = 3\n").unwrap();
    assert_eq!(bin(d, &["--config", "bad.toml", "generate"]).status.code(), Some(3));
    assert_eq!(bin(d, &["generate", "--edge-fraction", "1.5"]).status.code(), Some(3));
    assert_eq!(bin(d, &["verify", "--corpus", "x.jsonl", "--flip", "0.7"]).status.code(), Some(3));
    assert_eq!(bin(d, &["--mode", "triple", "generate"]).status.code(), Some(3));
    assert_eq!(bin(d, &["--config", "missing.toml", "generate"]).status.code(), Some(2));
}

#[test]
fn corrupted_corpus_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let corpus = generate(d);
    let text = std::fs::read_to_string(&corpus).unwrap();
    let broken = text.replacen("\"ground_truth\":\"COMPLIANT\"", "\"ground_truth\":\"NON_COMPLIANT\"", 1);
    assert_ne!(text, broken);
    let copy = d.join("edited.jsonl");
    std::fs::write(&copy, broken).unwrap();
    let out = bin(d, &["verify", "--corpus", copy.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":1:"));

    // Editing a corpus that has a sidecar manifest is caught by the hash check.
    std::fs::write(&corpus, text.replacen("a", "b", 1)).unwrap();
    assert_eq!(bin(d, &["verify", "--corpus", corpus.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn unreachable_model_exits_5_after_writing_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let corpus = generate(d);
    std::fs::write(
        d.join("llm.toml"),
        "backend = \"llm\"\n[llm]\nendpoint_url = \"http://127.0.0.1:1/v1/chat/completions\"\napi_key_env = \"APPI_CLI_TEST_KEY\"\nmax_retries = 0\ntimeout_secs = 2.0\nbackoff_base_secs = 0.0\n",
    )
    .unwrap();
    let small = d.join("small.jsonl");
    let lines: Vec<String> = std::fs::read_to_string(&corpus).unwrap().lines().take(2).map(str::to_owned).collect();
    std::fs::write(&small, lines.join("\n") + "\n").unwrap();
    let out = bin(d, &["--config", "llm.toml", "verify", "--corpus", small.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
    let run = d.join("runs/verify-multi-0001");
    let decisions = std::fs::read_to_string(run.join("decisions.jsonl")).unwrap();
    assert_eq!(decisions.lines().count(), 2);
    assert!(decisions.contains("NON_COMPLIANT"));
}

#[test]
fn missing_api_key_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(tmp.path(), &["--backend", "llm", "verify", "--corpus", "x.jsonl"]);
    // OPENAI_API_KEY may exist in a developer shell; only assert when it does not.
    if std::env::var("OPENAI_API_KEY").is_err() {
        assert_eq!(out.status.code(), Some(3));
    }
}

#[test]
fn interrupted_run_leaves_an_incomplete_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let corpus = generate(d);
    let run = cmd_verify(&AppConfig::default(), &corpus, &d.join("runs"), &AtomicBool::new(true)).unwrap();
    let m = RunManifest::load_verified(&run).unwrap();
    assert_eq!(m.status, RunStatus::Incomplete);
    assert!(m.notes.iter().any(|n| n.contains("interrupted")));
}
