use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pipeline/pipeline.toml")
}

fn evigraph(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evigraph"))
        .arg("--config")
        .arg(fixture_config())
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn stages_run_separately_match_a_full_run() {
    let staged = tempfile::tempdir().unwrap();
    for stage in ["ingest", "linearize", "augment", "retrieve", "select", "build-graphs", "train", "predict"] {
        ok(&evigraph(&[stage], staged.path()));
    }
    let eval = evigraph(&["evaluate"], staged.path());
    ok(&eval);

    let full = tempfile::tempdir().unwrap();
    let run = evigraph(&["run"], full.path());
    ok(&run);
    assert_eq!(eval.stdout, run.stdout);
    for name in ["predictions.jsonl", "metrics.json", "graphs_test.jsonl", "train_log.csv"] {
        let a = std::fs::read(staged.path().join(name)).unwrap();
        let b = std::fs::read(full.path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn later_stage_without_its_inputs_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = evigraph(&["build-graphs"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_corpus_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = evigraph(&["--corpus", "/nonexistent/corpus.jsonl", "ingest"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("corpus"));
}

#[test]
fn malformed_corpus_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"page_id\": \"A\", \"sentences\": [\"x\"]}\nnot json\n").unwrap();
    let o = evigraph(&["--corpus", bad.to_str().unwrap(), "ingest"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_config_key_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = evigraph(&["--set", "train.no_such_key=1", "ingest"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn linearize_one_page_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let o = evigraph(&["linearize", "--page", "Park Sang-in"], dir.path());
    ok(&o);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("The Player Honours for Park Sang-in includes K-League Best XI: 1985."));
    assert!(!dir.path().join("linearized.jsonl").exists());
}

#[test]
fn explain_lists_every_node() {
    let dir = tempfile::tempdir().unwrap();
    ok(&evigraph(&["run"], dir.path()));
    let o = evigraph(&["explain", "--claim", "0", "--json"], dir.path());
    ok(&o);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    let total: f64 = rows.iter().map(|r| r["gate_weight"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);

    let text = evigraph(&["explain", "--claim", "0"], dir.path());
    ok(&text);
    let text = String::from_utf8(text.stdout).unwrap();
    assert!(text.starts_with("claim 0: "));
    assert_eq!(text.lines().count(), 2 + rows.len());
}
