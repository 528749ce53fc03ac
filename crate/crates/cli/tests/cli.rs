use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use tempfile::TempDir;

fn dqam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqam")).current_dir(dir).args(args).output().expect("spawn dqam")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dqam(dir, args);
    assert!(
        out.status.success(),
        "dqam {args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr is empty");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not json ({e}): {line}"))
}

fn prepare(dir: &Path) {
    ok(dir, &["gen-data", "--model", "skewed", "--n", "400", "--len", "5", "--seed", "7", "--out", "data.csv"]);
    ok(dir, &["ingest", "--input", "data.csv", "--bbox", "0,0,1,1", "--resolution", "4", "--out", "true.json"]);
    ok(dir, &["gen-queries", "--hist", "true.json", "--count", "1000", "--seed", "11", "--out", "queries.json"]);
}

#[test]
fn full_pipeline_runs_quickly() {
    let dir = TempDir::new().unwrap();
    let start = Instant::now();
    prepare(dir.path());
    let stdout = ok(
        dir.path(),
        &[
            "synthesize",
            "--hist",
            "true.json",
            "--queries",
            "queries.json",
            "--epsilon",
            "0.5",
            "--seed",
            "3",
            "--out",
            "pub.json",
            "--trace",
            "trace.jsonl",
            "--partition-out",
            "part.json",
        ],
    );
    assert!(stdout.contains("\"seed\":3"), "effective config not printed: {stdout}");
    assert!(stdout.contains("violations=0"));
    ok(
        dir.path(),
        &[
            "evaluate",
            "--true",
            "true.json",
            "--published",
            "pub.json",
            "--queries",
            "queries.json",
            "--out",
            "eval.csv",
        ],
    );
    assert!(start.elapsed().as_secs_f64() < 60.0);

    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 10);
    let eval = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    let mut lines = eval.lines();
    assert_eq!(lines.next(), Some("avg_l1,kld,violations,queries"));
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(fields[2], "0");
    assert_eq!(fields[3], "1000");
    assert!(fields[0].parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn synthesize_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    prepare(dir.path());
    let run = |out: &str, seed: &str| {
        ok(
            dir.path(),
            &[
                "synthesize",
                "--hist",
                "true.json",
                "--queries",
                "queries.json",
                "--epsilon",
                "1",
                "--seed",
                seed,
                "--out",
                out,
            ],
        );
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let a = run("a.json", "5");
    let b = run("b.json", "5");
    let c = run("c.json", "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn self_evaluation_is_zero() {
    let dir = TempDir::new().unwrap();
    prepare(dir.path());
    let stdout = ok(
        dir.path(),
        &["evaluate", "--true", "true.json", "--published", "true.json", "--queries", "queries.json", "--out", "e.csv"],
    );
    assert!(stdout.contains("avg_l1=0 kld=0 violations=0"), "{stdout}");
}

#[test]
fn inputs_are_not_modified() {
    let dir = TempDir::new().unwrap();
    prepare(dir.path());
    let before = std::fs::read(dir.path().join("true.json")).unwrap();
    ok(
        dir.path(),
        &["synthesize", "--hist", "true.json", "--queries", "queries.json", "--epsilon", "1", "--out", "p.json"],
    );
    assert_eq!(before, std::fs::read(dir.path().join("true.json")).unwrap());
}

#[test]
fn inverted_bbox_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("d.csv"), "traj_id,seq,lat,lon\n").unwrap();
    let out =
        dqam(dir.path(), &["ingest", "--input", "d.csv", "--bbox", "1,0,0,1", "--resolution", "2", "--out", "h.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["category"], "validation");
    assert!(!dir.path().join("h.json").exists());
}

#[test]
fn missing_input_fails_before_work() {
    let dir = TempDir::new().unwrap();
    let out = dqam(
        dir.path(),
        &["synthesize", "--hist", "nope.json", "--queries", "q.json", "--epsilon", "1", "--out", "p.json"],
    );
    assert!(!out.status.success());
    assert_eq!(error_json(&out)["error"]["category"], "validation");
}

#[test]
fn non_positive_epsilon_is_rejected() {
    let dir = TempDir::new().unwrap();
    prepare(dir.path());
    let out = dqam(
        dir.path(),
        &["synthesize", "--hist", "true.json", "--queries", "queries.json", "--epsilon", "0", "--out", "p.json"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn header_only_csv_gives_empty_histogram() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("d.csv"), "traj_id,seq,lat,lon\n").unwrap();
    let stdout =
        ok(dir.path(), &["ingest", "--input", "d.csv", "--bbox", "0,0,1,1", "--resolution", "2", "--out", "h.json"]);
    assert!(stdout.contains("n=0 rejected=0"), "{stdout}");
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("h.json")).unwrap()).unwrap();
    assert_eq!(doc["n"], 0.0);
}

#[test]
fn malformed_histogram_is_a_format_error() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("h.json"), "{\"version\": 1").unwrap();
    let out = dqam(dir.path(), &["gen-queries", "--hist", "h.json", "--count", "10", "--out", "q.json"]);
    assert_eq!(error_json(&out)["error"]["category"], "format");
}

#[test]
fn experiment_writes_one_row_per_run() {
    let dir = TempDir::new().unwrap();
    let config = serde_json::json!({
        "mechanisms": ["dqam", "mwem_face", "lm"],
        "epsilons": [0.5, 1.0],
        "datasets": [{"name": "tiny", "model": "uniform", "n": 200, "mean_len": 4, "resolution": 3, "seed": 1}],
        "seeds": [1, 2],
        "T": 5,
        "query_count": 200
    });
    std::fs::write(dir.path().join("exp.json"), config.to_string()).unwrap();
    ok(dir.path(), &["experiment", "--config", "exp.json", "--out", "runs.csv", "--summary", "summary.csv"]);
    let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().next().unwrap(), "mechanism,epsilon,dataset,seed,avg_l1,kld,runtime_s,violations");
    assert_eq!(runs.lines().count(), 1 + 3 * 2 * 2);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3 * 2);
}
