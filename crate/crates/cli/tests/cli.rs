use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_faircompose"));
    c.env_remove("FAIRCOMPOSE_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = "
dataset:
  synth: {n: 600, d: 3, gap: -0.3, seed: 4}
models:
  - kind: logistic_regression
  - kind: naive_bayes
pipeline:
  pre: {name: Rew}
  post: {name: ROC}
explain: {count: 2, samples: 200}
seed: 9
";

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_reports_silently() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.yaml", SMALL);
    let out = dir.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    let json = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(json.contains("\"seed_source\": \"config\""));
}

#[test]
fn format_selects_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.yaml", SMALL);
    let out = dir.path().join("out");
    assert_eq!(run(&["run", "--config", s(&cfg), "--out", s(&out), "--format", "json"]).status.code(), Some(0));
    assert!(out.join("report.json").exists());
    assert!(!out.join("report.csv").exists());
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out), "--format", "xml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn relative_dataset_path_resolves_against_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("cfg");
    fs::create_dir(&sub).unwrap();
    let csv = dir.path().join("d.csv");
    let o = run(&["synth", "--n", "400", "--d", "3", "--gap", "-0.2", "--seed", "2", "--out", s(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    let stanza = String::from_utf8(o.stdout).unwrap();
    assert!(stanza.contains("protected: group"), "{stanza}");
    let text = "dataset:\n  path: ../d.csv\n  schema: {label: label, favorable: '1', protected: group, privileged: privileged}\nmodels: [{kind: nb}]\nexplain: {count: 0}\n";
    let cfg = write(&sub, "c.yaml", text);
    let o = run(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = run(&["run", "--config", "/definitely/missing.yaml", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let bad = write(dir.path(), "bad.yaml", &SMALL.replace("seed: 9", "sed: 9"));
    let o = run(&["run", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sed"));
    let dup = write(dir.path(), "dup.yaml", &SMALL.replace("post: {name: ROC}", "pre: {name: LFR}"));
    assert_eq!(run(&["validate", "--config", s(&dup)]).status.code(), Some(2));
    let eo = write(
        dir.path(),
        "eo.yaml",
        &SMALL.replace("pre: {name: Rew}", "in: {name: ExpGrad, constraint: equalized_odds}"),
    );
    assert_eq!(run(&["validate", "--config", s(&eo)]).status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn stage_failure_exits_three_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("post: {name: ROC}", "post: {name: CEOdds, params: {cost_tol: 0.0, cost: fpr}}");
    let cfg = write(dir.path(), "c.yaml", &text);
    let out = dir.path().join("o");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.contains("aborted: pre+post failed"), "{csv}");
}

#[test]
fn validate_prints_normalized_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.yaml", SMALL);
    let o = run(&["validate", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0));
    let y = String::from_utf8(o.stdout).unwrap();
    for key in ["splits:", "di_low: 0.8", "include_protected: true", "samples: 200"] {
        assert!(y.contains(key), "{key} missing from\n{y}");
    }
}

#[test]
fn seed_env_overrides_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.yaml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["run", "--config", s(&cfg), "--out", s(&a)]).status.code(), Some(0));
    let o = bin().env("FAIRCOMPOSE_SEED", "31").args(["run", "--config", s(&cfg), "--out", s(&b)]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let jb = fs::read_to_string(b.join("report.json")).unwrap();
    assert!(jb.contains("\"seed_source\": \"FAIRCOMPOSE_SEED\""));
    assert!(jb.contains("\"seed\": 31"));
    assert_ne!(fs::read_to_string(a.join("report.json")).unwrap(), jb);
    let o = bin().env("FAIRCOMPOSE_SEED", "x").args(["run", "--config", s(&cfg), "--out", s(&b)]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_reports_deltas_and_rejects_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.yaml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&["run", "--config", s(&cfg), "--out", s(&a)]);
    run(&["run", "--config", s(&cfg), "--out", s(&b)]);
    let delta = dir.path().join("delta.csv");
    let o = run(&["compare", "--a", s(&a), "--b", s(&b), "--out", s(&delta)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&delta).unwrap();
    assert!(text.starts_with("model,stage,metric,a,b,delta,status"));
    for line in text.lines().skip(1).filter(|l| !l.contains(",di,")) {
        let delta: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert_eq!(delta, 0.0, "{line}");
    }
    let other = write(dir.path(), "o.yaml", &SMALL.replace("kind: naive_bayes", "kind: decision_tree"));
    let c = dir.path().join("c");
    run(&["run", "--config", s(&other), "--out", s(&c)]);
    assert_eq!(run(&["compare", "--a", s(&a), "--b", s(&c), "--out", s(&delta)]).status.code(), Some(2));
    assert_eq!(run(&["compare", "--a", s(&a), "--b", "/no/such/dir", "--out", s(&delta)]).status.code(), Some(2));
}

#[test]
fn synth_rejects_out_of_range_gap() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    let o = run(&["synth", "--n", "500", "--gap", "-1.5", "--out", s(&p)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!p.exists());
}
