use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hara_core::io::save_project;
use hara_core::*;
use serde_json::{json, Value};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn hara(args: &[&str]) -> Run {
    let out: Output = Command::new(env!("CARGO_BIN_EXE_hara"))
        .args(args)
        .env_remove("HARA_API_KEY")
        .env("HARA_ACTOR", "cli-tester")
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn seeded(dir: &Path, name: &str, project: &Project) -> PathBuf {
    let path = dir.join(name);
    save_project(project, &path).unwrap();
    path
}

fn init_aeb(dir: &Path) -> PathBuf {
    let item = dir.join("aeb.json");
    std::fs::write(&item, golden::AEB_ITEM_JSON).unwrap();
    let out = dir.join("aeb.hara.json");
    let r = hara(&["init", "--item", s(&item), "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    out
}

#[test]
fn init_and_ingest_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = init_aeb(dir.path());
    assert_eq!(load_project(&p).unwrap().requirements.len(), 5);
    assert_eq!(load_project(&p).unwrap().stage, Stage::FunctionExtraction);

    let r = hara(&["init", "--item", "/nonexistent/item.json", "--out", s(&dir.path().join("x.json"))]);
    assert!(r.code != 0 && r.stderr.contains("IoError"), "{}", r.stderr);

    let dup = dir.path().join("dup.csv");
    std::fs::write(&dup, "type,id,description\nrequirement,PR1,a\nrequirement,PR1,b\nodd,Speed,x\n").unwrap();
    let r = hara(&["init", "--item", s(&dup), "--out", s(&dir.path().join("y.json"))]);
    assert!(r.stderr.contains("DuplicateRequirementId"), "{}", r.stderr);
    assert_eq!(hara(&["init", "--item", s(&dup)]).code, 2);
}

#[test]
fn generate_review_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = init_aeb(dir.path());
    let r = hara(&["--json", "generate", "--project", s(&p)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let batch: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(batch["item_ids"].as_array().unwrap().len(), 4);

    let r = hara(&["generate", "--project", s(&p)]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("StageHasPendingReviews"));

    let decisions = dir.path().join("d.json");
    std::fs::write(&decisions, json!([{"item_ref": "F1", "decision": "accept"}, {"item_ref": "F9", "decision": "accept"}]).to_string()).unwrap();
    let r = hara(&["review", "--project", s(&p), "--batch", s(&decisions)]);
    assert_eq!(r.code, 4, "{}", r.stderr);
    // The failed batch applied nothing.
    assert_eq!(load_project(&p).unwrap().pending_at(Stage::FunctionExtraction), 4);

    std::fs::write(&decisions, json!([{"item_ref": "F1", "decision": "reject"}, {"item_ref": "F2", "decision": "accept", "note": "ok"}]).to_string()).unwrap();
    assert_eq!(hara(&["review", "--project", s(&p), "--batch", s(&decisions)]).code, 0);
    let project = load_project(&p).unwrap();
    assert_eq!(project.function("F1").unwrap().status, ReviewStatus::Rejected);
    assert_eq!(project.function("F2").unwrap().status, ReviewStatus::Accepted);
    assert_eq!(project.audit.entries().last().unwrap().actor.id, "cli-tester");

    let r = hara(&["review", "--project", s(&p), "--accept-all"]);
    assert_eq!(r.code, 0);
    assert!(r.stderr.contains("without individual review"));
    let r = hara(&["review", "--project", s(&p), "--accept-all"]);
    assert_eq!(r.code, 0);
    assert!(!r.stderr.contains("without individual review"));

    assert_eq!(hara(&["advance", "--project", s(&p)]).code, 0);
    let r = hara(&["generate", "--project", s(&p), "--backend", "remote", "--endpoint", "http://127.0.0.1:9/", "--model", "m"]);
    assert!(r.code != 0 && r.stderr.contains("HARA_API_KEY"), "{}", r.stderr);
    assert_eq!(hara(&["generate", "--project", s(&p), "--backend", "bogus"]).code, 1);
}

#[test]
fn rating_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = seeded(dir.path(), "raw.json", &golden::tables_corpus());
    let why = dir.path().join("why.txt");
    std::fs::write(&why, "Pedestrian struck at highway speed").unwrap();
    let r = hara(&["rate", "--project", s(&p), "--hazard", "H1", "--s", "S3", "--e", "E4", "--c", "C3", "--rationale-file", s(&why)]);
    assert_eq!((r.code, r.stdout.trim()), (0, "ASIL D"), "{}", r.stderr);
    let r = hara(&["rate", "--project", s(&p), "--hazard", "H2", "--s", "S0", "--e", "E4", "--c", "C3", "--rationale", "no injury"]);
    assert_eq!(r.stdout.trim(), "QM");
    let r = hara(&["rate", "--project", s(&p), "--hazard", "H3", "--s", "S3", "--e", "E4", "--c", "C3"]);
    assert!(r.code != 0 && r.stderr.contains("MissingRationale"), "{}", r.stderr);
    assert_eq!(hara(&["rate", "--project", s(&p), "--hazard", "H99", "--s", "S3", "--e", "E4", "--c", "C3", "--rationale", "x"]).code, 4);
}

#[test]
fn validate_and_gate() {
    let dir = tempfile::tempdir().unwrap();
    let p = seeded(dir.path(), "raw.json", &golden::tables_corpus());
    let r = hara(&["validate", "--project", s(&p)]);
    assert_eq!(r.code, 0);
    assert_eq!(r.stdout.lines().filter(|l| l.contains("HZ-1")).count(), 1);
    assert!(r.stdout.contains("Braking Stopped too late"));
    let r = hara(&["advance", "--project", s(&p)]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("error HZ-1"));

    let mut broken = golden::completed_corpus();
    broken.safety_goals[0].item.asil = Some(Asil::A);
    let q = seeded(dir.path(), "broken.json", &broken);
    assert_eq!(hara(&["validate", "--project", s(&q)]).code, 3);
}

#[test]
fn reads_on_completed_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let p = seeded(dir.path(), "done.json", &golden::completed_corpus());
    assert!(hara(&["metrics", "--project", s(&p)]).stdout.contains("safety goals: 12 (10 ASIL-rated)"));
    let m: Value = serde_json::from_str(&hara(&["--json", "metrics", "--project", s(&p)]).stdout).unwrap();
    assert_eq!(m["asil_rated_goal_count"], 10);

    let md = hara(&["export", "--project", s(&p), "--format", "md"]).stdout;
    assert!(md.contains("SG 1"));
    let out = dir.path().join("r.csv");
    assert_eq!(hara(&["export", "--project", s(&p), "--format", "csv", "--out", s(&out)]).code, 0);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1 + 4 + 19 + 18 + 12);
    assert_eq!(hara(&["export", "--project", s(&p), "--format", "pdf"]).code, 1);

    let path = hara(&["trace", "--project", s(&p), "--requirement", "PR1", "--goal", "SG1"]).stdout;
    assert!(path.starts_with("PR1 -> F1 (Obstacle Detection) -> M1 (Obstacle not detected) -> H1 -> SG1"), "{path}");
    assert_eq!(hara(&["trace", "--project", s(&p), "--requirement", "PR9", "--goal", "SG1"]).code, 4);

    let board: Value = serde_json::from_str(&hara(&["--json", "status", "--project", s(&p)]).stdout).unwrap();
    assert_eq!(board["stage"], "Complete");

    let lines = hara(&["audit", "--project", s(&p), "--jsonl"]).stdout;
    assert_eq!(lines.lines().count(), golden::completed_corpus().audit.len());
    let rates = hara(&["--json", "audit", "--project", s(&p), "--action", "rate"]).stdout;
    assert_eq!(serde_json::from_str::<Value>(&rates).unwrap().as_array().unwrap().len(), 18);
}

#[test]
fn audit_verify_reports_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let p = seeded(dir.path(), "done.json", &golden::completed_corpus());
    let r = hara(&["audit", "--project", s(&p), "--verify"]);
    assert_eq!(r.code, 0);
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    doc["audit"][12]["after"] = json!({"forged": true});
    std::fs::write(&p, doc.to_string()).unwrap();
    let r = hara(&["audit", "--project", s(&p), "--verify"]);
    assert_eq!(r.code, 5);
    assert!(r.stdout.contains("seq 12"), "{}", r.stdout);
    // Any other command refuses the file with the same exit code.
    assert_eq!(hara(&["metrics", "--project", s(&p)]).code, 5);
}

#[test]
fn compare_replay_against_reference() {
    let dir = tempfile::tempdir().unwrap();
    let a = seeded(dir.path(), "a.json", &golden::completed_corpus());
    let mut trimmed = golden::completed_corpus();
    trimmed.hazards[0].status = ReviewStatus::Rejected;
    trimmed.safety_goals.retain(|g| g.id != "SG1");
    let b = seeded(dir.path(), "b.json", &trimmed);
    let r = hara(&["compare", "--project", s(&a), "--other", s(&b)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("only in a:"));
    let report: Value = serde_json::from_str(&hara(&["--json", "compare", "--project", s(&a), "--other", s(&b)]).stdout).unwrap();
    assert_eq!(report["deltas"]["hazard_count"], -1);
}

#[test]
fn reopen_command() {
    let dir = tempfile::tempdir().unwrap();
    let p = seeded(dir.path(), "done.json", &golden::completed_corpus());
    assert_eq!(hara(&["reopen", "--project", s(&p), "--stage", "risk-assessment"]).code, 0);
    assert_eq!(load_project(&p).unwrap().stage, Stage::RiskAssessment);
    assert_eq!(hara(&["reopen", "--project", s(&p), "--stage", "SafetyGoals"]).code, 3);
    assert_eq!(hara(&["reopen", "--project", s(&p), "--stage", "nowhere"]).code, 2);
}
