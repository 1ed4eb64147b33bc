mod support {
    pub mod mock_llm;
}

use std::time::{Duration, Instant};

use hara_core::backend::{Keyed, StageContext};
use hara_core::model::{Function, OutputKind};
use hara_core::*;
use support::mock_llm::{MockLlm, Reply};

const CLEAN: &str = r#"[
  {"function_id": "F1", "guide_word": "no", "description": "Obstacle not detected"},
  {"function_id": "F1", "guide_word": "unintended", "description": "False Obstacle detected"},
  {"function_id": "F1", "guide_word": "late", "description": "Delay on Obstacle Detection"}
]"#;

fn request() -> GenerationRequest {
    let ctx = StageContext {
        functions: vec![Keyed {
            id: "F1".into(),
            item: Function { name: "Obstacle Detection".into(), requirement_ids: vec!["PR1".into()], output_kind: OutputKind::Event },
        }],
        ..Default::default()
    };
    GenerationRequest::new(Stage::MalfunctionDerivation, ctx)
}

fn backend(mock: &MockLlm, timeout_ms: u64, max_retries: u32) -> RemoteBackend {
    let config = BackendConfig { timeout_ms, max_retries, backoff_ms: 10, ..BackendConfig::remote(&mock.url, "mock-model") };
    RemoteBackend::new(config, "test-key").unwrap()
}

#[test]
fn fixtures_parse_as_expected() {
    let cases = [
        (CLEAN.to_string(), 3, 0),
        (format!("Sure! Here are the malfunctions:\n```json\n{CLEAN}\n```\nHope this helps."), 3, 0),
        (
            r#"[{"function_id":"F1","guide_word":"no","description":"a"},{"function_id":"F1","guide_word":"late"},{"function_id":"F1","guide_word":"unintended","description":"b"}]"#
                .to_string(),
            2,
            1,
        ),
    ];
    for (text, items, dropped) in cases {
        let mock = MockLlm::start(vec![Reply::Content(text)]);
        let batch = backend(&mock, 2000, 0).generate(&request()).unwrap();
        assert_eq!((batch.items.len(), batch.dropped.len()), (items, dropped));
        assert_eq!(batch.provenance.backend, "remote:mock-model");
    }
    let mock = MockLlm::start(vec![Reply::Content("I am unable to produce that list.".into())]);
    assert!(matches!(backend(&mock, 2000, 0).generate(&request()), Err(HaraError::MalformedResponse(_))));
}

#[test]
fn request_shape() {
    let mock = MockLlm::start(vec![Reply::Content(CLEAN.into())]);
    backend(&mock, 2000, 0).generate(&request()).unwrap();
    let reqs = mock.requests();
    assert_eq!(reqs[0].authorization.as_deref(), Some("Bearer test-key"));
    assert_eq!(reqs[0].body["model"], "mock-model");
    let messages = reqs[0].body["messages"].as_array().unwrap();
    assert_eq!(messages[0]["role"], "system");
    assert!(messages[1]["content"].as_str().unwrap().contains("Obstacle Detection"));
}

#[test]
fn timeout_exhausts_exactly_max_retries_plus_one() {
    let mock = MockLlm::start(vec![Reply::Hang(Duration::from_secs(3))]);
    let start = Instant::now();
    match backend(&mock, 200, 2).generate(&request()) {
        Err(HaraError::BackendUnavailable { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
    assert!(start.elapsed() < Duration::from_secs(3));
    assert_eq!(mock.hits(), 3);
}

#[test]
fn server_errors_are_retried_then_succeed() {
    let mock = MockLlm::start(vec![
        Reply::Status(503, "{}".into()),
        Reply::Status(429, "{}".into()),
        Reply::Content(CLEAN.into()),
    ]);
    let batch = backend(&mock, 2000, 2).generate(&request()).unwrap();
    assert_eq!(batch.items.len(), 3);
    assert_eq!(mock.hits(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let mock = MockLlm::start(vec![Reply::Status(401, "{}".into())]);
    assert!(matches!(backend(&mock, 2000, 3).generate(&request()), Err(HaraError::BackendUnavailable { .. })));
    assert_eq!(mock.hits(), 1);
}

#[test]
fn remote_generation_commits_into_a_project() {
    let mut p = golden::tables_corpus();
    // Keep only the first function so exactly one request is issued.
    p.hazards.clear();
    p.malfunctions.clear();
    p.functions.truncate(1);
    p.stage = Stage::MalfunctionDerivation;
    let mock = MockLlm::start(vec![Reply::Content(
        r#"[{"function_id":"F1","guide_word":"no","description":"Obstacle missed"},{"function_id":"F9","guide_word":"no","description":"ghost"}]"#.into(),
    )]);
    let before = p.audit.len();
    let batch = run_stage_generation(&mut p, &backend(&mock, 2000, 0), Default::default()).unwrap();
    assert_eq!(batch.item_ids.len(), 1);
    assert_eq!(batch.dropped.len(), 1);
    assert_eq!(p.audit.len(), before + 1);
    let entry = p.audit.entries().last().unwrap();
    assert!(entry.after.as_ref().unwrap()["batches"][0]["raw_response"].as_str().unwrap().contains("Obstacle missed"));
}

#[test]
fn backend_failure_leaves_project_unchanged() {
    let mut p = golden::tables_corpus();
    p.stage = Stage::MalfunctionDerivation;
    p.malfunctions.clear();
    p.hazards.clear();
    let snapshot = p.clone();
    let mock = MockLlm::start(vec![Reply::Status(500, "{}".into())]);
    assert!(run_stage_generation(&mut p, &backend(&mock, 500, 1), Default::default()).is_err());
    assert_eq!(p, snapshot);
}

#[test]
fn missing_api_key_is_a_config_error() {
    std::env::remove_var(hara_core::backend::API_KEY_ENV);
    let config = BackendConfig::remote("http://127.0.0.1:9/", "m");
    assert!(matches!(RemoteBackend::from_env(config), Err(HaraError::Config(_))));
}
