use hara_core::audit::AuditEntry;
use hara_core::io::{audit_jsonl, save_project};
use hara_core::*;
use proptest::prelude::*;
use serde_json::json;

fn log_of(n: usize) -> AuditLog {
    let mut log = AuditLog::new();
    let actions = [Action::Generate, Action::Accept, Action::Modify, Action::Reject, Action::Rate, Action::Advance];
    for i in 0..n {
        log.append(
            if i % 3 == 0 { Actor::ai("rule_based") } else { Actor::engineer(format!("eng-{}", i % 5)) },
            actions[i % actions.len()],
            EntityRef::new(EntityKind::Hazard, format!("H{i}")),
            (i % 2 == 0).then(|| json!({"scenario": format!("before {i}")})),
            Some(json!({"scenario": format!("after {i}"), "n": i})),
        );
    }
    log
}

fn parse_lines(text: &str) -> Option<Vec<AuditEntry>> {
    text.lines().map(|l| serde_json::from_str(l).ok()).collect()
}

#[test]
fn thousand_entries_round_trip() {
    let log = log_of(1000);
    assert_eq!(log.len(), 1000);
    assert_eq!(log.entries()[0].prev_hash, audit::GENESIS_HASH);
    assert!(log.verify().is_ok());
    let text = audit_jsonl(log.entries());
    assert_eq!(text.lines().count(), 1000);
    let back = AuditLog::from_entries(parse_lines(&text).unwrap());
    assert_eq!(back, log);
    assert!(back.verify().is_ok());
}

/// Applies a one-byte change at `pos`. Returns the index of the entry whose
/// content changed once verify has flagged exactly that entry, `Err` when the
/// result no longer parses, and `None` when the byte has no effect.
fn tamper(log: &AuditLog, text: &str, pos: usize, byte: u8) -> Option<std::result::Result<usize, ()>> {
    let original = text.as_bytes()[pos];
    if original == byte || original == b'\n' || byte == b'\n' {
        return None;
    }
    let line = text[..pos].matches('\n').count();
    let start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
    let end = text[pos..].find('\n').map_or(text.len(), |i| pos + i);
    let mut bytes = text.as_bytes()[start..end].to_vec();
    bytes[pos - start] = byte;
    let Ok(s) = String::from_utf8(bytes) else { return Some(Err(())) };
    let Ok(entry) = serde_json::from_str::<AuditEntry>(&s) else { return Some(Err(())) };
    if entry == log.entries()[line] {
        return None;
    }
    let mut entries = log.entries().to_vec();
    entries[line] = entry;
    match AuditLog::from_entries(entries).verify() {
        Verification::Corrupt { seq } if seq as usize == line => Some(Ok(line)),
        other => panic!("byte {pos} -> {:?}: expected seq {line}, got {other:?}", byte as char),
    }
}

#[test]
fn every_single_byte_tamper_is_detected_at_its_entry() {
    let log = log_of(25);
    let text = audit_jsonl(log.entries());
    let mut detected = 0;
    for pos in 0..text.len() {
        for byte in [text.as_bytes()[pos] ^ 0x01, b'0', b'a'] {
            if let Some(Ok(_)) = tamper(&log, &text, pos, byte) {
                detected += 1;
            }
        }
    }
    assert!(detected > text.len(), "{detected}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn random_tamper_in_large_log(pos in any::<prop::sample::Index>(), byte in 0x20u8..0x7f) {
        static LOG: std::sync::OnceLock<(AuditLog, String)> = std::sync::OnceLock::new();
        let (log, text) = LOG.get_or_init(|| {
            let log = log_of(1000);
            let text = audit_jsonl(log.entries());
            (log, text)
        });
        let _ = tamper(log, text, pos.index(text.len()), byte);
    }
}

#[test]
fn tampered_project_file_reports_seq() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("aeb.hara.json");
    let p = golden::completed_corpus();
    save_project(&p, &path).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    doc["audit"][7]["actor"]["id"] = json!("mallory");
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    assert!(matches!(load_project(&path), Err(HaraError::CorruptAudit { seq: 7 })));
}

#[test]
fn filters() {
    let log = log_of(60);
    let f = AuditFilter { action: Some(Action::Rate), ..Default::default() };
    assert_eq!(log.query(&f).len(), 10);
    let f = AuditFilter { actor: Some("rule_based".into()), ..Default::default() };
    assert_eq!(log.query(&f).len(), 20);
    let f = AuditFilter { entity_ref: Some("H5".into()), ..Default::default() };
    assert_eq!(log.query(&f).len(), 1);
    let first = log.entries()[0].timestamp;
    let f = AuditFilter { from: Some(first), to: Some(first), ..Default::default() };
    assert!(!log.query(&f).is_empty());
}
