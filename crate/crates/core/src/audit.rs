//! Append-only, hash-chained audit log.
//!
//! Each entry's `hash` is the SHA-256 digest of the entry's canonical JSON
//! form (keys sorted, no whitespace) with the `hash` field removed. The first
//! entry chains to [`GENESIS_HASH`].

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::model::EntityRef;

/// 32 zero bytes, hex encoded.
pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Ai,
    Engineer,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Actor {
    pub kind: ActorKind,
    pub id: String,
}

impl Actor {
    pub fn engineer(id: impl Into<String>) -> Self {
        Self { kind: ActorKind::Engineer, id: id.into() }
    }

    pub fn ai(id: impl Into<String>) -> Self {
        Self { kind: ActorKind::Ai, id: id.into() }
    }

    pub fn system() -> Self {
        Self { kind: ActorKind::System, id: "hara".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Generate,
    Accept,
    Modify,
    Reject,
    Rate,
    Advance,
    Reopen,
    Ingest,
    Export,
}

impl std::str::FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(Value::String(s.trim().to_ascii_lowercase()))
            .map_err(|_| format!("unknown audit action `{s}`"))
    }
}

mod millis {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&raw)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    #[serde(with = "millis")]
    pub timestamp: DateTime<Utc>,
    pub actor: Actor,
    pub action: Action,
    pub entity_ref: EntityRef,
    pub before: Option<Value>,
    pub after: Option<Value>,
    pub prev_hash: String,
    pub hash: String,
}

impl AuditEntry {
    /// Digest over every field except `hash`.
    pub fn compute_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("audit entry serializes");
        if let Value::Object(map) = &mut value {
            map.remove("hash");
        }
        let canonical = canonical_json(&value);
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Key-sorted, whitespace-free JSON.
pub fn canonical_json(value: &Value) -> String {
    fn write(value: &Value, out: &mut String) {
        match value {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&map[k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(v, out);
                }
                out.push(']');
            }
            scalar => out.push_str(&scalar.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verification {
    Ok,
    Corrupt { seq: u64 },
}

impl Verification {
    pub fn is_ok(self) -> bool {
        self == Verification::Ok
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditLog {
    entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<AuditEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head_hash(&self) -> &str {
        self.entries.last().map(|e| e.hash.as_str()).unwrap_or(GENESIS_HASH)
    }

    pub fn append(
        &mut self,
        actor: Actor,
        action: Action,
        entity_ref: EntityRef,
        before: Option<Value>,
        after: Option<Value>,
    ) -> &AuditEntry {
        self.append_at(Utc::now(), actor, action, entity_ref, before, after)
    }

    /// Appends with an explicit timestamp (truncated to milliseconds and
    /// clamped so timestamps never go backwards).
    pub fn append_at(
        &mut self,
        timestamp: DateTime<Utc>,
        actor: Actor,
        action: Action,
        entity_ref: EntityRef,
        before: Option<Value>,
        after: Option<Value>,
    ) -> &AuditEntry {
        let mut timestamp = timestamp.trunc_subsecs(3);
        if let Some(last) = self.entries.last() {
            timestamp = timestamp.max(last.timestamp);
        }
        let mut entry = AuditEntry {
            seq: self.entries.len() as u64,
            timestamp,
            actor,
            action,
            entity_ref,
            before,
            after,
            prev_hash: self.head_hash().to_string(),
            hash: String::new(),
        };
        entry.hash = entry.compute_hash();
        self.entries.push(entry);
        self.entries.last().expect("just pushed")
    }

    /// Recomputes the chain and reports the first entry that does not match.
    pub fn verify(&self) -> Verification {
        let mut prev = GENESIS_HASH;
        for (i, entry) in self.entries.iter().enumerate() {
            if entry.seq != i as u64 || entry.prev_hash != prev || entry.compute_hash() != entry.hash {
                return Verification::Corrupt { seq: i as u64 };
            }
            prev = &entry.hash;
        }
        Verification::Ok
    }

    pub fn query(&self, filter: &AuditFilter) -> Vec<&AuditEntry> {
        self.entries.iter().filter(|e| filter.matches(e)).collect()
    }

    /// Mutable access for tamper tests and migrations; any change breaks
    /// [`AuditLog::verify`].
    #[doc(hidden)]
    pub fn entries_mut_unchecked(&mut self) -> &mut Vec<AuditEntry> {
        &mut self.entries
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditFilter {
    #[serde(default)]
    pub actor: Option<String>,
    #[serde(default)]
    pub action: Option<Action>,
    /// Matches on the entity id.
    #[serde(default)]
    pub entity_ref: Option<String>,
    #[serde(default)]
    pub from: Option<DateTime<Utc>>,
    #[serde(default)]
    pub to: Option<DateTime<Utc>>,
}

impl AuditFilter {
    pub fn matches(&self, e: &AuditEntry) -> bool {
        self.actor.as_ref().is_none_or(|a| &e.actor.id == a)
            && self.action.is_none_or(|a| e.action == a)
            && self.entity_ref.as_ref().is_none_or(|r| &e.entity_ref.id == r)
            && self.from.is_none_or(|t| e.timestamp >= t)
            && self.to.is_none_or(|t| e.timestamp <= t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EntityKind;
    use serde_json::json;

    fn hazard(id: &str) -> EntityRef {
        EntityRef::new(EntityKind::Hazard, id)
    }

    #[test]
    fn genesis_entry() {
        let mut log = AuditLog::new();
        let e = log.append(Actor::system(), Action::Ingest, hazard("H1"), None, None).clone();
        assert_eq!(e.seq, 0);
        assert_eq!(e.prev_hash, GENESIS_HASH);
        assert_eq!(e.hash.len(), 64);
        assert!(log.verify().is_ok());
    }

    #[test]
    fn empty_log_verifies() {
        assert_eq!(AuditLog::new().verify(), Verification::Ok);
    }

    #[test]
    fn snapshots_round_trip_verbatim() {
        let mut log = AuditLog::new();
        let before = json!({"scenario": "old text", "n": 1.5});
        let after = json!({"scenario": "new text", "tags": ["a", "b"]});
        log.append(Actor::engineer("ana"), Action::Modify, hazard("H3"), Some(before.clone()), Some(after.clone()));
        let e = &log.entries()[0];
        assert_eq!(e.before.as_ref(), Some(&before));
        assert_eq!(e.after.as_ref(), Some(&after));
    }

    #[test]
    fn tamper_detected_at_entry() {
        let mut log = AuditLog::new();
        for i in 0..8 {
            log.append(Actor::system(), Action::Rate, hazard(&format!("H{i}")), None, Some(json!({"text": "abc"})));
        }
        log.entries_mut_unchecked()[5].after = Some(json!({"text": "abd"}));
        assert_eq!(log.verify(), Verification::Corrupt { seq: 5 });
    }

    #[test]
    fn timestamps_never_regress() {
        let mut log = AuditLog::new();
        let t0 = Utc::now();
        log.append_at(t0, Actor::system(), Action::Advance, hazard("x"), None, None);
        log.append_at(t0 - chrono::Duration::seconds(10), Actor::system(), Action::Advance, hazard("x"), None, None);
        assert!(log.entries()[1].timestamp >= log.entries()[0].timestamp);
        assert!(log.verify().is_ok());
    }

    #[test]
    fn canonical_form_sorts_keys() {
        let v = json!({"b": 1, "a": {"d": [1, 2], "c": null}});
        assert_eq!(canonical_json(&v), r#"{"a":{"c":null,"d":[1,2]},"b":1}"#);
    }

    #[test]
    fn query_filters() {
        let mut log = AuditLog::new();
        log.append(Actor::engineer("ana"), Action::Accept, hazard("H1"), None, None);
        log.append(Actor::engineer("bo"), Action::Reject, hazard("H2"), None, None);
        log.append(Actor::engineer("ana"), Action::Reject, hazard("H3"), None, None);
        let rejects = log.query(&AuditFilter { action: Some(Action::Reject), ..Default::default() });
        assert_eq!(rejects.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(log.query(&AuditFilter::default()).len(), 3);
        let none = log.query(&AuditFilter { entity_ref: Some("H99".into()), ..Default::default() });
        assert!(none.is_empty());
        let ana = log.query(&AuditFilter { actor: Some("ana".into()), ..Default::default() });
        assert_eq!(ana.len(), 2);
    }
}
