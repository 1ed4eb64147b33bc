//! The staged HARA workflow with review gating, completeness validation and
//! coverage metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::audit::{Action, Actor};
use crate::backend::{Backend, CandidatePayload, Dropped, GenerationRequest, Keyed, StageContext, DEFAULT_MAX_CANDIDATES};
use crate::error::{HaraError, Result};
use crate::hazop::Catalog;
use crate::model::{
    EntityKind, EntityRef, Function, Hazard, Malfunction, Project, Provenance, Record, ReviewStatus, SafetyGoal,
};
use crate::risk::{Asil, RiskRating};

pub use crate::model::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateOptions {
    pub max_candidates: usize,
    pub seed: Option<u64>,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { max_candidates: DEFAULT_MAX_CANDIDATES, seed: None }
    }
}

/// Summary of a generation run committed to a project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommittedBatch {
    pub stage: Stage,
    pub backend: String,
    pub item_ids: Vec<String>,
    pub dropped: Vec<Dropped>,
}

fn count_proposed<T>(records: &[Record<T>]) -> usize {
    records.iter().filter(|r| r.status == ReviewStatus::Proposed).count()
}

impl Project {
    /// Unreviewed items of the kind a stage produces.
    pub fn pending_at(&self, stage: Stage) -> usize {
        match stage.produces() {
            Some(EntityKind::Function) => count_proposed(&self.functions),
            Some(EntityKind::Malfunction) => count_proposed(&self.malfunctions),
            Some(EntityKind::Hazard) => count_proposed(&self.hazards),
            Some(EntityKind::RiskRating) => count_proposed(&self.risk_ratings),
            Some(EntityKind::SafetyGoal) => count_proposed(&self.safety_goals),
            _ => 0,
        }
    }
}

fn generation_requests(project: &Project, opts: GenerateOptions) -> Vec<GenerationRequest> {
    let req = |context: StageContext| GenerationRequest {
        stage: project.stage,
        context,
        max_candidates: opts.max_candidates,
        seed: opts.seed,
    };
    let keyed_fn = |id: &str| project.function(id).map(Keyed::from_record);
    let keyed_malf = |id: &str| project.malfunction(id).map(Keyed::from_record);
    match project.stage {
        Stage::FunctionExtraction => project
            .requirements
            .iter()
            .map(|r| req(StageContext { requirements: vec![r.clone()], odd: project.odd_parameters.clone(), ..Default::default() }))
            .collect(),
        Stage::MalfunctionDerivation => project
            .active_functions()
            .map(|f| req(StageContext { functions: vec![Keyed::from_record(f)], ..Default::default() }))
            .collect(),
        Stage::HazardIdentification => project
            .active_malfunctions()
            .map(|m| {
                req(StageContext {
                    odd: project.odd_parameters.clone(),
                    functions: keyed_fn(&m.item.function_id).into_iter().collect(),
                    malfunctions: vec![Keyed::from_record(m)],
                    ..Default::default()
                })
            })
            .collect(),
        Stage::RiskAssessment => project
            .active_hazards()
            .filter(|h| project.confirmed_rating(&h.id).is_none())
            .map(|h| {
                req(StageContext {
                    odd: project.odd_parameters.clone(),
                    malfunctions: keyed_malf(&h.item.malfunction_id).into_iter().collect(),
                    hazards: vec![Keyed::from_record(h)],
                    ..Default::default()
                })
            })
            .collect(),
        Stage::SafetyGoals => {
            let covered: BTreeSet<&str> =
                project.active_goals().flat_map(|g| g.item.hazard_ids.iter().map(String::as_str)).collect();
            let hazards: Vec<&Record<Hazard>> = project.active_hazards().filter(|h| !covered.contains(h.id.as_str())).collect();
            if hazards.is_empty() {
                return Vec::new();
            }
            let mut malfunctions = Vec::new();
            let mut functions = Vec::new();
            for h in &hazards {
                if let Some(m) = keyed_malf(&h.item.malfunction_id) {
                    if let Some(f) = keyed_fn(&m.item.function_id) {
                        if !functions.iter().any(|x: &Keyed<Function>| x.id == f.id) {
                            functions.push(f);
                        }
                    }
                    if !malfunctions.iter().any(|x: &Keyed<Malfunction>| x.id == m.id) {
                        malfunctions.push(m);
                    }
                }
            }
            vec![req(StageContext {
                functions,
                malfunctions,
                hazards: hazards.into_iter().map(Keyed::from_record).collect(),
                ..Default::default()
            })]
        }
        Stage::ItemDefinition | Stage::Complete => Vec::new(),
    }
}

/// Runs the backend over the current stage and stores its candidates as
/// proposed items, recording the whole run as one audit entry.
pub fn run_stage_generation(project: &mut Project, backend: &dyn Backend, opts: GenerateOptions) -> Result<CommittedBatch> {
    let stage = project.stage;
    if stage.produces().is_none() {
        return Err(HaraError::UnsupportedStage(stage.to_string()));
    }
    let pending = project.pending_at(stage);
    if pending > 0 {
        return Err(HaraError::StageHasPendingReviews { stage: stage.to_string(), count: pending });
    }

    // Collect everything before touching the project so a backend failure
    // leaves it unchanged.
    let mut batches = Vec::new();
    for request in generation_requests(project, opts) {
        batches.push(backend.generate(&request)?);
    }

    let backend_id = backend.id();
    let mut dropped: Vec<Dropped> = batches.iter().flat_map(|b| b.dropped.clone()).collect();
    let mut proposals: Vec<(String, CandidatePayload)> = Vec::new();
    for c in batches.iter().flat_map(|b| b.items.iter()) {
        if c.payload.stage() != stage {
            dropped.push(Dropped { index: proposals.len(), reason: format!("candidate for {} at {stage}", c.payload.stage()) });
            continue;
        }
        // Functions proposed for several requirements collapse into one.
        if let CandidatePayload::Function(f) = &c.payload {
            if let Some((_, CandidatePayload::Function(existing))) = proposals
                .iter_mut()
                .find(|(_, p)| matches!(p, CandidatePayload::Function(e) if e.name.eq_ignore_ascii_case(&f.name)))
            {
                for rid in &f.requirement_ids {
                    if !existing.requirement_ids.contains(rid) {
                        existing.requirement_ids.push(rid.clone());
                    }
                }
                continue;
            }
        }
        proposals.push((c.template.clone(), c.payload.clone()));
    }

    let mut item_ids = Vec::new();
    for (index, (template, payload)) in proposals.into_iter().enumerate() {
        let provenance = Some(Provenance { backend: backend_id.clone(), template });
        match commit_candidate(project, payload, provenance) {
            Ok(Some(id)) => item_ids.push(id),
            Ok(None) => {}
            Err(e) => dropped.push(Dropped { index, reason: e.to_string() }),
        }
    }

    let after = json!({
        "stage": stage,
        "backend": backend_id,
        "batches": batches.iter().map(|b| json!({
            "provenance": b.provenance,
            "raw_response": b.raw_response,
        })).collect::<Vec<_>>(),
        "item_ids": item_ids,
        "dropped": dropped,
    });
    project.audit.append(Actor::ai(backend_id.clone()), Action::Generate, EntityRef::project(), None, Some(after));
    Ok(CommittedBatch { stage, backend: backend_id, item_ids, dropped })
}

/// Stores one candidate as proposed. Returns `None` for duplicates of an
/// existing record, of any status.
fn commit_candidate(project: &mut Project, payload: CandidatePayload, provenance: Option<Provenance>) -> Result<Option<String>> {
    let proposed = ReviewStatus::Proposed;
    match payload {
        CandidatePayload::Function(f) => {
            if project.functions.iter().any(|o| o.item.name.eq_ignore_ascii_case(f.name.trim())) {
                return Ok(None);
            }
            project.check_function(&f, None)?;
            let id = project.next_id(EntityKind::Function);
            project.functions.push(Record { id: id.clone(), item: f, status: proposed, provenance });
            Ok(Some(id))
        }
        CandidatePayload::Malfunction(m) => {
            let dup = project.malfunctions.iter().any(|o| {
                o.item.function_id == m.function_id
                    && o.item.guide_word == m.guide_word
                    && o.item.description.eq_ignore_ascii_case(m.description.trim())
            });
            if dup {
                return Ok(None);
            }
            project.check_malfunction(&m, None)?;
            let id = project.next_id(EntityKind::Malfunction);
            project.malfunctions.push(Record { id: id.clone(), item: m, status: proposed, provenance });
            Ok(Some(id))
        }
        CandidatePayload::Hazard(h) => {
            if project.hazards.iter().any(|o| o.item.malfunction_id == h.malfunction_id && o.item.scenario == h.scenario) {
                return Ok(None);
            }
            project.check_hazard(&h)?;
            let id = project.next_id(EntityKind::Hazard);
            project.hazards.push(Record { id: id.clone(), item: h, status: proposed, provenance });
            Ok(Some(id))
        }
        CandidatePayload::Rating(r) => {
            project.check_rating(&r)?;
            let id = project.next_id(EntityKind::RiskRating);
            project.risk_ratings.push(Record { id: id.clone(), item: r, status: proposed, provenance });
            Ok(Some(id))
        }
        CandidatePayload::SafetyGoal(mut g) => {
            project.check_goal(&g)?;
            g.asil = project.goal_asil_of(&g.hazard_ids).ok();
            let id = project.next_id(EntityKind::SafetyGoal);
            project.safety_goals.push(Record { id: id.clone(), item: g, status: proposed, provenance });
            Ok(Some(id))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Modify,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub item_ref: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified_payload: Option<Value>,
    #[serde(default)]
    pub reviewer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ReviewDecision {
    pub fn accept(item: impl Into<String>, reviewer: impl Into<String>) -> Self {
        Self { item_ref: item.into(), decision: Decision::Accept, modified_payload: None, reviewer: reviewer.into(), note: None }
    }

    pub fn reject(item: impl Into<String>, reviewer: impl Into<String>) -> Self {
        Self { item_ref: item.into(), decision: Decision::Reject, modified_payload: None, reviewer: reviewer.into(), note: None }
    }

    pub fn modify(item: impl Into<String>, reviewer: impl Into<String>, payload: Value) -> Self {
        Self {
            item_ref: item.into(),
            decision: Decision::Modify,
            modified_payload: Some(payload),
            reviewer: reviewer.into(),
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewOutcome {
    pub item_ref: EntityRef,
    pub status: ReviewStatus,
    pub item: Value,
}

fn reviewable_kind(project: &Project, id: &str) -> Option<EntityKind> {
    match project.resolve(id)?.kind {
        k @ (EntityKind::Function | EntityKind::Malfunction | EntityKind::Hazard | EntityKind::RiskRating | EntityKind::SafetyGoal) => {
            Some(k)
        }
        _ => None,
    }
}

fn invalid_payload(e: HaraError) -> HaraError {
    match e {
        HaraError::InvalidModifyPayload(_) => e,
        other => HaraError::InvalidModifyPayload(other.to_string()),
    }
}

fn decode<T: serde::de::DeserializeOwned>(payload: Option<&Value>) -> Result<T> {
    let v = payload.ok_or_else(|| HaraError::InvalidModifyPayload("modify requires modified_payload".into()))?;
    serde_json::from_value(v.clone()).map_err(|e| HaraError::InvalidModifyPayload(e.to_string()))
}

/// Applies one reviewer decision to a proposed (or previously modified) item.
pub fn review(project: &mut Project, decision: &ReviewDecision) -> Result<ReviewOutcome> {
    if decision.reviewer.trim().is_empty() {
        return Err(HaraError::InvariantViolation("reviewer must be named".into()));
    }
    let id = decision.item_ref.as_str();
    let kind = reviewable_kind(project, id).ok_or_else(|| HaraError::UnknownItem(id.to_string()))?;
    let payload = decision.modified_payload.as_ref();
    let mut recomputed = Vec::new();

    macro_rules! finalize_guard {
        ($coll:expr) => {{
            let idx = $coll.iter().position(|r| r.id == id).expect("resolved");
            match $coll[idx].status {
                ReviewStatus::Proposed | ReviewStatus::Modified => idx,
                _ => return Err(HaraError::AlreadyFinalized(id.to_string())),
            }
        }};
    }

    let (before, after) = match kind {
        EntityKind::Function => {
            let idx = finalize_guard!(project.functions);
            let before = serde_json::to_value(&project.functions[idx]).ok();
            match decision.decision {
                Decision::Accept => {
                    project.check_function(&project.functions[idx].item.clone(), Some(id))?;
                    project.functions[idx].status = ReviewStatus::Accepted;
                }
                Decision::Modify => {
                    let f: Function = decode(payload)?;
                    project.check_function(&f, Some(id)).map_err(invalid_payload)?;
                    project.functions[idx].item = f;
                    project.functions[idx].status = ReviewStatus::Modified;
                }
                Decision::Reject => {
                    if project.active_malfunctions().any(|m| m.item.function_id == id) {
                        return Err(HaraError::InvariantViolation(format!("function `{id}` has active malfunctions")));
                    }
                    project.functions[idx].status = ReviewStatus::Rejected;
                }
            }
            (before, serde_json::to_value(&project.functions[idx]).ok())
        }
        EntityKind::Malfunction => {
            let idx = finalize_guard!(project.malfunctions);
            let before = serde_json::to_value(&project.malfunctions[idx]).ok();
            match decision.decision {
                Decision::Accept => {
                    project.check_malfunction(&project.malfunctions[idx].item.clone(), Some(id))?;
                    project.malfunctions[idx].status = ReviewStatus::Accepted;
                }
                Decision::Modify => {
                    let m: Malfunction = decode(payload)?;
                    project.check_malfunction(&m, Some(id)).map_err(invalid_payload)?;
                    project.malfunctions[idx].item = m;
                    project.malfunctions[idx].status = ReviewStatus::Modified;
                }
                Decision::Reject => {
                    if project.active_hazards().any(|h| h.item.malfunction_id == id) {
                        return Err(HaraError::InvariantViolation(format!("malfunction `{id}` has active hazards")));
                    }
                    project.malfunctions[idx].status = ReviewStatus::Rejected;
                }
            }
            (before, serde_json::to_value(&project.malfunctions[idx]).ok())
        }
        EntityKind::Hazard => {
            let idx = finalize_guard!(project.hazards);
            let before = serde_json::to_value(&project.hazards[idx]).ok();
            match decision.decision {
                Decision::Accept => {
                    project.check_hazard(&project.hazards[idx].item.clone())?;
                    project.hazards[idx].status = ReviewStatus::Accepted;
                }
                Decision::Modify => {
                    let h: Hazard = decode(payload)?;
                    project.check_hazard(&h).map_err(invalid_payload)?;
                    project.hazards[idx].item = h;
                    project.hazards[idx].status = ReviewStatus::Modified;
                }
                Decision::Reject => {
                    if project.active_goals().any(|g| g.item.hazard_ids.iter().any(|h| h == id)) {
                        return Err(HaraError::InvariantViolation(format!("hazard `{id}` is addressed by an active goal")));
                    }
                    project.hazards[idx].status = ReviewStatus::Rejected;
                }
            }
            (before, serde_json::to_value(&project.hazards[idx]).ok())
        }
        EntityKind::RiskRating => {
            let idx = finalize_guard!(project.risk_ratings);
            let before = serde_json::to_value(&project.risk_ratings[idx]).ok();
            let was_active = project.risk_ratings[idx].is_active();
            let confirm = |project: &Project, r: &RiskRating, as_payload: bool| -> Result<()> {
                let wrap = |e: HaraError| if as_payload { invalid_payload(e) } else { e };
                project.check_rating(r).map_err(wrap)?;
                let missing = r.rationale.missing_factors();
                if !missing.is_empty() {
                    return Err(wrap(HaraError::MissingRationale(missing.join(", "))));
                }
                if project.confirmed_rating(&r.hazard_id).is_some_and(|c| c.id != id) {
                    return Err(HaraError::DoubleConfirm(r.hazard_id.clone()));
                }
                Ok(())
            };
            let old_hazard = project.risk_ratings[idx].item.hazard_id.clone();
            match decision.decision {
                Decision::Accept => {
                    confirm(project, &project.risk_ratings[idx].item, false)?;
                    project.risk_ratings[idx].status = ReviewStatus::Accepted;
                }
                Decision::Modify => {
                    let r: RiskRating = decode(payload)?;
                    confirm(project, &r, true)?;
                    project.risk_ratings[idx].item = r;
                    project.risk_ratings[idx].status = ReviewStatus::Modified;
                }
                Decision::Reject => project.risk_ratings[idx].status = ReviewStatus::Rejected,
            }
            let mut touched = vec![project.risk_ratings[idx].item.hazard_id.clone()];
            if was_active || old_hazard != touched[0] {
                touched.push(old_hazard);
            }
            recomputed = project.recompute_goals_for(&touched);
            (before, serde_json::to_value(&project.risk_ratings[idx]).ok())
        }
        EntityKind::SafetyGoal => {
            let idx = finalize_guard!(project.safety_goals);
            let before = serde_json::to_value(&project.safety_goals[idx]).ok();
            match decision.decision {
                Decision::Accept => {
                    project.check_goal(&project.safety_goals[idx].item.clone())?;
                    project.safety_goals[idx].status = ReviewStatus::Accepted;
                }
                Decision::Modify => {
                    if payload.and_then(|p| p.get("asil")).is_some_and(|a| !a.is_null()) {
                        return Err(HaraError::InvalidModifyPayload("asil is derived from the linked hazards".into()));
                    }
                    let g: SafetyGoal = decode(payload)?;
                    project.check_goal(&g).map_err(invalid_payload)?;
                    project.safety_goals[idx].item = g;
                    project.safety_goals[idx].status = ReviewStatus::Modified;
                }
                Decision::Reject => project.safety_goals[idx].status = ReviewStatus::Rejected,
            }
            let asil = project.goal_asil_of(&project.safety_goals[idx].item.hazard_ids).ok();
            project.safety_goals[idx].item.asil = asil;
            (before, serde_json::to_value(&project.safety_goals[idx]).ok())
        }
        _ => unreachable!("filtered by reviewable_kind"),
    };

    let action = match decision.decision {
        Decision::Accept => Action::Accept,
        Decision::Modify => Action::Modify,
        Decision::Reject => Action::Reject,
    };
    let item = after.clone().unwrap_or(Value::Null);
    let status: ReviewStatus = serde_json::from_value(item["status"].clone()).expect("record has a status");
    let mut after_entry = json!({ "record": after });
    if let Some(note) = &decision.note {
        after_entry["note"] = json!(note);
    }
    if !recomputed.is_empty() {
        after_entry["recomputed_goals"] = json!(recomputed);
    }
    let eref = EntityRef::new(kind, id);
    project.audit.append(
        Actor::engineer(decision.reviewer.clone()),
        action,
        eref.clone(),
        before.map(|b| json!({ "record": b })),
        Some(after_entry),
    );
    debug_assert!(project.check_integrity().is_ok(), "{:?}", project.check_integrity());
    Ok(ReviewOutcome { item_ref: eref, status, item })
}

/// Moves the cursor one stage forward once the current stage has no pending
/// items and its gate rule holds.
pub fn advance_stage(project: &mut Project, actor: &Actor) -> Result<Stage> {
    advance_stage_with(project, actor, &Catalog::shipped())
}

pub fn advance_stage_with(project: &mut Project, actor: &Actor, catalog: &Catalog) -> Result<Stage> {
    let current = project.stage;
    let next = current.next().ok_or(HaraError::NoNextStage)?;
    let pending = project.pending_at(current);
    if pending > 0 {
        return Err(HaraError::PendingReviews { count: pending });
    }
    let report = validate_inner(project, catalog, Some(current));
    if report.error_count() > 0 {
        return Err(HaraError::ValidationFailed(report));
    }
    project.stage = next;
    project.audit.append(
        actor.clone(),
        Action::Advance,
        EntityRef::project(),
        Some(json!({ "stage": current })),
        Some(json!({ "stage": next })),
    );
    Ok(next)
}

/// Demotes the cursor to an earlier stage so its artifacts can be revisited.
pub fn reopen(project: &mut Project, target: Stage, actor: &Actor) -> Result<Stage> {
    let current = project.stage;
    if target >= current || target == Stage::ItemDefinition {
        return Err(HaraError::InvalidReopen { current: current.to_string(), target: target.to_string() });
    }
    project.stage = target;
    project.audit.append(
        actor.clone(),
        Action::Reopen,
        EntityRef::project(),
        Some(json!({ "stage": current })),
        Some(json!({ "stage": target })),
    );
    Ok(target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingSeverity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub severity: FindingSeverity,
    pub entity_refs: Vec<EntityRef>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn error_count(&self) -> usize {
        self.findings.iter().filter(|f| f.severity == FindingSeverity::Error).count()
    }

    pub fn by_rule(&self, rule: &str) -> Vec<&Finding> {
        self.findings.iter().filter(|f| f.rule_id == rule).collect()
    }
}

/// Completeness rules. MF-1, HZ-1, RA-1 and SG-1 report warnings here and
/// become errors only at the gate leaving their stage; SG-2 is always an
/// error. A rule is evaluated once the cursor has reached the stage that
/// produces the artifacts it checks.
pub fn validate(project: &Project) -> ValidationReport {
    validate_inner(project, &Catalog::shipped(), None)
}

pub fn validate_with(project: &Project, catalog: &Catalog) -> ValidationReport {
    validate_inner(project, catalog, None)
}

fn validate_inner(project: &Project, catalog: &Catalog, gate: Option<Stage>) -> ValidationReport {
    let severity_for = |owner: Stage| {
        if gate == Some(owner) {
            FindingSeverity::Error
        } else {
            FindingSeverity::Warning
        }
    };
    let mut findings = Vec::new();
    let stage = project.stage;

    if gate == Some(Stage::ItemDefinition) && (project.requirements.is_empty() || project.odd_parameters.is_empty()) {
        findings.push(Finding {
            rule_id: "ID-1".into(),
            severity: FindingSeverity::Error,
            entity_refs: vec![EntityRef::project()],
            message: "item definition needs at least one requirement and one ODD parameter".into(),
        });
    }

    if stage >= Stage::MalfunctionDerivation {
        for f in project.active_functions() {
            for gw in catalog.applicable_guide_words(&f.item) {
                let covered = project.active_malfunctions().any(|m| m.item.function_id == f.id && m.item.guide_word == gw);
                if !covered {
                    findings.push(Finding {
                        rule_id: "MF-1".into(),
                        severity: FindingSeverity::Warning,
                        entity_refs: vec![EntityRef::new(EntityKind::Function, &f.id)],
                        message: format!("function `{}` has no malfunction for guide word `{gw}`", f.item.name),
                    });
                }
            }
        }
    }

    if stage >= Stage::HazardIdentification {
        for m in project.active_malfunctions() {
            if !project.active_hazards().any(|h| h.item.malfunction_id == m.id) {
                findings.push(Finding {
                    rule_id: "HZ-1".into(),
                    severity: severity_for(Stage::HazardIdentification),
                    entity_refs: vec![EntityRef::new(EntityKind::Malfunction, &m.id)],
                    message: format!("malfunction \"{}\" is not linked to any hazard", m.item.description),
                });
            }
        }
    }

    if stage >= Stage::RiskAssessment {
        for h in project.active_hazards() {
            if project.confirmed_rating(&h.id).is_none() {
                findings.push(Finding {
                    rule_id: "RA-1".into(),
                    severity: severity_for(Stage::RiskAssessment),
                    entity_refs: vec![EntityRef::new(EntityKind::Hazard, &h.id)],
                    message: format!("hazard `{}` has no confirmed risk rating", h.id),
                });
            }
        }
    }

    if stage >= Stage::SafetyGoals {
        for h in project.active_hazards() {
            let rated_above_qm = project.hazard_asil(&h.id).is_some_and(|a| a > Asil::QM);
            let addressed = project.active_goals().any(|g| g.item.hazard_ids.contains(&h.id));
            if rated_above_qm && !addressed {
                findings.push(Finding {
                    rule_id: "SG-1".into(),
                    severity: severity_for(Stage::SafetyGoals),
                    entity_refs: vec![EntityRef::new(EntityKind::Hazard, &h.id)],
                    message: format!("hazard `{}` has an ASIL but no safety goal", h.id),
                });
            }
        }
    }

    for g in project.active_goals() {
        let expected = project.goal_asil_of(&g.item.hazard_ids).ok();
        if g.item.asil != expected {
            findings.push(Finding {
                rule_id: "SG-2".into(),
                severity: FindingSeverity::Error,
                entity_refs: vec![EntityRef::new(EntityKind::SafetyGoal, &g.id)],
                message: format!(
                    "goal `{}` stores ASIL {} but its hazards give {}",
                    g.id,
                    g.item.asil.map_or("none".to_string(), |a| a.to_string()),
                    expected.map_or("none".to_string(), |a| a.to_string())
                ),
            });
        }
    }

    ValidationReport { findings }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMetrics {
    pub function_guideword_coverage: f64,
    pub malfunction_hazard_coverage: f64,
    pub asil_rated_goal_count: usize,
    pub total_goal_count: usize,
    pub elapsed_hours: f64,
    pub function_count: usize,
    pub malfunction_count: usize,
    pub hazard_count: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Coverage over accepted and modified entities; rejected candidates do not count.
pub fn metrics(project: &Project) -> CoverageMetrics {
    metrics_with(project, &Catalog::shipped())
}

pub fn metrics_with(project: &Project, catalog: &Catalog) -> CoverageMetrics {
    let mut slots = 0;
    let mut covered = 0;
    for f in project.active_functions() {
        for gw in catalog.applicable_guide_words(&f.item) {
            slots += 1;
            if project.active_malfunctions().any(|m| m.item.function_id == f.id && m.item.guide_word == gw) {
                covered += 1;
            }
        }
    }
    let malfunctions: Vec<_> = project.active_malfunctions().collect();
    let linked = malfunctions
        .iter()
        .filter(|m| project.active_hazards().any(|h| h.item.malfunction_id == m.id))
        .count();
    let entries = project.audit.entries();
    let elapsed_hours = match (entries.first(), entries.last()) {
        (Some(a), Some(b)) => (b.timestamp - a.timestamp).num_milliseconds() as f64 / 3_600_000.0,
        _ => 0.0,
    };
    CoverageMetrics {
        function_guideword_coverage: ratio(covered, slots),
        malfunction_hazard_coverage: ratio(linked, malfunctions.len()),
        asil_rated_goal_count: project.active_goals().filter(|g| g.item.asil.is_some_and(|a| a > Asil::QM)).count(),
        total_goal_count: project.active_goals().count(),
        elapsed_hours,
        function_count: project.active_functions().count(),
        malfunction_count: malfunctions.len(),
        hazard_count: project.active_hazards().count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub function_guideword_coverage: f64,
    pub malfunction_hazard_coverage: f64,
    pub asil_rated_goal_count: i64,
    pub total_goal_count: i64,
    pub hazard_count: i64,
    pub elapsed_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a: CoverageMetrics,
    pub b: CoverageMetrics,
    /// `b - a` for every metric.
    pub deltas: MetricDeltas,
    pub hazards_only_in_a: Vec<String>,
    pub hazards_only_in_b: Vec<String>,
}

/// Case-folded, punctuation-stripped, whitespace-collapsed text.
pub fn normalize_scenario(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Side-by-side metrics and hazard-set difference for two analyses of the
/// same item.
pub fn compare_projects(a: &Project, b: &Project) -> Result<ComparisonReport> {
    let ids = |p: &Project| p.requirements.iter().map(|r| r.id.clone()).collect::<BTreeSet<_>>();
    let (ia, ib) = (ids(a), ids(b));
    if ia != ib {
        let diff: Vec<String> = ia.symmetric_difference(&ib).cloned().collect();
        return Err(HaraError::MismatchedItems(format!("requirement ids differ: {}", diff.join(", "))));
    }
    let (ma, mb) = (metrics(a), metrics(b));
    let scenarios = |p: &Project| -> BTreeMap<String, String> {
        p.active_hazards().map(|h| (normalize_scenario(&h.item.scenario), h.item.scenario.clone())).collect()
    };
    let (sa, sb) = (scenarios(a), scenarios(b));
    let only = |x: &BTreeMap<String, String>, y: &BTreeMap<String, String>| -> Vec<String> {
        x.iter().filter(|(k, _)| !y.contains_key(*k)).map(|(_, v)| v.clone()).collect()
    };
    Ok(ComparisonReport {
        deltas: MetricDeltas {
            function_guideword_coverage: mb.function_guideword_coverage - ma.function_guideword_coverage,
            malfunction_hazard_coverage: mb.malfunction_hazard_coverage - ma.malfunction_hazard_coverage,
            asil_rated_goal_count: mb.asil_rated_goal_count as i64 - ma.asil_rated_goal_count as i64,
            total_goal_count: mb.total_goal_count as i64 - ma.total_goal_count as i64,
            hazard_count: mb.hazard_count as i64 - ma.hazard_count as i64,
            elapsed_hours: mb.elapsed_hours - ma.elapsed_hours,
        },
        hazards_only_in_a: only(&sa, &sb),
        hazards_only_in_b: only(&sb, &sa),
        a: ma,
        b: mb,
    })
}

/// Per-stage review counts for dashboards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub proposed: usize,
    pub accepted: usize,
    pub modified: usize,
    pub rejected: usize,
}

pub fn stage_board(project: &Project) -> Vec<StageSummary> {
    fn tally<T>(stage: Stage, records: &[Record<T>]) -> StageSummary {
        let n = |s: ReviewStatus| records.iter().filter(|r| r.status == s).count();
        StageSummary {
            stage,
            proposed: n(ReviewStatus::Proposed),
            accepted: n(ReviewStatus::Accepted),
            modified: n(ReviewStatus::Modified),
            rejected: n(ReviewStatus::Rejected) + n(ReviewStatus::Superseded),
        }
    }
    vec![
        tally(Stage::FunctionExtraction, &project.functions),
        tally(Stage::MalfunctionDerivation, &project.malfunctions),
        tally(Stage::HazardIdentification, &project.hazards),
        tally(Stage::RiskAssessment, &project.risk_ratings),
        tally(Stage::SafetyGoals, &project.safety_goals),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_normalization() {
        assert_eq!(normalize_scenario("  Front-end Collision, at HIGHWAY speed! "), "front end collision at highway speed");
    }

    #[test]
    fn empty_project_metrics_and_validation() {
        let p = Project::new("empty");
        let m = metrics(&p);
        assert_eq!(m.function_guideword_coverage, 0.0);
        assert_eq!(m.malfunction_hazard_coverage, 0.0);
        assert_eq!(m.total_goal_count, 0);
        assert_eq!(m.elapsed_hours, 0.0);
        assert!(validate(&p).is_clean());
    }

    #[test]
    fn no_generation_at_item_definition_or_complete() {
        let mut p = Project::new("x");
        let backend = crate::backend::RuleBasedBackend::new(Catalog::shipped());
        assert!(matches!(
            run_stage_generation(&mut p, &backend, GenerateOptions::default()),
            Err(HaraError::UnsupportedStage(_))
        ));
        p.stage = Stage::Complete;
        assert!(matches!(
            run_stage_generation(&mut p, &backend, GenerateOptions::default()),
            Err(HaraError::UnsupportedStage(_))
        ));
        assert!(matches!(advance_stage(&mut p, &Actor::system()), Err(HaraError::NoNextStage)));
    }

    #[test]
    fn item_definition_gate_needs_requirements() {
        let mut p = Project::new("x");
        match advance_stage(&mut p, &Actor::system()) {
            Err(HaraError::ValidationFailed(r)) => assert_eq!(r.findings[0].rule_id, "ID-1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reopen_only_goes_back() {
        let mut p = Project::new("x");
        p.stage = Stage::HazardIdentification;
        assert!(reopen(&mut p, Stage::SafetyGoals, &Actor::system()).is_err());
        assert_eq!(reopen(&mut p, Stage::MalfunctionDerivation, &Actor::system()).unwrap(), Stage::MalfunctionDerivation);
        assert_eq!(p.audit.len(), 1);
    }
}
