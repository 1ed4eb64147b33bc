//! The automatic emergency braking (AEB) case study: bundled item
//! definition, reference tables, ready-made fixtures and the scripted review
//! that reproduces the reference analysis from rule-based generation.

use std::collections::BTreeSet;

use serde_json::json;

use crate::audit::Actor;
use crate::backend::Backend;
use crate::error::{HaraError, Result};
use crate::hazop::GuideWord;
use crate::io::{ingest_item_definition, project_from_item, ItemDefinitionDoc, SourceFormat};
use crate::model::{Function, Hazard, Malfunction, NewEntity, OutputKind, Project, Record, ReviewStatus, SafetyGoal, Stage};
use crate::pipeline::{
    advance_stage, normalize_scenario, review, run_stage_generation, Finding, GenerateOptions, ReviewDecision,
};
use crate::risk::{rate_hazard, Asil, Controllability, Exposure, RateOptions, Rationale, RiskRating, Severity};

pub const AEB_ITEM_JSON: &str = include_str!("../data/aeb_item.json");
pub const AEB_ITEM_CSV: &str = include_str!("../data/aeb_item.csv");

/// Reviewer id used by the scripted replay.
pub const REVIEWER: &str = "golden-reviewer";

pub fn aeb_item() -> ItemDefinitionDoc {
    ingest_item_definition(AEB_ITEM_JSON, SourceFormat::Json).expect("bundled item definition is valid")
}

pub struct FunctionRow {
    pub name: &'static str,
    pub requirement_ids: &'static [&'static str],
    pub output_kind: OutputKind,
}

pub const FUNCTIONS: [FunctionRow; 4] = [
    FunctionRow { name: "Obstacle Detection", requirement_ids: &["PR1"], output_kind: OutputKind::Event },
    FunctionRow { name: "Collision Prediction", requirement_ids: &["PR2"], output_kind: OutputKind::Event },
    FunctionRow { name: "Braking", requirement_ids: &["PR2", "PR3", "PR5"], output_kind: OutputKind::Continuous },
    FunctionRow { name: "Collision Warning", requirement_ids: &["PR4"], output_kind: OutputKind::Binary },
];

pub struct MalfunctionRow {
    /// Index into [`FUNCTIONS`].
    pub function: usize,
    pub guide_word: GuideWord,
    pub description: &'static str,
}

const fn malf(function: usize, guide_word: GuideWord, description: &'static str) -> MalfunctionRow {
    MalfunctionRow { function, guide_word, description }
}

pub const MALFUNCTIONS: [MalfunctionRow; 19] = [
    malf(0, GuideWord::No, "Obstacle not detected"),
    malf(0, GuideWord::Unintended, "False Obstacle detected"),
    malf(0, GuideWord::Late, "Delay on Obstacle Detection"),
    malf(1, GuideWord::No, "Collision is not predicted"),
    malf(1, GuideWord::Unintended, "False Collision is predicted"),
    malf(1, GuideWord::Late, "Delay in collision prediction"),
    malf(2, GuideWord::No, "Not braking"),
    malf(2, GuideWord::Late, "Delay in braking"),
    malf(2, GuideWord::Late, "Braking Stopped too soon"),
    malf(2, GuideWord::Late, "Braking Stopped too late"),
    malf(2, GuideWord::Less, "Too little braking"),
    malf(2, GuideWord::More, "Too much braking"),
    malf(2, GuideWord::Unintended, "Braking too soon"),
    malf(3, GuideWord::No, "Not warning"),
    malf(3, GuideWord::Early, "Too early warning"),
    malf(3, GuideWord::Late, "Too late warning"),
    malf(3, GuideWord::Intermittent, "Stopped Warning too soon"),
    malf(3, GuideWord::Intermittent, "Provided Warning too long"),
    malf(3, GuideWord::Unintended, "False warning"),
];

/// The one malfunction the reference analysis leaves without a hazard.
pub const GAP_MALFUNCTION: usize = 9;

pub struct HazardRow {
    /// Index into [`MALFUNCTIONS`].
    pub malfunction: usize,
    pub scenario: &'static str,
    pub rating: (Severity, Exposure, Controllability),
    pub asil: Asil,
}

const D: (Severity, Exposure, Controllability) = (Severity::S3, Exposure::E4, Controllability::C3);
const C_VEHICLE: (Severity, Exposure, Controllability) = (Severity::S2, Exposure::E4, Controllability::C3);
const A_WARNING: (Severity, Exposure, Controllability) = (Severity::S2, Exposure::E3, Controllability::C2);
const QM_TRUST: (Severity, Exposure, Controllability) = (Severity::S1, Exposure::E3, Controllability::C1);
const QM_COMPLACENCY: (Severity, Exposure, Controllability) = (Severity::S1, Exposure::E2, Controllability::C2);

const fn haz(malfunction: usize, scenario: &'static str, rating: (Severity, Exposure, Controllability), asil: Asil) -> HazardRow {
    HazardRow { malfunction, scenario, rating, asil }
}

pub const HAZARDS: [HazardRow; 18] = [
    haz(0, "AEB does not detect obstacle on Ego's path and front-end collision occurs at highway speed with the obstacle.", D, Asil::D),
    haz(1, "AEB falsely detects an obstacle and Ego decelerates with maximum braking profile which may lead to rear-end collision with the following vehicle at highway speed.", C_VEHICLE, Asil::C),
    haz(2, "AEB delay in detection of obstacle may consume the time required for sufficient braking and lead to front-end collision with the obstacle.", D, Asil::D),
    haz(3, "Failure to predict collisions leads to potential front-end collision with pedestrian/ road users", D, Asil::D),
    haz(5, "Delay in Collision Prediction may lead to front-end collisions with pedestrians/ road users.", D, Asil::D),
    haz(4, "Incorrect collision prediction lead to unnecessary braking and may lead to rear-end collision with vehicles following Ego.", C_VEHICLE, Asil::C),
    haz(6, "AEB failure to apply braking when Ego is on the collision path may lead to front-end collision with pedestrian/ road users.", D, Asil::D),
    haz(7, "Delayed response in applying brakes may lead to potential front-end collision with pedestrian/road users", D, Asil::D),
    haz(8, "Stopping braking too soon when Ego is still in collision path resulted in inadequate deceleration and may lead to front-end collision with pedestrian /road-users", D, Asil::D),
    haz(10, "Sluggish response in applying brakes leading to potential collision with road users", D, Asil::D),
    haz(11, "Braking more than the required deceleration to avoid collision may destabilize the vehicle and lead to side collisions with adjacent road users.", C_VEHICLE, Asil::C),
    haz(12, "Braking too soon when the collision threat is not imminent may lead to rear-end collision with the following vehicle", C_VEHICLE, Asil::C),
    haz(13, "Front-end collision due to failure to warn the driver for potential collision when AEB cannot avoid the collision.", D, Asil::D),
    haz(14, "Giving warning too early may lead to loss of trust of the driver and not taking back control when the real collision threat is ahead.", QM_TRUST, Asil::QM),
    haz(15, "Too late warning may consume the required time for the driver to take back control and perform evasive maneuvers.", D, Asil::D),
    haz(16, "Stopping the warning too soon when there is a collision threat may lead to front-end collision by not performing evasive maneuvers by the driver.", A_WARNING, Asil::A),
    haz(17, "Driver becomes complacent due to excessive warning time and disregards future warnings which may lead to collision when there is an imminent collision threat.", QM_COMPLACENCY, Asil::QM),
    haz(18, "Driver experiences false positive warnings leading to driver complacency or disregard for future legitimate warnings which may lead to collision when driver evasive maneuver is required to avoid collision", QM_COMPLACENCY, Asil::QM),
];

pub struct GoalRow {
    pub text: &'static str,
    /// Indices into [`HAZARDS`].
    pub hazards: &'static [usize],
}

pub const GOALS: [GoalRow; 12] = [
    GoalRow { text: "The AEB system shall detect all obstacles on the Ego's path.", hazards: &[0] },
    GoalRow { text: "The AEB system shall avoid false detections to prevent unintended braking.", hazards: &[1] },
    GoalRow { text: "The AEB system shall ensure timely detection of obstacles to allow sufficient braking time.", hazards: &[2] },
    GoalRow { text: "The system shall ensure prompt collision prediction.", hazards: &[3, 4] },
    GoalRow { text: "The AEB system shall avoid false collision prediction to prevent unintended braking.", hazards: &[5] },
    GoalRow { text: "The AEB system shall apply braking when the Ego vehicle is on a collision path.", hazards: &[6] },
    GoalRow { text: "The AEB system shall ensure a timely braking response.", hazards: &[7, 8, 9, 11] },
    GoalRow { text: "The AEB system shall avoid vehicle destabilization during the braking.", hazards: &[10] },
    GoalRow { text: "The AEB system shall warn the driver at least 2 seconds before engaging the braking.", hazards: &[12, 14] },
    GoalRow {
        text: "The system shall optimize the timing of warnings to maintain driver trust and ensure appropriate control handover.",
        hazards: &[13],
    },
    GoalRow { text: "The system shall ensure warnings persist until the collision threat is resolved.", hazards: &[15] },
    GoalRow {
        text: "The system shall avoid false warnings to maintain driver trust and ensure responsiveness to legitimate warnings.",
        hazards: &[16, 17],
    },
];

fn rationale_for(rating: (Severity, Exposure, Controllability)) -> Rationale {
    let (s, e, c) = match rating {
        D => (
            "impact with an obstacle or a vulnerable road user at speed can be fatal",
            "situations that need emergency braking arise on most drives within the ODD",
            "the driver relies on the system and has no time left to react",
        ),
        C_VEHICLE => (
            "rear-end or side impact between vehicles, severe but usually survivable injuries",
            "following and adjacent traffic is present on most drives",
            "other drivers cannot anticipate the unexpected deceleration",
        ),
        A_WARNING => (
            "the driver usually starts evasive action before the warning ends, so impacts are at reduced speed",
            "a warning ending while the threat persists is an occasional situation",
            "most drivers continue the evasive maneuver they already began",
        ),
        QM_TRUST => (
            "no direct impact; loss of trust only matters in a later event",
            "early warnings occur in ordinary dense traffic",
            "the driver keeps full control of the vehicle",
        ),
        _ => (
            "indirect effect through driver complacency, light injuries at most",
            "long or false warnings are infrequent",
            "the driver can still react to the actual threat",
        ),
    };
    Rationale { severity: s.into(), exposure: e.into(), controllability: c.into() }
}

/// The reviewed rating for one reference hazard.
pub fn reference_rating(row: &HazardRow, hazard_id: &str) -> RiskRating {
    let (severity, exposure, controllability) = row.rating;
    RiskRating { hazard_id: hazard_id.into(), severity, exposure, controllability, rationale: rationale_for(row.rating) }
}

/// Vehicle-level effect named in a scenario text.
pub fn effect_of(scenario: &str) -> String {
    let text = scenario.to_lowercase();
    let effect = if text.contains("rear-end") {
        "rear-end collision"
    } else if text.contains("side collision") {
        "side collision"
    } else if text.contains("front-end") {
        "front-end collision"
    } else if text.contains("collision") {
        "collision"
    } else {
        "loss of driver trust"
    };
    effect.to_string()
}

fn situation_of(scenario: &str) -> Vec<String> {
    let mut out = vec!["Road Types".to_string(), "Obstacles".to_string()];
    if scenario.contains("highway") {
        out.push("Speed Range".into());
    }
    out
}

fn fixture_actor() -> Actor {
    Actor::engineer("golden-fixture")
}

/// The reference functions, malfunctions and hazards, with ids F1..F4,
/// M1..M19 and H1..H18 in table order, at hazard identification.
pub fn tables_corpus() -> Project {
    let actor = fixture_actor();
    let mut p = project_from_item(&aeb_item(), "AEB", &actor).expect("bundled item definition commits");
    for f in &FUNCTIONS {
        let f = Function {
            name: f.name.into(),
            requirement_ids: f.requirement_ids.iter().map(|s| s.to_string()).collect(),
            output_kind: f.output_kind,
        };
        p.add_entity(NewEntity::Function(f), &actor).expect("reference function");
    }
    for m in &MALFUNCTIONS {
        let m = Malfunction {
            function_id: format!("F{}", m.function + 1),
            guide_word: m.guide_word,
            description: m.description.into(),
        };
        p.add_entity(NewEntity::Malfunction(m), &actor).expect("reference malfunction");
    }
    for h in &HAZARDS {
        let h = Hazard {
            malfunction_id: format!("M{}", h.malfunction + 1),
            scenario: h.scenario.into(),
            operational_situation: situation_of(h.scenario),
            vehicle_level_effect: effect_of(h.scenario),
        };
        p.add_entity(NewEntity::Hazard(h), &actor).expect("reference hazard");
    }
    p.stage = Stage::HazardIdentification;
    p
}

/// [`tables_corpus`] plus reviewed ratings and the twelve reference goals
/// SG1..SG12, marked complete.
pub fn completed_corpus() -> Project {
    let actor = fixture_actor();
    let mut p = tables_corpus();
    for (i, row) in HAZARDS.iter().enumerate() {
        rate_hazard(&mut p, reference_rating(row, &format!("H{}", i + 1)), RateOptions::confirmed(), &actor).expect("reference rating");
    }
    for g in &GOALS {
        let goal = SafetyGoal {
            text: g.text.into(),
            hazard_ids: g.hazards.iter().map(|i| format!("H{}", i + 1)).collect(),
            asil: None,
            safe_state: None,
            ftti_ms: None,
        };
        p.add_entity(NewEntity::SafetyGoal(goal), &actor).expect("reference goal");
    }
    p.stage = Stage::Complete;
    p
}

/// Active hazard whose scenario matches a reference row.
pub fn hazard_for_row<'a>(project: &'a Project, row: &HazardRow) -> Option<&'a Record<Hazard>> {
    let key = normalize_scenario(row.scenario);
    project.active_hazards().find(|h| normalize_scenario(&h.item.scenario) == key)
}

fn reference_function(project: &Project, function_id: &str) -> Option<usize> {
    let name = &project.function(function_id)?.item.name;
    FUNCTIONS.iter().position(|f| f.name.eq_ignore_ascii_case(name))
}

fn reference_malfunction(project: &Project, m: &Malfunction) -> Option<usize> {
    let f = reference_function(project, &m.function_id)?;
    MALFUNCTIONS.iter().position(|r| r.function == f && r.description.eq_ignore_ascii_case(&m.description))
}

/// Decisions a reviewer following the reference analysis takes on the
/// items currently proposed at the project's stage.
pub fn decisions_for(project: &Project) -> Vec<ReviewDecision> {
    let proposed = |s: ReviewStatus| s == ReviewStatus::Proposed;
    let mut out = Vec::new();
    match project.stage {
        Stage::FunctionExtraction => {
            for f in project.functions.iter().filter(|f| proposed(f.status)) {
                let Some(row) = FUNCTIONS.iter().find(|r| r.name.eq_ignore_ascii_case(&f.item.name)) else {
                    out.push(ReviewDecision::reject(&f.id, REVIEWER).with_note("not part of the item"));
                    continue;
                };
                let expected: BTreeSet<&str> = row.requirement_ids.iter().copied().collect();
                let got: BTreeSet<&str> = f.item.requirement_ids.iter().map(String::as_str).collect();
                if expected == got && f.item.output_kind == row.output_kind && f.item.name == row.name {
                    out.push(ReviewDecision::accept(&f.id, REVIEWER));
                } else {
                    let payload = json!({
                        "name": row.name,
                        "requirement_ids": row.requirement_ids,
                        "output_kind": row.output_kind,
                    });
                    out.push(ReviewDecision::modify(&f.id, REVIEWER, payload).with_note("aligned with the requirement allocation"));
                }
            }
        }
        Stage::MalfunctionDerivation => {
            for m in project.malfunctions.iter().filter(|m| proposed(m.status)) {
                match reference_malfunction(project, &m.item) {
                    // Kept open for review so the hazard gate can still drop it.
                    Some(GAP_MALFUNCTION) => {
                        let payload = serde_json::to_value(&m.item).expect("malfunction serializes");
                        out.push(ReviewDecision::modify(&m.id, REVIEWER, payload).with_note("no hazardous scenario identified yet"));
                    }
                    Some(_) => out.push(ReviewDecision::accept(&m.id, REVIEWER)),
                    None => out.push(ReviewDecision::reject(&m.id, REVIEWER).with_note("outside the reference analysis")),
                }
            }
        }
        Stage::HazardIdentification => {
            let mut used = BTreeSet::new();
            for h in project.hazards.iter().filter(|h| proposed(h.status)) {
                let row = project
                    .malfunction(&h.item.malfunction_id)
                    .and_then(|m| reference_malfunction(project, &m.item))
                    .and_then(|mi| HAZARDS.iter().find(|r| r.malfunction == mi));
                match row {
                    Some(row) if used.insert(row.malfunction) => {
                        let payload = json!({
                            "malfunction_id": h.item.malfunction_id,
                            "scenario": row.scenario,
                            "operational_situation": h.item.operational_situation,
                            "vehicle_level_effect": effect_of(row.scenario),
                        });
                        out.push(ReviewDecision::modify(&h.id, REVIEWER, payload).with_note("rewritten by the reviewer"));
                    }
                    _ => out.push(ReviewDecision::reject(&h.id, REVIEWER).with_note("duplicate or implausible scenario")),
                }
            }
        }
        Stage::RiskAssessment => {
            for r in project.risk_ratings.iter().filter(|r| proposed(r.status)) {
                let row = project
                    .hazard(&r.item.hazard_id)
                    .and_then(|h| HAZARDS.iter().find(|row| normalize_scenario(row.scenario) == normalize_scenario(&h.item.scenario)));
                match row {
                    Some(row) => {
                        let payload = serde_json::to_value(reference_rating(row, &r.item.hazard_id)).expect("rating serializes");
                        out.push(ReviewDecision::modify(&r.id, REVIEWER, payload));
                    }
                    None => out.push(ReviewDecision::reject(&r.id, REVIEWER)),
                }
            }
        }
        Stage::SafetyGoals => {
            let row_of = |hid: &str| {
                let h = project.hazard(hid)?;
                HAZARDS.iter().position(|row| normalize_scenario(row.scenario) == normalize_scenario(&h.item.scenario))
            };
            let candidates: Vec<&Record<SafetyGoal>> = project.safety_goals.iter().filter(|g| proposed(g.status)).collect();
            let mut assigned: Vec<Option<usize>> = vec![None; candidates.len()];
            for (gi, goal) in GOALS.iter().enumerate() {
                let pick = candidates.iter().enumerate().find(|(ci, c)| {
                    assigned[*ci].is_none() && c.item.hazard_ids.iter().any(|h| row_of(h).is_some_and(|r| goal.hazards.contains(&r)))
                });
                if let Some((ci, _)) = pick {
                    assigned[ci] = Some(gi);
                }
            }
            for (ci, c) in candidates.iter().enumerate() {
                match assigned[ci] {
                    Some(gi) => {
                        let goal = &GOALS[gi];
                        let hazard_ids: Vec<String> = goal
                            .hazards
                            .iter()
                            .filter_map(|&r| hazard_for_row(project, &HAZARDS[r]).map(|h| h.id.clone()))
                            .collect();
                        let payload = json!({ "text": goal.text, "hazard_ids": hazard_ids });
                        out.push(ReviewDecision::modify(&c.id, REVIEWER, payload));
                    }
                    None => out.push(ReviewDecision::reject(&c.id, REVIEWER).with_note("covered by another goal")),
                }
            }
        }
        Stage::ItemDefinition | Stage::Complete => {}
    }
    out
}

/// Decisions that clear a failed hazard gate: drops the malfunction the
/// reference analysis leaves without a hazard.
pub fn gate_fix_decisions(project: &Project) -> Vec<ReviewDecision> {
    project
        .malfunctions
        .iter()
        .filter(|m| m.status == ReviewStatus::Modified)
        .filter(|m| !project.active_hazards().any(|h| h.item.malfunction_id == m.id))
        .map(|m| ReviewDecision::reject(&m.id, REVIEWER).with_note("no credible hazardous scenario"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub project: Project,
    /// Active malfunction descriptions once that stage was reviewed.
    pub malfunctions_reviewed: Vec<String>,
    /// Findings that blocked the first attempt to leave hazard identification.
    pub gate_findings: Vec<Finding>,
}

/// Runs the whole analysis in-process: generation, scripted review and
/// advancing, from the bundled item definition to completion.
pub fn replay(backend: &dyn Backend) -> Result<ReplayOutcome> {
    let actor = Actor::engineer(REVIEWER);
    let mut project = project_from_item(&aeb_item(), "AEB", &actor)?;
    let mut malfunctions_reviewed = Vec::new();
    let mut gate_findings = Vec::new();
    while project.stage != Stage::Complete {
        run_stage_generation(&mut project, backend, GenerateOptions::default())?;
        for d in decisions_for(&project) {
            review(&mut project, &d)?;
        }
        if project.stage == Stage::MalfunctionDerivation {
            malfunctions_reviewed = project.active_malfunctions().map(|m| m.item.description.clone()).collect();
        }
        match advance_stage(&mut project, &actor) {
            Ok(_) => {}
            Err(HaraError::ValidationFailed(report)) if project.stage == Stage::HazardIdentification => {
                gate_findings = report.findings;
                for d in gate_fix_decisions(&project) {
                    review(&mut project, &d)?;
                }
                advance_stage(&mut project, &actor)?;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ReplayOutcome { project, malfunctions_reviewed, gate_findings })
}
