use std::time::Instant;

use hara_core::golden::{self, GAP_MALFUNCTION, HAZARDS, MALFUNCTIONS};
use hara_core::model::{Hazard, NewEntity};
use hara_core::pipeline::FindingSeverity;
use hara_core::*;

fn backend() -> RuleBasedBackend {
    RuleBasedBackend::new(Catalog::shipped())
}

#[test]
fn replay_reproduces_reference_analysis() {
    let start = Instant::now();
    let out = golden::replay(&backend()).unwrap();
    let p = &out.project;
    assert_eq!(p.stage, Stage::Complete);

    let names: Vec<_> = p.active_functions().map(|f| f.item.name.as_str()).collect();
    assert_eq!(names, ["Obstacle Detection", "Collision Prediction", "Braking", "Collision Warning"]);
    let braking = p.active_functions().find(|f| f.item.name == "Braking").unwrap();
    assert_eq!(braking.item.requirement_ids, ["PR2", "PR3", "PR5"]);

    assert_eq!(out.malfunctions_reviewed.len(), 19);
    for m in &MALFUNCTIONS {
        assert!(out.malfunctions_reviewed.iter().any(|d| d == m.description), "{}", m.description);
        assert!(p.malfunctions.iter().any(|r| r.item.description == m.description));
    }

    assert_eq!(out.gate_findings.len(), 1);
    assert_eq!(out.gate_findings[0].rule_id, "HZ-1");
    assert!(out.gate_findings[0].message.contains(MALFUNCTIONS[GAP_MALFUNCTION].description));

    assert_eq!(p.active_hazards().count(), 18);
    for (i, row) in HAZARDS.iter().enumerate() {
        let h = golden::hazard_for_row(p, row).unwrap_or_else(|| panic!("row {}", i + 1));
        assert_eq!(p.hazard_asil(&h.id), Some(row.asil), "row {}", i + 1);
    }

    let m = metrics(p);
    assert_eq!((m.total_goal_count, m.asil_rated_goal_count), (12, 10));
    assert!(validate(p).is_clean(), "{:?}", validate(p));
    assert!(p.audit.verify().is_ok());
    assert!(start.elapsed().as_secs() < 10);
}

#[test]
fn replay_is_deterministic_apart_from_timestamps() {
    let a = golden::replay(&backend()).unwrap().project;
    let b = golden::replay(&backend()).unwrap().project;
    assert_eq!(serde_json::to_value(&a).unwrap(), serde_json::to_value(&b).unwrap());
}

#[test]
fn raw_corpus_has_single_hz1_finding() {
    let mut p = golden::tables_corpus();
    let report = validate(&p);
    assert_eq!(report.findings.len(), 1, "{report:?}");
    let f = &report.findings[0];
    assert_eq!(f.rule_id, "HZ-1");
    assert_eq!(f.severity, FindingSeverity::Warning);
    assert_eq!(f.entity_refs[0].id, "M10");
    assert!(f.message.contains("Braking Stopped too late"));

    let gate = advance_stage(&mut p.clone(), &Actor::system());
    match gate {
        Err(HaraError::ValidationFailed(r)) => assert_eq!(r.by_rule("HZ-1")[0].severity, FindingSeverity::Error),
        other => panic!("{other:?}"),
    }

    let fix = Hazard {
        malfunction_id: "M10".into(),
        scenario: "Braking continues after the threat has cleared and may lead to rear-end collision with the following vehicle.".into(),
        operational_situation: vec![],
        vehicle_level_effect: "rear-end collision".into(),
    };
    p.add_entity(NewEntity::Hazard(fix), &Actor::engineer("e")).unwrap();
    assert!(validate(&p).is_clean());
    assert_eq!(advance_stage(&mut p, &Actor::system()).unwrap(), Stage::RiskAssessment);
}

#[test]
fn completed_corpus_goals_and_links() {
    let p = golden::completed_corpus();
    let sg7 = p.safety_goal("SG7").unwrap();
    assert_eq!(sg7.item.hazard_ids, ["H8", "H9", "H10", "H12"]);
    assert_eq!(sg7.item.asil, Some(Asil::D));
    let expected = [Asil::D, Asil::C, Asil::D, Asil::D, Asil::C, Asil::D, Asil::D, Asil::C, Asil::D, Asil::QM, Asil::A, Asil::QM];
    for (i, a) in expected.iter().enumerate() {
        assert_eq!(p.safety_goal(&format!("SG{}", i + 1)).unwrap().item.asil, Some(*a));
    }
    let path = p.trace_path("PR1", "SG1").unwrap();
    let ids: Vec<_> = path.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["PR1", "F1", "M1", "H1", "SG1"]);
    assert_eq!(p.trace_matrix().get("PR4", "SG9"), Some(true));
    assert_eq!(p.trace_matrix().get("PR1", "SG9"), Some(false));

    let m = metrics(&p);
    assert_eq!((m.total_goal_count, m.asil_rated_goal_count), (12, 10));
    assert!((m.malfunction_hazard_coverage - 18.0 / 19.0).abs() < 1e-9);
    assert_eq!(m.function_guideword_coverage, 1.0);
}

#[test]
fn reports_over_completed_corpus() {
    let p = golden::completed_corpus();
    let md = export_report(&p, ReportFormat::Markdown);
    let first_row = md.lines().find(|l| l.starts_with("| 1 |")).unwrap();
    assert!(first_row.contains("SG 1: ") && first_row.ends_with("ASIL D |"), "{first_row}");

    let csv = export_report(&p, ReportFormat::Csv);
    let mut counts = std::collections::BTreeMap::new();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    for rec in reader.records() {
        *counts.entry(rec.unwrap()[0].to_string()).or_insert(0) += 1;
    }
    assert_eq!(counts["function"], 4);
    assert_eq!(counts["malfunction"], 19);
    assert_eq!(counts["hazard"], 18);
    assert_eq!(counts["safety_goal"], 12);

    for format in [ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json] {
        assert_eq!(export_report(&p, format), export_report(&p.clone(), format));
    }
}

#[test]
fn comparison_lists_missing_hazards() {
    let a = golden::completed_corpus();
    let mut b = a.clone();
    // Drop three hazards together with their ratings and goal links.
    let gone = ["H14", "H17", "H18"];
    b.hazards.retain(|h| !gone.contains(&h.id.as_str()));
    b.risk_ratings.retain(|r| !gone.contains(&r.item.hazard_id.as_str()));
    b.safety_goals.retain(|g| !g.item.hazard_ids.iter().all(|h| gone.contains(&h.as_str())));
    let report = compare_projects(&a, &b).unwrap();
    assert_eq!(report.hazards_only_in_a.len(), 3);
    assert!(report.hazards_only_in_b.is_empty());
    assert!(report.deltas.malfunction_hazard_coverage < 0.0);
    assert_eq!(report.deltas.hazard_count, -3);

    let mut other = a.clone();
    other.requirements.pop();
    assert!(matches!(compare_projects(&a, &other), Err(HaraError::MismatchedItems(_))));
}
