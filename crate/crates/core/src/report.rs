//! Markdown, CSV and JSON reports over the active entities of a project.
//! Output depends only on project content, so identical projects give
//! byte-identical reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{HaraError, Result};
use crate::pipeline::{metrics, validate};
use crate::model::Project;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = HaraError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(HaraError::InvariantViolation(format!("unknown report format `{other}`"))),
        }
    }
}

/// "SG12" reads as "SG 12" in reports.
pub fn goal_label(id: &str) -> String {
    match id.strip_prefix("SG") {
        Some(n) if !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()) => format!("SG {n}"),
        _ => id.to_string(),
    }
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', " ")
}

pub fn export_report(project: &Project, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => markdown(project),
        ReportFormat::Csv => csv_report(project),
        ReportFormat::Json => json_report(project),
    }
}

fn markdown(p: &Project) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# HARA report: {}\n", cell(&p.name));
    let _ = writeln!(out, "Stage: {}\n", p.stage);

    out.push_str("## Requirements\n\n| ID | Description |\n|---|---|\n");
    for r in &p.requirements {
        let _ = writeln!(out, "| {} | {} |", cell(&r.id), cell(&r.text));
    }

    out.push_str("\n## Functions\n\n| Requirement | Function | ID |\n|---|---|---|\n");
    for r in &p.requirements {
        for f in p.active_functions().filter(|f| f.item.requirement_ids.contains(&r.id)) {
            let _ = writeln!(out, "| {} | {} | {} |", cell(&r.id), cell(&f.item.name), f.id);
        }
    }

    out.push_str("\n## Malfunctions\n\n| Function | Guide word | Malfunction | ID |\n|---|---|---|---|\n");
    for f in p.active_functions() {
        for m in p.active_malfunctions().filter(|m| m.item.function_id == f.id) {
            let _ = writeln!(out, "| {} | {} | {} | {} |", cell(&f.item.name), m.item.guide_word, cell(&m.item.description), m.id);
        }
    }

    out.push_str("\n## Hazardous scenarios\n\n| Malfunction | Hazard description | ID |\n|---|---|---|\n");
    for m in p.active_malfunctions() {
        for h in p.active_hazards().filter(|h| h.item.malfunction_id == m.id) {
            let _ = writeln!(out, "| {} | {} | {} |", cell(&m.item.description), cell(&h.item.scenario), h.id);
        }
    }

    out.push_str("\n## Risk assessment\n\n| Hazard | S | E | C | ASIL | Rationale |\n|---|---|---|---|---|---|\n");
    for h in p.active_hazards() {
        if let Some(r) = p.confirmed_rating(&h.id) {
            let why = format!(
                "S: {}; E: {}; C: {}",
                r.item.rationale.severity, r.item.rationale.exposure, r.item.rationale.controllability
            );
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                h.id,
                r.item.severity,
                r.item.exposure,
                r.item.controllability,
                r.item.asil().label(),
                cell(&why)
            );
        }
    }

    out.push_str("\n## Safety goals\n\n| No. | Hazardous scenario | Safety goal | ASIL |\n|---|---|---|---|\n");
    let mut row = 0;
    for h in p.active_hazards() {
        for g in p.active_goals().filter(|g| g.item.hazard_ids.contains(&h.id)) {
            row += 1;
            let asil = p.hazard_asil(&h.id).map_or_else(|| "unrated".to_string(), |a| a.label());
            let _ = writeln!(
                out,
                "| {row} | {} | {}: {} | {asil} |",
                cell(&h.item.scenario),
                goal_label(&g.id),
                cell(&g.item.text)
            );
        }
    }

    out.push_str("\n### Goal summary\n\n| Goal | Hazards | ASIL | Safe state | FTTI (ms) |\n|---|---|---|---|---|\n");
    for g in p.active_goals() {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            goal_label(&g.id),
            g.item.hazard_ids.join(", "),
            g.item.asil.map_or_else(|| "unrated".to_string(), |a| a.label()),
            cell(g.item.safe_state.as_deref().unwrap_or("")),
            g.item.ftti_ms.map(|v| v.to_string()).unwrap_or_default()
        );
    }

    out.push_str("\n## Validation\n\n| Rule | Severity | Entities | Message |\n|---|---|---|---|\n");
    for f in validate(p).findings {
        let refs: Vec<String> = f.entity_refs.iter().map(|r| r.id.clone()).collect();
        let severity = serde_json::to_value(f.severity).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        let _ = writeln!(out, "| {} | {severity} | {} | {} |", f.rule_id, refs.join(", "), cell(&f.message));
    }

    let m = metrics(p);
    out.push_str("\n## Metrics\n\n| Metric | Value |\n|---|---|\n");
    let _ = writeln!(out, "| Function/guide-word coverage | {:.1}% |", m.function_guideword_coverage * 100.0);
    let _ = writeln!(out, "| Malfunction/hazard coverage | {:.1}% |", m.malfunction_hazard_coverage * 100.0);
    let _ = writeln!(out, "| Safety goals | {} ({} ASIL-rated) |", m.total_goal_count, m.asil_rated_goal_count);
    let _ = writeln!(out, "| Elapsed hours | {:.2} |", m.elapsed_hours);
    out
}

fn csv_report(p: &Project) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut row = |fields: [&str; 6]| w.write_record(fields).expect("in-memory write");
    row(["type", "id", "links", "text", "detail", "asil"]);
    for f in p.active_functions() {
        let kind = crate::hazop::output_kind_str(f.item.output_kind);
        row(["function", &f.id, &f.item.requirement_ids.join(";"), &f.item.name, kind, ""]);
    }
    for m in p.active_malfunctions() {
        row(["malfunction", &m.id, &m.item.function_id, &m.item.description, m.item.guide_word.as_str(), ""]);
    }
    for h in p.active_hazards() {
        let (detail, asil) = match p.confirmed_rating(&h.id) {
            Some(r) => (
                format!("{} {} {}", r.item.severity, r.item.exposure, r.item.controllability),
                r.item.asil().as_str().to_string(),
            ),
            None => (String::new(), String::new()),
        };
        row(["hazard", &h.id, &h.item.malfunction_id, &h.item.scenario, &detail, &asil]);
    }
    for g in p.active_goals() {
        let asil = g.item.asil.map(|a| a.as_str()).unwrap_or("");
        row(["safety_goal", &g.id, &g.item.hazard_ids.join(";"), &g.item.text, g.item.safe_state.as_deref().unwrap_or(""), asil]);
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn json_report(p: &Project) -> String {
    let hazards: Vec<_> = p
        .active_hazards()
        .map(|h| {
            json!({
                "id": h.id,
                "malfunction_id": h.item.malfunction_id,
                "scenario": h.item.scenario,
                "rating": p.confirmed_rating(&h.id).map(|r| &r.item),
                "asil": p.hazard_asil(&h.id),
            })
        })
        .collect();
    let doc = json!({
        "name": p.name,
        "stage": p.stage,
        "requirements": p.requirements,
        "odd": p.odd_parameters,
        "functions": p.active_functions().collect::<Vec<_>>(),
        "malfunctions": p.active_malfunctions().collect::<Vec<_>>(),
        "hazards": hazards,
        "safety_goals": p.active_goals().collect::<Vec<_>>(),
        "validation": validate(p),
        "metrics": metrics(p),
    });
    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
}
