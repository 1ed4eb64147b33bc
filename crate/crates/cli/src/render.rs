//! Human-readable output. Every function returns text ending in a newline.

use std::fmt::Write;

use hara_core::model::{EntityRef, TraceMatrix};
use hara_core::pipeline::{CommittedBatch, ComparisonReport, FindingSeverity, ReviewOutcome, StageSummary};
use hara_core::{AuditEntry, CoverageMetrics, Project, ValidationReport};

fn name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

pub fn batch(b: &CommittedBatch) -> String {
    let mut out = format!("{}: {} candidate(s) from {}\n", b.stage, b.item_ids.len(), b.backend);
    if !b.item_ids.is_empty() {
        let _ = writeln!(out, "  {}", b.item_ids.join(" "));
    }
    for d in &b.dropped {
        let _ = writeln!(out, "  dropped #{}: {}", d.index, d.reason);
    }
    out
}

pub fn outcomes(list: &[ReviewOutcome]) -> String {
    if list.is_empty() {
        return "nothing to review\n".into();
    }
    list.iter().map(|o| format!("{} -> {}\n", o.item_ref.id, name(&o.status))).collect()
}

pub fn status(project: &Project, board: &[StageSummary]) -> String {
    let mut out = format!("{}: stage {} ({} pending)\n", project.name, project.stage, project.pending_at(project.stage));
    let _ = writeln!(out, "{:<24}{:>9}{:>9}{:>9}{:>9}", "stage", "proposed", "accepted", "modified", "rejected");
    for s in board {
        let _ = writeln!(out, "{:<24}{:>9}{:>9}{:>9}{:>9}", s.stage.to_string(), s.proposed, s.accepted, s.modified, s.rejected);
    }
    out
}

pub fn findings(report: &ValidationReport) -> String {
    if report.findings.is_empty() {
        return "no findings\n".into();
    }
    let mut out = String::new();
    for f in &report.findings {
        let level = match f.severity {
            FindingSeverity::Error => "error",
            FindingSeverity::Warning => "warning",
        };
        let _ = writeln!(out, "{level} {}: {}", f.rule_id, f.message);
    }
    let errors = report.error_count();
    let _ = writeln!(out, "{} finding(s), {errors} error(s)", report.findings.len());
    out
}

pub fn metrics(m: &CoverageMetrics) -> String {
    format!(
        "functions: {}\nmalfunctions: {}\nhazards: {}\nsafety goals: {} ({} ASIL-rated)\nguide-word coverage: {:.1}%\nmalfunction-hazard coverage: {:.1}%\nelapsed hours: {:.2}\n",
        m.function_count,
        m.malfunction_count,
        m.hazard_count,
        m.total_goal_count,
        m.asil_rated_goal_count,
        m.function_guideword_coverage * 100.0,
        m.malfunction_hazard_coverage * 100.0,
        m.elapsed_hours,
    )
}

pub fn audit(entries: &[AuditEntry]) -> String {
    entries
        .iter()
        .map(|e| {
            format!(
                "{:>5} {} {:<8} {:<10} {}\n",
                e.seq,
                e.timestamp.format("%Y-%m-%dT%H:%M:%S%.3fZ"),
                e.actor.id,
                name(&e.action),
                e.entity_ref
            )
        })
        .collect()
}

pub fn path(project: &Project, path: Option<&[EntityRef]>) -> String {
    let Some(path) = path else { return "no path\n".into() };
    let label = |r: &EntityRef| match (project.function(&r.id), project.malfunction(&r.id)) {
        (Some(f), _) => format!("{} ({})", r.id, f.item.name),
        (_, Some(m)) => format!("{} ({})", r.id, m.item.description),
        _ => r.id.clone(),
    };
    format!("{}\n", path.iter().map(label).collect::<Vec<_>>().join(" -> "))
}

pub fn matrix(m: &TraceMatrix) -> String {
    let mut out = format!("{:<8}", "");
    for g in &m.goals {
        let _ = write!(out, "{g:>6}");
    }
    out.push('\n');
    for (r, row) in m.requirements.iter().zip(&m.cells) {
        let _ = write!(out, "{r:<8}");
        for cell in row {
            let _ = write!(out, "{:>6}", if *cell { "x" } else { "." });
        }
        out.push('\n');
    }
    out
}

pub fn comparison(c: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<28}{:>10}{:>10}{:>10}", "", "a", "b", "b - a");
    let rows = [
        ("guide-word coverage", c.a.function_guideword_coverage, c.b.function_guideword_coverage, c.deltas.function_guideword_coverage),
        ("malfunction-hazard coverage", c.a.malfunction_hazard_coverage, c.b.malfunction_hazard_coverage, c.deltas.malfunction_hazard_coverage),
        ("hazards", c.a.hazard_count as f64, c.b.hazard_count as f64, c.deltas.hazard_count as f64),
        ("safety goals", c.a.total_goal_count as f64, c.b.total_goal_count as f64, c.deltas.total_goal_count as f64),
        ("ASIL-rated goals", c.a.asil_rated_goal_count as f64, c.b.asil_rated_goal_count as f64, c.deltas.asil_rated_goal_count as f64),
        ("elapsed hours", c.a.elapsed_hours, c.b.elapsed_hours, c.deltas.elapsed_hours),
    ];
    for (label, a, b, d) in rows {
        let _ = writeln!(out, "{label:<28}{a:>10.2}{b:>10.2}{d:>+10.2}");
    }
    for (side, list) in [("a", &c.hazards_only_in_a), ("b", &c.hazards_only_in_b)] {
        for h in list.iter() {
            let _ = writeln!(out, "only in {side}: {h}");
        }
    }
    out
}
