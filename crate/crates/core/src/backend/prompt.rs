use serde::{Deserialize, Serialize};

use super::StageContext;
use crate::error::{HaraError, Result};
use crate::model::Stage;

const SYSTEM: &str = "You are a functional-safety engineer assisting with an ISO 26262 hazard analysis and \
risk assessment. Answer only with a JSON array. Do not invent ids: refer only to ids present in the context. \
A safety engineer reviews every item you propose.";

const SEC_DEFINITIONS: &str = "\
Severity: S0 no injuries; S1 light and moderate injuries; S2 severe and life-threatening injuries, survival probable; \
S3 life-threatening or fatal injuries.
Exposure: E0 incredibly unlikely; E1 very low probability; E2 low probability; E3 medium probability; \
E4 high probability, occurs during most drives.
Controllability: C0 controllable in general; C1 simply controllable; C2 normally controllable; \
C3 difficult to control or uncontrollable.";

/// A rendered two-message prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

struct StageTemplate {
    task: &'static str,
    schema: &'static str,
}

fn template(stage: Stage) -> Option<StageTemplate> {
    Some(match stage {
        Stage::FunctionExtraction => StageTemplate {
            task: "Extract the functions the item must perform from the product requirements and the \
operational design domain. Merge functions shared by several requirements into one element.",
            schema: r#"[{"name": string, "requirement_ids": [string], "output_kind": "binary" | "continuous" | "event" | "directional"}]"#,
        },
        Stage::MalfunctionDerivation => StageTemplate {
            task: "Derive malfunctions for each function by applying the HAZOP guide words no, unintended, \
early, late, more, less, inverted and intermittent. Skip guide words that do not apply to a function's \
output kind (for example more or less for binary outputs).",
            schema: r#"[{"function_id": string, "guide_word": "no" | "unintended" | "early" | "late" | "more" | "less" | "inverted" | "intermittent", "description": string}]"#,
        },
        Stage::HazardIdentification => StageTemplate {
            task: "For each malfunction, describe hazardous scenarios at vehicle level that a driver could \
observe, placed in concrete situations from the operational design domain.",
            schema: r#"[{"malfunction_id": string, "scenario": string, "operational_situation": [string], "vehicle_level_effect": string}]"#,
        },
        Stage::RiskAssessment => StageTemplate {
            task: "Rate every hazardous scenario for severity, exposure and controllability, with a short \
justification per factor.",
            schema: r#"[{"hazard_id": string, "severity": "S0".."S3", "exposure": "E0".."E4", "controllability": "C0".."C3", "rationale": {"severity": string, "exposure": string, "controllability": string}}]"#,
        },
        Stage::SafetyGoals => StageTemplate {
            task: "Formulate top-level safety goals that prevent or mitigate the hazardous scenarios. A goal \
may address several hazards; every hazard must be addressed by at least one goal. Optionally give a safe \
state and a fault-tolerant time interval in milliseconds.",
            schema: r#"[{"text": string, "hazard_ids": [string], "safe_state": string?, "ftti_ms": integer?}]"#,
        },
        Stage::ItemDefinition | Stage::Complete => return None,
    })
}

/// Renders the stage template with the context as compact JSON.
pub fn build_prompt(stage: Stage, context: &StageContext) -> Result<Prompt> {
    let t = template(stage).ok_or_else(|| HaraError::MissingTemplate(stage.to_string()))?;
    let ctx = serde_json::to_string(context).expect("context serializes");
    let mut user = format!("Task: {}\n", t.task);
    if stage == Stage::RiskAssessment {
        user.push_str("\nClass definitions:\n");
        user.push_str(SEC_DEFINITIONS);
        user.push('\n');
    }
    user.push_str(&format!("\nContext:\n{ctx}\n\nRespond with a JSON array of objects shaped as:\n{}\n", t.schema));
    Ok(Prompt { system: SYSTEM.to_string(), user })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Keyed;
    use crate::model::Hazard;

    fn hazard(id: &str, scenario: &str) -> Keyed<Hazard> {
        Keyed {
            id: id.into(),
            item: Hazard {
                malfunction_id: "M1".into(),
                scenario: scenario.into(),
                operational_situation: vec![],
                vehicle_level_effect: String::new(),
            },
        }
    }

    #[test]
    fn risk_prompt_embeds_hazard_and_class_definitions() {
        let ctx = StageContext { hazards: vec![hazard("H1", "front-end collision at highway speed")], ..Default::default() };
        let p = build_prompt(Stage::RiskAssessment, &ctx).unwrap();
        assert!(p.user.contains("front-end collision at highway speed"));
        for class in ["S3", "E4", "C3", "S0", "E0", "C0"] {
            assert!(p.user.contains(class), "{class}");
        }
    }

    #[test]
    fn item_definition_has_no_template() {
        assert!(matches!(
            build_prompt(Stage::ItemDefinition, &StageContext::default()),
            Err(HaraError::MissingTemplate(_))
        ));
    }

    #[test]
    fn rendering_is_deterministic() {
        let ctx = StageContext { hazards: vec![hazard("H8", "a"), hazard("H9", "b")], ..Default::default() };
        assert_eq!(build_prompt(Stage::SafetyGoals, &ctx).unwrap(), build_prompt(Stage::SafetyGoals, &ctx).unwrap());
    }
}
