use chrono::Utc;

use super::{Backend, BatchProvenance, Candidate, CandidateBatch, CandidatePayload, GenerationRequest};
use crate::error::Result;
use crate::hazop::{Catalog, GuideWord};
use crate::model::{Function, Hazard, Stage};
use crate::risk::{Controllability, Exposure, Rationale, RiskRating, Severity};

/// Deterministic expander over a guide-word catalog.
#[derive(Debug, Clone)]
pub struct RuleBasedBackend {
    catalog: Catalog,
}

impl RuleBasedBackend {
    pub fn new(catalog: Catalog) -> Self {
        Self { catalog }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn functions(&self, req: &GenerationRequest) -> Vec<Candidate> {
        let mut out: Vec<(String, Function)> = Vec::new();
        for r in &req.context.requirements {
            for p in self.catalog.extract_functions(r) {
                match out.iter_mut().find(|(_, f)| f.name.eq_ignore_ascii_case(&p.item.name)) {
                    Some((_, f)) => {
                        for rid in p.item.requirement_ids {
                            if !f.requirement_ids.contains(&rid) {
                                f.requirement_ids.push(rid);
                            }
                        }
                    }
                    None => out.push((p.template, p.item)),
                }
            }
        }
        out.into_iter()
            .map(|(template, f)| Candidate { template, payload: CandidatePayload::Function(f) })
            .collect()
    }

    fn malfunctions(&self, req: &GenerationRequest) -> Vec<Candidate> {
        req.context
            .functions
            .iter()
            .flat_map(|f| self.catalog.expand_malfunctions(&f.to_record()))
            .map(|p| Candidate { template: p.template, payload: CandidatePayload::Malfunction(p.item) })
            .collect()
    }

    fn hazards(&self, req: &GenerationRequest) -> Result<Vec<Candidate>> {
        let mut out = Vec::new();
        for m in &req.context.malfunctions {
            let fname = req.context.function_name(&m.item.function_id).unwrap_or("function");
            for p in self.catalog.expand_hazard_scenarios(&m.to_record(), fname, &req.context.odd)? {
                out.push(Candidate { template: p.template, payload: CandidatePayload::Hazard(p.item) });
            }
        }
        Ok(out)
    }

    fn ratings(&self, req: &GenerationRequest) -> Vec<Candidate> {
        req.context
            .hazards
            .iter()
            .map(|h| {
                let gw = req.context.malfunction(&h.item.malfunction_id).map(|m| m.guide_word);
                Candidate {
                    template: "rating/heuristic/1".into(),
                    payload: CandidatePayload::Rating(heuristic_rating(&h.id, &h.item, gw)),
                }
            })
            .collect()
    }

    fn goals(&self, req: &GenerationRequest) -> Vec<Candidate> {
        let input: Vec<(String, &crate::model::Malfunction, &str)> = req
            .context
            .hazards
            .iter()
            .filter_map(|h| {
                let m = req.context.malfunction(&h.item.malfunction_id)?;
                let fname = req.context.function_name(&m.function_id).unwrap_or("function");
                Some((h.id.clone(), m, fname))
            })
            .collect();
        self.catalog
            .propose_goals(&input)
            .into_iter()
            .map(|p| Candidate { template: p.template, payload: CandidatePayload::SafetyGoal(p.item) })
            .collect()
    }
}

impl Backend for RuleBasedBackend {
    fn id(&self) -> String {
        "rule_based".into()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<CandidateBatch> {
        req.validate()?;
        let mut items = match req.stage {
            Stage::FunctionExtraction => self.functions(req),
            Stage::MalfunctionDerivation => self.malfunctions(req),
            Stage::HazardIdentification => self.hazards(req)?,
            Stage::RiskAssessment => self.ratings(req),
            Stage::SafetyGoals => self.goals(req),
            Stage::ItemDefinition | Stage::Complete => unreachable!("rejected by validate"),
        };
        items.truncate(req.max_candidates);
        Ok(CandidateBatch {
            items,
            provenance: BatchProvenance {
                backend: self.id(),
                template: format!("catalog/{}", req.stage),
                timestamp: Utc::now(),
            },
            raw_response: None,
            dropped: Vec::new(),
        })
    }
}

/// Keyword-driven first guess at the factor classes; reviewers replace it.
fn heuristic_rating(hazard_id: &str, h: &Hazard, gw: Option<GuideWord>) -> RiskRating {
    let text = format!("{} {}", h.scenario, h.vehicle_level_effect).to_lowercase();
    let (severity, s_why) = if text.contains("pedestrian") || (text.contains("front-end") && text.contains("highway")) {
        (Severity::S3, "collision with vulnerable road users or at high speed can be fatal")
    } else if text.contains("front-end") || text.contains("rear-end") || text.contains("side collision") {
        (Severity::S2, "vehicle-to-vehicle collision with likely severe injuries")
    } else if text.contains("collision") {
        (Severity::S1, "collision of unspecified kind, light to moderate injuries assumed")
    } else {
        (Severity::S0, "no collision described")
    };
    let (exposure, e_why) = if text.contains("highway") || text.contains("urban") {
        (Exposure::E4, "situation occurs during most drives")
    } else {
        (Exposure::E3, "situation occurs regularly but not on every drive")
    };
    let (controllability, c_why) = match gw {
        Some(GuideWord::No | GuideWord::Late | GuideWord::Less) => {
            (Controllability::C3, "the driver relies on the function and has little time to intervene")
        }
        Some(GuideWord::Unintended | GuideWord::More | GuideWord::Inverted) => {
            (Controllability::C2, "most drivers can partly compensate for the unexpected action")
        }
        _ => (Controllability::C1, "the driver can usually take over in time"),
    };
    RiskRating {
        hazard_id: hazard_id.to_string(),
        severity,
        exposure,
        controllability,
        rationale: Rationale {
            severity: s_why.into(),
            exposure: e_why.into(),
            controllability: c_why.into(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Keyed, StageContext};
    use crate::model::{OutputKind, Requirement};

    fn backend() -> RuleBasedBackend {
        RuleBasedBackend::new(Catalog::shipped())
    }

    #[test]
    fn obstacle_requirement_yields_detection() {
        let ctx = StageContext {
            requirements: vec![Requirement {
                id: "PR1".into(),
                text: "The system shall detect obstacles within a range of 150 meters.".into(),
            }],
            ..Default::default()
        };
        let batch = backend().generate(&GenerationRequest::new(Stage::FunctionExtraction, ctx)).unwrap();
        let names: Vec<_> = batch
            .items
            .iter()
            .filter_map(|c| match &c.payload {
                CandidatePayload::Function(f) => Some(f.name.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(names, vec!["Obstacle Detection"]);
    }

    #[test]
    fn braking_malfunctions() {
        let ctx = StageContext {
            functions: vec![Keyed {
                id: "F3".into(),
                item: Function { name: "Braking".into(), requirement_ids: vec!["PR2".into()], output_kind: OutputKind::Continuous },
            }],
            ..Default::default()
        };
        let batch = backend().generate(&GenerationRequest::new(Stage::MalfunctionDerivation, ctx)).unwrap();
        assert_eq!(batch.items.len(), 7);
        assert_eq!(batch.provenance.backend, "rule_based");
    }

    #[test]
    fn deterministic_for_fixed_input() {
        let ctx = StageContext {
            functions: vec![Keyed {
                id: "F1".into(),
                item: Function { name: "Warn".into(), requirement_ids: vec!["PR1".into()], output_kind: OutputKind::Binary },
            }],
            ..Default::default()
        };
        let req = GenerationRequest { seed: Some(7), ..GenerationRequest::new(Stage::MalfunctionDerivation, ctx) };
        let a = backend().generate(&req).unwrap();
        let b = backend().generate(&req).unwrap();
        assert_eq!(serde_json::to_string(&a.items).unwrap(), serde_json::to_string(&b.items).unwrap());
    }

    #[test]
    fn cap_is_honoured() {
        let ctx = StageContext {
            functions: vec![Keyed {
                id: "F3".into(),
                item: Function { name: "Braking".into(), requirement_ids: vec!["PR2".into()], output_kind: OutputKind::Continuous },
            }],
            ..Default::default()
        };
        let req = GenerationRequest { max_candidates: 2, ..GenerationRequest::new(Stage::MalfunctionDerivation, ctx) };
        assert_eq!(backend().generate(&req).unwrap().items.len(), 2);
    }

    #[test]
    fn heuristic_prefers_severe_classes_for_front_end_highway() {
        let h = Hazard {
            malfunction_id: "M1".into(),
            scenario: "front-end collision at highway speed".into(),
            operational_situation: vec![],
            vehicle_level_effect: String::new(),
        };
        let r = heuristic_rating("H1", &h, Some(GuideWord::No));
        assert_eq!((r.severity, r.exposure, r.controllability), (Severity::S3, Exposure::E4, Controllability::C3));
        assert!(r.rationale.missing_factors().is_empty());
    }
}
