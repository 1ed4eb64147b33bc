//! Random but valid projects for round-trip tests.

use hara_core::io::{project_from_item, OddRow, RequirementRow};
use hara_core::pipeline::GenerateOptions;
use hara_core::risk::{RateOptions, Rationale};
use hara_core::*;

/// Tiny deterministic stream for review choices.
pub struct Dice(u64);

impl Dice {
    pub fn roll(&mut self, n: u64) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0 % n
    }
}

/// Drives a project through a random number of stages with random review
/// decisions, ratings and free-text.
pub fn random_project(requirements: Vec<String>, odd: Vec<String>, seed: u64, stages: usize) -> Project {
    let doc = ItemDefinitionDoc {
        name: Some(format!("random {seed}")),
        requirements: requirements.iter().enumerate().map(|(i, t)| RequirementRow { id: format!("R{}", i + 1), description: t.clone() }).collect(),
        odd: odd.iter().enumerate().map(|(i, t)| OddRow { parameter: format!("P{i}"), description: t.clone() }).collect(),
    };
    let mut p = project_from_item(&doc, "random", &Actor::engineer("seed")).unwrap();
    let mut dice = Dice(seed | 1);
    let backend = RuleBasedBackend::new(Catalog::shipped());
    for _ in 0..stages {
        if p.stage == Stage::Complete {
            break;
        }
        if run_stage_generation(&mut p, &backend, GenerateOptions { max_candidates: 3, seed: None }).is_err() {
            break;
        }
        for d in golden::decisions_for(&p) {
            let reviewer = format!("eng-{}", dice.roll(3));
            let decision = match dice.roll(4) {
                0 => ReviewDecision::reject(&d.item_ref, &reviewer),
                1 => d.clone(),
                _ => ReviewDecision::accept(&d.item_ref, &reviewer).with_note("ok ✓"),
            };
            if review(&mut p, &decision).is_err() {
                let _ = review(&mut p, &ReviewDecision::accept(&d.item_ref, &reviewer));
            }
        }
        if p.stage == Stage::RiskAssessment && dice.roll(2) == 0 {
            let ids: Vec<String> = p.active_hazards().map(|h| h.id.clone()).collect();
            for id in ids {
                let rating = RiskRating {
                    hazard_id: id,
                    severity: Severity::ALL[dice.roll(4) as usize],
                    exposure: Exposure::ALL[dice.roll(5) as usize],
                    controllability: Controllability::ALL[dice.roll(4) as usize],
                    rationale: Rationale::uniform(format!("reason \"{}\"\n", dice.roll(100))),
                };
                let _ = rate_hazard(&mut p, rating, RateOptions { confirm: dice.roll(2) == 0, supersede: true }, &Actor::engineer("r"));
            }
        }
        let _ = advance_stage(&mut p, &Actor::engineer("lead"));
    }
    p
}

pub fn backend_config(seed: u64) -> BackendConfig {
    if seed.is_multiple_of(2) {
        BackendConfig::default()
    } else {
        BackendConfig {
            temperature: Some([0.0, 0.25, 0.5][(seed % 3) as usize]),
            timeout_ms: seed % 50_000,
            ..BackendConfig::remote("http://localhost:8080/v1/chat/completions", "some-model")
        }
    }
}
