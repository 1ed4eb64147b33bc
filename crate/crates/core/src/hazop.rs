//! Guide-word expansion over a catalog of applicability rules and phrase
//! templates.
//!
//! The catalog is a JSON document (see `data/catalog.json` for the shipped
//! one). A user catalog passed through [`Catalog::extend_with`] replaces
//! rules by `(guide_word, output_kind)`, replaces the scenario and goal
//! templates of every guide word it mentions, and adds normalization entries,
//! function patterns and road contexts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{HaraError, Result};
use crate::model::{Function, Hazard, Malfunction, OddParameter, OutputKind, Record, Requirement, SafetyGoal};

const SHIPPED: &str = include_str!("../data/catalog.json");

/// HAZOP deviation keywords, in catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuideWord {
    No,
    Unintended,
    Early,
    Late,
    More,
    Less,
    Inverted,
    Intermittent,
}

impl GuideWord {
    pub const ALL: [GuideWord; 8] = [
        GuideWord::No,
        GuideWord::Unintended,
        GuideWord::Early,
        GuideWord::Late,
        GuideWord::More,
        GuideWord::Less,
        GuideWord::Inverted,
        GuideWord::Intermittent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GuideWord::No => "no",
            GuideWord::Unintended => "unintended",
            GuideWord::Early => "early",
            GuideWord::Late => "late",
            GuideWord::More => "more",
            GuideWord::Less => "less",
            GuideWord::Inverted => "inverted",
            GuideWord::Intermittent => "intermittent",
        }
    }
}

impl fmt::Display for GuideWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicabilityRule {
    pub guide_word: GuideWord,
    pub output_kind: OutputKind,
    pub applicable: bool,
    /// Phrase patterns with a `{function}` placeholder.
    #[serde(default)]
    pub templates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioTemplate {
    pub guide_word: GuideWord,
    /// May use `{function}`, `{malfunction}`, `{odd_situation}` and `{collision_type}`.
    pub effect_pattern: String,
    pub collision_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoadContext {
    pub pattern: String,
    pub situation: String,
    #[serde(default)]
    pub speed_kmh: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionPattern {
    pub pattern: String,
    pub name: String,
    pub output_kind: OutputKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalTemplate {
    pub guide_word: GuideWord,
    pub pattern: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct CatalogDoc {
    #[serde(default)]
    format: Option<String>,
    #[serde(default)]
    rules: Vec<ApplicabilityRule>,
    #[serde(default)]
    scenario_templates: Vec<ScenarioTemplate>,
    #[serde(default)]
    road_contexts: Vec<RoadContext>,
    #[serde(default)]
    normalization: BTreeMap<String, String>,
    #[serde(default)]
    function_patterns: Vec<FunctionPattern>,
    #[serde(default)]
    goal_templates: Vec<GoalTemplate>,
}

/// A validated catalog with compiled patterns.
#[derive(Debug, Clone)]
pub struct Catalog {
    doc: CatalogDoc,
    roads: Vec<(Regex, RoadContext)>,
    functions: Vec<(Regex, FunctionPattern)>,
}

/// A catalog-derived candidate and the template that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal<T> {
    pub item: T,
    pub template: String,
}

const SCENARIO_PLACEHOLDERS: [&str; 4] = ["function", "malfunction", "odd_situation", "collision_type"];

fn placeholders(pattern: &str) -> BTreeSet<String> {
    let re = Regex::new(r"\{([a-z_]+)\}").expect("static regex");
    re.captures_iter(pattern).map(|c| c[1].to_string()).collect()
}

fn normalize_key(phrase: &str) -> String {
    phrase.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl Catalog {
    /// The catalog bundled with the engine.
    pub fn shipped() -> Self {
        static PARSED: std::sync::OnceLock<Catalog> = std::sync::OnceLock::new();
        PARSED.get_or_init(|| Self::from_json(SHIPPED).expect("shipped catalog is valid")).clone()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CatalogDoc = serde_json::from_str(text).map_err(|e| HaraError::Catalog(e.to_string()))?;
        Self::build(doc)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Shipped catalog extended with a user document.
    pub fn extend_with(&self, text: &str) -> Result<Self> {
        let user: CatalogDoc = serde_json::from_str(text).map_err(|e| HaraError::Catalog(e.to_string()))?;
        let mut doc = self.doc.clone();
        for rule in user.rules {
            doc.rules.retain(|r| !(r.guide_word == rule.guide_word && r.output_kind == rule.output_kind));
            doc.rules.push(rule);
        }
        let words: BTreeSet<GuideWord> = user.scenario_templates.iter().map(|t| t.guide_word).collect();
        doc.scenario_templates.retain(|t| !words.contains(&t.guide_word));
        doc.scenario_templates.extend(user.scenario_templates);
        let words: BTreeSet<GuideWord> = user.goal_templates.iter().map(|t| t.guide_word).collect();
        doc.goal_templates.retain(|t| !words.contains(&t.guide_word));
        doc.goal_templates.extend(user.goal_templates);
        doc.normalization.extend(user.normalization);
        doc.function_patterns.extend(user.function_patterns);
        doc.road_contexts.extend(user.road_contexts);
        Self::build(doc)
    }

    fn build(mut doc: CatalogDoc) -> Result<Self> {
        for gw in GuideWord::ALL {
            for kind in OutputKind::ALL {
                let n = doc.rules.iter().filter(|r| r.guide_word == gw && r.output_kind == kind).count();
                if n != 1 {
                    return Err(HaraError::Catalog(format!(
                        "expected exactly one rule for ({gw}, {kind:?}), found {n}"
                    )));
                }
            }
        }
        for r in &doc.rules {
            if r.applicable && r.templates.is_empty() {
                return Err(HaraError::Catalog(format!(
                    "rule ({}, {:?}) is applicable but has no templates",
                    r.guide_word, r.output_kind
                )));
            }
            for t in &r.templates {
                if let Some(bad) = placeholders(t).into_iter().find(|p| p != "function") {
                    return Err(HaraError::Catalog(format!("undeclared placeholder {{{bad}}} in `{t}`")));
                }
            }
        }
        // A binary output has no magnitude to exceed or fall short of.
        if let Some(r) = doc.rules.iter().find(|r| {
            r.applicable && r.output_kind == OutputKind::Binary && matches!(r.guide_word, GuideWord::More | GuideWord::Less)
        }) {
            return Err(HaraError::Catalog(format!("guide word `{}` cannot apply to binary outputs", r.guide_word)));
        }
        for t in &doc.scenario_templates {
            if let Some(bad) = placeholders(&t.effect_pattern)
                .into_iter()
                .find(|p| !SCENARIO_PLACEHOLDERS.contains(&p.as_str()))
            {
                return Err(HaraError::Catalog(format!("undeclared placeholder {{{bad}}} in `{}`", t.effect_pattern)));
            }
        }
        // Any guide word that can apply somewhere needs a scenario template.
        for gw in GuideWord::ALL {
            let used = doc.rules.iter().any(|r| r.guide_word == gw && r.applicable);
            if used && !doc.scenario_templates.iter().any(|t| t.guide_word == gw) {
                return Err(HaraError::Catalog(format!("no scenario template for guide word `{gw}`")));
            }
        }
        doc.rules.sort_by_key(|r| (r.guide_word, OutputKind::ALL.iter().position(|k| *k == r.output_kind)));
        doc.normalization = doc.normalization.into_iter().map(|(k, v)| (normalize_key(&k), v)).collect();
        let compile = |p: &str| Regex::new(p).map_err(|e| HaraError::Catalog(format!("bad pattern `{p}`: {e}")));
        let roads = doc
            .road_contexts
            .iter()
            .map(|r| Ok((compile(&r.pattern)?, r.clone())))
            .collect::<Result<Vec<_>>>()?;
        let functions = doc
            .function_patterns
            .iter()
            .map(|f| Ok((compile(&f.pattern)?, f.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { doc, roads, functions })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("catalog serializes")
    }

    pub fn rules(&self) -> &[ApplicabilityRule] {
        &self.doc.rules
    }

    pub fn rule(&self, gw: GuideWord, kind: OutputKind) -> &ApplicabilityRule {
        self.doc
            .rules
            .iter()
            .find(|r| r.guide_word == gw && r.output_kind == kind)
            .expect("matrix is complete")
    }

    pub fn scenario_templates(&self, gw: GuideWord) -> impl Iterator<Item = &ScenarioTemplate> {
        self.doc.scenario_templates.iter().filter(move |t| t.guide_word == gw)
    }

    /// Guide words applicable to a function, in catalog order.
    pub fn applicable_guide_words(&self, function: &Function) -> Vec<GuideWord> {
        GuideWord::ALL
            .into_iter()
            .filter(|gw| self.rule(*gw, function.output_kind).applicable)
            .collect()
    }

    /// Canonical phrasing: known phrases map through the normalization table,
    /// anything else is whitespace-collapsed with a capitalized first letter.
    pub fn normalize_phrase(&self, phrase: &str) -> String {
        let key = normalize_key(phrase);
        if let Some(canonical) = self.doc.normalization.get(&key) {
            return canonical.clone();
        }
        let collapsed = phrase.split_whitespace().collect::<Vec<_>>().join(" ");
        let mut chars = collapsed.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => collapsed,
        }
    }

    /// Every phrasing of every applicable guide word for a function.
    pub fn expand_malfunctions(&self, function: &Record<Function>) -> Vec<Proposal<Malfunction>> {
        let mut out = Vec::new();
        for gw in self.applicable_guide_words(&function.item) {
            let rule = self.rule(gw, function.item.output_kind);
            for (i, template) in rule.templates.iter().enumerate() {
                let phrase = template.replace("{function}", &function.item.name);
                out.push(Proposal {
                    item: Malfunction {
                        function_id: function.id.clone(),
                        guide_word: gw,
                        description: self.normalize_phrase(&phrase),
                    },
                    template: format!("malfunction/{gw}/{}/{}", output_kind_str(function.item.output_kind), i + 1),
                });
            }
        }
        out
    }

    /// Concrete driving situations derived from the ODD, with the names of
    /// the parameters they draw on.
    pub fn odd_situations(&self, odd: &[OddParameter]) -> Result<Vec<(String, Vec<String>)>> {
        if odd.is_empty() {
            return Err(HaraError::EmptyOdd);
        }
        let speed_param = odd.iter().find(|p| p.name.to_lowercase().contains("speed"));
        let max_speed = speed_param.and_then(|p| {
            Regex::new(r"(\d+)\s*km/h")
                .expect("static regex")
                .captures_iter(&p.description)
                .filter_map(|c| c[1].parse::<u32>().ok())
                .max()
        });
        let road_params: Vec<&OddParameter> = {
            let named: Vec<&OddParameter> = odd.iter().filter(|p| p.name.to_lowercase().contains("road")).collect();
            if named.is_empty() {
                odd.iter().collect()
            } else {
                named
            }
        };
        let mut out = Vec::new();
        for (re, ctx) in &self.roads {
            let Some(param) = road_params.iter().find(|p| re.is_match(&p.description) || re.is_match(&p.name)) else {
                continue;
            };
            let mut refs = vec![param.name.clone()];
            let speed = match (ctx.speed_kmh, max_speed) {
                (Some(s), Some(m)) => Some(s.min(m)),
                (None, m) => m,
                (s, None) => s,
            };
            let situation = match speed {
                Some(v) => {
                    if let Some(sp) = speed_param {
                        refs.push(sp.name.clone());
                    }
                    format!("{} (up to {v} km/h)", ctx.situation)
                }
                None => ctx.situation.clone(),
            };
            out.push((situation, refs));
        }
        if out.is_empty() {
            out.push(("within its operational design domain".to_string(), Vec::new()));
        }
        Ok(out)
    }

    /// Hazard candidates for one malfunction: every scenario template of its
    /// guide word combined with every ODD situation.
    pub fn expand_hazard_scenarios(
        &self,
        malfunction: &Record<Malfunction>,
        function_name: &str,
        odd: &[OddParameter],
    ) -> Result<Vec<Proposal<Hazard>>> {
        let situations = self.odd_situations(odd)?;
        let gw = malfunction.item.guide_word;
        let mut out = Vec::new();
        for (ti, template) in self.scenario_templates(gw).enumerate() {
            for (situation, refs) in &situations {
                let scenario = template
                    .effect_pattern
                    .replace("{malfunction}", &malfunction.item.description)
                    .replace("{function}", &function_name.to_lowercase())
                    .replace("{odd_situation}", situation)
                    .replace("{collision_type}", &template.collision_type);
                out.push(Proposal {
                    item: Hazard {
                        malfunction_id: malfunction.id.clone(),
                        scenario,
                        operational_situation: refs.clone(),
                        vehicle_level_effect: template.collision_type.clone(),
                    },
                    template: format!("hazard/{gw}/{}", ti + 1),
                });
            }
        }
        Ok(out)
    }

    /// Functions a requirement calls for, by keyword pattern, in catalog order.
    pub fn extract_functions(&self, requirement: &Requirement) -> Vec<Proposal<Function>> {
        let mut seen = BTreeSet::new();
        self.functions
            .iter()
            .enumerate()
            .filter(|(_, (re, _))| re.is_match(&requirement.text))
            .filter(|(_, (_, f))| seen.insert(f.name.to_lowercase()))
            .map(|(i, (_, f))| Proposal {
                item: Function {
                    name: f.name.clone(),
                    requirement_ids: vec![requirement.id.clone()],
                    output_kind: f.output_kind,
                },
                template: format!("function/pattern/{}", i + 1),
            })
            .collect()
    }

    /// One goal per (function, guide word) group, covering every hazard of
    /// that group. Input hazards carry the malfunction and function they
    /// descend from.
    pub fn propose_goals(&self, hazards: &[(String, &Malfunction, &str)]) -> Vec<Proposal<SafetyGoal>> {
        let mut groups: Vec<((String, GuideWord), String, Vec<String>)> = Vec::new();
        for (hid, m, fname) in hazards {
            let key = (m.function_id.clone(), m.guide_word);
            match groups.iter_mut().find(|(k, _, _)| *k == key) {
                Some((_, _, ids)) => ids.push(hid.clone()),
                None => groups.push((key, fname.to_string(), vec![hid.clone()])),
            }
        }
        groups
            .into_iter()
            .filter_map(|((_, gw), fname, ids)| {
                let (i, t) = self.doc.goal_templates.iter().enumerate().find(|(_, t)| t.guide_word == gw)?;
                Some(Proposal {
                    item: SafetyGoal {
                        text: t.pattern.replace("{function}", &fname.to_lowercase()),
                        hazard_ids: ids,
                        asil: None,
                        safe_state: None,
                        ftti_ms: None,
                    },
                    template: format!("goal/{gw}/{}", i + 1),
                })
            })
            .collect()
    }
}

pub fn output_kind_str(kind: OutputKind) -> &'static str {
    match kind {
        OutputKind::Binary => "binary",
        OutputKind::Continuous => "continuous",
        OutputKind::Event => "event",
        OutputKind::Directional => "directional",
    }
}

/// [`Catalog::applicable_guide_words`] over the shipped catalog.
pub fn applicable_guide_words(function: &Function) -> Vec<GuideWord> {
    Catalog::shipped().applicable_guide_words(function)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ReviewStatus;

    fn func(id: &str, name: &str, kind: OutputKind) -> Record<Function> {
        Record {
            id: id.into(),
            item: Function { name: name.into(), requirement_ids: vec!["PR1".into()], output_kind: kind },
            status: ReviewStatus::Accepted,
            provenance: None,
        }
    }

    fn descriptions(c: &Catalog, f: &Record<Function>) -> Vec<String> {
        c.expand_malfunctions(f).into_iter().map(|p| p.item.description).collect()
    }

    #[test]
    fn shipped_catalog_matrix_is_complete() {
        let c = Catalog::shipped();
        assert_eq!(c.rules().len(), 32);
    }

    #[test]
    fn binary_functions_exclude_more_and_less() {
        let c = Catalog::shipped();
        let words = c.applicable_guide_words(&func("F4", "Collision Warning", OutputKind::Binary).item);
        assert!(!words.contains(&GuideWord::More));
        assert!(!words.contains(&GuideWord::Less));
        assert!(words.contains(&GuideWord::No));
    }

    #[test]
    fn continuous_functions_include_more_and_less() {
        let c = Catalog::shipped();
        let f = func("F3", "Braking", OutputKind::Continuous);
        let words = c.applicable_guide_words(&f.item);
        assert!(words.contains(&GuideWord::More) && words.contains(&GuideWord::Less));
        let d = descriptions(&c, &f);
        assert!(d.contains(&"Too much braking".to_string()));
        assert!(d.contains(&"Too little braking".to_string()));
    }

    #[test]
    fn directional_kind_covers_all_words() {
        let c = Catalog::shipped();
        let f = func("F9", "Steering", OutputKind::Directional);
        assert_eq!(c.applicable_guide_words(&f.item), GuideWord::ALL.to_vec());
    }

    #[test]
    fn obstacle_detection_phrasings() {
        let c = Catalog::shipped();
        let d = descriptions(&c, &func("F1", "Obstacle Detection", OutputKind::Event));
        for want in ["Obstacle not detected", "False Obstacle detected", "Delay on Obstacle Detection"] {
            assert!(d.iter().any(|x| x == want), "missing {want} in {d:?}");
        }
    }

    #[test]
    fn braking_yields_the_seven_table_phrasings() {
        let c = Catalog::shipped();
        let d = descriptions(&c, &func("F3", "Braking", OutputKind::Continuous));
        let want = [
            "Not braking",
            "Delay in braking",
            "Braking Stopped too soon",
            "Braking Stopped too late",
            "Too little braking",
            "Too much braking",
            "Braking too soon",
        ];
        for w in want {
            assert!(d.iter().any(|x| x == w), "missing {w}");
        }
        assert_eq!(d.len(), 7);
    }

    #[test]
    fn empty_applicable_set_yields_nothing() {
        let mut doc: serde_json::Value = serde_json::from_str(SHIPPED).unwrap();
        for r in doc["rules"].as_array_mut().unwrap() {
            if r["output_kind"] == "event" {
                r["applicable"] = false.into();
                r["templates"] = serde_json::json!([]);
            }
        }
        let c = Catalog::from_json(&doc.to_string()).unwrap();
        assert!(c.expand_malfunctions(&func("F1", "Obstacle Detection", OutputKind::Event)).is_empty());
    }

    #[test]
    fn unknown_phrases_get_default_casing() {
        let c = Catalog::shipped();
        assert_eq!(c.normalize_phrase("  no   lane keeping "), "No lane keeping");
        assert_eq!(c.normalize_phrase("NO OBSTACLE   detection"), "Obstacle not detected");
    }

    #[test]
    fn incomplete_matrix_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(SHIPPED).unwrap();
        doc["rules"].as_array_mut().unwrap().pop();
        assert!(matches!(Catalog::from_json(&doc.to_string()), Err(HaraError::Catalog(_))));
    }

    #[test]
    fn undeclared_scenario_placeholder_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(SHIPPED).unwrap();
        doc["scenario_templates"][0]["effect_pattern"] = "{malfunction} at {weather}".into();
        assert!(matches!(Catalog::from_json(&doc.to_string()), Err(HaraError::Catalog(_))));
    }

    #[test]
    fn empty_odd_is_an_error() {
        let c = Catalog::shipped();
        let m = Record {
            id: "M1".into(),
            item: Malfunction { function_id: "F1".into(), guide_word: GuideWord::No, description: "x".into() },
            status: ReviewStatus::Accepted,
            provenance: None,
        };
        assert!(matches!(c.expand_hazard_scenarios(&m, "f", &[]), Err(HaraError::EmptyOdd)));
    }

    #[test]
    fn user_catalog_overrides_rule() {
        let c = Catalog::shipped();
        let ext = c
            .extend_with(
                r#"{"rules":[{"guide_word":"early","output_kind":"continuous","applicable":true,"templates":["Premature {function}"]}]}"#,
            )
            .unwrap();
        let d = descriptions(&ext, &func("F3", "Braking", OutputKind::Continuous));
        assert!(d.contains(&"Premature Braking".to_string()));
        assert_eq!(ext.rules().len(), 32);
    }
}
