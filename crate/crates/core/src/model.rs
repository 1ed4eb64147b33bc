//! Domain types, id discipline and the traceability graph.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::audit::{Action, Actor, AuditLog};
use crate::error::{HaraError, Result};
use crate::hazop::GuideWord;
use crate::risk::{Asil, RiskRating};

/// The HARA stage cursor, strictly ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    ItemDefinition,
    FunctionExtraction,
    MalfunctionDerivation,
    HazardIdentification,
    RiskAssessment,
    SafetyGoals,
    Complete,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::ItemDefinition,
        Stage::FunctionExtraction,
        Stage::MalfunctionDerivation,
        Stage::HazardIdentification,
        Stage::RiskAssessment,
        Stage::SafetyGoals,
        Stage::Complete,
    ];

    pub fn next(self) -> Option<Stage> {
        let i = Stage::ALL.iter().position(|s| *s == self)?;
        Stage::ALL.get(i + 1).copied()
    }

    /// Entity kind produced (and reviewed) at this stage.
    pub fn produces(self) -> Option<EntityKind> {
        match self {
            Stage::FunctionExtraction => Some(EntityKind::Function),
            Stage::MalfunctionDerivation => Some(EntityKind::Malfunction),
            Stage::HazardIdentification => Some(EntityKind::Hazard),
            Stage::RiskAssessment => Some(EntityKind::RiskRating),
            Stage::SafetyGoals => Some(EntityKind::SafetyGoal),
            Stage::ItemDefinition | Stage::Complete => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::ItemDefinition => "ItemDefinition",
            Stage::FunctionExtraction => "FunctionExtraction",
            Stage::MalfunctionDerivation => "MalfunctionDerivation",
            Stage::HazardIdentification => "HazardIdentification",
            Stage::RiskAssessment => "RiskAssessment",
            Stage::SafetyGoals => "SafetyGoals",
            Stage::Complete => "Complete",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = HaraError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str().to_ascii_lowercase() == key)
            .or(match key.as_str() {
                "function" | "functions" => Some(Stage::FunctionExtraction),
                "malfunction" | "malfunctions" => Some(Stage::MalfunctionDerivation),
                "hazard" | "hazards" => Some(Stage::HazardIdentification),
                "riskrating" | "rating" | "ratings" => Some(Stage::RiskAssessment),
                "safetygoal" | "goal" | "goals" => Some(Stage::SafetyGoals),
                _ => None,
            })
            .ok_or_else(|| HaraError::InvariantViolation(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Project,
    Requirement,
    OddParameter,
    Function,
    Malfunction,
    Hazard,
    RiskRating,
    SafetyGoal,
}

impl EntityKind {
    /// Prefix used for engine-assigned ids.
    pub fn id_prefix(self) -> &'static str {
        match self {
            EntityKind::Project => "P",
            EntityKind::Requirement => "PR",
            EntityKind::OddParameter => "ODD",
            EntityKind::Function => "F",
            EntityKind::Malfunction => "M",
            EntityKind::Hazard => "H",
            EntityKind::RiskRating => "R",
            EntityKind::SafetyGoal => "SG",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub id: String,
}

impl EntityRef {
    pub fn new(kind: EntityKind, id: impl Into<String>) -> Self {
        Self { kind, id: id.into() }
    }

    pub fn project() -> Self {
        Self::new(EntityKind::Project, "project")
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.id)
    }
}

/// Orders ids like "F2" before "F10".
pub fn natural_key(id: &str) -> (String, u64, String) {
    let split = id.find(|c: char| c.is_ascii_digit()).unwrap_or(id.len());
    let (prefix, rest) = id.split_at(split);
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    let tail = rest[digits.len()..].to_string();
    (prefix.to_string(), digits.parse().unwrap_or(0), tail)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Proposed,
    Accepted,
    Modified,
    Rejected,
    /// A confirmed rating replaced by a newer confirmed rating.
    Superseded,
}

impl ReviewStatus {
    /// Accepted or modified items take part in traceability and validation.
    pub fn is_active(self) -> bool {
        matches!(self, ReviewStatus::Accepted | ReviewStatus::Modified)
    }
}

/// Which backend and which template or prompt produced a candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: String,
    pub template: String,
}

/// A reviewable artifact: id, payload, review status and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record<T> {
    pub id: String,
    #[serde(flatten)]
    pub item: T,
    pub status: ReviewStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl<T> Record<T> {
    pub fn is_active(&self) -> bool {
        self.status.is_active()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OddParameter {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// On/off output, e.g. a warning.
    Binary,
    /// Graded magnitude, e.g. braking force.
    Continuous,
    /// Discrete detections or predictions.
    Event,
    /// Signed continuous output, e.g. a steering command.
    Directional,
}

impl OutputKind {
    pub const ALL: [OutputKind; 4] = [OutputKind::Binary, OutputKind::Continuous, OutputKind::Event, OutputKind::Directional];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub requirement_ids: Vec<String>,
    pub output_kind: OutputKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Malfunction {
    pub function_id: String,
    pub guide_word: GuideWord,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hazard {
    pub malfunction_id: String,
    pub scenario: String,
    /// Names of the ODD parameters the scenario draws on.
    #[serde(default)]
    pub operational_situation: Vec<String>,
    #[serde(default)]
    pub vehicle_level_effect: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyGoal {
    pub text: String,
    pub hazard_ids: Vec<String>,
    /// Inherited from the linked hazards; never set by callers.
    #[serde(default)]
    pub asil: Option<Asil>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safe_state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ftti_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    #[serde(rename = "req->func")]
    ReqFunc,
    #[serde(rename = "func->malf")]
    FuncMalf,
    #[serde(rename = "malf->haz")]
    MalfHaz,
    #[serde(rename = "haz->sg")]
    HazSg,
}

impl LinkKind {
    pub fn endpoints(self) -> (EntityKind, EntityKind) {
        match self {
            LinkKind::ReqFunc => (EntityKind::Requirement, EntityKind::Function),
            LinkKind::FuncMalf => (EntityKind::Function, EntityKind::Malfunction),
            LinkKind::MalfHaz => (EntityKind::Malfunction, EntityKind::Hazard),
            LinkKind::HazSg => (EntityKind::Hazard, EntityKind::SafetyGoal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceLink {
    pub from: EntityRef,
    pub to: EntityRef,
    pub kind: LinkKind,
}

impl TraceLink {
    fn new(kind: LinkKind, from: &str, to: &str) -> Self {
        let (fk, tk) = kind.endpoints();
        Self { from: EntityRef::new(fk, from), to: EntityRef::new(tk, to), kind }
    }
}

/// Next number per engine-assigned id prefix. Numbers are never reused.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdCounters {
    pub function: u64,
    pub malfunction: u64,
    pub hazard: u64,
    pub rating: u64,
    pub goal: u64,
}

/// The complete HARA workspace for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub name: String,
    pub stage: Stage,
    #[serde(default)]
    pub requirements: Vec<Requirement>,
    #[serde(default)]
    pub odd_parameters: Vec<OddParameter>,
    #[serde(default)]
    pub functions: Vec<Record<Function>>,
    #[serde(default)]
    pub malfunctions: Vec<Record<Malfunction>>,
    #[serde(default)]
    pub hazards: Vec<Record<Hazard>>,
    #[serde(default)]
    pub risk_ratings: Vec<Record<RiskRating>>,
    #[serde(default)]
    pub safety_goals: Vec<Record<SafetyGoal>>,
    #[serde(default)]
    pub counters: IdCounters,
    /// Persisted separately in the project file.
    #[serde(skip)]
    pub audit: AuditLog,
}

/// An entity submitted by an engineer through [`Project::add_entity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NewEntity {
    Requirement(Requirement),
    OddParameter(OddParameter),
    Function(Function),
    Malfunction(Malfunction),
    Hazard(Hazard),
    SafetyGoal(SafetyGoal),
}

fn non_empty(field: &str, value: &str) -> Result<()> {
    if value.trim().is_empty() {
        return Err(HaraError::InvariantViolation(format!("{field} must not be empty")));
    }
    Ok(())
}

impl Project {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            stage: Stage::ItemDefinition,
            requirements: Vec::new(),
            odd_parameters: Vec::new(),
            functions: Vec::new(),
            malfunctions: Vec::new(),
            hazards: Vec::new(),
            risk_ratings: Vec::new(),
            safety_goals: Vec::new(),
            counters: IdCounters::default(),
            audit: AuditLog::new(),
        }
    }

    pub(crate) fn next_id(&mut self, kind: EntityKind) -> String {
        let counter = match kind {
            EntityKind::Function => &mut self.counters.function,
            EntityKind::Malfunction => &mut self.counters.malfunction,
            EntityKind::Hazard => &mut self.counters.hazard,
            EntityKind::RiskRating => &mut self.counters.rating,
            EntityKind::SafetyGoal => &mut self.counters.goal,
            other => panic!("{other} ids are caller supplied"),
        };
        *counter += 1;
        format!("{}{}", kind.id_prefix(), counter)
    }

    pub fn requirement(&self, id: &str) -> Option<&Requirement> {
        self.requirements.iter().find(|r| r.id == id)
    }

    pub fn function(&self, id: &str) -> Option<&Record<Function>> {
        self.functions.iter().find(|r| r.id == id)
    }

    pub fn malfunction(&self, id: &str) -> Option<&Record<Malfunction>> {
        self.malfunctions.iter().find(|r| r.id == id)
    }

    pub fn hazard(&self, id: &str) -> Option<&Record<Hazard>> {
        self.hazards.iter().find(|r| r.id == id)
    }

    pub fn safety_goal(&self, id: &str) -> Option<&Record<SafetyGoal>> {
        self.safety_goals.iter().find(|r| r.id == id)
    }

    pub fn rating(&self, id: &str) -> Option<&Record<RiskRating>> {
        self.risk_ratings.iter().find(|r| r.id == id)
    }

    pub fn active_functions(&self) -> impl Iterator<Item = &Record<Function>> {
        self.functions.iter().filter(|r| r.is_active())
    }

    pub fn active_malfunctions(&self) -> impl Iterator<Item = &Record<Malfunction>> {
        self.malfunctions.iter().filter(|r| r.is_active())
    }

    pub fn active_hazards(&self) -> impl Iterator<Item = &Record<Hazard>> {
        self.hazards.iter().filter(|r| r.is_active())
    }

    pub fn active_goals(&self) -> impl Iterator<Item = &Record<SafetyGoal>> {
        self.safety_goals.iter().filter(|r| r.is_active())
    }

    /// Kind of the entity with this id, searching every collection.
    pub fn resolve(&self, id: &str) -> Option<EntityRef> {
        let kind = if self.requirement(id).is_some() {
            EntityKind::Requirement
        } else if self.function(id).is_some() {
            EntityKind::Function
        } else if self.malfunction(id).is_some() {
            EntityKind::Malfunction
        } else if self.hazard(id).is_some() {
            EntityKind::Hazard
        } else if self.rating(id).is_some() {
            EntityKind::RiskRating
        } else if self.safety_goal(id).is_some() {
            EntityKind::SafetyGoal
        } else if self.odd_parameters.iter().any(|p| p.name == id) {
            EntityKind::OddParameter
        } else {
            return None;
        };
        Some(EntityRef::new(kind, id))
    }

    pub fn exists(&self, r: &EntityRef) -> bool {
        match r.kind {
            EntityKind::Project => true,
            EntityKind::Requirement => self.requirement(&r.id).is_some(),
            EntityKind::OddParameter => self.odd_parameters.iter().any(|p| p.name == r.id),
            EntityKind::Function => self.function(&r.id).is_some(),
            EntityKind::Malfunction => self.malfunction(&r.id).is_some(),
            EntityKind::Hazard => self.hazard(&r.id).is_some(),
            EntityKind::RiskRating => self.rating(&r.id).is_some(),
            EntityKind::SafetyGoal => self.safety_goal(&r.id).is_some(),
        }
    }

    // ---- invariant checks shared by add_entity, review and modify ----

    pub(crate) fn check_function(&self, f: &Function, self_id: Option<&str>) -> Result<()> {
        non_empty("function name", &f.name)?;
        if f.requirement_ids.is_empty() {
            return Err(HaraError::InvariantViolation("function must trace to at least one requirement".into()));
        }
        let mut seen = HashSet::new();
        for rid in &f.requirement_ids {
            if !seen.insert(rid) {
                return Err(HaraError::InvariantViolation(format!("requirement `{rid}` listed twice")));
            }
            if self.requirement(rid).is_none() {
                return Err(HaraError::DanglingReference { kind: "requirement".into(), id: rid.clone() });
            }
        }
        let clash = self
            .active_functions()
            .any(|g| Some(g.id.as_str()) != self_id && g.item.name.eq_ignore_ascii_case(f.name.trim()));
        if clash {
            return Err(HaraError::DuplicateId(f.name.clone()));
        }
        Ok(())
    }

    pub(crate) fn check_malfunction(&self, m: &Malfunction, self_id: Option<&str>) -> Result<()> {
        non_empty("malfunction description", &m.description)?;
        match self.function(&m.function_id) {
            Some(f) if f.is_active() => {}
            _ => return Err(HaraError::DanglingReference { kind: "function".into(), id: m.function_id.clone() }),
        }
        let clash = self.active_malfunctions().any(|o| {
            Some(o.id.as_str()) != self_id
                && o.item.function_id == m.function_id
                && o.item.guide_word == m.guide_word
                && o.item.description.eq_ignore_ascii_case(m.description.trim())
        });
        if clash {
            return Err(HaraError::DuplicateId(m.description.clone()));
        }
        Ok(())
    }

    pub(crate) fn check_hazard(&self, h: &Hazard) -> Result<()> {
        non_empty("hazard scenario", &h.scenario)?;
        match self.malfunction(&h.malfunction_id) {
            Some(m) if m.is_active() => {}
            _ => return Err(HaraError::DanglingReference { kind: "malfunction".into(), id: h.malfunction_id.clone() }),
        }
        for p in &h.operational_situation {
            if !self.odd_parameters.iter().any(|o| &o.name == p) {
                return Err(HaraError::DanglingReference { kind: "odd parameter".into(), id: p.clone() });
            }
        }
        Ok(())
    }

    pub(crate) fn check_goal(&self, g: &SafetyGoal) -> Result<()> {
        non_empty("safety goal text", &g.text)?;
        if g.hazard_ids.is_empty() {
            return Err(HaraError::InvariantViolation("safety goal must address at least one hazard".into()));
        }
        let mut seen = HashSet::new();
        for hid in &g.hazard_ids {
            if !seen.insert(hid) {
                return Err(HaraError::InvariantViolation(format!("hazard `{hid}` listed twice")));
            }
            match self.hazard(hid) {
                Some(h) if h.is_active() => {}
                _ => return Err(HaraError::DanglingReference { kind: "hazard".into(), id: hid.clone() }),
            }
        }
        Ok(())
    }

    pub(crate) fn check_rating(&self, r: &RiskRating) -> Result<()> {
        match self.hazard(&r.hazard_id) {
            Some(h) if h.is_active() => Ok(()),
            Some(_) => Err(HaraError::InvariantViolation(format!("hazard `{}` is not active", r.hazard_id))),
            None => Err(HaraError::UnknownHazard(r.hazard_id.clone())),
        }
    }

    /// Stores an engineer-authored entity as accepted. Requirement and ODD
    /// entities keep their caller-supplied keys; every other kind receives a
    /// fresh prefixed id.
    pub fn add_entity(&mut self, entity: NewEntity, actor: &Actor) -> Result<String> {
        let provenance = None;
        let (eref, after, action) = match entity {
            NewEntity::Requirement(r) => {
                non_empty("requirement id", &r.id)?;
                non_empty("requirement text", &r.text)?;
                if self.requirement(&r.id).is_some() {
                    return Err(HaraError::DuplicateId(r.id));
                }
                let after = serde_json::to_value(&r).ok();
                let eref = EntityRef::new(EntityKind::Requirement, &r.id);
                self.requirements.push(r);
                (eref, after, Action::Ingest)
            }
            NewEntity::OddParameter(p) => {
                non_empty("ODD parameter name", &p.name)?;
                if self.odd_parameters.iter().any(|o| o.name == p.name) {
                    return Err(HaraError::DuplicateId(p.name));
                }
                let after = serde_json::to_value(&p).ok();
                let eref = EntityRef::new(EntityKind::OddParameter, &p.name);
                self.odd_parameters.push(p);
                (eref, after, Action::Ingest)
            }
            NewEntity::Function(f) => {
                self.check_function(&f, None)?;
                let id = self.next_id(EntityKind::Function);
                let rec = Record { id: id.clone(), item: f, status: ReviewStatus::Accepted, provenance };
                let after = serde_json::to_value(&rec).ok();
                self.functions.push(rec);
                (EntityRef::new(EntityKind::Function, id), after, Action::Modify)
            }
            NewEntity::Malfunction(m) => {
                self.check_malfunction(&m, None)?;
                let id = self.next_id(EntityKind::Malfunction);
                let rec = Record { id: id.clone(), item: m, status: ReviewStatus::Accepted, provenance };
                let after = serde_json::to_value(&rec).ok();
                self.malfunctions.push(rec);
                (EntityRef::new(EntityKind::Malfunction, id), after, Action::Modify)
            }
            NewEntity::Hazard(h) => {
                self.check_hazard(&h)?;
                let id = self.next_id(EntityKind::Hazard);
                let rec = Record { id: id.clone(), item: h, status: ReviewStatus::Accepted, provenance };
                let after = serde_json::to_value(&rec).ok();
                self.hazards.push(rec);
                (EntityRef::new(EntityKind::Hazard, id), after, Action::Modify)
            }
            NewEntity::SafetyGoal(mut g) => {
                self.check_goal(&g)?;
                g.asil = self.goal_asil_of(&g.hazard_ids).ok();
                let id = self.next_id(EntityKind::SafetyGoal);
                let rec = Record { id: id.clone(), item: g, status: ReviewStatus::Accepted, provenance };
                let after = serde_json::to_value(&rec).ok();
                self.safety_goals.push(rec);
                (EntityRef::new(EntityKind::SafetyGoal, id), after, Action::Modify)
            }
        };
        self.audit.append(actor.clone(), action, eref.clone(), None, after);
        debug_assert!(self.check_integrity().is_ok(), "{:?}", self.check_integrity());
        Ok(eref.id)
    }

    /// Every id any stored entity names resolves.
    pub fn check_integrity(&self) -> Result<()> {
        let dangling = |kind: &str, id: &str| HaraError::DanglingReference { kind: kind.into(), id: id.into() };
        for f in &self.functions {
            for rid in &f.item.requirement_ids {
                self.requirement(rid).ok_or_else(|| dangling("requirement", rid))?;
            }
        }
        for m in &self.malfunctions {
            self.function(&m.item.function_id).ok_or_else(|| dangling("function", &m.item.function_id))?;
        }
        for h in &self.hazards {
            self.malfunction(&h.item.malfunction_id).ok_or_else(|| dangling("malfunction", &h.item.malfunction_id))?;
        }
        for r in &self.risk_ratings {
            self.hazard(&r.item.hazard_id).ok_or_else(|| dangling("hazard", &r.item.hazard_id))?;
        }
        for g in &self.safety_goals {
            for hid in &g.item.hazard_ids {
                self.hazard(hid).ok_or_else(|| dangling("hazard", hid))?;
            }
        }
        // Active entities only link to active upstream entities.
        for l in self.trace_links() {
            if !self.is_active_ref(&l.from) {
                return Err(HaraError::InvariantViolation(format!("{} links from inactive {}", l.to, l.from)));
            }
        }
        Ok(())
    }

    fn is_active_ref(&self, r: &EntityRef) -> bool {
        match r.kind {
            EntityKind::Requirement => self.requirement(&r.id).is_some(),
            EntityKind::Function => self.function(&r.id).is_some_and(Record::is_active),
            EntityKind::Malfunction => self.malfunction(&r.id).is_some_and(Record::is_active),
            EntityKind::Hazard => self.hazard(&r.id).is_some_and(Record::is_active),
            EntityKind::SafetyGoal => self.safety_goal(&r.id).is_some_and(Record::is_active),
            _ => false,
        }
    }

    /// All trace links between active entities, in stage order.
    pub fn trace_links(&self) -> Vec<TraceLink> {
        let mut links = Vec::new();
        for f in self.active_functions() {
            for rid in &f.item.requirement_ids {
                links.push(TraceLink::new(LinkKind::ReqFunc, rid, &f.id));
            }
        }
        for m in self.active_malfunctions() {
            links.push(TraceLink::new(LinkKind::FuncMalf, &m.item.function_id, &m.id));
        }
        for h in self.active_hazards() {
            links.push(TraceLink::new(LinkKind::MalfHaz, &h.item.malfunction_id, &h.id));
        }
        for g in self.active_goals() {
            for hid in &g.item.hazard_ids {
                links.push(TraceLink::new(LinkKind::HazSg, hid, &g.id));
            }
        }
        links
    }

    /// Outgoing links of an entity, ordered by target id.
    pub fn links_from(&self, entity: &EntityRef) -> Result<Vec<TraceLink>> {
        if !self.exists(entity) || entity.kind == EntityKind::Project {
            return Err(HaraError::UnknownEntity(entity.id.clone()));
        }
        let mut out: Vec<TraceLink> = self.trace_links().into_iter().filter(|l| &l.from == entity).collect();
        out.sort_by_key(|l| natural_key(&l.to.id));
        Ok(out)
    }

    /// One requirement-to-goal path, if any.
    pub fn trace_path(&self, requirement_id: &str, goal_id: &str) -> Option<Vec<EntityRef>> {
        let links = self.trace_links();
        let start = EntityRef::new(EntityKind::Requirement, requirement_id);
        let target = EntityRef::new(EntityKind::SafetyGoal, goal_id);
        let mut stack = vec![vec![start]];
        while let Some(path) = stack.pop() {
            let last = path.last().expect("non-empty path");
            if *last == target {
                return Some(path);
            }
            let mut next: Vec<&TraceLink> = links.iter().filter(|l| &l.from == last).collect();
            next.sort_by_key(|l| std::cmp::Reverse(natural_key(&l.to.id)));
            for l in next {
                let mut p = path.clone();
                p.push(l.to.clone());
                stack.push(p);
            }
        }
        None
    }

    pub fn trace_matrix(&self) -> TraceMatrix {
        let links = self.trace_links();
        let requirements: Vec<String> = self.requirements.iter().map(|r| r.id.clone()).collect();
        let goals: Vec<String> = self.active_goals().map(|g| g.id.clone()).collect();
        let cells = requirements
            .iter()
            .map(|rid| {
                let reach = reachable(&links, EntityRef::new(EntityKind::Requirement, rid));
                goals.iter().map(|g| reach.contains(&EntityRef::new(EntityKind::SafetyGoal, g))).collect()
            })
            .collect();
        TraceMatrix { requirements, goals, cells }
    }
}

fn reachable(links: &[TraceLink], start: EntityRef) -> BTreeSet<EntityRef> {
    let mut seen = BTreeSet::new();
    let mut frontier = vec![start];
    while let Some(n) = frontier.pop() {
        for l in links.iter().filter(|l| l.from == n) {
            if seen.insert(l.to.clone()) {
                frontier.push(l.to.clone());
            }
        }
    }
    seen
}

/// Requirement x safety-goal reachability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMatrix {
    pub requirements: Vec<String>,
    pub goals: Vec<String>,
    /// `cells[r][g]` is true iff a path leads from requirement r to goal g.
    pub cells: Vec<Vec<bool>>,
}

impl TraceMatrix {
    pub fn get(&self, requirement: &str, goal: &str) -> Option<bool> {
        let r = self.requirements.iter().position(|x| x == requirement)?;
        let g = self.goals.iter().position(|x| x == goal)?;
        Some(self.cells[r][g])
    }

    pub fn is_empty(&self) -> bool {
        self.requirements.is_empty() && self.goals.is_empty()
    }
}
