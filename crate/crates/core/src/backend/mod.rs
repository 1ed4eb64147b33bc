//! Candidate generation: a common request/response shape with a deterministic
//! rule-based implementation and a remote chat-completions adapter.

mod parse;
mod prompt;
mod remote;
mod rule_based;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{HaraError, Result};
use crate::model::{Function, Hazard, Malfunction, OddParameter, Record, Requirement, ReviewStatus, SafetyGoal, Stage};
use crate::risk::RiskRating;

pub use parse::{parse_candidates, Dropped, ParsedCandidates};
pub use prompt::{build_prompt, Prompt};
pub use remote::{RemoteBackend, API_KEY_ENV};
pub use rule_based::RuleBasedBackend;

pub const DEFAULT_MAX_CANDIDATES: usize = 16;

/// An upstream artifact handed to a backend, identified by its project id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyed<T> {
    pub id: String,
    #[serde(flatten)]
    pub item: T,
}

impl<T: Clone> Keyed<T> {
    pub fn from_record(r: &Record<T>) -> Self {
        Self { id: r.id.clone(), item: r.item.clone() }
    }

    pub(crate) fn to_record(&self) -> Record<T> {
        Record { id: self.id.clone(), item: self.item.clone(), status: ReviewStatus::Accepted, provenance: None }
    }
}

/// Upstream artifacts a stage needs. Empty lists are omitted on the wire.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageContext {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requirements: Vec<Requirement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub odd: Vec<OddParameter>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub functions: Vec<Keyed<Function>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub malfunctions: Vec<Keyed<Malfunction>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hazards: Vec<Keyed<Hazard>>,
}

impl StageContext {
    pub fn is_empty(&self) -> bool {
        self.requirements.is_empty()
            && self.odd.is_empty()
            && self.functions.is_empty()
            && self.malfunctions.is_empty()
            && self.hazards.is_empty()
    }

    pub(crate) fn function_name(&self, id: &str) -> Option<&str> {
        self.functions.iter().find(|f| f.id == id).map(|f| f.item.name.as_str())
    }

    pub(crate) fn malfunction(&self, id: &str) -> Option<&Malfunction> {
        self.malfunctions.iter().find(|m| m.id == id).map(|m| &m.item)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub stage: Stage,
    pub context: StageContext,
    pub max_candidates: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(stage: Stage, context: StageContext) -> Self {
        Self { stage, context, max_candidates: DEFAULT_MAX_CANDIDATES, seed: None }
    }

    /// Checks the context carries what the stage consumes.
    pub fn validate(&self) -> Result<()> {
        if self.max_candidates == 0 {
            return Err(HaraError::InvariantViolation("max_candidates must be positive".into()));
        }
        let c = &self.context;
        let missing = |what: &str| HaraError::InvariantViolation(format!("{} generation needs {what}", self.stage));
        match self.stage {
            Stage::FunctionExtraction if c.requirements.is_empty() => Err(missing("requirements")),
            Stage::MalfunctionDerivation if c.functions.is_empty() => Err(missing("functions")),
            Stage::HazardIdentification if c.malfunctions.is_empty() => Err(missing("malfunctions")),
            Stage::HazardIdentification if c.odd.is_empty() => Err(HaraError::EmptyOdd),
            Stage::RiskAssessment | Stage::SafetyGoals if c.hazards.is_empty() => Err(missing("hazards")),
            Stage::ItemDefinition | Stage::Complete => Err(HaraError::UnsupportedStage(self.stage.to_string())),
            _ => Ok(()),
        }
    }
}

/// A stage-typed candidate artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidatePayload {
    Function(Function),
    Malfunction(Malfunction),
    Hazard(Hazard),
    Rating(RiskRating),
    SafetyGoal(SafetyGoal),
}

impl CandidatePayload {
    pub fn stage(&self) -> Stage {
        match self {
            CandidatePayload::Function(_) => Stage::FunctionExtraction,
            CandidatePayload::Malfunction(_) => Stage::MalfunctionDerivation,
            CandidatePayload::Hazard(_) => Stage::HazardIdentification,
            CandidatePayload::Rating(_) => Stage::RiskAssessment,
            CandidatePayload::SafetyGoal(_) => Stage::SafetyGoals,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Template or prompt identifier that produced this candidate.
    pub template: String,
    #[serde(flatten)]
    pub payload: CandidatePayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchProvenance {
    pub backend: String,
    pub template: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateBatch {
    pub items: Vec<Candidate>,
    pub provenance: BatchProvenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    /// Elements of the backend output that failed the stage schema.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<Dropped>,
}

/// Produces candidates for one stage. Implementations never touch project state.
pub trait Backend: Send + Sync {
    fn id(&self) -> String;
    fn generate(&self, request: &GenerationRequest) -> Result<CandidateBatch>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    RuleBased,
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = HaraError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "rule_based" | "rules" => Ok(BackendKind::RuleBased),
            "remote" => Ok(BackendKind::Remote),
            other => Err(HaraError::Config(format!("unknown backend `{other}`"))),
        }
    }
}

/// Backend settings persisted in the project file. Never holds secrets; the
/// remote API key comes from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    /// First retry delay; doubles on every further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    500
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::RuleBased,
            endpoint_url: None,
            model_name: None,
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            temperature: None,
            backoff_ms: default_backoff_ms(),
        }
    }
}

impl BackendConfig {
    pub fn remote(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Remote,
            endpoint_url: Some(endpoint_url.into()),
            model_name: Some(model_name.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BackendKind::Remote {
            if self.endpoint_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                return Err(HaraError::Config("remote backend requires endpoint_url".into()));
            }
            if self.model_name.as_deref().is_none_or(|m| m.trim().is_empty()) {
                return Err(HaraError::Config("remote backend requires model_name".into()));
            }
        }
        Ok(())
    }
}

/// Builds the backend a config describes. Remote backends read their key
/// from [`API_KEY_ENV`].
pub fn backend_from_config(config: &BackendConfig, catalog: crate::hazop::Catalog) -> Result<Box<dyn Backend>> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::RuleBased => Box::new(RuleBasedBackend::new(catalog)),
        BackendKind::Remote => Box::new(RemoteBackend::from_env(config.clone())?),
    })
}
