use thiserror::Error;

use crate::pipeline::ValidationReport;

pub type Result<T, E = HaraError> = std::result::Result<T, E>;

/// Every failure the engine can report. `code()` is the stable identifier
/// surfaced by the HTTP service and the CLI.
#[derive(Debug, Error)]
pub enum HaraError {
    #[error("dangling reference: {kind} `{id}` does not exist")]
    DanglingReference { kind: String, id: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown hazard `{0}`")]
    UnknownHazard(String),
    #[error("hazards without a confirmed rating: {}", .0.join(", "))]
    UnratedHazard(Vec<String>),
    #[error("hazard `{0}` already has a confirmed rating; pass supersede to replace it")]
    DoubleConfirm(String),
    #[error("rationale is required for every factor ({0})")]
    MissingRationale(String),

    #[error("operational design domain is empty")]
    EmptyOdd,
    #[error("catalog error: {0}")]
    Catalog(String),

    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: u32, message: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("stage {0} does not support generation")]
    UnsupportedStage(String),
    #[error("no prompt template for stage {0}")]
    MissingTemplate(String),
    #[error("backend configuration error: {0}")]
    Config(String),

    #[error("stage {stage} has {count} unreviewed item(s)")]
    StageHasPendingReviews { stage: String, count: usize },
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("item `{0}` is already finalized")]
    AlreadyFinalized(String),
    #[error("invalid modify payload: {0}")]
    InvalidModifyPayload(String),
    #[error("{count} pending item(s) must be reviewed before advancing")]
    PendingReviews { count: usize },
    #[error("validation failed with {} error finding(s)", .0.error_count())]
    ValidationFailed(ValidationReport),
    #[error("project is complete; there is no next stage")]
    NoNextStage,
    #[error("cannot reopen stage {target} from stage {current}")]
    InvalidReopen { current: String, target: String },
    #[error("projects describe different items: {0}")]
    MismatchedItems(String),

    #[error("parse error at byte {offset}: {message}")]
    ParseError { offset: usize, message: String },
    #[error("schema error at `{path}`: {message}")]
    SchemaError { path: String, message: String },
    #[error("duplicate requirement id `{0}`")]
    DuplicateRequirementId(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("audit chain corrupt at seq {seq}")]
    CorruptAudit { seq: u64 },
    #[error("project file format version {found} is newer than supported {supported}")]
    VersionTooNew { found: u64, supported: u64 },
}

impl HaraError {
    pub fn code(&self) -> &'static str {
        use HaraError::*;
        match self {
            DanglingReference { .. } => "DanglingReference",
            DuplicateId(_) => "DuplicateId",
            InvariantViolation(_) => "InvariantViolation",
            UnknownEntity(_) => "UnknownEntity",
            UnknownHazard(_) => "UnknownHazard",
            UnratedHazard(_) => "UnratedHazard",
            DoubleConfirm(_) => "DoubleConfirm",
            MissingRationale(_) => "MissingRationale",
            EmptyOdd => "EmptyOdd",
            Catalog(_) => "CatalogError",
            BackendUnavailable { .. } => "BackendUnavailable",
            MalformedResponse(_) => "MalformedResponse",
            UnsupportedStage(_) => "UnsupportedStage",
            MissingTemplate(_) => "MissingTemplate",
            Config(_) => "ConfigError",
            StageHasPendingReviews { .. } => "StageHasPendingReviews",
            UnknownItem(_) => "UnknownItem",
            AlreadyFinalized(_) => "AlreadyFinalized",
            InvalidModifyPayload(_) => "InvalidModifyPayload",
            PendingReviews { .. } => "PendingReviews",
            ValidationFailed(_) => "ValidationFailed",
            NoNextStage => "NoNextStage",
            InvalidReopen { .. } => "InvalidReopen",
            MismatchedItems(_) => "MismatchedItems",
            ParseError { .. } => "ParseError",
            SchemaError { .. } => "SchemaError",
            DuplicateRequirementId(_) => "DuplicateRequirementId",
            Io(_) => "IoError",
            CorruptAudit { .. } => "CorruptAudit",
            VersionTooNew { .. } => "VersionTooNew",
        }
    }

    /// Broad classification used for CLI exit codes and HTTP statuses.
    pub fn category(&self) -> ErrorCategory {
        use HaraError::*;
        match self {
            StageHasPendingReviews { .. }
            | PendingReviews { .. }
            | ValidationFailed(_)
            | NoNextStage
            | UnsupportedStage(_)
            | AlreadyFinalized(_)
            | DoubleConfirm(_)
            | InvalidReopen { .. } => ErrorCategory::Gate,
            UnknownEntity(_) | UnknownHazard(_) | UnknownItem(_) => ErrorCategory::UnknownEntity,
            CorruptAudit { .. } => ErrorCategory::Integrity,
            BackendUnavailable { .. } | MalformedResponse(_) => ErrorCategory::Backend,
            Io(_) => ErrorCategory::Io,
            ParseError { .. } | SchemaError { .. } | DuplicateRequirementId(_) | VersionTooNew { .. } => {
                ErrorCategory::Input
            }
            Config(_) | MissingTemplate(_) | Catalog(_) => ErrorCategory::Config,
            DanglingReference { .. }
            | DuplicateId(_)
            | InvariantViolation(_)
            | UnratedHazard(_)
            | MissingRationale(_)
            | EmptyOdd
            | InvalidModifyPayload(_)
            | MismatchedItems(_) => ErrorCategory::Invalid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Gate,
    UnknownEntity,
    Integrity,
    Backend,
    Io,
    Input,
    Config,
    Invalid,
}
