//! Hazard analysis and risk assessment engine for automotive items.
//!
//! A [`Project`] moves through fixed stages: item definition, function
//! extraction, malfunction derivation, hazard identification, risk
//! assessment and safety goals. Each stage is populated by a [`Backend`]
//! with proposed items that an engineer accepts, modifies or rejects before
//! the stage can be left. Every mutation lands in a hash-chained audit log.

pub mod audit;
pub mod backend;
pub mod error;
pub mod golden;
pub mod hazop;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod risk;

pub use audit::{Action, Actor, ActorKind, AuditEntry, AuditFilter, AuditLog, Verification};
pub use backend::{Backend, BackendConfig, BackendKind, CandidateBatch, GenerationRequest, RemoteBackend, RuleBasedBackend};
pub use error::{ErrorCategory, HaraError, Result};
pub use hazop::{Catalog, GuideWord};
pub use io::{load_project, save_project, ItemDefinitionDoc, ProjectFile};
pub use model::{EntityKind, EntityRef, OutputKind, Project, Record, ReviewStatus, Stage};
pub use pipeline::{
    advance_stage, compare_projects, metrics, reopen, review, run_stage_generation, validate, CoverageMetrics, ReviewDecision,
    ValidationReport,
};
pub use report::{export_report, ReportFormat};
pub use risk::{compute_asil, inherit_goal_asil, rate_hazard, Asil, Controllability, Exposure, RiskRating, Severity};
