//! `hara`: batch front end for the HARA pipeline.

mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hara_core::io::{self, ingest_path, project_from_item};
use hara_core::model::{EntityKind, NewEntity};
use hara_core::pipeline::{advance_stage_with, metrics_with, stage_board, validate_with, GenerateOptions};
use hara_core::risk::{RateOptions, Rationale};
use hara_core::*;
use serde::Serialize;

const DEFAULT_ACTOR: &str = "anonymous-engineer";

#[derive(Parser)]
#[command(name = "hara", version, about = "Hazard analysis and risk assessment pipeline")]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Engineer recorded in the audit log for mutations.
    #[arg(long, global = true, env = "HARA_ACTOR")]
    actor: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProjectArg {
    #[arg(long, short = 'p')]
    project: PathBuf,
}

#[derive(Args)]
struct CatalogArg {
    /// Extra applicability rules and templates layered over the shipped catalog.
    #[arg(long)]
    catalog: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Create a project from an item definition (JSON or CSV).
    Init {
        #[arg(long)]
        item: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Propose candidates for the current stage.
    Generate {
        #[command(flatten)]
        p: ProjectArg,
        #[arg(long)]
        backend: Option<String>,
        #[command(flatten)]
        catalog: CatalogArg,
        #[arg(long = "max")]
        max: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Remote endpoint; stored in the project's backend settings.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        timeout_ms: Option<u64>,
        #[arg(long)]
        max_retries: Option<u32>,
    },
    /// Apply review decisions.
    Review {
        #[command(flatten)]
        p: ProjectArg,
        /// JSON list of review decisions, applied in order.
        #[arg(long, conflicts_with = "accept_all", required_unless_present = "accept_all")]
        batch: Option<PathBuf>,
        /// Accept every pending item at the current stage.
        #[arg(long)]
        accept_all: bool,
    },
    /// Record a risk rating for a hazard.
    Rate {
        #[command(flatten)]
        p: ProjectArg,
        #[arg(long)]
        hazard: String,
        #[arg(long = "s")]
        severity: String,
        #[arg(long = "e")]
        exposure: String,
        #[arg(long = "c")]
        controllability: String,
        /// Plain text, or a JSON object with severity/exposure/controllability.
        #[arg(long, conflicts_with = "rationale")]
        rationale_file: Option<PathBuf>,
        #[arg(long)]
        rationale: Option<String>,
        /// Record as a proposal instead of a confirmed rating.
        #[arg(long)]
        propose: bool,
        #[arg(long)]
        supersede: bool,
    },
    /// Add an engineer-authored entity from a JSON file.
    Add {
        #[command(flatten)]
        p: ProjectArg,
        #[arg(long)]
        entity: PathBuf,
    },
    /// Move to the next stage if the gate passes.
    Advance {
        #[command(flatten)]
        p: ProjectArg,
        #[command(flatten)]
        catalog: CatalogArg,
    },
    /// Move back to an earlier stage.
    Reopen {
        #[command(flatten)]
        p: ProjectArg,
        #[arg(long)]
        stage: String,
    },
    /// Show the stage cursor and review counts.
    Status {
        #[command(flatten)]
        p: ProjectArg,
    },
    /// Run the consistency rules.
    Validate {
        #[command(flatten)]
        p: ProjectArg,
        #[command(flatten)]
        catalog: CatalogArg,
    },
    /// Coverage and size metrics
    Metrics {
        #[command(flatten)]
        p: ProjectArg,
        #[command(flatten)]
        catalog: CatalogArg,
    },
    /// Render the safety report.
    Export {
        #[command(flatten)]
        p: ProjectArg,
        #[arg(long, default_value = "md")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List or verify the audit log.
    Audit {
        #[command(flatten)]
        p: ProjectArg,
        #[arg(long)]
        verify: bool,
        /// One JSON entry per line.
        #[arg(long)]
        jsonl: bool,
        #[arg(long = "by")]
        by: Option<String>,
        #[arg(long)]
        action: Option<String>,
        #[arg(long)]
        entity: Option<String>,
    },
    /// Traceability matrix, or the path between a requirement and a goal.
    Trace {
        #[command(flatten)]
        p: ProjectArg,
        #[arg(long, requires = "goal")]
        requirement: Option<String>,
        #[arg(long, requires = "requirement")]
        goal: Option<String>,
    },
    /// Compare two analyses of the same item.
    Compare {
        #[command(flatten)]
        p: ProjectArg,
        #[arg(long)]
        other: PathBuf,
    },
    /// Serve the HTTP API over a directory of projects.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "projects")]
        store: PathBuf,
        #[command(flatten)]
        catalog: CatalogArg,
    },
}

enum Failure {
    Hara(HaraError),
    Usage(String),
}

impl From<HaraError> for Failure {
    fn from(e: HaraError) -> Self {
        Failure::Hara(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Hara(e.into())
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn exit_code(e: &HaraError) -> u8 {
    match e.category() {
        ErrorCategory::Gate => 3,
        ErrorCategory::UnknownEntity => 4,
        ErrorCategory::Integrity => 5,
        ErrorCategory::Backend => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Hara(e)) => {
            eprintln!("error [{}]: {e}", e.code());
            if let HaraError::ValidationFailed(report) = &e {
                eprint!("{}", render::findings(report));
            }
            if cli.json {
                let body = serde_json::json!({"code": e.code(), "message": e.to_string()});
                println!("{body}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn actor(cli: &Cli) -> Actor {
    match cli.actor.as_deref().map(str::trim).filter(|a| !a.is_empty()) {
        Some(a) => Actor::engineer(a),
        None => {
            log::warn!("no --actor given; recording as {DEFAULT_ACTOR}");
            Actor::engineer(DEFAULT_ACTOR)
        }
    }
}

fn catalog(arg: &CatalogArg) -> hara_core::Result<Catalog> {
    match &arg.catalog {
        Some(path) => Catalog::shipped().extend_with(&std::fs::read_to_string(path)?),
        None => Ok(Catalog::shipped()),
    }
}

fn emit<T: Serialize>(cli: &Cli, value: &T, human: impl FnOnce() -> String) {
    if cli.json {
        println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
    } else {
        print!("{}", human());
    }
}

fn parse_stage(s: &str) -> CliResult<Stage> {
    Stage::ALL
        .into_iter()
        .find(|st| st.as_str().eq_ignore_ascii_case(s) || st.as_str().to_lowercase() == s.replace(['_', '-'], "").to_lowercase())
        .ok_or_else(|| Failure::Usage(format!("unknown stage `{s}`")))
}

/// Ids of unreviewed items the current stage produces.
fn pending_ids(project: &Project) -> Vec<String> {
    fn proposed<T>(records: &[model::Record<T>]) -> Vec<String> {
        records.iter().filter(|r| r.status == ReviewStatus::Proposed).map(|r| r.id.clone()).collect()
    }
    match project.stage.produces() {
        Some(EntityKind::Function) => proposed(&project.functions),
        Some(EntityKind::Malfunction) => proposed(&project.malfunctions),
        Some(EntityKind::Hazard) => proposed(&project.hazards),
        Some(EntityKind::RiskRating) => proposed(&project.risk_ratings),
        Some(EntityKind::SafetyGoal) => proposed(&project.safety_goals),
        _ => Vec::new(),
    }
}

fn load(p: &ProjectArg) -> hara_core::Result<Project> {
    load_project(&p.project)
}

fn run(cli: &Cli) -> CliResult<u8> {
    match &cli.command {
        Command::Init { item, out, name } => {
            if out.exists() {
                return Err(Failure::Usage(format!("{} already exists", out.display())));
            }
            let mut doc = ingest_path(item)?;
            if name.is_some() {
                doc.name = name.clone();
            }
            let fallback = item.file_stem().and_then(|s| s.to_str()).unwrap_or("project");
            let project = project_from_item(&doc, fallback, &actor(cli))?;
            save_project(&project, out)?;
            emit(cli, &serde_json::json!({"project": out, "stage": project.stage, "requirements": project.requirements.len()}), || {
                format!(
                    "created {} ({} requirements, {} ODD parameters); stage {}\n",
                    out.display(),
                    project.requirements.len(),
                    project.odd_parameters.len(),
                    project.stage
                )
            });
        }
        Command::Generate { p, backend, catalog: cat, max, seed, endpoint, model, timeout_ms, max_retries } => {
            let catalog = catalog(cat)?;
            let actor_name = actor(cli);
            let batch = io::update_project(&p.project, |project, config| {
                if let Some(kind) = backend {
                    config.kind = kind.parse()?;
                }
                if endpoint.is_some() {
                    config.endpoint_url = endpoint.clone();
                }
                if model.is_some() {
                    config.model_name = model.clone();
                }
                if let Some(t) = timeout_ms {
                    config.timeout_ms = *t;
                }
                if let Some(r) = max_retries {
                    config.max_retries = *r;
                }
                let backend = hara_core::backend::backend_from_config(config, catalog)?;
                let mut opts = GenerateOptions { seed: *seed, ..Default::default() };
                if let Some(n) = max {
                    opts.max_candidates = *n;
                }
                log::info!("generating as {}", actor_name.id);
                run_stage_generation(project, backend.as_ref(), opts)
            })?;
            emit(cli, &batch, || render::batch(&batch));
        }
        Command::Review { p, batch, accept_all } => {
            let reviewer = actor(cli).id;
            let decisions: Vec<ReviewDecision> = match batch {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    serde_json::from_str(&text).map_err(|e| HaraError::ParseError { offset: 0, message: e.to_string() })?
                }
                None => Vec::new(),
            };
            let outcomes = io::update_project(&p.project, |project, _| {
                let decisions = if *accept_all {
                    let ids = pending_ids(project);
                    if !ids.is_empty() {
                        eprintln!(
                            "warning: accepting {} item(s) at {} without individual review; the reviewer named in the audit log is accountable for them",
                            ids.len(),
                            project.stage
                        );
                    }
                    ids.into_iter().map(|id| ReviewDecision::accept(id, &reviewer)).collect()
                } else {
                    decisions
                };
                let mut out = Vec::new();
                for (i, mut d) in decisions.into_iter().enumerate() {
                    if d.reviewer.trim().is_empty() {
                        d.reviewer = reviewer.clone();
                    }
                    match review(project, &d) {
                        Ok(o) => out.push(o),
                        Err(e) => {
                            eprintln!("decision {i} ({}) failed; no decisions were applied", d.item_ref);
                            return Err(e);
                        }
                    }
                }
                Ok(out)
            })?;
            emit(cli, &outcomes, || render::outcomes(&outcomes));
        }
        Command::Rate { p, hazard, severity, exposure, controllability, rationale_file, rationale, propose, supersede } => {
            let rationale = match (rationale_file, rationale) {
                (Some(path), _) => read_rationale(path)?,
                (None, Some(text)) => Rationale::uniform(text.clone()),
                (None, None) => Rationale::default(),
            };
            let rating = RiskRating {
                hazard_id: hazard.clone(),
                severity: severity.parse()?,
                exposure: exposure.parse()?,
                controllability: controllability.parse()?,
                rationale,
            };
            let who = actor(cli);
            let opts = RateOptions { confirm: !propose, supersede: *supersede };
            let record = io::update_project(&p.project, |project, _| rate_hazard(project, rating, opts, &who))?;
            let asil = record.item.asil();
            emit(cli, &serde_json::json!({"rating_id": record.id, "asil": asil, "status": record.status}), || {
                format!("{}\n", asil.label())
            });
        }
        Command::Add { p, entity } => {
            let text = std::fs::read_to_string(entity)?;
            let entity: NewEntity = serde_json::from_str(&text).map_err(|e| HaraError::SchemaError { path: "$".into(), message: e.to_string() })?;
            let who = actor(cli);
            let id = io::update_project(&p.project, |project, _| project.add_entity(entity, &who))?;
            emit(cli, &serde_json::json!({"id": id}), || format!("added {id}\n"));
        }
        Command::Advance { p, catalog: cat } => {
            let catalog = catalog(cat)?;
            let who = actor(cli);
            let stage = io::update_project(&p.project, |project, _| advance_stage_with(project, &who, &catalog))?;
            emit(cli, &serde_json::json!({"stage": stage}), || format!("stage {stage}\n"));
        }
        Command::Reopen { p, stage } => {
            let target = parse_stage(stage)?;
            let who = actor(cli);
            let stage = io::update_project(&p.project, |project, _| reopen(project, target, &who))?;
            emit(cli, &serde_json::json!({"stage": stage}), || format!("stage {stage}\n"));
        }
        Command::Status { p } => {
            let project = load(p)?;
            let board = stage_board(&project);
            let body = serde_json::json!({"name": project.name, "stage": project.stage, "pending": project.pending_at(project.stage), "stage_board": board});
            emit(cli, &body, || render::status(&project, &board));
        }
        Command::Validate { p, catalog: cat } => {
            let project = load(p)?;
            let report = validate_with(&project, &catalog(cat)?);
            emit(cli, &report, || render::findings(&report));
            if report.error_count() > 0 {
                return Ok(3);
            }
        }
        Command::Metrics { p, catalog: cat } => {
            let project = load(p)?;
            let m = metrics_with(&project, &catalog(cat)?);
            emit(cli, &m, || render::metrics(&m));
        }
        Command::Export { p, format, out } => {
            let format: ReportFormat = format.parse()?;
            let text = export_report(&load(p)?, format);
            match out {
                Some(path) => {
                    std::fs::write(path, &text)?;
                    eprintln!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
        }
        Command::Audit { p, verify, jsonl, by, action, entity } => {
            return audit(cli, &p.project, *verify, *jsonl, by, action, entity);
        }
        Command::Trace { p, requirement, goal } => {
            let project = load(p)?;
            if let (Some(r), Some(g)) = (requirement, goal) {
                for id in [r, g] {
                    if project.resolve(id).is_none() {
                        return Err(HaraError::UnknownEntity(id.clone()).into());
                    }
                }
                let path = project.trace_path(r, g);
                emit(cli, &serde_json::json!({"path": path}), || render::path(&project, path.as_deref()));
            } else {
                let matrix = project.trace_matrix();
                emit(cli, &matrix, || render::matrix(&matrix));
            }
        }
        Command::Compare { p, other } => {
            let report = compare_projects(&load(p)?, &load_project(other)?)?;
            emit(cli, &report, || render::comparison(&report));
        }
        Command::Serve { host, port, store, catalog: cat } => {
            let addr = format!("{host}:{port}")
                .parse()
                .or_else(|_| std::net::ToSocketAddrs::to_socket_addrs(&(host.as_str(), *port)).map(|mut a| a.next().expect("resolved")))
                .map_err(|e| Failure::Usage(format!("bad --host/--port: {e}")))?;
            let config = hara_service::ServiceConfig { store_dir: store.clone(), catalog: catalog(cat)? };
            let bound = hara_service::spawn(addr, config)?;
            println!("listening on http://{bound}");
            use std::io::Write;
            std::io::stdout().flush()?;
            loop {
                std::thread::park();
            }
        }
    }
    Ok(0)
}

fn read_rationale(path: &Path) -> hara_core::Result<Rationale> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(r) = serde_json::from_str::<Rationale>(&text) {
        return Ok(r);
    }
    Ok(Rationale::uniform(text.trim()))
}

fn audit(
    cli: &Cli,
    path: &Path,
    verify: bool,
    jsonl: bool,
    by: &Option<String>,
    action: &Option<String>,
    entity: &Option<String>,
) -> CliResult<u8> {
    let project = match load_project(path) {
        Err(HaraError::CorruptAudit { seq }) if verify => {
            emit(cli, &serde_json::json!({"status": "corrupt", "seq": seq}), || format!("audit chain corrupt at seq {seq}\n"));
            return Ok(5);
        }
        other => other?,
    };
    if verify {
        let n = project.audit.len();
        emit(cli, &serde_json::json!({"status": "ok", "entries": n}), || format!("audit chain ok ({n} entries)\n"));
        return Ok(0);
    }
    let action = match action {
        Some(a) => Some(serde_json::from_value(serde_json::Value::String(a.to_lowercase())).map_err(|_| Failure::Usage(format!("unknown action `{a}`")))?),
        None => None,
    };
    let filter = AuditFilter { actor: by.clone(), action, entity_ref: entity.clone(), ..Default::default() };
    let entries: Vec<AuditEntry> = project.audit.query(&filter).into_iter().cloned().collect();
    if jsonl {
        print!("{}", io::audit_jsonl(&entries));
    } else {
        emit(cli, &entries, || render::audit(&entries));
    }
    Ok(0)
}
