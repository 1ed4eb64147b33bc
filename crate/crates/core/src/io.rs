//! Item-definition ingestion and project-file persistence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::audit::{Action, Actor, AuditEntry, AuditLog, Verification};
use crate::backend::BackendConfig;
use crate::error::{HaraError, Result};
use crate::model::{EntityRef, OddParameter, Project, Requirement, Stage};

/// Newest project-file layout this build reads and writes.
pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementRow {
    pub id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OddRow {
    pub parameter: String,
    pub description: String,
}

/// Requirements and operational design domain of one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemDefinitionDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub requirements: Vec<RequirementRow>,
    pub odd: Vec<OddRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Json,
    Csv,
}

impl SourceFormat {
    /// Guesses from the file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => SourceFormat::Csv,
            _ => SourceFormat::Json,
        }
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> HaraError {
    HaraError::SchemaError { path: path.into(), message: message.into() }
}

/// Byte offset of a 1-based line/column position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn text_field(obj: &serde_json::Map<String, Value>, path: &str, field: &str) -> Result<String> {
    match obj.get(field) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        Some(Value::String(_)) => Err(schema(format!("{path}.{field}"), "must not be empty")),
        Some(_) => Err(schema(format!("{path}.{field}"), "expected a string")),
        None => Err(schema(format!("{path}.{field}"), "missing field")),
    }
}

fn array_field<'a>(obj: &'a serde_json::Map<String, Value>, field: &str) -> Result<&'a Vec<Value>> {
    match obj.get(field) {
        Some(Value::Array(a)) => Ok(a),
        Some(_) => Err(schema(field, "expected an array")),
        None => Err(schema(field, "missing field")),
    }
}

fn parse_json(text: &str) -> Result<ItemDefinitionDoc> {
    let value: Value = serde_json::from_str(text).map_err(|e| HaraError::ParseError {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| schema("$", "expected an object"))?;
    let name = match obj.get("name") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(schema("name", "expected a string")),
    };
    let mut requirements = Vec::new();
    for (i, v) in array_field(obj, "requirements")?.iter().enumerate() {
        let path = format!("requirements[{i}]");
        let o = v.as_object().ok_or_else(|| schema(&path, "expected an object"))?;
        requirements.push(RequirementRow { id: text_field(o, &path, "id")?, description: text_field(o, &path, "description")? });
    }
    let mut odd = Vec::new();
    for (i, v) in array_field(obj, "odd")?.iter().enumerate() {
        let path = format!("odd[{i}]");
        let o = v.as_object().ok_or_else(|| schema(&path, "expected an object"))?;
        odd.push(OddRow { parameter: text_field(o, &path, "parameter")?, description: text_field(o, &path, "description")? });
    }
    Ok(ItemDefinitionDoc { name, requirements, odd })
}

/// CSV layout: header `type,id,description`; `type` is `requirement` or
/// `odd`, and for ODD rows `id` holds the parameter name.
fn parse_csv(text: &str) -> Result<ItemDefinitionDoc> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let csv_error = |e: csv::Error| HaraError::ParseError {
        offset: e.position().map_or(0, |p| p.byte() as usize),
        message: e.to_string(),
    };
    let headers: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(str::to_ascii_lowercase).collect();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| schema(format!("header.{name}"), "missing column"))
    };
    let (ti, ii, di) = (column("type")?, column("id")?, column("description")?);
    let mut doc = ItemDefinitionDoc { name: None, requirements: Vec::new(), odd: Vec::new() };
    for (n, row) in reader.records().enumerate() {
        let row = row.map_err(csv_error)?;
        let path = format!("rows[{n}]");
        let cell = |i: usize, field: &str| -> Result<String> {
            match row.get(i) {
                Some(s) if !s.is_empty() => Ok(s.to_string()),
                _ => Err(schema(format!("{path}.{field}"), "must not be empty")),
            }
        };
        let kind = cell(ti, "type")?;
        match kind.to_ascii_lowercase().as_str() {
            "requirement" | "req" => doc.requirements.push(RequirementRow { id: cell(ii, "id")?, description: cell(di, "description")? }),
            "odd" => doc.odd.push(OddRow { parameter: cell(ii, "id")?, description: cell(di, "description")? }),
            other => return Err(schema(format!("{path}.type"), format!("expected `requirement` or `odd`, found `{other}`"))),
        }
    }
    Ok(doc)
}

/// Parses and validates an item definition.
pub fn ingest_item_definition(text: &str, format: SourceFormat) -> Result<ItemDefinitionDoc> {
    if text.trim().is_empty() {
        return Err(HaraError::ParseError { offset: 0, message: "empty document".into() });
    }
    let doc = match format {
        SourceFormat::Json => parse_json(text)?,
        SourceFormat::Csv => parse_csv(text)?,
    };
    validate_doc(&doc)?;
    Ok(doc)
}

pub fn ingest_path(path: &Path) -> Result<ItemDefinitionDoc> {
    let text = fs::read_to_string(path)?;
    ingest_item_definition(&text, SourceFormat::from_path(path))
}

fn validate_doc(doc: &ItemDefinitionDoc) -> Result<()> {
    if doc.requirements.is_empty() {
        return Err(schema("requirements", "at least one requirement is required"));
    }
    if doc.odd.is_empty() {
        return Err(schema("odd", "at least one ODD parameter is required"));
    }
    let mut ids = BTreeSet::new();
    for r in &doc.requirements {
        if !ids.insert(r.id.as_str()) {
            return Err(HaraError::DuplicateRequirementId(r.id.clone()));
        }
    }
    let mut params = BTreeSet::new();
    for (i, o) in doc.odd.iter().enumerate() {
        if !params.insert(o.parameter.as_str()) {
            return Err(schema(format!("odd[{i}].parameter"), format!("duplicate parameter `{}`", o.parameter)));
        }
    }
    Ok(())
}

/// Loads an item definition into a project still at item definition and
/// moves it to function extraction. Writes one ingest audit entry.
pub fn commit_item_definition(project: &mut Project, doc: &ItemDefinitionDoc, actor: &Actor) -> Result<()> {
    validate_doc(doc)?;
    if project.stage != Stage::ItemDefinition || !project.requirements.is_empty() {
        return Err(HaraError::InvariantViolation("item definition is already committed".into()));
    }
    project.requirements = doc.requirements.iter().map(|r| Requirement { id: r.id.clone(), text: r.description.clone() }).collect();
    project.odd_parameters =
        doc.odd.iter().map(|o| OddParameter { name: o.parameter.clone(), description: o.description.clone() }).collect();
    project.stage = Stage::FunctionExtraction;
    let after = json!({ "item_definition": doc, "stage": project.stage });
    project.audit.append(actor.clone(), Action::Ingest, EntityRef::project(), None, Some(after));
    Ok(())
}

/// A fresh project holding `doc`, ready for function extraction.
pub fn project_from_item(doc: &ItemDefinitionDoc, fallback_name: &str, actor: &Actor) -> Result<Project> {
    let mut project = Project::new(doc.name.clone().unwrap_or_else(|| fallback_name.to_string()));
    commit_item_definition(&mut project, doc, actor)?;
    Ok(project)
}

/// On-disk layout of a project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectFile {
    pub format_version: u64,
    pub project: Project,
    pub audit: Vec<AuditEntry>,
    #[serde(default)]
    pub backend: BackendConfig,
    /// Fields written by newer builds, kept verbatim.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl ProjectFile {
    pub fn new(project: &Project, backend: BackendConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            project: project.clone(),
            audit: project.audit.entries().to_vec(),
            backend,
            extra: BTreeMap::new(),
        }
    }

    pub fn into_project(self) -> Project {
        let mut project = self.project;
        project.audit = AuditLog::from_entries(self.audit);
        project
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("project file serializes")
    }

    /// Parses and checks the version and the audit chain.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| HaraError::ParseError {
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        })?;
        let found = value.get("format_version").and_then(Value::as_u64).ok_or_else(|| schema("format_version", "missing or not an integer"))?;
        if found > FORMAT_VERSION {
            return Err(HaraError::VersionTooNew { found, supported: FORMAT_VERSION });
        }
        let file: ProjectFile = serde_json::from_value(value).map_err(|e| schema("$", e.to_string()))?;
        if let Verification::Corrupt { seq } = AuditLog::from_entries(file.audit.clone()).verify() {
            return Err(HaraError::CorruptAudit { seq });
        }
        Ok(file)
    }
}

/// Exclusive (or shared) advisory lock on `<path>.lock`, released on drop.
pub struct PathLock {
    file: File,
}

impl PathLock {
    fn sidecar(path: &Path) -> PathBuf {
        let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".lock");
        path.with_file_name(name)
    }

    fn open(path: &Path) -> Result<File> {
        Ok(OpenOptions::new().create(true).truncate(false).read(true).write(true).open(Self::sidecar(path))?)
    }

    pub fn exclusive(path: &Path) -> Result<Self> {
        let file = Self::open(path)?;
        file.lock()?;
        Ok(Self { file })
    }

    pub fn shared(path: &Path) -> Result<Self> {
        let file = Self::open(path)?;
        file.lock_shared()?;
        Ok(Self { file })
    }
}

impl Drop for PathLock {
    fn drop(&mut self) {
        let _ = self.file.unlock();
    }
}

/// Writes through a temporary file and a rename so readers never see a
/// partial document. The caller holds the lock.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn save_project_file(file: &ProjectFile, path: &Path) -> Result<()> {
    let _lock = PathLock::exclusive(path)?;
    write_atomic(path, &file.to_json())
}

pub fn save_project(project: &Project, path: &Path) -> Result<()> {
    save_project_with(project, &BackendConfig::default(), path)
}

pub fn save_project_with(project: &Project, backend: &BackendConfig, path: &Path) -> Result<()> {
    project.check_integrity()?;
    save_project_file(&ProjectFile::new(project, backend.clone()), path)
}

pub fn load_project_file(path: &Path) -> Result<ProjectFile> {
    let _lock = PathLock::shared(path)?;
    ProjectFile::from_json(&fs::read_to_string(path)?)
}

pub fn load_project(path: &Path) -> Result<Project> {
    Ok(load_project_file(path)?.into_project())
}

/// Loads, applies `f` and saves under one exclusive lock. Nothing is written
/// when `f` fails.
pub fn update_project<T>(path: &Path, f: impl FnOnce(&mut Project, &mut BackendConfig) -> Result<T>) -> Result<T> {
    let _lock = PathLock::exclusive(path)?;
    let file = ProjectFile::from_json(&fs::read_to_string(path)?)?;
    let extra = file.extra.clone();
    let mut backend = file.backend.clone();
    let mut project = file.into_project();
    let out = f(&mut project, &mut backend)?;
    project.check_integrity()?;
    let mut next = ProjectFile::new(&project, backend);
    next.extra = extra;
    write_atomic(path, &next.to_json())?;
    Ok(out)
}

/// The audit log as JSON Lines, one entry per line.
pub fn audit_jsonl(entries: &[AuditEntry]) -> String {
    entries.iter().map(|e| serde_json::to_string(e).expect("entry serializes") + "\n").collect()
}
