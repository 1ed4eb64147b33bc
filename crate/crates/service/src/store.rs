use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use hara_core::io::{self, ProjectFile};
use hara_core::{BackendConfig, Project, Result};
use tokio::sync::RwLock;
use uuid::Uuid;

use crate::error::ApiError;

/// Directory of `<id>.json` project files. Mutations to one project are
/// serialized in-process; the file lock in `hara_core::io` covers other
/// processes.
pub struct Store {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<RwLock<()>>>>,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, locks: Mutex::new(HashMap::new()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Resolves an id to its file. Ids are UUIDs, so nothing else can
    /// address a path.
    pub fn path_of(&self, id: &str) -> std::result::Result<PathBuf, ApiError> {
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::unknown_project(id))?;
        let path = self.dir.join(format!("{}.json", uuid.hyphenated()));
        if !path.is_file() {
            return Err(ApiError::unknown_project(id));
        }
        Ok(path)
    }

    pub fn lock_for(&self, id: &str) -> Arc<RwLock<()>> {
        self.locks.lock().expect("lock table poisoned").entry(id.to_string()).or_default().clone()
    }

    pub fn create(&self, project: &Project) -> Result<String> {
        let id = Uuid::new_v4().hyphenated().to_string();
        io::save_project(project, &self.dir.join(format!("{id}.json")))?;
        Ok(id)
    }

    pub fn load(&self, path: &Path) -> Result<ProjectFile> {
        io::load_project_file(path)
    }

    pub fn update<T>(&self, path: &Path, f: impl FnOnce(&mut Project, &mut BackendConfig) -> Result<T>) -> Result<T> {
        io::update_project(path, f)
    }

    /// Ids of every stored project, sorted.
    pub fn list(&self) -> std::io::Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    if Uuid::parse_str(stem).is_ok() {
                        ids.push(stem.to_string());
                    }
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
