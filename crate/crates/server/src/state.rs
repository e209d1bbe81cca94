use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use ttvr_core::agents::Agents;
use ttvr_core::archive::{read_archive, ArchiveScan, ArchiveWriter};
use ttvr_core::backend::Backend;
use ttvr_core::certification::CheckerConfig;
use ttvr_core::config::Settings;
use ttvr_core::wire::JobStatus;
use ttvr_core::Engine;

use crate::error::{ApiError, StartError};

/// Shared service state. Holding it holds the archive's writer lock.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

struct Inner {
    settings: Settings,
    agents: Agents,
    backend: Arc<dyn Backend>,
    checker: Option<CheckerConfig>,
    archive: Mutex<ArchiveWriter>,
    archive_path: PathBuf,
    jobs: Mutex<HashMap<String, JobStatus>>,
}

impl AppState {
    /// Builds the configured backend and opens the archive for writing.
    pub fn new(settings: Settings) -> Result<Self, StartError> {
        let backend = settings.build_backend()?;
        Self::with_backend(settings, backend)
    }

    pub fn with_backend(settings: Settings, backend: Arc<dyn Backend>) -> Result<Self, StartError> {
        settings.validate()?;
        let agents = settings.agents()?;
        let archive = ArchiveWriter::open(&settings.archive_path)?;
        Ok(Self(Arc::new(Inner {
            checker: settings.checker_config(),
            archive_path: settings.archive_path.clone(),
            archive: Mutex::new(archive),
            jobs: Mutex::new(HashMap::new()),
            agents,
            backend,
            settings,
        })))
    }

    pub fn settings(&self) -> &Settings {
        &self.0.settings
    }

    pub fn agents(&self) -> &Agents {
        &self.0.agents
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.0.backend
    }

    pub fn checker(&self) -> Option<&CheckerConfig> {
        self.0.checker.as_ref()
    }

    pub fn archive_path(&self) -> &PathBuf {
        &self.0.archive_path
    }

    /// A fresh engine with its own call log.
    pub fn engine(&self) -> Engine {
        Engine::new(self.0.agents.clone(), self.0.backend.clone()).with_retry(self.0.settings.retry_policy())
    }

    pub(crate) fn archive(&self) -> Result<MutexGuard<'_, ArchiveWriter>, ApiError> {
        self.0
            .archive
            .lock()
            .map_err(|_| ApiError::internal("archive writer poisoned"))
    }

    pub(crate) fn scan(&self) -> Result<ArchiveScan, ApiError> {
        Ok(read_archive(&self.0.archive_path)?)
    }

    pub(crate) fn jobs(&self) -> MutexGuard<'_, HashMap<String, JobStatus>> {
        self.0.jobs.lock().unwrap_or_else(|p| p.into_inner())
    }
}
