//! Ask, inspect, correct and re-ask: run records, their file store and the
//! service tying engine, graph and backends together.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tog_core::engine::{Outcome, SearchConfig, Termination, Trace};
use tog_core::kg::{Correction, GraphStats, KgError};
use tog_core::run;
use uuid::Uuid;

use crate::config::{Backends, KgBackend};
use crate::store::StoreError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub question: String,
    pub config: SearchConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub trace: Trace,
    pub created_at: DateTime<Utc>,
    /// The run this one re-asks after a correction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<Correction>,
}

/// What callers get back from ask and correct.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRef {
    pub run_id: String,
    pub answer: String,
    pub fallback: bool,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("run {0} not found")]
    NotFound(String),
    #[error("corrections are not supported by the SPARQL backend")]
    CorrectionsUnsupported,
    #[error(transparent)]
    CorrectionRejected(KgError),
    #[error("run {run_id} failed: {message}")]
    RunFailed { run_id: String, message: String },
    #[error("trace store: {0}")]
    Store(String),
}

/// One JSON document per run, written once.
#[derive(Clone, Debug)]
pub struct TraceStore {
    dir: PathBuf,
}

impl TraceStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| ServiceError::Store(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    fn path(&self, id: &str) -> Result<PathBuf, ServiceError> {
        Uuid::parse_str(id).map_err(|_| ServiceError::NotFound(id.to_string()))?;
        Ok(self.dir.join(format!("{id}.json")))
    }

    pub fn put(&self, record: &RunRecord) -> Result<(), ServiceError> {
        let path = self.path(&record.run_id)?;
        let body = serde_json::to_vec_pretty(record).map_err(|e| ServiceError::Store(e.to_string()))?;
        let tmp = self.dir.join(format!(".{}.tmp", record.run_id));
        let store_err = |e: std::io::Error| ServiceError::Store(format!("{}: {e}", path.display()));
        let mut f = OpenOptions::new().write(true).create_new(true).open(&tmp).map_err(store_err)?;
        f.write_all(&body).and_then(|()| f.sync_all()).map_err(store_err)?;
        if path.exists() {
            let _ = fs::remove_file(&tmp);
            return Err(ServiceError::Store(format!("run {} already recorded", record.run_id)));
        }
        fs::rename(&tmp, &path).map_err(store_err)
    }

    pub fn get(&self, id: &str) -> Result<RunRecord, ServiceError> {
        let path = self.path(id)?;
        let text = fs::read(&path).map_err(|_| ServiceError::NotFound(id.to_string()))?;
        serde_json::from_slice(&text).map_err(|e| ServiceError::Store(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum KgStats {
    Memory(GraphStats),
    Sparql { endpoint: String },
}

pub struct Service {
    kg: KgBackend,
    backends: Backends,
    defaults: SearchConfig,
    store: TraceStore,
    corrections: Mutex<()>,
}

impl Service {
    pub fn new(kg: KgBackend, backends: Backends, defaults: SearchConfig, store: TraceStore) -> Self {
        Self { kg, backends, defaults, store, corrections: Mutex::new(()) }
    }

    pub fn defaults(&self) -> &SearchConfig {
        &self.defaults
    }

    pub fn ask(&self, question: &str, config: Option<SearchConfig>) -> Result<RunRef, ServiceError> {
        if question.trim().is_empty() {
            return Err(ServiceError::InvalidRequest("question is empty".into()));
        }
        let config = config.unwrap_or_else(|| self.defaults.clone());
        config.validate().map_err(|e| ServiceError::InvalidRequest(e.to_string()))?;
        self.execute(question, config, None, None)
    }

    fn execute(
        &self,
        question: &str,
        config: SearchConfig,
        parent: Option<String>,
        correction: Option<Correction>,
    ) -> Result<RunRef, ServiceError> {
        let run_id = Uuid::new_v4().to_string();
        let backends = &self.backends;
        let result = self
            .kg
            .with_source(|kg| run(question, &config, backends.scorer.as_ref(), backends.reasoner.as_ref(), kg));
        let (outcome, error, mut trace) = match result {
            Ok(r) => (Some(r.outcome), None, r.trace),
            Err(e) => (None, Some(e.source.to_string()), *e.trace),
        };
        trace.run_id = Some(run_id.clone());
        let record = RunRecord {
            run_id: run_id.clone(),
            question: question.to_string(),
            config,
            outcome,
            error,
            trace,
            created_at: Utc::now(),
            parent: parent.clone(),
            correction,
        };
        self.store.put(&record)?;
        match (record.outcome, record.error) {
            (Some(o), _) => Ok(RunRef {
                run_id,
                answer: o.answer,
                fallback: o.fallback,
                termination: o.termination,
                parent,
            }),
            (None, message) => Err(ServiceError::RunFailed { run_id, message: message.unwrap_or_default() }),
        }
    }

    pub fn get(&self, run_id: &str) -> Result<RunRecord, ServiceError> {
        self.store.get(run_id)
    }

    pub fn trace(&self, run_id: &str) -> Result<Trace, ServiceError> {
        Ok(self.store.get(run_id)?.trace)
    }

    /// Apply `correction` to the graph and ask the run's question again
    /// under its original configuration.
    pub fn correct_and_reask(&self, run_id: &str, correction: Correction) -> Result<RunRef, ServiceError> {
        let KgBackend::Memory(store) = &self.kg else {
            return Err(ServiceError::CorrectionsUnsupported);
        };
        let original = self.store.get(run_id)?;
        let _serial = self.corrections.lock().unwrap_or_else(|e| e.into_inner());
        let applied = store.apply(correction).map_err(|e| match e {
            StoreError::Kg(k) => ServiceError::CorrectionRejected(k),
            other => ServiceError::Store(other.to_string()),
        })?;
        self.execute(&original.question, original.config, Some(original.run_id), Some(applied))
    }

    /// Run ids from `run_id` back to the original question, newest first.
    pub fn provenance(&self, run_id: &str) -> Result<Vec<String>, ServiceError> {
        let mut chain = vec![run_id.to_string()];
        let mut at = self.store.get(run_id)?;
        while let Some(parent) = at.parent.take() {
            if chain.contains(&parent) {
                return Err(ServiceError::Store(format!("provenance cycle at {parent}")));
            }
            at = self.store.get(&parent)?;
            chain.push(parent);
        }
        Ok(chain)
    }

    pub fn kg_stats(&self) -> KgStats {
        match &self.kg {
            KgBackend::Memory(store) => KgStats::Memory(store.stats()),
            KgBackend::Sparql { endpoint, .. } => KgStats::Sparql { endpoint: endpoint.clone() },
        }
    }
}
