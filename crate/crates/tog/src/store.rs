//! File-backed knowledge graph with a persisted correction log.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{RwLock, RwLockReadGuard};

use tog_core::kg::{decode_corrections, encode_correction, Correction, GraphStats, KgError, KnowledgeGraph};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: KgError,
    },
    #[error(transparent)]
    Kg(#[from] KgError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

pub fn load_graph(path: &Path) -> Result<KnowledgeGraph, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    KnowledgeGraph::parse(&text).map_err(|source| StoreError::Parse { path: path.to_path_buf(), source })
}

pub fn save_graph(kg: &KnowledgeGraph, path: &Path) -> Result<(), StoreError> {
    fs::write(path, kg.to_tsv()).map_err(io_err(path))
}

pub fn load_corrections(path: &Path) -> Result<Vec<Correction>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    decode_corrections(&text).map_err(|source| StoreError::Parse { path: path.to_path_buf(), source })
}

/// The in-memory graph behind a read/write lock. Reads run concurrently;
/// corrections take the write lock, so each one is seen whole or not at all.
#[derive(Debug)]
pub struct GraphStore {
    graph: RwLock<KnowledgeGraph>,
    log_path: Option<PathBuf>,
}

impl GraphStore {
    pub fn new(graph: KnowledgeGraph) -> Self {
        Self { graph: RwLock::new(graph), log_path: None }
    }

    /// Load a graph file and replay the correction log next to it, if any.
    /// Accepted corrections are appended to `log_path`.
    pub fn open(kg_path: &Path, log_path: Option<PathBuf>) -> Result<Self, StoreError> {
        let mut graph = load_graph(kg_path)?;
        if let Some(log) = log_path.as_deref().filter(|p| p.exists()) {
            graph = graph.replay(&load_corrections(log)?)?;
        }
        Ok(Self { graph: RwLock::new(graph), log_path })
    }

    pub fn read(&self) -> RwLockReadGuard<'_, KnowledgeGraph> {
        self.graph.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn stats(&self) -> GraphStats {
        self.read().stats()
    }

    /// Validate, persist, then apply. A rejected correction leaves both the
    /// graph and the log untouched.
    pub fn apply(&self, correction: Correction) -> Result<Correction, StoreError> {
        let mut graph = self.graph.write().unwrap_or_else(|e| e.into_inner());
        if !graph.contains(&correction.target) {
            let t = &correction.target;
            return Err(KgError::CorrectionRejected {
                subject: t.subject.id.clone(),
                relation: t.relation.name().to_string(),
                object: t.object.id.clone(),
            }
            .into());
        }
        let mut stamped = correction.clone();
        stamped.sequence = graph.corrections().last().map_or(1, |c| c.sequence + 1);
        if let Some(path) = &self.log_path {
            let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
            writeln!(file, "{}", encode_correction(&stamped)).map_err(io_err(path))?;
        }
        Ok(graph.apply_correction(correction)?)
    }
}
