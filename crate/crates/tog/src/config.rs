//! Service configuration and backend construction.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tog_core::engine::SearchConfig;
use tog_core::prompting::ExemplarSet;
use tog_core::scoring::{
    EmbeddingScorer, LexicalScorer, LlmReasoner, LlmScorer, Script, ScriptedBackend, VectorTable,
};
use tog_core::{KgSource, PruneScorer, Reasoner};

use crate::llm::{LlmConfig, RemoteChatModel};
use crate::sparql::{EndpointConfig, HttpTransport, SparqlClient};
use crate::store::GraphStore;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::File { path: path.to_path_buf(), message: e.to_string() })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    #[default]
    Scripted,
    Lexical,
    Embedding,
    Llm,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    /// Scripted replies (JSON). Also answers the reasoning roles for the
    /// lexical and embedding scorers when given.
    pub script: Option<PathBuf>,
    /// Vector table for the embedding scorer.
    pub vectors: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct KgConfig {
    /// Tab-separated triple file.
    pub file: Option<PathBuf>,
    /// Correction log replayed on load and appended to on every correction.
    pub corrections: Option<PathBuf>,
    pub sparql: Option<EndpointConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub trace_dir: PathBuf,
    pub kg: KgConfig,
    pub search: SearchConfig,
    pub scorer: ScorerConfig,
    pub llm: Option<LlmConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            trace_dir: PathBuf::from("runs"),
            kg: KgConfig::default(),
            search: SearchConfig::default(),
            scorer: ScorerConfig::default(),
            llm: None,
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(&read(path)?).map_err(|e| ConfigError::File { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.kg.file, &self.kg.sparql) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("configure either a graph file or a SPARQL endpoint, not both".into())),
            (None, None) => return Err(ConfigError::Invalid("no knowledge graph configured".into())),
            _ => {}
        }
        if self.kg.sparql.is_some() && self.kg.corrections.is_some() {
            return Err(ConfigError::Invalid("corrections apply only to a graph file".into()));
        }
        self.search.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        match self.scorer.kind {
            ScorerKind::Scripted if self.scorer.script.is_none() => {
                Err(ConfigError::Invalid("the scripted scorer needs a script".into()))
            }
            ScorerKind::Embedding if self.scorer.vectors.is_none() => {
                Err(ConfigError::Invalid("the embedding scorer needs a vector table".into()))
            }
            ScorerKind::Lexical | ScorerKind::Embedding if self.scorer.script.is_none() && self.llm.is_none() => Err(
                ConfigError::Invalid("reasoning needs a script or a model endpoint".into()),
            ),
            ScorerKind::Llm if self.llm.is_none() => Err(ConfigError::Invalid("the llm scorer needs an [llm] section".into())),
            _ => Ok(()),
        }
    }

    /// The SPARQL result cap bounds each candidate set as well.
    pub fn effective_search(&self) -> SearchConfig {
        let mut s = self.search.clone();
        if let Some(ep) = &self.kg.sparql {
            s.result_cap = s.result_cap.min(ep.result_cap.max(1));
        }
        s
    }
}

pub type SharedScorer = Arc<dyn PruneScorer + Send + Sync>;
pub type SharedReasoner = Arc<dyn Reasoner + Send + Sync>;

#[derive(Clone)]
pub struct Backends {
    pub scorer: SharedScorer,
    pub reasoner: SharedReasoner,
}

impl Backends {
    pub fn scripted(script: Script) -> Self {
        let b = Arc::new(ScriptedBackend::new(script));
        Self { scorer: b.clone(), reasoner: b }
    }
}

pub fn load_script(path: &Path) -> Result<Script, ConfigError> {
    serde_json::from_str(&read(path)?).map_err(|e| ConfigError::File { path: path.to_path_buf(), message: e.to_string() })
}

pub fn build_backends(cfg: &ServiceConfig) -> Result<Backends, ConfigError> {
    cfg.validate()?;
    let scripted = cfg
        .scorer
        .script
        .as_deref()
        .map(|p| load_script(p).map(|s| Arc::new(ScriptedBackend::new(s))))
        .transpose()?;
    let llm = cfg.llm.clone().unwrap_or_default();
    let settings = llm.settings();
    let model = (cfg.scorer.kind == ScorerKind::Llm || scripted.is_none())
        .then(|| RemoteChatModel::new(llm))
        .transpose()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let reasoner: SharedReasoner = match (&scripted, &model) {
        (Some(s), _) if cfg.scorer.kind != ScorerKind::Llm => s.clone(),
        (_, Some(m)) => Arc::new(LlmReasoner::new(m.clone(), ExemplarSet::default(), settings.clone())),
        _ => unreachable!("validated"),
    };
    let scorer: SharedScorer = match cfg.scorer.kind {
        ScorerKind::Scripted => scripted.clone().expect("validated"),
        ScorerKind::Lexical => Arc::new(LexicalScorer::default()),
        ScorerKind::Embedding => {
            let path = cfg.scorer.vectors.as_deref().expect("validated");
            let table = VectorTable::parse(&read(path)?)
                .map_err(|e| ConfigError::File { path: path.to_path_buf(), message: e.to_string() })?;
            Arc::new(EmbeddingScorer::new(table))
        }
        ScorerKind::Llm => Arc::new(LlmScorer::new(model.expect("validated"), ExemplarSet::default(), settings)),
    };
    Ok(Backends { scorer, reasoner })
}

/// The active knowledge graph: an editable in-memory store or a read-only
/// remote endpoint.
pub enum KgBackend {
    Memory(GraphStore),
    Sparql { endpoint: String, client: Box<dyn KgSource + Send + Sync> },
}

impl KgBackend {
    /// Run `f` against the current graph. For the in-memory store this holds
    /// the read lock for the duration of the call.
    pub fn with_source<R>(&self, f: impl FnOnce(&(dyn KgSource + Sync)) -> R) -> R {
        match self {
            KgBackend::Memory(store) => f(&*store.read()),
            KgBackend::Sparql { client, .. } => f(client.as_ref()),
        }
    }
}

pub fn build_kg(cfg: &KgConfig) -> Result<KgBackend, ConfigError> {
    if let Some(file) = &cfg.file {
        let store = GraphStore::open(file, cfg.corrections.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        return Ok(KgBackend::Memory(store));
    }
    let Some(ep) = &cfg.sparql else {
        return Err(ConfigError::Invalid("no knowledge graph configured".into()));
    };
    let client = SparqlClient::new(HttpTransport::new(ep), ep.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(KgBackend::Sparql { endpoint: ep.endpoint.clone(), client: Box::new(client) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let text = r#"
listen = "0.0.0.0:9000"
trace-dir = "/tmp/runs"

[kg]
file = "kg.tsv"

[search]
width = 2
depth = 4
variant = "tog-r"
entity_prune = "random"
rendering = "sequences"

[scorer]
kind = "scripted"
script = "s.json"
"#;
        let cfg: ServiceConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.search.width, 2);
        assert_eq!(cfg.search.seed, 0);
        cfg.validate().unwrap();
        let again: ServiceConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn exactly_one_graph_source() {
        let mut cfg = ServiceConfig {
            scorer: ScorerConfig { script: Some("s.json".into()), ..ScorerConfig::default() },
            ..ServiceConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.kg.file = Some("kg.tsv".into());
        cfg.validate().unwrap();
        cfg.kg.sparql = Some(EndpointConfig::new("http://localhost:8890/sparql"));
        assert!(cfg.validate().is_err());
        cfg.kg.file = None;
        cfg.validate().unwrap();
        assert_eq!(cfg.effective_search().result_cap, 200);
    }

    #[test]
    fn scorer_requirements() {
        let mut cfg = ServiceConfig { kg: KgConfig { file: Some("kg.tsv".into()), ..KgConfig::default() }, ..ServiceConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.scorer.kind = ScorerKind::Lexical;
        assert!(cfg.validate().is_err());
        cfg.llm = Some(LlmConfig::default());
        cfg.validate().unwrap();
        cfg.scorer.kind = ScorerKind::Embedding;
        assert!(cfg.validate().is_err());
    }
}
