//! SPARQL endpoint client serving the knowledge-graph query interface from the
//! fixed query templates, with retries, a result cache and label resolution.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use lru::LruCache;
use serde::{Deserialize, Serialize};
use tog_core::kg::unnamed_label;
use tog_core::sparql::{label_lookup_query, render_query, strip_namespace, QueryTemplate};
use tog_core::{Direction, EntityRef, KgError, KgSource, RelationRef};

use crate::gate::Gate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct EndpointConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub retries: u32,
    /// Delay before the first retry; doubles on each further attempt.
    pub backoff_ms: u64,
    /// Cached queries; 0 turns the cache off.
    pub cache_size: usize,
    pub result_cap: usize,
    /// Concurrent requests allowed; 0 means unlimited.
    pub max_in_flight: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            timeout_ms: 10_000,
            retries: 3,
            backoff_ms: 200,
            cache_size: 10_000,
            result_cap: 200,
            max_in_flight: 8,
        }
    }
}

impl EndpointConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), KgError> {
        if self.endpoint.is_empty() {
            return Err(KgError::InvalidArgument("endpoint address is empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(KgError::InvalidArgument("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Sends one query and returns the raw response body.
pub trait SparqlTransport: Send + Sync {
    fn execute(&self, query: &str) -> Result<String, TransportError>;
}

impl<F> SparqlTransport for F
where
    F: Fn(&str) -> Result<String, TransportError> + Send + Sync,
{
    fn execute(&self, query: &str) -> Result<String, TransportError> {
        self(query)
    }
}

/// SPARQL protocol over HTTP: form-encoded POST, JSON results.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
}

impl HttpTransport {
    pub fn new(config: &EndpointConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_millis(config.timeout_ms)).build();
        Self { agent, endpoint: config.endpoint.clone() }
    }
}

impl SparqlTransport for HttpTransport {
    fn execute(&self, query: &str) -> Result<String, TransportError> {
        self.agent
            .post(&self.endpoint)
            .set("Accept", "application/sparql-results+json")
            .send_form(&[("query", query)])
            .map_err(|e| TransportError(e.to_string()))?
            .into_string()
            .map_err(|e| TransportError(e.to_string()))
    }
}

#[derive(Deserialize)]
struct ResultsDocument {
    results: ResultsBody,
}

#[derive(Deserialize)]
struct ResultsBody {
    bindings: Vec<BTreeMap<String, BoundValue>>,
}

#[derive(Deserialize)]
struct BoundValue {
    value: String,
}

/// Values bound to `variable`, in response order, namespace stripped.
pub fn parse_bindings(body: &str, variable: &str) -> Result<Vec<String>, KgError> {
    let doc: ResultsDocument =
        serde_json::from_str(body).map_err(|e| KgError::Protocol(format!("not a results document: {e}")))?;
    Ok(doc
        .results
        .bindings
        .into_iter()
        .filter_map(|mut b| b.remove(variable))
        .map(|v| strip_namespace(&v.value).to_string())
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResolveMode {
    LabelToId,
    IdToLabel,
}

/// Freebase mids (`m.`, `g.`) and Wikidata item ids are looked up by label;
/// anything else is treated as a literal and shown as is.
pub fn is_entity_id(s: &str) -> bool {
    s.starts_with("m.")
        || s.starts_with("g.")
        || s.strip_prefix('Q').is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

type CacheKey = (QueryTemplate, String, Option<String>);

pub struct SparqlClient<T> {
    transport: T,
    config: EndpointConfig,
    cache: Option<Mutex<LruCache<CacheKey, Vec<String>>>>,
    attempts: AtomicUsize,
    gate: Gate,
}

impl<T: SparqlTransport> SparqlClient<T> {
    pub fn new(transport: T, config: EndpointConfig) -> Result<Self, KgError> {
        config.validate()?;
        Ok(Self {
            transport,
            cache: NonZeroUsize::new(config.cache_size).map(|n| Mutex::new(LruCache::new(n))),
            gate: Gate::new(config.max_in_flight),
            attempts: AtomicUsize::new(0),
            config,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Transport attempts made so far, retries included.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }

    pub fn fetch(&self, template: QueryTemplate, id: &str, relation: Option<&str>) -> Result<Vec<String>, KgError> {
        let query = render_query(template, id, relation).map_err(|e| KgError::InvalidArgument(e.to_string()))?;
        let key = (template, id.to_string(), relation.map(String::from));
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.lock().unwrap_or_else(|e| e.into_inner()).get(&key).cloned()) {
            return Ok(hit);
        }
        let values = self.query(&query, template.variable())?;
        if let Some(cache) = &self.cache {
            cache.lock().unwrap_or_else(|e| e.into_inner()).put(key, values.clone());
        }
        Ok(values)
    }

    fn query(&self, query: &str, variable: &str) -> Result<Vec<String>, KgError> {
        let _permit = self.gate.enter();
        let mut last = None;
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            self.attempts.fetch_add(1, Ordering::SeqCst);
            match self.transport.execute(query) {
                Ok(body) => return parse_bindings(&body, variable),
                Err(e) => {
                    log::warn!("sparql attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(KgError::Unavailable(format!(
            "{} after {} attempts: {}",
            self.config.endpoint,
            self.config.retries + 1,
            last.map(|e| e.0).unwrap_or_default()
        )))
    }

    /// `LabelToId` yields `None` when nothing matches. `IdToLabel` always
    /// yields a name, falling back to the unnamed-entity placeholder.
    pub fn resolve(&self, input: &str, mode: ResolveMode) -> Result<Option<String>, KgError> {
        if input.is_empty() {
            return Err(KgError::InvalidArgument("cannot resolve an empty name".into()));
        }
        match mode {
            ResolveMode::IdToLabel => {
                let labels = self.fetch(QueryTemplate::MidToLabel, input, None)?;
                Ok(Some(labels.into_iter().next().unwrap_or_else(|| unnamed_label(input))))
            }
            ResolveMode::LabelToId => Ok(self.query(&label_lookup_query(input), "entity")?.into_iter().next()),
        }
    }

    fn entity(&self, id: String) -> Result<EntityRef, KgError> {
        if !is_entity_id(&id) {
            return Ok(EntityRef::new(id));
        }
        let label = self.resolve(&id, ResolveMode::IdToLabel)?.unwrap_or_default();
        Ok(EntityRef::labeled(id, label))
    }
}

impl<T: SparqlTransport> KgSource for SparqlClient<T> {
    fn relations_of(&self, entity: &EntityRef) -> Result<Vec<(RelationRef, Direction)>, KgError> {
        let mut out = Vec::new();
        for (template, dir) in [
            (QueryTemplate::RelationOutward, Direction::Outward),
            (QueryTemplate::RelationInward, Direction::Inward),
        ] {
            out.extend(self.fetch(template, &entity.id, None)?.into_iter().map(|r| (RelationRef::new(r), dir)));
        }
        out.sort_by(|a, b| (a.0.name(), a.1).cmp(&(b.0.name(), b.1)));
        out.dedup();
        Ok(out)
    }

    fn neighbors(&self, entity: &EntityRef, relation: &RelationRef, direction: Direction) -> Result<Vec<EntityRef>, KgError> {
        let template = match direction {
            Direction::Outward => QueryTemplate::EntityOutward,
            Direction::Inward => QueryTemplate::EntityInward,
        };
        let mut ids = self.fetch(template, &entity.id, Some(relation.name()))?;
        ids.sort();
        ids.dedup();
        ids.into_iter().map(|id| self.entity(id)).collect()
    }

    fn label_of(&self, entity: &EntityRef) -> Result<String, KgError> {
        if let Some(l) = &entity.label {
            return Ok(l.clone());
        }
        Ok(self.entity(entity.id.clone())?.display_name().to_string())
    }

    fn resolve_entity(&self, name: &str) -> Result<Option<EntityRef>, KgError> {
        if name.is_empty() {
            return Ok(None);
        }
        if is_entity_id(name) {
            return self.entity(name.to_string()).map(Some);
        }
        Ok(self
            .resolve(name, ResolveMode::LabelToId)?
            .map(|id| EntityRef::labeled(id, name)))
    }
}
