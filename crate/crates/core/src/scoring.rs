//! Pruning scorers and reasoner backends.
//!
//! A [`PruneScorer`] ranks one candidate set (relations or entities) and
//! returns at most `k` items whose scores sum to one. A [`Reasoner`] covers
//! the remaining model roles: topic extraction, the sufficiency check and
//! answer generation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::prompting::{
    build_joint_prune_prompt, build_prompt, parse_scored_list, parse_topic_list, parse_verdict,
    split_joint_reply, top_k_normalized, ExemplarSet, JointSet, PromptSpec, ScoredItem, Verdict,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneRole {
    Relation,
    Entity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneRequest<'a> {
    pub question: &'a str,
    pub role: PruneRole,
    /// Tail entity name for relation sets, the followed relation for entity sets.
    pub anchor: &'a str,
    /// Rendered path leading to the candidate set.
    pub context: &'a str,
    pub candidates: &'a [String],
    pub k: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scored {
    pub items: Vec<ScoredItem>,
    pub warnings: Vec<String>,
    /// Extra model requests spent on unparsable replies.
    pub retries: usize,
}

impl Scored {
    pub fn new(items: Vec<ScoredItem>) -> Self {
        Self { items, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoringError {
    #[error("scoring backend unavailable: {0}")]
    Unavailable(String),
    #[error("scoring configuration error: {0}")]
    Config(String),
    #[error("scoring protocol error: {0}")]
    Protocol(String),
}

pub trait PruneScorer {
    fn score_candidates(&self, request: &PruneRequest<'_>) -> Result<Scored, ScoringError>;

    /// Score several candidate sets in one backend request. The default
    /// scores each set separately.
    fn score_jointly(&self, requests: &[PruneRequest<'_>]) -> Result<Vec<Scored>, ScoringError> {
        requests.iter().map(|r| self.score_candidates(r)).collect()
    }

    /// Whether a call to this scorer is a language-model call for budget
    /// accounting. Lightweight scorers return false.
    fn is_model_call(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicCandidate {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl TopicCandidate {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), score: None }
    }

    pub fn scored(name: impl Into<String>, score: f64) -> Self {
        Self { name: name.into(), score: Some(score) }
    }
}

/// What the reasoner gets to look at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Evidence<'a> {
    /// Nothing: answer from the model's own knowledge.
    None,
    /// Rendered reasoning paths.
    Paths(&'a str),
    /// Rendered relation chains with their candidate entities.
    Chains(&'a str),
}

impl<'a> Evidence<'a> {
    pub fn text(&self) -> &'a str {
        match self {
            Evidence::None => "",
            Evidence::Paths(s) | Evidence::Chains(s) => s,
        }
    }
}

pub trait Reasoner {
    /// Topic entity names, optionally scored. Empty means no topic found.
    fn extract_topics(&self, question: &str) -> Result<Vec<TopicCandidate>, ScoringError>;
    fn judge_sufficiency(&self, question: &str, evidence: Evidence<'_>) -> Result<Verdict, ScoringError>;
    /// Raw generation reply; callers extract the answer.
    fn generate_answer(&self, question: &str, evidence: Evidence<'_>) -> Result<String, ScoringError>;
}

/// Uniform scores over the first `k` candidates.
pub fn uniform(candidates: &[String], k: usize) -> Vec<ScoredItem> {
    let n = k.min(candidates.len());
    candidates
        .iter()
        .take(n)
        .map(|c| ScoredItem::new(c.clone(), 1.0 / n as f64))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    Linear,
    Softmax,
}

/// Rank raw similarity values (descending, ties by candidate name), keep
/// the top `k`, and normalize. Linear normalization of an all-zero selection
/// falls back to uniform over the first `k` names in lexicographic order.
pub fn rank_and_normalize(
    raw: &[f64],
    candidates: &[String],
    k: usize,
    normalization: Normalization,
) -> Vec<ScoredItem> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then_with(|| candidates[a].cmp(&candidates[b])));
    order.truncate(k);
    match normalization {
        Normalization::Linear => {
            let sum: f64 = order.iter().map(|&i| raw[i].max(0.0)).sum();
            if sum <= 0.0 {
                let mut sorted: Vec<String> = candidates.to_vec();
                sorted.sort();
                return uniform(&sorted, k);
            }
            order
                .into_iter()
                .map(|i| ScoredItem::new(candidates[i].clone(), raw[i].max(0.0) / sum))
                .collect()
        }
        Normalization::Softmax => {
            let max = order.iter().map(|&i| raw[i]).fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = order.iter().map(|&i| libm::exp(raw[i] - max)).collect();
            let sum: f64 = exps.iter().sum();
            order
                .into_iter()
                .zip(exps)
                .map(|(i, e)| ScoredItem::new(candidates[i].clone(), e / sum))
                .collect()
        }
    }
}

// ---------------------------------------------------------------------------
// Lexical (BM25)

/// BM25 over candidate names, with the question as the query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LexicalScorer {
    pub k1: f64,
    pub b: f64,
}

impl Default for LexicalScorer {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

impl LexicalScorer {
    pub fn raw_scores(&self, question: &str, candidates: &[String]) -> Vec<f64> {
        let docs: Vec<Vec<String>> = candidates.iter().map(|c| tokenize(c)).collect();
        let n = docs.len() as f64;
        let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n.max(1.0);
        let mut query = tokenize(question);
        query.sort();
        query.dedup();
        docs.iter()
            .map(|doc| {
                let dl = doc.len() as f64;
                query
                    .iter()
                    .map(|term| {
                        let tf = doc.iter().filter(|t| *t == term).count() as f64;
                        if tf == 0.0 {
                            return 0.0;
                        }
                        let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
                        let idf = libm::log(1.0 + (n - df + 0.5) / (df + 0.5));
                        let norm = if avgdl > 0.0 { dl / avgdl } else { 1.0 };
                        idf * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * norm))
                    })
                    .sum()
            })
            .collect()
    }

    pub fn score(&self, question: &str, candidates: &[String], k: usize) -> Vec<ScoredItem> {
        if candidates.is_empty() {
            return Vec::new();
        }
        let raw = self.raw_scores(question, candidates);
        rank_and_normalize(&raw, candidates, k, Normalization::Linear)
    }
}

impl PruneScorer for LexicalScorer {
    fn score_candidates(&self, r: &PruneRequest<'_>) -> Result<Scored, ScoringError> {
        Ok(Scored::new(self.score(r.question, r.candidates, r.k)))
    }

    fn is_model_call(&self) -> bool {
        false
    }
}

// ---------------------------------------------------------------------------
// Embedding similarity

/// Name-to-vector table, loaded from `name<TAB>v1,v2,...` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VectorTable {
    vectors: BTreeMap<String, Vec<f64>>,
}

impl VectorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, vector: Vec<f64>) {
        self.vectors.insert(name.into(), vector);
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.vectors.get(name).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, ScoringError> {
        let mut table = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, values) = line
                .split_once('\t')
                .ok_or_else(|| ScoringError::Config(format!("vector line {}: missing tab", i + 1)))?;
            let vector = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ScoringError::Config(format!("vector line {}: bad number", i + 1)))?;
            table.insert(name, vector);
        }
        Ok(table)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Cosine similarity against externally supplied vectors, softmax-normalized
/// over the selected top `k`.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingScorer {
    pub vectors: VectorTable,
}

impl EmbeddingScorer {
    pub fn new(vectors: VectorTable) -> Self {
        Self { vectors }
    }

    pub fn similarities(&self, question: &str, candidates: &[String]) -> Result<Vec<f64>, ScoringError> {
        let missing = |name: &str| ScoringError::Config(format!("no vector for {name:?}"));
        let q = self.vectors.get(question).ok_or_else(|| missing(question))?;
        candidates
            .iter()
            .map(|c| self.vectors.get(c).map(|v| cosine(q, v)).ok_or_else(|| missing(c)))
            .collect()
    }

    pub fn score(&self, question: &str, candidates: &[String], k: usize) -> Result<Vec<ScoredItem>, ScoringError> {
        let sims = self.similarities(question, candidates)?;
        Ok(rank_and_normalize(&sims, candidates, k, Normalization::Softmax))
    }
}

impl PruneScorer for EmbeddingScorer {
    fn score_candidates(&self, r: &PruneRequest<'_>) -> Result<Scored, ScoringError> {
        self.score(r.question, r.candidates, r.k).map(Scored::new)
    }

    fn is_model_call(&self) -> bool {
        false
    }
}

// ---------------------------------------------------------------------------
// Language-model backed roles

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChatRequest<'a> {
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// A text-completion endpoint. Transport retries belong to implementations.
pub trait ChatModel {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, ScoringError>;
}

impl<M: ChatModel + ?Sized> ChatModel for &M {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, ScoringError> {
        (**self).complete(request)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub exploration_temperature: f64,
    pub reasoning_temperature: f64,
    pub max_tokens: u32,
    /// Re-asks after an unparsable scoring reply before falling back to uniform.
    pub parse_retries: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            exploration_temperature: 0.4,
            reasoning_temperature: 0.0,
            max_tokens: 256,
            parse_retries: 2,
        }
    }
}

pub struct LlmScorer<M> {
    pub model: M,
    pub exemplars: ExemplarSet,
    pub settings: ModelSettings,
}

impl<M: ChatModel> LlmScorer<M> {
    pub fn new(model: M, exemplars: ExemplarSet, settings: ModelSettings) -> Self {
        Self { model, exemplars, settings }
    }

    fn ask(&self, prompt: &str) -> Result<String, ScoringError> {
        self.model.complete(&ChatRequest {
            prompt,
            temperature: self.settings.exploration_temperature,
            max_tokens: self.settings.max_tokens,
        })
    }
}

impl<M: ChatModel> PruneScorer for LlmScorer<M> {
    fn score_candidates(&self, r: &PruneRequest<'_>) -> Result<Scored, ScoringError> {
        let spec = match r.role {
            PruneRole::Relation => PromptSpec::RelationPrune {
                k: r.k,
                topic_entity: r.anchor,
                relations: r.candidates,
            },
            PruneRole::Entity => PromptSpec::EntityPrune { relation: r.anchor, entities: r.candidates },
        };
        let prompt = build_prompt(r.question, &spec, &self.exemplars);
        let mut out = Scored::default();
        for attempt in 0..=self.settings.parse_retries {
            if attempt > 0 {
                out.retries += 1;
            }
            let reply = self.ask(&prompt)?;
            if let Ok(items) = parse_scored_list(&reply, r.candidates, r.k) {
                if !items.is_empty() {
                    out.items = items;
                    return Ok(out);
                }
            }
        }
        out.items = uniform(r.candidates, r.k);
        out.warnings.push(format!(
            "unparsable {:?} prune reply for {:?} after {} attempts; using uniform scores",
            r.role,
            r.anchor,
            self.settings.parse_retries + 1
        ));
        Ok(out)
    }

    fn score_jointly(&self, requests: &[PruneRequest<'_>]) -> Result<Vec<Scored>, ScoringError> {
        let Some(first) = requests.first() else { return Ok(Vec::new()) };
        let sets: Vec<JointSet<'_>> = requests
            .iter()
            .map(|r| JointSet { anchor: r.anchor, candidates: r.candidates })
            .collect();
        let prompt =
            build_joint_prune_prompt(first.question, first.role == PruneRole::Relation, first.k, &sets);
        let mut results: Vec<Option<Vec<ScoredItem>>> = alloc::vec![None; requests.len()];
        let mut retries = 0;
        for attempt in 0..=self.settings.parse_retries {
            if attempt > 0 {
                retries += 1;
            }
            let reply = self.ask(&prompt)?;
            let parts = split_joint_reply(&reply, requests.len());
            for ((slot, part), r) in results.iter_mut().zip(&parts).zip(requests) {
                if slot.is_none() {
                    if let Ok(items) = parse_scored_list(part, r.candidates, r.k) {
                        if !items.is_empty() {
                            *slot = Some(items);
                        }
                    }
                }
            }
            if results.iter().all(Option::is_some) {
                break;
            }
        }
        Ok(results
            .into_iter()
            .zip(requests)
            .enumerate()
            .map(|(i, (slot, r))| {
                let mut s = Scored { retries: if i == 0 { retries } else { 0 }, ..Scored::default() };
                match slot {
                    Some(items) => s.items = items,
                    None => {
                        s.items = uniform(r.candidates, r.k);
                        s.warnings.push(format!(
                            "unparsable joint prune reply for set {} ({:?}); using uniform scores",
                            i + 1,
                            r.anchor
                        ));
                    }
                }
                s
            })
            .collect())
    }
}

pub struct LlmReasoner<M> {
    pub model: M,
    pub exemplars: ExemplarSet,
    pub settings: ModelSettings,
}

impl<M: ChatModel> LlmReasoner<M> {
    pub fn new(model: M, exemplars: ExemplarSet, settings: ModelSettings) -> Self {
        Self { model, exemplars, settings }
    }

    fn ask(&self, question: &str, spec: &PromptSpec<'_>) -> Result<String, ScoringError> {
        let prompt = build_prompt(question, spec, &self.exemplars);
        self.model.complete(&ChatRequest {
            prompt: &prompt,
            temperature: self.settings.reasoning_temperature,
            max_tokens: self.settings.max_tokens,
        })
    }
}

impl<M: ChatModel> Reasoner for LlmReasoner<M> {
    fn extract_topics(&self, question: &str) -> Result<Vec<TopicCandidate>, ScoringError> {
        let reply = self.ask(question, &PromptSpec::TopicExtract)?;
        Ok(parse_topic_list(&reply)
            .into_iter()
            .map(|(name, score)| TopicCandidate { name, score })
            .collect())
    }

    fn judge_sufficiency(&self, question: &str, evidence: Evidence<'_>) -> Result<Verdict, ScoringError> {
        let spec = match evidence {
            Evidence::Chains(chains) => PromptSpec::TogRReason { chains },
            other => PromptSpec::SufficiencyEval { knowledge: other.text() },
        };
        Ok(parse_verdict(&self.ask(question, &spec)?))
    }

    fn generate_answer(&self, question: &str, evidence: Evidence<'_>) -> Result<String, ScoringError> {
        let spec = match evidence {
            Evidence::None => PromptSpec::IoBaseline,
            other => PromptSpec::AnswerGen { knowledge: other.text() },
        };
        self.ask(question, &spec)
    }
}

// ---------------------------------------------------------------------------
// Scripted backend

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    TopicExtract,
    RelationPrune,
    EntityPrune,
    JointRelationPrune,
    JointEntityPrune,
    Sufficiency,
    Generate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub kind: CallKind,
    pub question: String,
    /// Anchor(s) for prune calls, evidence text for reasoning calls.
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TopicRule {
    #[serde(default)]
    pub question: Option<String>,
    pub topics: Vec<TopicCandidate>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneRule {
    #[serde(default)]
    pub role: Option<PruneRole>,
    #[serde(default)]
    pub question: Option<String>,
    #[serde(default)]
    pub anchor: Option<String>,
    pub scores: Vec<ScoredItem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictRule {
    #[serde(default)]
    pub question: Option<String>,
    #[serde(default)]
    pub evidence_contains: Option<String>,
    /// 1-based index of the sufficiency call for this question.
    #[serde(default)]
    pub call: Option<usize>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerRule {
    #[serde(default)]
    pub question: Option<String>,
    #[serde(default)]
    pub evidence_contains: Option<String>,
    pub answer: String,
}

fn default_verdict() -> Verdict {
    Verdict::No
}

/// Canned replies for every role. Rules are tried in order; the first
/// match wins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub topics: Vec<TopicRule>,
    #[serde(default)]
    pub prune: Vec<PruneRule>,
    /// Per-name raw weights used when no prune rule matches. Names without a
    /// weight score zero. An empty table means uniform scoring.
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub verdicts: Vec<VerdictRule>,
    #[serde(default = "default_verdict")]
    pub default_verdict: Verdict,
    #[serde(default)]
    pub answers: Vec<AnswerRule>,
    #[serde(default)]
    pub default_answer: String,
}

impl Default for Script {
    fn default() -> Self {
        Self {
            topics: Vec::new(),
            prune: Vec::new(),
            weights: BTreeMap::new(),
            verdicts: Vec::new(),
            default_verdict: Verdict::No,
            answers: Vec::new(),
            default_answer: String::new(),
        }
    }
}

/// Deterministic backend serving a [`Script`] and recording every call.
///
/// Scripted scores are filtered to the candidate set, cut to `k` and
/// renormalized. An all-zero selection is passed through unchanged so that
/// degenerate scoring can be exercised downstream.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    script: Script,
    calls: spin::Mutex<Vec<CallRecord>>,
}

fn matches_opt(rule: &Option<String>, value: &str) -> bool {
    rule.as_deref().is_none_or(|r| r == value)
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        Self { script, calls: spin::Mutex::new(Vec::new()) }
    }

    pub fn script(&self) -> &Script {
        &self.script
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().clone()
    }

    pub fn clear_calls(&self) {
        self.calls.lock().clear();
    }

    fn record(&self, kind: CallKind, question: &str, detail: &str) {
        self.calls.lock().push(CallRecord {
            kind,
            question: question.to_string(),
            detail: detail.to_string(),
        });
    }

    fn prune_items(&self, r: &PruneRequest<'_>) -> Vec<ScoredItem> {
        let rule = self.script.prune.iter().find(|rule| {
            rule.role.is_none_or(|role| role == r.role)
                && matches_opt(&rule.question, r.question)
                && matches_opt(&rule.anchor, r.anchor)
        });
        let raw: Vec<(usize, f64)> = match rule {
            Some(rule) => {
                let mut seen = Vec::new();
                for item in &rule.scores {
                    if let Some(i) = r.candidates.iter().position(|c| *c == item.name) {
                        if !seen.iter().any(|(j, _)| *j == i) {
                            seen.push((i, item.score.clamp(0.0, 1.0)));
                        }
                    }
                }
                seen
            }
            None if !self.script.weights.is_empty() => r
                .candidates
                .iter()
                .enumerate()
                .map(|(i, c)| (i, self.script.weights.get(c).copied().unwrap_or(0.0).max(0.0)))
                .collect(),
            None => return uniform(r.candidates, r.k),
        };
        if raw.iter().all(|(_, s)| *s == 0.0) {
            let mut zeros = raw;
            zeros.truncate(r.k);
            return zeros
                .into_iter()
                .map(|(i, _)| ScoredItem::new(r.candidates[i].clone(), 0.0))
                .collect();
        }
        top_k_normalized(raw, r.candidates, r.k)
    }
}

impl PruneScorer for ScriptedBackend {
    fn score_candidates(&self, r: &PruneRequest<'_>) -> Result<Scored, ScoringError> {
        let kind = match r.role {
            PruneRole::Relation => CallKind::RelationPrune,
            PruneRole::Entity => CallKind::EntityPrune,
        };
        self.record(kind, r.question, r.anchor);
        Ok(Scored::new(self.prune_items(r)))
    }

    fn score_jointly(&self, requests: &[PruneRequest<'_>]) -> Result<Vec<Scored>, ScoringError> {
        let Some(first) = requests.first() else { return Ok(Vec::new()) };
        let kind = match first.role {
            PruneRole::Relation => CallKind::JointRelationPrune,
            PruneRole::Entity => CallKind::JointEntityPrune,
        };
        let anchors: Vec<&str> = requests.iter().map(|r| r.anchor).collect();
        self.record(kind, first.question, &anchors.join(" | "));
        Ok(requests.iter().map(|r| Scored::new(self.prune_items(r))).collect())
    }
}

impl Reasoner for ScriptedBackend {
    fn extract_topics(&self, question: &str) -> Result<Vec<TopicCandidate>, ScoringError> {
        self.record(CallKind::TopicExtract, question, "");
        Ok(self
            .script
            .topics
            .iter()
            .find(|r| matches_opt(&r.question, question))
            .map(|r| r.topics.clone())
            .unwrap_or_default())
    }

    fn judge_sufficiency(&self, question: &str, evidence: Evidence<'_>) -> Result<Verdict, ScoringError> {
        let text = evidence.text();
        self.record(CallKind::Sufficiency, question, text);
        let nth = self
            .calls
            .lock()
            .iter()
            .filter(|c| c.kind == CallKind::Sufficiency && c.question == question)
            .count();
        Ok(self
            .script
            .verdicts
            .iter()
            .find(|r| {
                matches_opt(&r.question, question)
                    && r.evidence_contains.as_deref().is_none_or(|s| text.contains(s))
                    && r.call.is_none_or(|c| c == nth)
            })
            .map_or(self.script.default_verdict, |r| r.verdict))
    }

    fn generate_answer(&self, question: &str, evidence: Evidence<'_>) -> Result<String, ScoringError> {
        let text = evidence.text();
        self.record(CallKind::Generate, question, text);
        Ok(self
            .script
            .answers
            .iter()
            .find(|r| {
                matches_opt(&r.question, question)
                    && r.evidence_contains.as_deref().is_none_or(|s| text.contains(s))
            })
            .map_or_else(|| self.script.default_answer.clone(), |r| r.answer.clone()))
    }
}
