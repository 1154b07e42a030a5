//! Beam search over the knowledge graph: ToG (entity-level paths) and ToG-R
//! (relation chains with random entity sampling).

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kg::{Direction, EntityRef, KgError, KgSource, RelationRef};
use crate::path::{ChainLink, Hop, ReasoningPath, RelationChain};
use crate::prompting::{
    parse_answer, render_chain, render_chains, render_path, render_paths, PathRendering, ScoredItem, Verdict,
};
use crate::scoring::{Evidence, PruneRequest, PruneRole, PruneScorer, Reasoner, ScoringError, TopicCandidate};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Tog,
    TogR,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneMode {
    /// One scorer call per candidate set.
    #[default]
    PerSet,
    /// One scorer call per prune step covering every set.
    Unified,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityPrune {
    #[default]
    Scored,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub width: usize,
    pub depth: usize,
    pub variant: Variant,
    pub rendering: PathRendering,
    pub prune_mode: PruneMode,
    pub entity_prune: EntityPrune,
    pub seed: u64,
    /// Upper bound on neighbors kept per candidate set.
    pub result_cap: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            width: 3,
            depth: 3,
            variant: Variant::Tog,
            rendering: PathRendering::Triples,
            prune_mode: PruneMode::PerSet,
            entity_prune: EntityPrune::Scored,
            seed: 0,
            result_cap: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("width must be at least 1")]
    ZeroWidth,
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error("result cap must be at least 1")]
    ZeroResultCap,
    #[error("random entity pruning goes with tog-r and tog-r requires it")]
    EntityPruneMismatch,
    #[error("relation chains cannot be rendered as triples")]
    ChainRendering,
}

impl SearchConfig {
    pub fn tog() -> Self {
        Self::default()
    }

    pub fn tog_r() -> Self {
        Self {
            variant: Variant::TogR,
            entity_prune: EntityPrune::Random,
            rendering: PathRendering::Sequences,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.width == 0 {
            return Err(ConfigError::ZeroWidth);
        }
        if self.depth == 0 {
            return Err(ConfigError::ZeroDepth);
        }
        if self.result_cap == 0 {
            return Err(ConfigError::ZeroResultCap);
        }
        if (self.entity_prune == EntityPrune::Random) != (self.variant == Variant::TogR) {
            return Err(ConfigError::EntityPruneMismatch);
        }
        if self.variant == Variant::TogR && self.rendering == PathRendering::Triples {
            return Err(ConfigError::ChainRendering);
        }
        Ok(())
    }

    /// Upper bound on [`CallLedger::total`] for one run.
    pub fn max_calls(&self, model_scorer: bool) -> usize {
        let (n, d) = (self.width, self.depth);
        let prune = match (model_scorer, self.variant, self.prune_mode) {
            (false, ..) => 0,
            (true, Variant::Tog, PruneMode::PerSet) => 2 * n,
            (true, Variant::Tog, PruneMode::Unified) => 2,
            (true, Variant::TogR, PruneMode::PerSet) => n,
            (true, Variant::TogR, PruneMode::Unified) => 1,
        };
        prune * d + d + 1
    }
}

/// Model calls made during a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLedger {
    pub topic_extract: usize,
    pub relation_prune: usize,
    pub entity_prune: usize,
    pub sufficiency: usize,
    pub generate: usize,
    /// Re-asks after unparsable scoring replies. Not part of the total.
    pub retries: usize,
}

impl CallLedger {
    /// Prune, sufficiency and generation calls. Topic extraction is a
    /// pre-processing step and is reported separately.
    pub fn total(&self) -> usize {
        self.relation_prune + self.entity_prune + self.sufficiency + self.generate
    }

    pub fn all_calls(&self) -> usize {
        self.total() + self.topic_extract
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The reasoner judged the evidence sufficient.
    Sufficient,
    /// Maximum depth reached; answered from the model's own knowledge.
    DepthExhausted,
    /// Every path dead-ended before the evidence was judged sufficient.
    SearchExhausted,
    /// No topic entity resolved in the graph.
    NoTopicEntity,
}

/// Beam snapshot. Serializes as a plain list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Beam {
    Paths(Vec<ReasoningPath>),
    Chains(Vec<RelationChain>),
}

impl Default for Beam {
    fn default() -> Self {
        Beam::Paths(Vec::new())
    }
}

impl Beam {
    pub fn len(&self) -> usize {
        match self {
            Beam::Paths(p) => p.len(),
            Beam::Chains(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scores(&self) -> Vec<f64> {
        match self {
            Beam::Paths(p) => p.iter().map(|p| p.score).collect(),
            Beam::Chains(c) => c.iter().map(|c| c.score).collect(),
        }
    }

    pub fn paths(&self) -> Option<&[ReasoningPath]> {
        match self {
            Beam::Paths(p) => Some(p),
            Beam::Chains(_) => None,
        }
    }

    pub fn chains(&self) -> Option<&[RelationChain]> {
        match self {
            Beam::Chains(c) => Some(c),
            Beam::Paths(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub answer: String,
    pub raw_answer: String,
    pub termination: Termination,
    /// Answered without graph evidence after the depth limit.
    pub fallback: bool,
    pub depth: usize,
    pub paths: Beam,
    pub ledger: CallLedger,
}

// ---------------------------------------------------------------------------
// Trace

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Relation,
    Entity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateOption {
    /// Name shown to the scorer.
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<ChainLink>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<EntityRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub step: Step,
    /// Index into the beam (relation step) or the pending list (entity step).
    pub parent: usize,
    pub anchor: String,
    pub options: Vec<CandidateOption>,
    /// Size of the raw result before the cap was applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_from: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Scorer,
    Singleton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetScores {
    pub step: Step,
    pub parent: usize,
    pub items: Vec<ScoredItem>,
    pub source: ScoreSource,
}

/// A beam member with a chosen relation whose entities are not yet known.
/// A missing link marks a stalled member carried through unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pending<T> {
    pub base: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<ChainLink>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PendingBeam {
    Paths(Vec<Pending<ReasoningPath>>),
    Chains(Vec<Pending<RelationChain>>),
}

impl Default for PendingBeam {
    fn default() -> Self {
        PendingBeam::Paths(Vec::new())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomPrune {
    /// Number of (chain, entity) pairs sampled from.
    pub population: usize,
    /// Sorted pair indices kept.
    pub sampled: Vec<usize>,
    pub beam: Vec<RelationChain>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DepthTrace {
    pub depth: usize,
    pub candidates: Vec<CandidateSet>,
    pub scores: Vec<SetScores>,
    pub pending: PendingBeam,
    pub beam: Beam,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_prune: Option<RandomPrune>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl DepthTrace {
    fn new(depth: usize) -> Self {
        Self { depth, ..Self::default() }
    }

    /// The beam the next depth starts from.
    pub fn next_beam(&self) -> Beam {
        match &self.random_prune {
            Some(rp) => Beam::Chains(rp.beam.clone()),
            None => self.beam.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicResolution {
    pub name: String,
    pub entity: Option<EntityRef>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InitTrace {
    pub topics: Vec<TopicCandidate>,
    pub resolved: Vec<TopicResolution>,
    pub beam: Beam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub question: String,
    pub config: SearchConfig,
    pub init: InitTrace,
    pub depths: Vec<DepthTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    pub ledger: CallLedger,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Trace {
    fn new(question: &str, config: &SearchConfig) -> Self {
        Self {
            run_id: None,
            question: question.to_string(),
            config: config.clone(),
            init: InitTrace::default(),
            depths: Vec::new(),
            outcome: None,
            ledger: CallLedger::default(),
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// A failed run together with everything recorded up to the failure.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{source}")]
pub struct RunError {
    pub source: EngineError,
    pub trace: Box<Trace>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub outcome: Outcome,
    pub trace: Trace,
}

// ---------------------------------------------------------------------------
// Selection helpers shared by the engine and trace replay

/// Scores closer than this compare as equal, so products that are equal up
/// to rounding fall through to the key order.
const TIE_RESOLUTION: f64 = 1e-10;

fn tie_class(score: f64) -> i64 {
    libm::round(score / TIE_RESOLUTION) as i64
}

struct Ranked<T> {
    item: T,
    score: f64,
    key: String,
}

/// Deduplicate by key (higher score wins), order by score then key, keep the
/// top `width`, renormalize.
fn rank<T>(items: Vec<Ranked<T>>, width: usize) -> Vec<(T, f64)> {
    let mut slots: Vec<Ranked<T>> = Vec::with_capacity(items.len());
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for r in items {
        match index.get(&r.key) {
            Some(&i) => {
                if r.score > slots[i].score {
                    slots[i] = r;
                }
            }
            None => {
                index.insert(r.key.clone(), slots.len());
                slots.push(r);
            }
        }
    }
    slots.sort_by(|a, b| tie_class(b.score).cmp(&tie_class(a.score)).then_with(|| a.key.cmp(&b.key)));
    slots.truncate(width);
    let sum: f64 = slots.iter().map(|r| r.score).sum();
    let n = slots.len() as f64;
    slots
        .into_iter()
        .map(|r| {
            let s = if sum > 0.0 { r.score / sum } else { 1.0 / n };
            (r.item, s)
        })
        .collect()
}

fn link_key(base: String, link: &ChainLink) -> String {
    let dir = match link.direction {
        Direction::Outward => '>',
        Direction::Inward => '<',
    };
    format!("{base}\u{1f}{dir}{}\u{1f}", link.relation.name())
}

fn find_set(sets: &[CandidateSet], step: Step, parent: usize) -> Option<&CandidateSet> {
    sets.iter().find(|s| s.step == step && s.parent == parent)
}

fn find_scores(scores: &[SetScores], step: Step, parent: usize) -> Option<&SetScores> {
    scores.iter().find(|s| s.step == step && s.parent == parent)
}

/// Option indices with positive weight. If nothing positive remains, use
/// uniform weights over the first `width` options.
fn child_weights(
    set: &CandidateSet,
    scores: Option<&SetScores>,
    width: usize,
    warnings: &mut Vec<String>,
) -> Vec<(usize, f64)> {
    if set.options.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<(usize, f64)> = Vec::new();
    for item in scores.map_or(&[][..], |s| &s.items) {
        if let Some(i) = set.options.iter().position(|o| o.name == item.name) {
            if item.score > 0.0 && !out.iter().any(|(j, _)| *j == i) {
                out.push((i, item.score));
            }
        }
    }
    if out.is_empty() {
        warnings.push(format!(
            "all {:?} candidates for {:?} scored zero; using uniform weights",
            set.step, set.anchor
        ));
        let n = width.min(set.options.len());
        out = (0..n).map(|i| (i, 1.0 / n as f64)).collect();
    }
    out
}

fn stalled_copy<T: Clone>(items: &[T], mark: impl Fn(&mut T)) -> Vec<T> {
    items
        .iter()
        .cloned()
        .map(|mut t| {
            mark(&mut t);
            t
        })
        .collect()
}

fn derive_path_pending(
    beam: &[ReasoningPath],
    sets: &[CandidateSet],
    scores: &[SetScores],
    width: usize,
    warnings: &mut Vec<String>,
) -> Vec<Pending<ReasoningPath>> {
    let mut ranked = Vec::new();
    for (i, p) in beam.iter().enumerate() {
        match find_set(sets, Step::Relation, i).filter(|s| !s.options.is_empty()) {
            None => {
                let mut base = p.clone();
                base.stalled = true;
                let key = base.identity();
                ranked.push(Ranked { item: Pending { base, link: None, score: p.score }, score: p.score, key });
            }
            Some(set) => {
                for (oi, w) in child_weights(set, find_scores(scores, Step::Relation, i), width, warnings) {
                    let Some(link) = set.options[oi].link.clone() else { continue };
                    let score = p.score * w;
                    let key = link_key(p.identity(), &link);
                    ranked.push(Ranked { item: Pending { base: p.clone(), link: Some(link), score }, score, key });
                }
            }
        }
    }
    rank(ranked, width)
        .into_iter()
        .map(|(mut p, s)| {
            p.score = s;
            p
        })
        .collect()
}

fn derive_path_beam(
    previous: &[ReasoningPath],
    pending: &[Pending<ReasoningPath>],
    sets: &[CandidateSet],
    scores: &[SetScores],
    width: usize,
    warnings: &mut Vec<String>,
) -> Vec<ReasoningPath> {
    let mut ranked = Vec::new();
    for (j, pd) in pending.iter().enumerate() {
        let Some(link) = &pd.link else {
            let mut p = pd.base.clone();
            p.score = pd.score;
            p.stalled = true;
            let key = p.identity();
            ranked.push(Ranked { item: p, score: pd.score, key });
            continue;
        };
        match find_set(sets, Step::Entity, j).filter(|s| !s.options.is_empty()) {
            None => warnings.push(format!(
                "no entities via {} from {}; path dropped",
                link.relation,
                pd.base.tail().display_name()
            )),
            Some(set) => {
                for (oi, w) in child_weights(set, find_scores(scores, Step::Entity, j), width, warnings) {
                    let Some(entity) = set.options[oi].entity.clone() else { continue };
                    let hop = Hop { relation: link.relation.clone(), direction: link.direction, entity };
                    let score = pd.score * w;
                    let child = pd.base.extended(hop, score);
                    let key = child.identity();
                    ranked.push(Ranked { item: child, score, key });
                }
            }
        }
    }
    if ranked.is_empty() {
        warnings.push("every path dead-ended; keeping the previous beam".to_string());
        return stalled_copy(previous, |p| p.stalled = true);
    }
    rank(ranked, width)
        .into_iter()
        .map(|(mut p, s)| {
            p.score = s;
            p
        })
        .collect()
}

fn derive_chain_pending(
    beam: &[RelationChain],
    sets: &[CandidateSet],
    scores: &[SetScores],
    width: usize,
    warnings: &mut Vec<String>,
) -> Vec<Pending<RelationChain>> {
    let mut ranked = Vec::new();
    for (i, c) in beam.iter().enumerate() {
        match find_set(sets, Step::Relation, i).filter(|s| !s.options.is_empty()) {
            None => {
                let mut base = c.clone();
                base.stalled = true;
                let key = base.identity();
                ranked.push(Ranked { item: Pending { base, link: None, score: c.score }, score: c.score, key });
            }
            Some(set) => {
                for (oi, w) in child_weights(set, find_scores(scores, Step::Relation, i), width, warnings) {
                    let Some(link) = set.options[oi].link.clone() else { continue };
                    let score = c.score * w;
                    let key = link_key(c.identity(), &link);
                    ranked.push(Ranked { item: Pending { base: c.clone(), link: Some(link), score }, score, key });
                }
            }
        }
    }
    rank(ranked, width)
        .into_iter()
        .map(|(mut p, s)| {
            p.score = s;
            p
        })
        .collect()
}

fn derive_chain_beam(
    previous: &[RelationChain],
    pending: &[Pending<RelationChain>],
    sets: &[CandidateSet],
    width: usize,
    warnings: &mut Vec<String>,
) -> Vec<RelationChain> {
    let mut ranked = Vec::new();
    for (j, pd) in pending.iter().enumerate() {
        let Some(link) = &pd.link else {
            let mut c = pd.base.clone();
            c.score = pd.score;
            c.stalled = true;
            let key = c.identity();
            ranked.push(Ranked { item: c, score: pd.score, key });
            continue;
        };
        match find_set(sets, Step::Entity, j).filter(|s| !s.options.is_empty()) {
            None => warnings.push(format!("no entities via {} from chain frontier; chain dropped", link.relation)),
            Some(set) => {
                let mut c = pd.base.clone();
                c.relations.push(link.clone());
                c.frontier = set.options.iter().filter_map(|o| o.entity.clone()).collect();
                c.score = pd.score;
                c.stalled = false;
                let key = c.identity();
                ranked.push(Ranked { item: c, score: pd.score, key });
            }
        }
    }
    if ranked.is_empty() {
        warnings.push("every chain dead-ended; keeping the previous beam".to_string());
        return stalled_copy(previous, |c| c.stalled = true);
    }
    rank(ranked, width)
        .into_iter()
        .map(|(mut c, s)| {
            c.score = s;
            c
        })
        .collect()
}

/// Number of (chain, frontier entity) pairs.
pub fn pair_population(beam: &[RelationChain]) -> usize {
    beam.iter().map(|c| c.frontier.len()).sum()
}

/// Uniformly sample `width` pair indices without replacement, sorted. Keeps
/// everything when the population is no larger than `width`.
pub fn sample_pairs(rng: &mut ChaCha8Rng, population: usize, width: usize) -> Vec<usize> {
    if population <= width {
        return (0..population).collect();
    }
    let mut picked = sample(rng, population, width).into_vec();
    picked.sort_unstable();
    picked
}

/// Keep only sampled (chain, entity) pairs, drop chains left empty and
/// renormalize.
pub fn apply_random_prune(beam: &[RelationChain], sampled: &[usize]) -> Vec<RelationChain> {
    let keep: BTreeSet<usize> = sampled.iter().copied().collect();
    let mut offset = 0;
    let mut out = Vec::new();
    for c in beam {
        let frontier: Vec<EntityRef> = c
            .frontier
            .iter()
            .enumerate()
            .filter(|(i, _)| keep.contains(&(offset + i)))
            .map(|(_, e)| e.clone())
            .collect();
        offset += c.frontier.len();
        if !frontier.is_empty() {
            let mut c = c.clone();
            c.frontier = frontier;
            out.push(c);
        }
    }
    let sum: f64 = out.iter().map(|c| c.score).sum();
    let n = out.len() as f64;
    for c in &mut out {
        c.score = if sum > 0.0 { c.score / sum } else { 1.0 / n };
    }
    out
}

/// Candidate names for incident relations. A name present in both
/// directions gets a " (reverse)" suffix on its inward form.
fn relation_options(pairs: &BTreeSet<(RelationRef, Direction)>) -> Vec<CandidateOption> {
    pairs
        .iter()
        .map(|(r, d)| {
            let both = pairs.contains(&(r.clone(), Direction::Outward)) && pairs.contains(&(r.clone(), Direction::Inward));
            let name = if both && *d == Direction::Inward {
                format!("{r} (reverse)")
            } else {
                r.name().to_string()
            };
            CandidateOption { name, link: Some(ChainLink { relation: r.clone(), direction: *d }), entity: None }
        })
        .collect()
}

/// Candidate names for entities; colliding display names get an id suffix.
fn entity_options(entities: Vec<EntityRef>) -> Vec<CandidateOption> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for e in &entities {
        *counts.entry(e.display_name().to_string()).or_default() += 1;
    }
    entities
        .into_iter()
        .map(|e| {
            let name = if counts[e.display_name()] > 1 {
                format!("{} [{}]", e.display_name(), e.id)
            } else {
                e.display_name().to_string()
            };
            CandidateOption { name, link: None, entity: Some(e) }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Engine

pub struct Engine<'a> {
    pub config: SearchConfig,
    kg: &'a dyn KgSource,
    scorer: &'a dyn PruneScorer,
    reasoner: &'a dyn Reasoner,
}

struct RunState {
    trace: Trace,
    rng: ChaCha8Rng,
}

impl<'a> Engine<'a> {
    pub fn new(
        config: SearchConfig,
        kg: &'a dyn KgSource,
        scorer: &'a dyn PruneScorer,
        reasoner: &'a dyn Reasoner,
    ) -> Self {
        Self { config, kg, scorer, reasoner }
    }

    pub fn run(&self, question: &str) -> Result<Run, RunError> {
        let mut st = RunState {
            trace: Trace::new(question, &self.config),
            rng: ChaCha8Rng::seed_from_u64(self.config.seed),
        };
        let result = self
            .config
            .validate()
            .map_err(EngineError::from)
            .and_then(|()| self.drive(question, &mut st));
        match result {
            Ok(outcome) => {
                st.trace.outcome = Some(outcome.clone());
                Ok(Run { outcome, trace: st.trace })
            }
            Err(source) => Err(RunError { source, trace: Box::new(st.trace) }),
        }
    }

    fn drive(&self, question: &str, st: &mut RunState) -> Result<Outcome, EngineError> {
        let topics = self.initialize(question, st)?;
        if topics.is_empty() {
            st.trace.warnings.push("no topic entity found in the graph; answering without it".to_string());
            let raw = self.generate(question, Evidence::None, st)?;
            return Ok(self.finish(raw, Termination::NoTopicEntity, false, 0, Beam::default(), st));
        }
        match self.config.variant {
            Variant::Tog => {
                let beam: Vec<ReasoningPath> =
                    topics.into_iter().map(|(e, s)| ReasoningPath::root(e, s)).collect();
                st.trace.init.beam = Beam::Paths(beam.clone());
                self.search_paths(question, beam, st)
            }
            Variant::TogR => {
                let beam: Vec<RelationChain> =
                    topics.into_iter().map(|(e, s)| RelationChain::root(e, s)).collect();
                st.trace.init.beam = Beam::Chains(beam.clone());
                self.search_chains(question, beam, st)
            }
        }
    }

    fn initialize(&self, question: &str, st: &mut RunState) -> Result<Vec<(EntityRef, f64)>, EngineError> {
        st.trace.ledger.topic_extract += 1;
        let topics = self.reasoner.extract_topics(question)?;
        st.trace.init.topics = topics.clone();
        let mut found: Vec<(EntityRef, Option<f64>)> = Vec::new();
        for t in &topics {
            let entity = self.kg.resolve_entity(&t.name)?;
            st.trace.init.resolved.push(TopicResolution { name: t.name.clone(), entity: entity.clone() });
            match entity {
                Some(e) if !found.iter().any(|(f, _)| *f == e) => found.push((e, t.score)),
                Some(_) => {}
                None => st.trace.warnings.push(format!("topic {:?} not found in the graph", t.name)),
            }
        }
        let scored = found.iter().all(|(_, s)| s.is_some_and(|v| v > 0.0));
        let ranked = found
            .into_iter()
            .map(|(e, s)| {
                let score = if scored { s.unwrap_or(1.0) } else { 1.0 };
                let key = e.id.clone();
                Ranked { item: e, score, key }
            })
            .collect();
        Ok(rank(ranked, self.config.width))
    }

    fn search_paths(&self, question: &str, mut beam: Vec<ReasoningPath>, st: &mut RunState) -> Result<Outcome, EngineError> {
        for depth in 1..=self.config.depth {
            let mut dt = DepthTrace::new(depth);
            let next = match self.path_step(question, &beam, &mut dt, st) {
                Ok(next) => next,
                Err(e) => {
                    st.trace.depths.push(dt);
                    return Err(e);
                }
            };
            let evidence = render_paths(&next, self.config.rendering);
            let verdict = self.judge(question, Evidence::Paths(&evidence), &mut dt, st);
            dt.verdict = Some(verdict);
            dt.beam = Beam::Paths(next.clone());
            st.trace.depths.push(dt);
            if verdict == Verdict::Yes {
                let raw = self.generate(question, Evidence::Paths(&evidence), st)?;
                return Ok(self.finish(raw, Termination::Sufficient, false, depth, Beam::Paths(next), st));
            }
            if next.iter().all(|p| p.stalled) {
                let raw = self.generate(question, Evidence::Paths(&evidence), st)?;
                return Ok(self.finish(raw, Termination::SearchExhausted, false, depth, Beam::Paths(next), st));
            }
            beam = next;
        }
        let raw = self.generate(question, Evidence::None, st)?;
        Ok(self.finish(raw, Termination::DepthExhausted, true, self.config.depth, Beam::Paths(beam), st))
    }

    fn path_step(
        &self,
        question: &str,
        beam: &[ReasoningPath],
        dt: &mut DepthTrace,
        st: &mut RunState,
    ) -> Result<Vec<ReasoningPath>, EngineError> {
        let width = self.config.width;
        let mut contexts = BTreeMap::new();
        for (i, p) in beam.iter().enumerate() {
            if p.stalled {
                continue;
            }
            let pairs: BTreeSet<_> = self.kg.relations_of(p.tail())?.into_iter().collect();
            if pairs.is_empty() {
                dt.warnings.push(format!("no relations from {}; path kept as stalled", p.tail().display_name()));
            }
            dt.candidates.push(CandidateSet {
                step: Step::Relation,
                parent: i,
                anchor: p.tail().display_name().to_string(),
                options: relation_options(&pairs),
                truncated_from: None,
            });
            contexts.insert(i, render_path(p, self.config.rendering));
        }
        self.score_step(question, Step::Relation, &contexts, dt, st)?;
        let pending = derive_path_pending(beam, &dt.candidates, &dt.scores, width, &mut dt.warnings);
        dt.pending = PendingBeam::Paths(pending.clone());

        let mut contexts = BTreeMap::new();
        for (j, pd) in pending.iter().enumerate() {
            let Some(link) = &pd.link else { continue };
            let mut found = self.kg.neighbors(pd.base.tail(), &link.relation, link.direction)?;
            let truncated_from = (found.len() > self.config.result_cap).then_some(found.len());
            found.truncate(self.config.result_cap);
            dt.candidates.push(CandidateSet {
                step: Step::Entity,
                parent: j,
                anchor: link.relation.name().to_string(),
                options: entity_options(found),
                truncated_from,
            });
            contexts.insert(j, render_path(&pd.base, self.config.rendering));
        }
        self.score_step(question, Step::Entity, &contexts, dt, st)?;
        Ok(derive_path_beam(beam, &pending, &dt.candidates, &dt.scores, width, &mut dt.warnings))
    }

    fn search_chains(&self, question: &str, mut beam: Vec<RelationChain>, st: &mut RunState) -> Result<Outcome, EngineError> {
        for depth in 1..=self.config.depth {
            let mut dt = DepthTrace::new(depth);
            let next = match self.chain_step(question, &beam, &mut dt, st) {
                Ok(next) => next,
                Err(e) => {
                    st.trace.depths.push(dt);
                    return Err(e);
                }
            };
            let evidence = render_chains(&next, self.config.rendering).map_err(|_| ConfigError::ChainRendering)?;
            let verdict = self.judge(question, Evidence::Chains(&evidence), &mut dt, st);
            dt.verdict = Some(verdict);
            dt.beam = Beam::Chains(next.clone());
            if verdict == Verdict::Yes {
                st.trace.depths.push(dt);
                let raw = self.generate(question, Evidence::Chains(&evidence), st)?;
                return Ok(self.finish(raw, Termination::Sufficient, false, depth, Beam::Chains(next), st));
            }
            if next.iter().all(|c| c.stalled) {
                st.trace.depths.push(dt);
                let raw = self.generate(question, Evidence::Chains(&evidence), st)?;
                return Ok(self.finish(raw, Termination::SearchExhausted, false, depth, Beam::Chains(next), st));
            }
            beam = if depth < self.config.depth {
                let population = pair_population(&next);
                let sampled = sample_pairs(&mut st.rng, population, self.config.width);
                let pruned = apply_random_prune(&next, &sampled);
                dt.random_prune = Some(RandomPrune { population, sampled, beam: pruned.clone() });
                pruned
            } else {
                next
            };
            st.trace.depths.push(dt);
        }
        let raw = self.generate(question, Evidence::None, st)?;
        Ok(self.finish(raw, Termination::DepthExhausted, true, self.config.depth, Beam::Chains(beam), st))
    }

    fn chain_step(
        &self,
        question: &str,
        beam: &[RelationChain],
        dt: &mut DepthTrace,
        st: &mut RunState,
    ) -> Result<Vec<RelationChain>, EngineError> {
        let width = self.config.width;
        let mut contexts = BTreeMap::new();
        for (i, c) in beam.iter().enumerate() {
            if c.stalled {
                continue;
            }
            let mut pairs = BTreeSet::new();
            for e in &c.frontier {
                pairs.extend(self.kg.relations_of(e)?);
            }
            if pairs.is_empty() {
                dt.warnings.push(format!("no relations from the frontier of chain {i}; chain kept as stalled"));
            }
            dt.candidates.push(CandidateSet {
                step: Step::Relation,
                parent: i,
                anchor: c.origin.display_name().to_string(),
                options: relation_options(&pairs),
                truncated_from: None,
            });
            contexts.insert(i, render_chain(c, self.config.rendering).unwrap_or_default());
        }
        self.score_step(question, Step::Relation, &contexts, dt, st)?;
        let pending = derive_chain_pending(beam, &dt.candidates, &dt.scores, width, &mut dt.warnings);
        dt.pending = PendingBeam::Chains(pending.clone());

        for (j, pd) in pending.iter().enumerate() {
            let Some(link) = &pd.link else { continue };
            let mut frontier = BTreeSet::new();
            for e in &pd.base.frontier {
                frontier.extend(self.kg.neighbors(e, &link.relation, link.direction)?);
            }
            let mut found: Vec<EntityRef> = frontier.into_iter().collect();
            let truncated_from = (found.len() > self.config.result_cap).then_some(found.len());
            found.truncate(self.config.result_cap);
            dt.candidates.push(CandidateSet {
                step: Step::Entity,
                parent: j,
                anchor: link.relation.name().to_string(),
                options: entity_options(found),
                truncated_from,
            });
        }
        Ok(derive_chain_beam(beam, &pending, &dt.candidates, width, &mut dt.warnings))
    }

    /// Score the candidate sets of one step. Entity sets with a single
    /// option score 1 without a scorer call.
    fn score_step(
        &self,
        question: &str,
        step: Step,
        contexts: &BTreeMap<usize, String>,
        dt: &mut DepthTrace,
        st: &mut RunState,
    ) -> Result<(), EngineError> {
        let mut todo: Vec<(usize, String, Vec<String>)> = Vec::new();
        for set in dt.candidates.iter().filter(|s| s.step == step && !s.options.is_empty()) {
            if step == Step::Entity && set.options.len() == 1 {
                dt.scores.push(SetScores {
                    step,
                    parent: set.parent,
                    items: vec![ScoredItem::new(set.options[0].name.clone(), 1.0)],
                    source: ScoreSource::Singleton,
                });
                continue;
            }
            let names = set.options.iter().map(|o| o.name.clone()).collect();
            todo.push((set.parent, set.anchor.clone(), names));
        }
        if todo.is_empty() {
            return Ok(());
        }
        let role = match step {
            Step::Relation => PruneRole::Relation,
            Step::Entity => PruneRole::Entity,
        };
        let requests: Vec<PruneRequest<'_>> = todo
            .iter()
            .map(|(parent, anchor, names)| PruneRequest {
                question,
                role,
                anchor,
                context: contexts.get(parent).map_or("", String::as_str),
                candidates: names,
                k: self.config.width,
            })
            .collect();
        let counted = self.scorer.is_model_call();
        let results = match self.config.prune_mode {
            PruneMode::PerSet => {
                let mut out = Vec::with_capacity(requests.len());
                for r in &requests {
                    self.count_prune(step, counted, st);
                    out.push(self.scorer.score_candidates(r)?);
                }
                out
            }
            PruneMode::Unified => {
                self.count_prune(step, counted, st);
                self.scorer.score_jointly(&requests)?
            }
        };
        if results.len() != todo.len() {
            return Err(ScoringError::Protocol(format!(
                "expected {} scored sets, got {}",
                todo.len(),
                results.len()
            ))
            .into());
        }
        for ((parent, ..), scored) in todo.iter().zip(results) {
            st.trace.ledger.retries += scored.retries;
            dt.warnings.extend(scored.warnings);
            dt.scores.push(SetScores { step, parent: *parent, items: scored.items, source: ScoreSource::Scorer });
        }
        Ok(())
    }

    fn count_prune(&self, step: Step, counted: bool, st: &mut RunState) {
        if counted {
            match step {
                Step::Relation => st.trace.ledger.relation_prune += 1,
                Step::Entity => st.trace.ledger.entity_prune += 1,
            }
        }
    }

    /// A failed sufficiency call counts as `No` and the search continues.
    fn judge(&self, question: &str, evidence: Evidence<'_>, dt: &mut DepthTrace, st: &mut RunState) -> Verdict {
        st.trace.ledger.sufficiency += 1;
        match self.reasoner.judge_sufficiency(question, evidence) {
            Ok(v) => v,
            Err(e) => {
                dt.warnings.push(format!("sufficiency check failed ({e}); treating as No"));
                Verdict::No
            }
        }
    }

    fn generate(&self, question: &str, evidence: Evidence<'_>, st: &mut RunState) -> Result<String, EngineError> {
        st.trace.ledger.generate += 1;
        Ok(self.reasoner.generate_answer(question, evidence)?)
    }

    fn finish(
        &self,
        raw: String,
        termination: Termination,
        fallback: bool,
        depth: usize,
        paths: Beam,
        st: &RunState,
    ) -> Outcome {
        Outcome {
            answer: parse_answer(&raw),
            raw_answer: raw,
            termination,
            fallback,
            depth,
            paths,
            ledger: st.trace.ledger,
        }
    }
}

/// Run one question end to end.
pub fn run(
    question: &str,
    config: &SearchConfig,
    scorer: &dyn PruneScorer,
    reasoner: &dyn Reasoner,
    kg: &dyn KgSource,
) -> Result<Run, RunError> {
    Engine::new(config.clone(), kg, scorer, reasoner).run(question)
}

// ---------------------------------------------------------------------------
// Replay

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("depth {depth}: {message}")]
pub struct ReplayError {
    pub depth: usize,
    pub message: String,
}

const REPLAY_TOLERANCE: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REPLAY_TOLERANCE
}

fn same_paths(a: &[ReasoningPath], b: &[ReasoningPath]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| x.identity() == y.identity() && x.stalled == y.stalled && close(x.score, y.score))
}

fn same_chains(a: &[RelationChain], b: &[RelationChain]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.identity() == y.identity() && x.frontier == y.frontier && x.stalled == y.stalled && close(x.score, y.score)
        })
}

fn same_pending<T>(a: &[Pending<T>], b: &[Pending<T>], id: impl Fn(&T) -> String) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| id(&x.base) == id(&y.base) && x.link == y.link && close(x.score, y.score))
}

impl Trace {
    /// Re-derive every recorded beam from the one before it and the recorded
    /// candidate sets, scores and samples.
    pub fn replay(&self) -> Result<(), ReplayError> {
        let width = self.config.width;
        let mut scratch = Vec::new();
        let mut previous = self.init.beam.clone();
        for dt in self.depths.iter().take_while(|d| d.verdict.is_some()) {
            let fail = |message: &str| ReplayError { depth: dt.depth, message: message.to_string() };
            match (&previous, &dt.pending, &dt.beam) {
                (Beam::Paths(prev), PendingBeam::Paths(rec_pending), Beam::Paths(rec_beam)) => {
                    let pending = derive_path_pending(prev, &dt.candidates, &dt.scores, width, &mut scratch);
                    if !same_pending(&pending, rec_pending, ReasoningPath::identity) {
                        return Err(fail("pending paths differ"));
                    }
                    let beam = derive_path_beam(prev, &pending, &dt.candidates, &dt.scores, width, &mut scratch);
                    if !same_paths(&beam, rec_beam) {
                        return Err(fail("beam differs"));
                    }
                }
                (Beam::Chains(prev), PendingBeam::Chains(rec_pending), Beam::Chains(rec_beam)) => {
                    let pending = derive_chain_pending(prev, &dt.candidates, &dt.scores, width, &mut scratch);
                    if !same_pending(&pending, rec_pending, RelationChain::identity) {
                        return Err(fail("pending chains differ"));
                    }
                    let beam = derive_chain_beam(prev, &pending, &dt.candidates, width, &mut scratch);
                    if !same_chains(&beam, rec_beam) {
                        return Err(fail("beam differs"));
                    }
                    if let Some(rp) = &dt.random_prune {
                        if rp.population != pair_population(&beam) {
                            return Err(fail("random prune population differs"));
                        }
                        if !same_chains(&apply_random_prune(&beam, &rp.sampled), &rp.beam) {
                            return Err(fail("random prune result differs"));
                        }
                    }
                }
                // An empty list deserializes as paths.
                (prev, pending, beam)
                    if prev.is_empty() || matches!(pending, PendingBeam::Paths(p) if p.is_empty()) || beam.is_empty() =>
                {
                    if !beam.is_empty() {
                        return Err(fail("beam without a predecessor"));
                    }
                }
                _ => return Err(fail("beam kinds disagree")),
            }
            previous = dt.next_beam();
        }
        Ok(())
    }
}
