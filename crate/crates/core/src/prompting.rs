//! Prompt construction for every model role, path rendering, and parsing of
//! model replies into scores, verdicts and answers.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::kg::Direction;
use crate::path::{ReasoningPath, RelationChain};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathRendering {
    #[default]
    Triples,
    Sequences,
    Sentences,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    TopicExtract,
    RelationPrune,
    EntityPrune,
    SufficiencyEval,
    AnswerGen,
    TogRReason,
    CotBaseline,
    IoBaseline,
}

impl PromptKind {
    pub const ALL: [PromptKind; 8] = [
        PromptKind::TopicExtract,
        PromptKind::RelationPrune,
        PromptKind::EntityPrune,
        PromptKind::SufficiencyEval,
        PromptKind::AnswerGen,
        PromptKind::TogRReason,
        PromptKind::CotBaseline,
        PromptKind::IoBaseline,
    ];
}

/// A candidate name with a normalized score in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub name: String,
    pub score: f64,
}

impl ScoredItem {
    pub fn new(name: impl Into<String>, score: f64) -> Self {
        Self { name: name.into(), score }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("relation chains cannot be rendered as triples")]
    UnsupportedRendering,
    #[error("no (name, score) pair could be parsed from the reply")]
    Unparsable,
    #[error("candidate list is empty")]
    NoCandidates,
}

// ---------------------------------------------------------------------------
// Path rendering

pub fn render_path(path: &ReasoningPath, rendering: PathRendering) -> String {
    if path.hops.is_empty() {
        return String::new();
    }
    match rendering {
        PathRendering::Triples => path
            .triples()
            .iter()
            .map(|t| {
                format!(
                    "({}, {}, {})",
                    t.subject.display_name(),
                    t.relation,
                    t.object.display_name()
                )
            })
            .collect::<Vec<_>>()
            .join(", "),
        PathRendering::Sequences => {
            let mut s = path.origin.display_name().to_string();
            for hop in &path.hops {
                let arrow = arrow(hop.direction);
                s.push_str(&format!(" {arrow} {} {arrow} {}", hop.relation, hop.entity.display_name()));
            }
            s
        }
        PathRendering::Sentences => {
            let mut from = path.origin.display_name();
            let mut sentences = Vec::with_capacity(path.hops.len());
            for hop in &path.hops {
                let to = hop.entity.display_name();
                // "capital of" reads as "The capital of X", not "The capital of of X".
                let rel = hop.relation.name();
                let rel = rel.strip_suffix(" of").unwrap_or(rel);
                sentences.push(match hop.direction {
                    Direction::Outward => format!("The {rel} of {from} is {to}."),
                    Direction::Inward => format!("{to} is the {rel} of {from}."),
                });
                from = to;
            }
            sentences.join(" ")
        }
    }
}

pub fn render_chain(chain: &RelationChain, rendering: PathRendering) -> Result<String, PromptError> {
    if rendering == PathRendering::Triples {
        return Err(PromptError::UnsupportedRendering);
    }
    if chain.relations.is_empty() {
        return Ok(String::new());
    }
    let names: Vec<&str> = chain.frontier.iter().map(|e| e.display_name()).collect();
    let out = match rendering {
        PathRendering::Sequences => {
            let mut s = chain.origin.display_name().to_string();
            for link in &chain.relations {
                s.push_str(&format!(" {} {}", arrow(link.direction), link.relation));
            }
            s.push_str(&format!(" → {{{}}}", names.join(", ")));
            s
        }
        _ => {
            let links: Vec<String> = chain
                .relations
                .iter()
                .map(|l| match l.direction {
                    Direction::Outward => l.relation.to_string(),
                    Direction::Inward => format!("{} (inverse)", l.relation),
                })
                .collect();
            let end = if names.is_empty() { "nothing".to_string() } else { names.join(", ") };
            format!(
                "From {}, following {} leads to {end}.",
                chain.origin.display_name(),
                links.join(" then ")
            )
        }
    };
    Ok(out)
}

fn arrow(direction: Direction) -> &'static str {
    match direction {
        Direction::Outward => "→",
        Direction::Inward => "←",
    }
}

/// Render several paths, one per line, skipping empty renderings.
pub fn render_paths<'a>(
    paths: impl IntoIterator<Item = &'a ReasoningPath>,
    rendering: PathRendering,
) -> String {
    paths
        .into_iter()
        .map(|p| render_path(p, rendering))
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_chains<'a>(
    chains: impl IntoIterator<Item = &'a RelationChain>,
    rendering: PathRendering,
) -> Result<String, PromptError> {
    let mut lines = Vec::new();
    for c in chains {
        let s = render_chain(c, rendering)?;
        if !s.is_empty() {
            lines.push(s);
        }
    }
    Ok(lines.join("\n"))
}

// ---------------------------------------------------------------------------
// Exemplars

/// In-context exemplar blocks, one per prompt kind. Blocks are plain text with
/// exemplars separated by blank lines.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub topic_extract: String,
    pub relation_prune: String,
    pub entity_prune: String,
    pub sufficiency: String,
    pub answer_gen: String,
    pub togr_reason: String,
    pub cot: String,
    pub io: String,
    /// Maximum exemplars taken from each block for the search-role prompts.
    pub shots: usize,
}

impl Default for ExemplarSet {
    fn default() -> Self {
        Self {
            topic_extract: include_str!("../assets/prompts/topic_extract.txt").into(),
            relation_prune: include_str!("../assets/prompts/relation_prune.txt").into(),
            entity_prune: include_str!("../assets/prompts/entity_prune.txt").into(),
            sufficiency: include_str!("../assets/prompts/sufficiency.txt").into(),
            answer_gen: include_str!("../assets/prompts/answer_gen.txt").into(),
            togr_reason: include_str!("../assets/prompts/togr_reason.txt").into(),
            cot: include_str!("../assets/prompts/cot.txt").into(),
            io: include_str!("../assets/prompts/io.txt").into(),
            shots: 5,
        }
    }
}

impl ExemplarSet {
    /// File stem of the asset backing each kind.
    pub fn asset_name(kind: PromptKind) -> &'static str {
        match kind {
            PromptKind::TopicExtract => "topic_extract",
            PromptKind::RelationPrune => "relation_prune",
            PromptKind::EntityPrune => "entity_prune",
            PromptKind::SufficiencyEval => "sufficiency",
            PromptKind::AnswerGen => "answer_gen",
            PromptKind::TogRReason => "togr_reason",
            PromptKind::CotBaseline => "cot",
            PromptKind::IoBaseline => "io",
        }
    }

    pub fn block(&self, kind: PromptKind) -> &str {
        match kind {
            PromptKind::TopicExtract => &self.topic_extract,
            PromptKind::RelationPrune => &self.relation_prune,
            PromptKind::EntityPrune => &self.entity_prune,
            PromptKind::SufficiencyEval => &self.sufficiency,
            PromptKind::AnswerGen => &self.answer_gen,
            PromptKind::TogRReason => &self.togr_reason,
            PromptKind::CotBaseline => &self.cot,
            PromptKind::IoBaseline => &self.io,
        }
    }

    pub fn set_block(&mut self, kind: PromptKind, text: String) {
        let slot = match kind {
            PromptKind::TopicExtract => &mut self.topic_extract,
            PromptKind::RelationPrune => &mut self.relation_prune,
            PromptKind::EntityPrune => &mut self.entity_prune,
            PromptKind::SufficiencyEval => &mut self.sufficiency,
            PromptKind::AnswerGen => &mut self.answer_gen,
            PromptKind::TogRReason => &mut self.togr_reason,
            PromptKind::CotBaseline => &mut self.cot,
            PromptKind::IoBaseline => &mut self.io,
        };
        *slot = text;
    }

    fn shots_for(&self, kind: PromptKind) -> String {
        let block = self.block(kind).trim();
        let limit = match kind {
            PromptKind::CotBaseline | PromptKind::IoBaseline => usize::MAX,
            _ => self.shots,
        };
        block
            .split("\n\n")
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .take(limit)
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

// ---------------------------------------------------------------------------
// Prompt construction

pub const RELATION_PRUNE_HEADER: &str = "Please retrieve {k} relations (separated by semicolon) that contribute to the question and rate their contribution on a scale from 0 to 1 (the sum of the scores of {k} relations is 1).";
pub const ENTITY_PRUNE_HEADER: &str = "Please score the entities' contribution to the question on a scale from 0 to 1 (the sum of the scores of all entities is 1).";
pub const SUFFICIENCY_HEADER: &str = "Given a question and the associated retrieved knowledge graph triples (entity, relation, entity), you are asked to answer whether it's sufficient for you to answer the question with these triples and your knowledge (Yes or No).";
pub const ANSWER_GEN_HEADER: &str = "Given a question and the associated retrieved knowledge graph triples (entity, relation, entity), you are asked to answer the question with these triples and your own knowledge.";
pub const TOGR_REASON_HEADER: &str = "Please answer the question using Topic Entity,  Relations Chains and their Candidate Entities that contribute to the question, you are asked to answer whether it's sufficient for you to answer the question with these triples and your knowledge (Yes or No).";
pub const TOPIC_EXTRACT_HEADER: &str = "Please extract the topic entities (separated by semicolon) mentioned in the question and rate how central each one is to answering it on a scale from 0 to 1 (the sum of the scores of all topic entities is 1).";

/// The variable part of each prompt kind.
#[derive(Clone, Debug, PartialEq)]
pub enum PromptSpec<'a> {
    TopicExtract,
    RelationPrune {
        k: usize,
        topic_entity: &'a str,
        relations: &'a [String],
    },
    EntityPrune {
        relation: &'a str,
        entities: &'a [String],
    },
    SufficiencyEval { knowledge: &'a str },
    AnswerGen { knowledge: &'a str },
    TogRReason { chains: &'a str },
    CotBaseline,
    IoBaseline,
}

impl PromptSpec<'_> {
    pub fn kind(&self) -> PromptKind {
        match self {
            PromptSpec::TopicExtract => PromptKind::TopicExtract,
            PromptSpec::RelationPrune { .. } => PromptKind::RelationPrune,
            PromptSpec::EntityPrune { .. } => PromptKind::EntityPrune,
            PromptSpec::SufficiencyEval { .. } => PromptKind::SufficiencyEval,
            PromptSpec::AnswerGen { .. } => PromptKind::AnswerGen,
            PromptSpec::TogRReason { .. } => PromptKind::TogRReason,
            PromptSpec::CotBaseline => PromptKind::CotBaseline,
            PromptSpec::IoBaseline => PromptKind::IoBaseline,
        }
    }
}

/// Header, exemplar block, then the question and the kind's fields, ending at
/// the answer cue.
pub fn build_prompt(question: &str, spec: &PromptSpec<'_>, exemplars: &ExemplarSet) -> String {
    let kind = spec.kind();
    let header = match spec {
        PromptSpec::TopicExtract => Some(TOPIC_EXTRACT_HEADER.to_string()),
        PromptSpec::RelationPrune { k, .. } => {
            Some(RELATION_PRUNE_HEADER.replace("{k}", &k.to_string()))
        }
        PromptSpec::EntityPrune { .. } => Some(ENTITY_PRUNE_HEADER.to_string()),
        PromptSpec::SufficiencyEval { .. } => Some(SUFFICIENCY_HEADER.to_string()),
        PromptSpec::AnswerGen { .. } => Some(ANSWER_GEN_HEADER.to_string()),
        PromptSpec::TogRReason { .. } => Some(TOGR_REASON_HEADER.to_string()),
        PromptSpec::CotBaseline | PromptSpec::IoBaseline => None,
    };
    let fields = match spec {
        PromptSpec::TopicExtract | PromptSpec::CotBaseline | PromptSpec::IoBaseline => {
            "A:".to_string()
        }
        PromptSpec::RelationPrune { topic_entity, relations, .. } => format!(
            "Topic Entity: {topic_entity}\nRelations: {}\nA:",
            relations.join("; ")
        ),
        PromptSpec::EntityPrune { relation, entities } => {
            format!("Relation: {relation}\nEntites: {}\nScore:", entities.join("; "))
        }
        PromptSpec::SufficiencyEval { knowledge } | PromptSpec::AnswerGen { knowledge } => {
            format!("Knowledge triples: {knowledge}\nA:")
        }
        PromptSpec::TogRReason { chains } => format!(
            "Topic Entity, with relations chains, and their candidate entities: {chains}\nA:"
        ),
    };
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h);
        out.push_str("\n\n");
    }
    let shots = exemplars.shots_for(kind);
    if !shots.is_empty() {
        out.push_str(&shots);
        out.push_str("\n\n");
    }
    out.push_str("Q: ");
    out.push_str(question);
    out.push('\n');
    out.push_str(&fields);
    out
}

/// One candidate set inside a joint (all-sets-at-once) prune prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct JointSet<'a> {
    /// Topic entity for relation sets, current relation for entity sets.
    pub anchor: &'a str,
    pub candidates: &'a [String],
}

/// Joint prune prompt scoring every candidate set in one request.
pub fn build_joint_prune_prompt(
    question: &str,
    relations: bool,
    k: usize,
    sets: &[JointSet<'_>],
) -> String {
    let mut out = if relations {
        format!("Please retrieve {k} relations (separated by semicolon) from each numbered set below that contribute to the question and rate their contribution on a scale from 0 to 1 (the sum of the scores within each set is 1).")
    } else {
        String::from("Please score the entities' contribution to the question on a scale from 0 to 1 for each numbered set below (the sum of the scores within each set is 1).")
    };
    out.push_str("\nReply with one line per set, for example: Set 1: name (Score: 0.6); name (Score: 0.4)\n\n");
    out.push_str("Q: ");
    out.push_str(question);
    for (i, set) in sets.iter().enumerate() {
        let (anchor_label, list_label) =
            if relations { ("Topic Entity", "Relations") } else { ("Relation", "Entites") };
        out.push_str(&format!(
            "\nSet {}:\n{anchor_label}: {}\n{list_label}: {}",
            i + 1,
            set.anchor,
            set.candidates.join("; ")
        ));
    }
    out.push_str("\nA:");
    out
}

/// Split a joint reply into per-set segments keyed by `Set <n>:` markers.
/// Missing sets come back as empty strings.
pub fn split_joint_reply(reply: &str, sets: usize) -> Vec<String> {
    let mut out = alloc::vec![String::new(); sets];
    let mut current: Option<usize> = None;
    for line in reply.lines() {
        let trimmed = line.trim_start();
        let marker = trimmed.get(..4).is_some_and(|p| p.eq_ignore_ascii_case("set "));
        if marker {
            let rest = &trimmed[4..];
            let digits = rest.chars().take_while(char::is_ascii_digit).count();
            if let Ok(n) = rest[..digits].parse::<usize>() {
                if let Some(body) = rest[digits..].trim_start().strip_prefix(':') {
                    current = (1..=sets).contains(&n).then(|| n - 1);
                    if let Some(i) = current {
                        out[i].push_str(body);
                        out[i].push('\n');
                    }
                    continue;
                }
            }
        }
        if let Some(i) = current {
            out[i].push_str(line);
            out[i].push('\n');
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Reply parsing

/// Parse a scored candidate list. Accepts `name (Score: x)`, `name: x` and
/// `name - x` entries separated by semicolons or newlines; a bare list of
/// numbers matching the candidate count is read positionally. Names are
/// matched to candidates case-insensitively; unknown names are dropped.
pub fn parse_scored_list(
    reply: &str,
    candidates: &[String],
    k: usize,
) -> Result<Vec<ScoredItem>, PromptError> {
    if candidates.is_empty() {
        return Err(PromptError::NoCandidates);
    }
    let mut found: Vec<(usize, f64)> = Vec::new();
    let mut any_pair = false;
    for segment in reply.split([';', '\n']) {
        let Some((name, score)) = parse_pair(segment) else { continue };
        any_pair = true;
        if let Some(idx) = match_candidate(&name, candidates) {
            if !found.iter().any(|(i, _)| *i == idx) {
                found.push((idx, score));
            }
        }
    }
    if !any_pair {
        let numbers = bare_numbers(reply);
        if numbers.len() == candidates.len() && !numbers.is_empty() {
            found = numbers.into_iter().enumerate().collect();
            any_pair = true;
        }
    }
    if !any_pair {
        return Err(PromptError::Unparsable);
    }
    let items = found
        .into_iter()
        .map(|(i, s)| (i, s.clamp(0.0, 1.0)))
        .collect::<Vec<_>>();
    Ok(top_k_normalized(items, candidates, k))
}

/// Sort by score (descending, candidate order on ties), keep `k`, and
/// renormalize to sum 1. An all-zero selection becomes uniform.
pub(crate) fn top_k_normalized(
    mut items: Vec<(usize, f64)>,
    candidates: &[String],
    k: usize,
) -> Vec<ScoredItem> {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    items.truncate(k);
    let sum: f64 = items.iter().map(|(_, s)| s).sum();
    let n = items.len() as f64;
    items
        .into_iter()
        .map(|(i, s)| {
            let score = if sum > 0.0 { s / sum } else { 1.0 / n };
            ScoredItem::new(candidates[i].clone(), score)
        })
        .collect()
}

fn parse_pair(segment: &str) -> Option<(String, f64)> {
    let seg = segment.trim();
    if seg.is_empty() {
        return None;
    }
    let lower = seg.to_lowercase();
    if let Some(pos) = lower.find("(score:") {
        let name = &seg[..pos];
        let rest = &seg[pos + "(score:".len()..];
        let num = leading_number(rest.trim_start())?;
        return Some((clean_name(name), num));
    }
    for sep in [": ", " - ", ":"] {
        if let Some(pos) = seg.rfind(sep) {
            let name = &seg[..pos];
            let rest = seg[pos + sep.len()..].trim();
            let rest = rest.trim_end_matches([')', '}', ']', '.', ',']);
            if let Ok(v) = rest.parse::<f64>() {
                if v.is_finite() && !clean_name(name).is_empty() {
                    return Some((clean_name(name), v));
                }
            }
        }
    }
    None
}

fn leading_number(s: &str) -> Option<f64> {
    let end = s
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || *c == '.' || *c == '-' || *c == '+' || *c == 'e' || *c == 'E'))
        .map_or(s.len(), |(i, _)| i);
    let v = s[..end].trim_end_matches('.').parse::<f64>().ok()?;
    v.is_finite().then_some(v)
}

fn bare_numbers(reply: &str) -> Vec<f64> {
    reply
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter_map(|t| {
            let t = t.trim().trim_end_matches('.');
            if t.is_empty() {
                return None;
            }
            t.parse::<f64>().ok().filter(|v| v.is_finite())
        })
        .collect()
}

fn clean_name(name: &str) -> String {
    let mut s = name.trim();
    // list markers such as "1." / "-" / "*"
    let digits = s.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 && s[digits..].starts_with('.') {
        s = s[digits + 1..].trim_start();
    }
    s = s.trim_start_matches(['-', '*', '•']).trim();
    s.trim_matches(|c: char| matches!(c, '{' | '}' | '"' | '\'' | '`' | '[' | ']') || c.is_whitespace())
        .to_string()
}

fn match_candidate(name: &str, candidates: &[String]) -> Option<usize> {
    let wanted = name.to_lowercase();
    if wanted.is_empty() {
        return None;
    }
    if let Some(i) = candidates.iter().position(|c| c.to_lowercase() == wanted) {
        return Some(i);
    }
    // Longest candidate contained in the reply name, then the shortest
    // candidate containing it.
    let contained = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_empty() && wanted.contains(&c.to_lowercase()))
        .max_by_key(|(i, c)| (c.len(), usize::MAX - i));
    if let Some((i, _)) = contained {
        return Some(i);
    }
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.to_lowercase().contains(&wanted))
        .min_by_key(|(i, c)| (c.len(), *i))
        .map(|(i, _)| i)
}

/// First standalone yes/no token decides; anything else is `No`.
pub fn parse_verdict(reply: &str) -> Verdict {
    for token in reply.split(|c: char| !c.is_alphanumeric()) {
        if token.eq_ignore_ascii_case("yes") {
            return Verdict::Yes;
        }
        if token.eq_ignore_ascii_case("no") {
            return Verdict::No;
        }
    }
    Verdict::No
}

/// Extract the answer text from a generation reply.
pub fn parse_answer(reply: &str) -> String {
    let mut text = reply.trim();
    // Models sometimes keep writing further exemplars.
    if let Some(pos) = text.find("\nQ:") {
        text = &text[..pos];
    }
    let text = text.trim();
    let text = text.strip_prefix("A:").map(str::trim).unwrap_or(text);
    let lower = text.to_ascii_lowercase();
    let answer = match lower.find("the answer is") {
        Some(pos) => {
            let rest = &text[pos + "the answer is".len()..];
            let rest = rest.trim_start_matches(|c: char| c == ':' || c.is_whitespace());
            rest.lines().next().unwrap_or("")
        }
        None => text,
    };
    let answer = answer.trim();
    let braced = answer
        .find('{')
        .and_then(|start| answer[start + 1..].find('}').map(|end| &answer[start + 1..start + 1 + end]));
    let answer = braced.unwrap_or(answer).trim_matches(|c| c == '{' || c == '}').trim();
    strip_terminal_period(answer).to_string()
}

/// Drop one sentence-final period, keeping abbreviations such as "D.C.".
fn strip_terminal_period(s: &str) -> &str {
    let Some(body) = s.strip_suffix('.') else { return s };
    let last = body.rsplit(char::is_whitespace).next().unwrap_or(body);
    let abbreviation = last.contains('.')
        || (last.chars().count() == 1 && last.chars().all(|c| c.is_uppercase()));
    if abbreviation {
        s
    } else {
        body.trim_end()
    }
}

/// Parse a topic-extraction reply into names with optional scores.
pub fn parse_topic_list(reply: &str) -> Vec<(String, Option<f64>)> {
    let mut out: Vec<(String, Option<f64>)> = Vec::new();
    let body = reply.trim();
    let body = body.strip_prefix("A:").unwrap_or(body);
    for segment in body.split([';', '\n']) {
        let (name, score) = match parse_pair(segment) {
            Some((n, s)) => (n, Some(s.clamp(0.0, 1.0))),
            None => (clean_name(segment), None),
        };
        if name.is_empty() || out.iter().any(|(n, _)| n.eq_ignore_ascii_case(&name)) {
            continue;
        }
        out.push((name, score));
    }
    out
}
