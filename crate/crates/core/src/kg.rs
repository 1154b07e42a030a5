//! Knowledge-graph atoms, the in-memory triple store and its correction log.
//!
//! The store keeps two adjacency indexes (subject-side and object-side) so
//! that relation search works in both directions. Every query returns results
//! in a fixed order so that traces built on top of it are reproducible.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Placeholder shown for entities the graph has no name for.
pub const UNNAMED_ENTITY: &str = "UnName_Entity";

/// Renders the placeholder label for an unlabeled entity id.
pub fn unnamed_label(id: &str) -> String {
    format!("{UNNAMED_ENTITY}({id})")
}

/// An entity node. Identity is the id alone; the label is display data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntityRef {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl EntityRef {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), label: None }
    }

    pub fn labeled(id: impl Into<String>, label: impl Into<String>) -> Self {
        Self { id: id.into(), label: Some(label.into()) }
    }

    /// Label if present, otherwise the raw id.
    pub fn display_name(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.id)
    }
}

impl PartialEq for EntityRef {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for EntityRef {}

impl PartialOrd for EntityRef {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EntityRef {
    fn cmp(&self, other: &Self) -> Ordering {
        self.id.cmp(&other.id)
    }
}

impl core::hash::Hash for EntityRef {
    fn hash<H: core::hash::Hasher>(&self, state: &mut H) {
        self.id.hash(state);
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationRef(String);

impl RelationRef {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RelationRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Side of a triple the query entity sits on. `Outward`: the entity is the
/// subject. `Inward`: the entity is the object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Outward,
    Inward,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityRef,
    pub relation: RelationRef,
    pub object: EntityRef,
}

impl Triple {
    pub fn new(subject: EntityRef, relation: RelationRef, object: EntityRef) -> Self {
        Self { subject, relation, object }
    }

    fn key(&self) -> TripleKey {
        (
            self.subject.id.clone(),
            self.relation.name().to_string(),
            self.object.id.clone(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionAction {
    ReplaceObject { new: EntityRef },
    Delete,
}

/// One entry of the append-only correction log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub target: Triple,
    pub action: CorrectionAction,
    #[serde(default)]
    pub note: String,
    /// Assigned by the store when the correction is accepted.
    #[serde(default)]
    pub sequence: u64,
}

impl Correction {
    pub fn replace_object(target: Triple, new: EntityRef, note: impl Into<String>) -> Self {
        Self {
            target,
            action: CorrectionAction::ReplaceObject { new },
            note: note.into(),
            sequence: 0,
        }
    }

    pub fn delete(target: Triple, note: impl Into<String>) -> Self {
        Self { target, action: CorrectionAction::Delete, note: note.into(), sequence: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KgError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("correction rejected: triple ({subject}, {relation}, {object}) is not in the graph")]
    CorrectionRejected {
        subject: String,
        relation: String,
        object: String,
    },
    #[error("knowledge graph backend unavailable: {0}")]
    Unavailable(String),
    #[error("knowledge graph protocol error: {0}")]
    Protocol(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// The query surface the search engine needs. Implemented by the in-memory
/// store here and by remote endpoint clients elsewhere.
pub trait KgSource {
    /// Relations incident to `entity`, ordered by (name, direction).
    fn relations_of(&self, entity: &EntityRef) -> Result<Vec<(RelationRef, Direction)>, KgError>;

    /// Entities on the opposite side of matching triples, ordered by id.
    fn neighbors(
        &self,
        entity: &EntityRef,
        relation: &RelationRef,
        direction: Direction,
    ) -> Result<Vec<EntityRef>, KgError>;

    fn label_of(&self, entity: &EntityRef) -> Result<String, KgError>;

    /// Map a surface name (label or id) to a graph entity.
    fn resolve_entity(&self, name: &str) -> Result<Option<EntityRef>, KgError>;
}

type TripleKey = (String, String, String);
type Adjacency = BTreeMap<String, BTreeMap<String, BTreeSet<String>>>;

/// In-memory triple store with direction-aware adjacency.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeGraph {
    triples: BTreeSet<TripleKey>,
    outgoing: Adjacency,
    incoming: Adjacency,
    labels: BTreeMap<String, String>,
    corrections: Vec<Correction>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub triples: usize,
    pub entities: usize,
    pub relations: usize,
    pub corrections: usize,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut kg = Self::new();
        for t in triples {
            kg.insert(t);
        }
        kg
    }

    /// Parse the tab-separated triple format: `subject-id, relation,
    /// object-id[, subject-label[, object-label]]`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, KgError> {
        let mut kg = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(3..=5).contains(&fields.len()) {
                return Err(KgError::Parse {
                    line: idx + 1,
                    message: format!("expected 3 to 5 tab-separated fields, found {}", fields.len()),
                });
            }
            let (s, r, o) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
            if s.is_empty() || r.is_empty() || o.is_empty() {
                return Err(KgError::Parse {
                    line: idx + 1,
                    message: "subject, relation and object must be non-empty".into(),
                });
            }
            let label = |i: usize| {
                fields
                    .get(i)
                    .map(|l| l.trim())
                    .filter(|l| !l.is_empty())
                    .map(String::from)
            };
            let subject = EntityRef { id: s.into(), label: label(3) };
            let object = EntityRef { id: o.into(), label: label(4) };
            kg.insert(Triple::new(subject, RelationRef::new(r), object));
        }
        Ok(kg)
    }

    /// Serialize back to the tab-separated format, one triple per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (s, r, o) in &self.triples {
            out.push_str(s);
            out.push('\t');
            out.push_str(r);
            out.push('\t');
            out.push_str(o);
            let sl = self.labels.get(s);
            let ol = self.labels.get(o);
            if sl.is_some() || ol.is_some() {
                out.push('\t');
                out.push_str(sl.map(String::as_str).unwrap_or(""));
                out.push('\t');
                out.push_str(ol.map(String::as_str).unwrap_or(""));
            }
            out.push('\n');
        }
        out
    }

    /// Insert a triple; returns false if it was already present. Labels on
    /// the endpoints are remembered.
    pub fn insert(&mut self, triple: Triple) -> bool {
        for e in [&triple.subject, &triple.object] {
            if let Some(l) = &e.label {
                self.labels.insert(e.id.clone(), l.clone());
            }
        }
        let key = triple.key();
        if !self.triples.insert(key.clone()) {
            return false;
        }
        let (s, r, o) = key;
        self.outgoing
            .entry(s.clone())
            .or_default()
            .entry(r.clone())
            .or_default()
            .insert(o.clone());
        self.incoming.entry(o).or_default().entry(r).or_default().insert(s);
        true
    }

    fn remove(&mut self, key: &TripleKey) -> bool {
        if !self.triples.remove(key) {
            return false;
        }
        let (s, r, o) = key;
        prune_edge(&mut self.outgoing, s, r, o);
        prune_edge(&mut self.incoming, o, r, s);
        true
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(&triple.key())
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Entities referenced by at least one triple.
    pub fn entity_count(&self) -> usize {
        self.outgoing
            .keys()
            .chain(self.incoming.keys())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Number of triples touching the entity (a self-loop counts twice).
    pub fn degree(&self, entity: &EntityRef) -> usize {
        let count = |adj: &Adjacency| {
            adj.get(&entity.id)
                .map(|m| m.values().map(BTreeSet::len).sum::<usize>())
                .unwrap_or(0)
        };
        count(&self.outgoing) + count(&self.incoming)
    }

    pub fn stats(&self) -> GraphStats {
        let relations: BTreeSet<&String> = self.triples.iter().map(|(_, r, _)| r).collect();
        GraphStats {
            triples: self.triples.len(),
            entities: self.entity_count(),
            relations: relations.len(),
            corrections: self.corrections.len(),
        }
    }

    /// Look up an entity by id, attaching its stored label.
    pub fn entity(&self, id: &str) -> EntityRef {
        EntityRef { id: id.into(), label: self.labels.get(id).cloned() }
    }

    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.triples.iter().map(|(s, r, o)| {
            Triple::new(self.entity(s), RelationRef::new(r.clone()), self.entity(o))
        })
    }

    pub fn entities(&self) -> Vec<EntityRef> {
        self.outgoing
            .keys()
            .chain(self.incoming.keys())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|id| self.entity(id))
            .collect()
    }

    pub fn relations_of(&self, entity: &EntityRef) -> Vec<(RelationRef, Direction)> {
        let mut out: Vec<(RelationRef, Direction)> = Vec::new();
        if let Some(m) = self.outgoing.get(&entity.id) {
            out.extend(m.keys().map(|r| (RelationRef::new(r.clone()), Direction::Outward)));
        }
        if let Some(m) = self.incoming.get(&entity.id) {
            out.extend(m.keys().map(|r| (RelationRef::new(r.clone()), Direction::Inward)));
        }
        out.sort();
        out
    }

    pub fn neighbors(
        &self,
        entity: &EntityRef,
        relation: &RelationRef,
        direction: Direction,
    ) -> Vec<EntityRef> {
        let adj = match direction {
            Direction::Outward => &self.outgoing,
            Direction::Inward => &self.incoming,
        };
        adj.get(&entity.id)
            .and_then(|m| m.get(relation.name()))
            .map(|ids| ids.iter().map(|id| self.entity(id)).collect())
            .unwrap_or_default()
    }

    /// Stored label, or the `UnName_Entity(<id>)` placeholder.
    pub fn label_of(&self, entity: &EntityRef) -> String {
        self.labels
            .get(&entity.id)
            .cloned()
            .or_else(|| entity.label.clone())
            .unwrap_or_else(|| unnamed_label(&entity.id))
    }

    /// Exact id match first, then case-insensitive label or id match.
    pub fn resolve_entity(&self, name: &str) -> Option<EntityRef> {
        let name = name.trim();
        if name.is_empty() {
            return None;
        }
        if self.outgoing.contains_key(name) || self.incoming.contains_key(name) {
            return Some(self.entity(name));
        }
        let wanted = name.to_lowercase();
        let by_label = self
            .labels
            .iter()
            .filter(|(id, _)| self.outgoing.contains_key(*id) || self.incoming.contains_key(*id))
            .find(|(_, l)| l.to_lowercase() == wanted)
            .map(|(id, _)| self.entity(id));
        by_label.or_else(|| {
            self.entities()
                .into_iter()
                .find(|e| e.id.to_lowercase() == wanted)
        })
    }

    /// Apply a correction. On success the correction, stamped with the next
    /// sequence number, is appended to the log and returned.
    pub fn apply_correction(&mut self, mut correction: Correction) -> Result<Correction, KgError> {
        let key = correction.target.key();
        if !self.triples.contains(&key) {
            return Err(KgError::CorrectionRejected {
                subject: key.0,
                relation: key.1,
                object: key.2,
            });
        }
        self.remove(&key);
        if let CorrectionAction::ReplaceObject { new } = &correction.action {
            self.insert(Triple::new(
                self.entity(&key.0),
                correction.target.relation.clone(),
                new.clone(),
            ));
        }
        correction.sequence = self.corrections.last().map_or(1, |c| c.sequence + 1);
        self.corrections.push(correction.clone());
        Ok(correction)
    }

    pub fn corrections(&self) -> &[Correction] {
        &self.corrections
    }

    /// Re-apply a correction log on top of this graph.
    pub fn replay(&self, log: &[Correction]) -> Result<Self, KgError> {
        let mut kg = self.clone();
        for c in log {
            kg.apply_correction(c.clone())?;
        }
        Ok(kg)
    }

    /// Adjacency equality, ignoring the correction log.
    pub fn same_contents(&self, other: &Self) -> bool {
        self.triples == other.triples
            && self.outgoing == other.outgoing
            && self.incoming == other.incoming
    }
}

fn prune_edge(adj: &mut Adjacency, from: &str, rel: &str, to: &str) {
    if let Some(rels) = adj.get_mut(from) {
        if let Some(set) = rels.get_mut(rel) {
            set.remove(to);
            if set.is_empty() {
                rels.remove(rel);
            }
        }
        if rels.is_empty() {
            adj.remove(from);
        }
    }
}

impl KgSource for KnowledgeGraph {
    fn relations_of(&self, entity: &EntityRef) -> Result<Vec<(RelationRef, Direction)>, KgError> {
        Ok(KnowledgeGraph::relations_of(self, entity))
    }

    fn neighbors(
        &self,
        entity: &EntityRef,
        relation: &RelationRef,
        direction: Direction,
    ) -> Result<Vec<EntityRef>, KgError> {
        Ok(KnowledgeGraph::neighbors(self, entity, relation, direction))
    }

    fn label_of(&self, entity: &EntityRef) -> Result<String, KgError> {
        Ok(KnowledgeGraph::label_of(self, entity))
    }

    fn resolve_entity(&self, name: &str) -> Result<Option<EntityRef>, KgError> {
        Ok(KnowledgeGraph::resolve_entity(self, name))
    }
}

impl<T: KgSource + ?Sized> KgSource for &T {
    fn relations_of(&self, entity: &EntityRef) -> Result<Vec<(RelationRef, Direction)>, KgError> {
        (**self).relations_of(entity)
    }

    fn neighbors(
        &self,
        entity: &EntityRef,
        relation: &RelationRef,
        direction: Direction,
    ) -> Result<Vec<EntityRef>, KgError> {
        (**self).neighbors(entity, relation, direction)
    }

    fn label_of(&self, entity: &EntityRef) -> Result<String, KgError> {
        (**self).label_of(entity)
    }

    fn resolve_entity(&self, name: &str) -> Result<Option<EntityRef>, KgError> {
        (**self).resolve_entity(name)
    }
}

// Correction log lines:
// sequence \t action \t subject \t relation \t old-object \t new-object \t note
// Tabs and newlines inside the note are escaped as \t and \n.

pub fn encode_correction(c: &Correction) -> String {
    let (action, new) = match &c.action {
        CorrectionAction::ReplaceObject { new } => ("replace_object", new.id.as_str()),
        CorrectionAction::Delete => ("delete", ""),
    };
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
        c.sequence,
        action,
        c.target.subject.id,
        c.target.relation,
        c.target.object.id,
        new,
        escape(&c.note)
    )
}

pub fn decode_corrections(text: &str) -> Result<Vec<Correction>, KgError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| KgError::Parse { line: idx + 1, message };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", f.len())));
        }
        let sequence = f[0]
            .parse::<u64>()
            .map_err(|_| err(format!("bad sequence number {:?}", f[0])))?;
        let action = match f[1] {
            "replace_object" if !f[5].is_empty() => {
                CorrectionAction::ReplaceObject { new: EntityRef::new(f[5]) }
            }
            "delete" => CorrectionAction::Delete,
            other => return Err(err(format!("bad action {other:?}"))),
        };
        out.push(Correction {
            target: Triple::new(EntityRef::new(f[2]), RelationRef::new(f[3]), EntityRef::new(f[4])),
            action,
            note: unescape(f[6]),
            sequence,
        });
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const CANBERRA: &str = "# Canberra neighborhood\n\
        m.canberra\tcapital of\tm.australia\tCanberra\tAustralia\n\
        m.canberra\tcountry\tm.australia\tCanberra\tAustralia\n\
        m.canberra\tterritory\tm.act\tCanberra\tAustralian Capital Territory\n\
        m.australia\tprime minister\tm.albanese\tAustralia\tAnthony Albanese\n\
        m.act\tcontains\tm.canberra\tAustralian Capital Territory\tCanberra\n";

    fn e(id: &str) -> EntityRef {
        EntityRef::new(id)
    }

    fn t(s: &str, r: &str, o: &str) -> Triple {
        Triple::new(e(s), RelationRef::new(r), e(o))
    }

    #[test]
    fn single_record() {
        let kg = KnowledgeGraph::parse("Canberra\tcapital of\tAustralia\n").unwrap();
        assert_eq!(kg.len(), 1);
        assert_eq!(kg.entity_count(), 2);
    }

    #[test]
    fn duplicate_records_dedup() {
        let kg = KnowledgeGraph::parse("a\tr\tb\na\tr\tb\n").unwrap();
        assert_eq!(kg.len(), 1);
    }

    #[test]
    fn fixture_counts_match_hand_count() {
        let kg = KnowledgeGraph::parse(CANBERRA).unwrap();
        assert_eq!(kg.len(), 5);
        assert_eq!(kg.entity_count(), 4);
        assert_eq!(kg.degree(&e("m.canberra")), 4);
        assert_eq!(kg.degree(&e("m.australia")), 3);
        assert_eq!(kg.degree(&e("m.act")), 2);
        assert_eq!(kg.degree(&e("m.albanese")), 1);
    }

    #[test]
    fn wrong_field_count_reports_line() {
        let err = KgError::Parse { line: 3, message: String::new() };
        match KnowledgeGraph::parse("a\tr\tb\n\nonly\ttwo\n") {
            Err(KgError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected {err:?}, got {other:?}"),
        }
        assert!(KnowledgeGraph::parse("a\t\tb\n").is_err());
    }

    #[test]
    fn relations_of_canberra() {
        let kg = KnowledgeGraph::parse(CANBERRA).unwrap();
        let rels = kg.relations_of(&e("m.canberra"));
        let expected = vec![
            (RelationRef::new("capital of"), Direction::Outward),
            (RelationRef::new("contains"), Direction::Inward),
            (RelationRef::new("country"), Direction::Outward),
            (RelationRef::new("territory"), Direction::Outward),
        ];
        assert_eq!(rels, expected);
        assert!(kg.relations_of(&e("nowhere")).is_empty());
    }

    #[test]
    fn neighbors_follow_direction() {
        let kg = KnowledgeGraph::parse(CANBERRA).unwrap();
        let cap = RelationRef::new("capital of");
        let n = kg.neighbors(&e("m.canberra"), &cap, Direction::Outward);
        assert_eq!(n, vec![e("m.australia")]);
        assert_eq!(n[0].display_name(), "Australia");
        assert!(kg
            .neighbors(&e("m.canberra"), &RelationRef::new("nonexistent-rel"), Direction::Outward)
            .is_empty());
        assert_eq!(
            kg.neighbors(&e("m.australia"), &cap, Direction::Inward),
            vec![e("m.canberra")]
        );
    }

    #[test]
    fn labels() {
        let kg = KnowledgeGraph::parse(CANBERRA).unwrap();
        assert_eq!(kg.label_of(&e("m.australia")), "Australia");
        assert_eq!(kg.label_of(&e("m.act")), "Australian Capital Territory");
        assert_eq!(kg.label_of(&e("m.0x1")), "UnName_Entity(m.0x1)");
        assert_eq!(kg.resolve_entity("canberra"), Some(e("m.canberra")));
        assert_eq!(kg.resolve_entity("m.act"), Some(e("m.act")));
        assert_eq!(kg.resolve_entity("Sydney"), None);
    }

    #[test]
    fn replace_object_correction() {
        let mut kg = KnowledgeGraph::from_triples([t(
            "Philadelphia Phillies",
            "Arena Stadium",
            "Bright House Field",
        )]);
        let c = Correction::replace_object(
            t("Philadelphia Phillies", "Arena Stadium", "Bright House Field"),
            e("Spectrum Field"),
            "renamed",
        );
        let applied = kg.apply_correction(c).unwrap();
        assert_eq!(applied.sequence, 1);
        assert_eq!(
            kg.neighbors(&e("Philadelphia Phillies"), &RelationRef::new("Arena Stadium"), Direction::Outward),
            vec![e("Spectrum Field")]
        );
    }

    #[test]
    fn delete_only_triple_and_repeat_rejected() {
        let mut kg = KnowledgeGraph::from_triples([t("a", "r", "b"), t("c", "r", "d")]);
        kg.apply_correction(Correction::delete(t("a", "r", "b"), "")).unwrap();
        assert!(kg.relations_of(&e("a")).is_empty());
        let before = kg.clone();
        let err = kg.apply_correction(Correction::delete(t("a", "r", "b"), "")).unwrap_err();
        assert!(matches!(err, KgError::CorrectionRejected { .. }));
        assert_eq!(kg, before);
        assert_eq!(kg.corrections().len(), 1);
    }

    #[test]
    fn correction_log_round_trip_and_replay() {
        let initial = KnowledgeGraph::parse(CANBERRA).unwrap();
        let mut kg = initial.clone();
        kg.apply_correction(Correction::replace_object(
            t("m.canberra", "country", "m.australia"),
            EntityRef::labeled("m.commonwealth", "Commonwealth of Australia"),
            "tab\there\nand newline",
        ))
        .unwrap();
        kg.apply_correction(Correction::delete(t("m.act", "contains", "m.canberra"), "")).unwrap();
        let text: String = kg
            .corrections()
            .iter()
            .map(|c| encode_correction(c) + "\n")
            .collect();
        let log = decode_corrections(&text).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].note, "tab\there\nand newline");
        assert_eq!(log[1].sequence, 2);
        let replayed = initial.replay(&log).unwrap();
        assert!(replayed.same_contents(&kg));
    }

    #[test]
    fn tsv_round_trip() {
        let kg = KnowledgeGraph::parse(CANBERRA).unwrap();
        let again = KnowledgeGraph::parse(&kg.to_tsv()).unwrap();
        assert!(again.same_contents(&kg));
        assert_eq!(again.label_of(&e("m.albanese")), "Anthony Albanese");
    }
}
