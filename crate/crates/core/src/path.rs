//! Reasoning paths (entity-level hops) and relation chains (entities omitted).

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::kg::{Direction, EntityRef, RelationRef, Triple};

/// One traversal step: follow `relation` in `direction` and land on `entity`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub relation: RelationRef,
    pub direction: Direction,
    pub entity: EntityRef,
}

impl Hop {
    /// The underlying triple when this hop leaves `from`.
    pub fn triple(&self, from: &EntityRef) -> Triple {
        match self.direction {
            Direction::Outward => Triple::new(from.clone(), self.relation.clone(), self.entity.clone()),
            Direction::Inward => Triple::new(self.entity.clone(), self.relation.clone(), from.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub origin: EntityRef,
    pub hops: Vec<Hop>,
    pub score: f64,
    /// Set once the tail entity had nothing left to explore.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub stalled: bool,
}

impl ReasoningPath {
    pub fn root(origin: EntityRef, score: f64) -> Self {
        Self { origin, hops: Vec::new(), score, stalled: false }
    }

    pub fn tail(&self) -> &EntityRef {
        self.hops.last().map_or(&self.origin, |h| &h.entity)
    }

    pub fn depth(&self) -> usize {
        self.hops.len()
    }

    pub fn extended(&self, hop: Hop, score: f64) -> Self {
        let mut hops = self.hops.clone();
        hops.push(hop);
        Self { origin: self.origin.clone(), hops, score, stalled: false }
    }

    pub fn triples(&self) -> Vec<Triple> {
        let mut from = &self.origin;
        let mut out = Vec::with_capacity(self.hops.len());
        for hop in &self.hops {
            out.push(hop.triple(from));
            from = &hop.entity;
        }
        out
    }

    /// Identity used for duplicate detection: ids only, scores ignored.
    pub fn identity(&self) -> String {
        let mut s = String::from(self.origin.id.as_str());
        for h in &self.hops {
            push_link(&mut s, &h.relation, h.direction);
            s.push('\u{1f}');
            s.push_str(&h.entity.id);
        }
        s
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationRef> {
        self.hops.iter().map(|h| &h.relation)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainLink {
    pub relation: RelationRef,
    pub direction: Direction,
}

/// A relation chain from a topic entity, carrying the entities currently
/// reachable at its end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationChain {
    pub origin: EntityRef,
    pub relations: Vec<ChainLink>,
    pub score: f64,
    pub frontier: Vec<EntityRef>,
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub stalled: bool,
}

impl RelationChain {
    pub fn root(origin: EntityRef, score: f64) -> Self {
        let frontier = alloc::vec![origin.clone()];
        Self { origin, relations: Vec::new(), score, frontier, stalled: false }
    }

    pub fn depth(&self) -> usize {
        self.relations.len()
    }

    pub fn identity(&self) -> String {
        let mut s = String::from(self.origin.id.as_str());
        for l in &self.relations {
            push_link(&mut s, &l.relation, l.direction);
        }
        s
    }
}

fn push_link(s: &mut String, relation: &RelationRef, direction: Direction) {
    s.push('\u{1f}');
    s.push(match direction {
        Direction::Outward => '>',
        Direction::Inward => '<',
    });
    s.push_str(relation.name());
}
