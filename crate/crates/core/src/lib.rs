#![no_std]
//! Think-on-Graph style reasoning over knowledge graphs: a language model
//! walks the graph with beam search, pruning candidate relations and
//! entities, until it judges the collected paths sufficient to answer.

extern crate alloc;

pub mod engine;
pub mod kg;
pub mod metrics;
pub mod path;
pub mod prompting;
pub mod scoring;
pub mod sparql;

pub use engine::{run, Beam, CallLedger, Engine, Outcome, Run, RunError, SearchConfig, Termination, Trace, Variant};
pub use kg::{Direction, EntityRef, KgError, KgSource, KnowledgeGraph, RelationRef, Triple};
pub use path::{ReasoningPath, RelationChain};
pub use prompting::{PathRendering, Verdict};
pub use scoring::{PruneScorer, Reasoner, ScriptedBackend};
