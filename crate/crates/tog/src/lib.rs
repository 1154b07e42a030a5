//! Files, endpoints and the service around the `tog-core` search engine:
//! graph and correction-log persistence, a SPARQL client, a chat-model
//! client, batch evaluation, run records and the HTTP facade.

pub mod config;
pub mod eval;
pub mod gate;
pub mod http;
pub mod llm;
pub mod service;
pub mod sparql;
pub mod store;

pub use config::{build_backends, build_kg, Backends, KgBackend, ServiceConfig};
pub use service::{RunRecord, RunRef, Service, ServiceError, TraceStore};
