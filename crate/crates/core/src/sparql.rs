//! Pre-defined Freebase SPARQL queries for neighborhood search and label
//! lookup. Rendering only fills the `mid` and `relation` slots; every other
//! byte of each template is fixed.

use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

/// Namespace IRI bound to the `ns:` prefix in every template.
pub const FREEBASE_NS: &str = "http://rdf.freebase.com/ns/";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryTemplate {
    /// Relations where the entity is the subject.
    RelationOutward,
    /// Relations where the entity is the object.
    RelationInward,
    /// Objects of `(mid, relation, ?)`.
    EntityOutward,
    /// Subjects for the inward direction. The slot order is kept exactly as
    /// published: the mid fills the first `ns:` slot and the relation the
    /// second.
    EntityInward,
    MidToLabel,
}

impl QueryTemplate {
    pub const ALL: [QueryTemplate; 5] = [
        QueryTemplate::RelationOutward,
        QueryTemplate::RelationInward,
        QueryTemplate::EntityOutward,
        QueryTemplate::EntityInward,
        QueryTemplate::MidToLabel,
    ];

    pub fn needs_relation(self) -> bool {
        matches!(self, QueryTemplate::EntityOutward | QueryTemplate::EntityInward)
    }

    /// Name of the projected variable in the results bindings.
    pub fn variable(self) -> &'static str {
        match self {
            QueryTemplate::RelationOutward | QueryTemplate::RelationInward => "relation",
            _ => "tailEntity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("template {0:?} requires a relation")]
    MissingRelation(QueryTemplate),
    #[error("template {0:?} takes no relation")]
    UnexpectedRelation(QueryTemplate),
    #[error("empty identifier")]
    EmptyId,
}

pub fn render_query(
    template: QueryTemplate,
    mid: &str,
    relation: Option<&str>,
) -> Result<String, QueryError> {
    if mid.is_empty() {
        return Err(QueryError::EmptyId);
    }
    match (template.needs_relation(), relation) {
        (true, None) => return Err(QueryError::MissingRelation(template)),
        (false, Some(_)) => return Err(QueryError::UnexpectedRelation(template)),
        _ => {}
    }
    let rel = relation.unwrap_or("");
    let text = match template {
        QueryTemplate::RelationOutward => format!(
            "PREFIX ns: <http://rdf.freebase.com/ns/>\n\
             SELECT ?relation\n\
             WHERE {{\n    ns:{mid} ?relation ?x . \n}}"
        ),
        QueryTemplate::RelationInward => format!(
            "PREFIX ns: <http://rdf.freebase.com/ns/>\n\
             SELECT ?relation\n\
             WHERE {{\n    ?x ?relation ns:{mid} .\n}}"
        ),
        QueryTemplate::EntityOutward => format!(
            "PREFIX ns: <http://rdf.freebase.com/ns/>\n\
             SELECT ?tailEntity\n\
             WHERE {{\n    ns:{mid} ns:{rel} ?tailEntity . \n}}\n"
        ),
        QueryTemplate::EntityInward => format!(
            "PREFIX ns: <http://rdf.freebase.com/ns/>\n\
             SELECT ?tailEntity\n\
             WHERE {{\n    ?tailEntity ns:{mid} ns:{rel}  . \n}}"
        ),
        QueryTemplate::MidToLabel => format!(
            "PREFIX ns: <http://rdf.freebase.com/ns/>\n\
             SELECT DISTINCT ?tailEntity\n\
             WHERE {{\n\
             {{\n    ?entity ns:type.object.name ?tailEntity .\n    FILTER(?entity = ns:{mid})\n}}\n\
             UNION\n\
             {{\n    ?entity <http://www.w3.org/2002/07/owlsameAs> ?tailEntity .\n    FILTER(?entity = ns:{mid})\n}}\n\
             }}"
        ),
    };
    Ok(text)
}

/// Reverse lookup from a label to candidate ids. Not one of the five fixed
/// templates; used only to resolve topic entity names.
pub fn label_lookup_query(label: &str) -> String {
    let escaped = label.replace('\\', "\\\\").replace('"', "\\\"");
    format!(
        "PREFIX ns: <http://rdf.freebase.com/ns/>\n\
         SELECT DISTINCT ?entity\n\
         WHERE {{\n    ?entity ns:type.object.name \"{escaped}\"@en .\n}}"
    )
}

/// Strip the Freebase namespace IRI from a bound value, if present.
pub fn strip_namespace(value: &str) -> &str {
    value.strip_prefix(FREEBASE_NS).unwrap_or(value)
}
