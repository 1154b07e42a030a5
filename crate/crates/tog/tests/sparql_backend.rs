#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use support::*;
use tog::sparql::{EndpointConfig, SparqlClient, TransportError};
use tog_core::engine::{EngineError, EntityPrune, SearchConfig, Variant};
use tog_core::{run, Direction, EntityRef, KgError, KgSource, KnowledgeGraph, PathRendering, RelationRef};

const NS: &str = "http://rdf.freebase.com/ns/";

/// A stand-in endpoint that reads the graph pattern out of each query and
/// answers it by scanning `triples`.
fn stub_endpoint(triples: Vec<Raw>, labels: BTreeMap<String, String>) -> impl Fn(&str) -> Result<String, TransportError> + Send + Sync {
    let triples = Arc::new(triples);
    move |query: &str| {
        let (var, values): (&str, Vec<String>) = if let Some(rest) = query.split("FILTER(?entity = ns:").nth(1) {
            let mid = &rest[..rest.find(')').unwrap()];
            ("tailEntity", labels.get(mid).cloned().into_iter().collect())
        } else if let Some(rest) = query.split("ns:type.object.name \"").nth(1) {
            let label = &rest[..rest.find("\"@en").unwrap()];
            ("entity", labels.iter().filter(|(_, l)| *l == label).map(|(id, _)| format!("{NS}{id}")).collect())
        } else {
            let pattern = query.lines().nth(3).ok_or_else(|| TransportError("malformed query".into()))?;
            let tokens: Vec<&str> = pattern.split_whitespace().collect();
            let ns = |t: &str| t.strip_prefix("ns:").map(String::from);
            match tokens.as_slice() {
                [m, "?relation", "?x", "."] => {
                    let m = ns(m).unwrap();
                    ("relation", triples.iter().filter(|t| t.0 == m).map(|t| format!("{NS}{}", t.1)).collect())
                }
                ["?x", "?relation", m, "."] => {
                    let m = ns(m).unwrap();
                    ("relation", triples.iter().filter(|t| t.2 == m).map(|t| format!("{NS}{}", t.1)).collect())
                }
                [m, r, "?tailEntity", "."] => {
                    let (m, r) = (ns(m).unwrap(), ns(r).unwrap());
                    ("tailEntity", triples.iter().filter(|t| t.0 == m && t.1 == r).map(|t| format!("{NS}{}", t.2)).collect())
                }
                ["?tailEntity", m, r, "."] => {
                    let (m, r) = (ns(m).unwrap(), ns(r).unwrap());
                    ("tailEntity", triples.iter().filter(|t| t.2 == m && t.1 == r).map(|t| format!("{NS}{}", t.0)).collect())
                }
                _ => return Err(TransportError(format!("unrecognized pattern {pattern:?}"))),
            }
        };
        let rows: Vec<_> = values.iter().map(|v| json!({ var: { "type": "uri", "value": v } })).collect();
        Ok(json!({ "head": { "vars": [var] }, "results": { "bindings": rows } }).to_string())
    }
}

fn client(triples: Vec<Raw>, labels: BTreeMap<String, String>) -> SparqlClient<impl Fn(&str) -> Result<String, TransportError> + Send + Sync> {
    let cfg = EndpointConfig { retries: 0, backoff_ms: 0, ..EndpointConfig::new("http://stub/sparql") };
    SparqlClient::new(stub_endpoint(triples, labels), cfg).unwrap()
}

#[test]
fn neighborhoods_match_a_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5a);
    for _ in 0..50 {
        let g = random_kg(&mut rng, 30, 5, 4);
        let remote = client(g.triples.clone(), BTreeMap::new());
        for i in 0..g.entities {
            let e = EntityRef::new(entity(i));
            let got: BTreeSet<(String, Direction)> =
                remote.relations_of(&e).unwrap().into_iter().map(|(r, d)| (r.name().to_string(), d)).collect();
            let want = scan_relations(&g.triples, &e.id);
            assert_eq!(got, want, "relations of {}", e.id);
            assert_eq!(KgSource::relations_of(&g.kg, &e).unwrap().len(), want.len());
            for (r, d) in &want {
                let rel = RelationRef::new(r.clone());
                let ids = |v: Vec<EntityRef>| v.into_iter().map(|e| e.id).collect::<Vec<_>>();
                let remote_ids = ids(remote.neighbors(&e, &rel, *d).unwrap());
                assert_eq!(remote_ids.iter().cloned().collect::<BTreeSet<_>>(), scan_neighbors(&g.triples, &e.id, r, *d));
                assert_eq!(remote_ids, ids(KgSource::neighbors(&g.kg, &e, &rel, *d).unwrap()));
            }
        }
    }
}

/// The same random graph keyed by mids, with each oracle name as its label.
fn labeled_graph(g: &RandomKg) -> (Vec<Raw>, BTreeMap<String, String>, KnowledgeGraph) {
    let mid = |e: &str| format!("m.{e}");
    let triples: Vec<Raw> = g.triples.iter().map(|(s, r, o)| (mid(s), r.clone(), mid(o))).collect();
    let labels = (0..g.entities).map(|i| (mid(&entity(i)), entity(i))).collect();
    let tsv: String = g.triples.iter().map(|(s, r, o)| format!("{}\t{r}\t{}\t{s}\t{o}\n", mid(s), mid(o))).collect();
    (triples, labels, KnowledgeGraph::parse(&tsv).unwrap())
}

#[test]
fn engine_runs_agree_across_backends() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5b);
    for case in 0..60 {
        let g = random_kg(&mut rng, 25, 4, 3);
        let (triples, labels, kg) = labeled_graph(&g);
        let weights = random_weights(&mut rng, &g, 0.1);
        let yes_at = rng.random_bool(0.3).then(|| rng.random_range(1..=3));
        let backend = || weighted_backend(weights.clone(), &[entity(0)], yes_at);
        let togr = case % 2 == 1;
        let cfg = SearchConfig {
            width: rng.random_range(1..=4),
            depth: rng.random_range(1..=3),
            variant: if togr { Variant::TogR } else { Variant::Tog },
            entity_prune: if togr { EntityPrune::Random } else { EntityPrune::Scored },
            rendering: if togr { PathRendering::Sequences } else { PathRendering::Triples },
            seed: rng.random(),
            ..SearchConfig::default()
        };
        let remote = client(triples.clone(), labels);
        let (b1, b2) = (backend(), backend());
        let local = run("q", &cfg, &b1, &b1, &kg).map_err(|e| e.source.to_string());
        let over_sparql = run("q", &cfg, &b2, &b2, &remote).map_err(|e| e.source.to_string());
        match (local, over_sparql) {
            (Ok(a), Ok(b)) => {
                assert!(!b.trace.init.beam.is_empty(), "case {case}: topic not resolved");
                assert_eq!(serde_json::to_value(&a.trace).unwrap(), serde_json::to_value(&b.trace).unwrap(), "case {case}");
                assert_eq!(a.outcome, b.outcome, "case {case}");
                check_invariants(&b.trace, &triples).unwrap();
            }
            (a, b) => assert_eq!(a.err(), b.err(), "case {case}"),
        }
    }
}

#[test]
fn mids_are_labeled_or_marked_unnamed() {
    let triples = vec![
        ("m.0canb".to_string(), "location.location.containedby".to_string(), "m.0aus".to_string()),
        ("m.0canb".to_string(), "location.location.geolocation".to_string(), "m.0geo".to_string()),
        ("m.0canb".to_string(), "location.location.population".to_string(), "431380".to_string()),
    ];
    let labels = BTreeMap::from([("m.0canb".to_string(), "Canberra".to_string()), ("m.0aus".to_string(), "Australia".to_string())]);
    let remote = client(triples, labels);
    let canberra = remote.resolve_entity("Canberra").unwrap().unwrap();
    assert_eq!(canberra, EntityRef::labeled("m.0canb", "Canberra"));
    assert_eq!(remote.resolve_entity("Atlantis").unwrap(), None);
    let names = |rel: &str| -> Vec<String> {
        remote
            .neighbors(&canberra, &RelationRef::new(rel), Direction::Outward)
            .unwrap()
            .iter()
            .map(|e| e.display_name().to_string())
            .collect()
    };
    assert_eq!(names("location.location.containedby"), ["Australia"]);
    assert_eq!(names("location.location.geolocation"), ["UnName_Entity(m.0geo)"]);
    assert_eq!(names("location.location.population"), ["431380"]);
    assert_eq!(remote.label_of(&EntityRef::new("m.0aus")).unwrap(), "Australia");
}

#[test]
fn unreachable_endpoint_fails_the_run() {
    let cfg = EndpointConfig { retries: 1, backoff_ms: 0, ..EndpointConfig::new("http://stub/sparql") };
    let remote = SparqlClient::new(|_: &str| Err(TransportError("connection refused".into())), cfg).unwrap();
    let backend = weighted_backend(BTreeMap::new(), &["m.0canb".to_string()], None);
    let err = run("q", &SearchConfig::default(), &backend, &backend, &remote).unwrap_err();
    assert!(matches!(err.source, EngineError::Kg(KgError::Unavailable(_))), "{}", err.source);
    assert_eq!(remote.attempts(), 2);
}
