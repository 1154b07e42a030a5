//! Comparisons against the golden prompt, rendering and query files.

use std::fs;
use std::path::PathBuf;

use tog_core::kg::{Direction, EntityRef, RelationRef};
use tog_core::path::{Hop, ReasoningPath};
use tog_core::prompting::{build_prompt, render_path, ExemplarSet, PathRendering, PromptKind, PromptSpec};
use tog_core::sparql::{render_query, QueryTemplate};

pub const QUESTION: &str = "What is the majority party now in the country where Canberra is located?";
const EXEMPLAR_MARKER: &str = "<<in-context few-shot>>";

fn golden(rel: &str) -> Result<String, String> {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden").join(rel);
    fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))
}

fn compare(what: &str, got: &str, want: &str) -> Result<(), String> {
    if got == want {
        return Ok(());
    }
    let line = got.lines().zip(want.lines()).position(|(a, b)| a != b).unwrap_or(got.lines().count().min(want.lines().count()));
    Err(format!(
        "{what}: differs at line {}: got {:?}, want {:?}",
        line + 1,
        got.lines().nth(line).unwrap_or("<end>"),
        want.lines().nth(line).unwrap_or("<end>")
    ))
}

fn template_file(t: QueryTemplate) -> &'static str {
    match t {
        QueryTemplate::RelationOutward => "relation_outward",
        QueryTemplate::RelationInward => "relation_inward",
        QueryTemplate::EntityOutward => "entity_outward",
        QueryTemplate::EntityInward => "entity_inward",
        QueryTemplate::MidToLabel => "mid_to_label",
    }
}

/// Every template against its golden file for two slot fillings. Returns
/// the number of templates checked.
pub fn check_sparql() -> Result<usize, String> {
    for t in QueryTemplate::ALL {
        for (mid, rel) in [("m.0d6lp", "location.location.containedby"), ("m.03_dwn", "sports.sports_team.team_mascot")] {
            let relation = t.needs_relation().then_some(rel);
            let want = golden(&format!("sparql/{}.rq", template_file(t)))?.replace("{mid}", mid).replace("{relation}", rel);
            let got = render_query(t, mid, relation).map_err(|e| format!("{t:?}: {e}"))?;
            compare(&format!("{t:?}"), &got, &want)?;
        }
    }
    Ok(QueryTemplate::ALL.len())
}

pub fn canberra_path() -> ReasoningPath {
    let mut p = ReasoningPath::root(EntityRef::new("Canberra"), 1.0);
    p.hops.push(Hop { relation: RelationRef::new("capital of"), direction: Direction::Outward, entity: EntityRef::new("Australia") });
    p.hops.push(Hop {
        relation: RelationRef::new("prime minister"),
        direction: Direction::Outward,
        entity: EntityRef::new("Anthony Albanese"),
    });
    p
}

pub fn check_renderings() -> Result<usize, String> {
    let p = canberra_path();
    let formats = [(PathRendering::Triples, "triples"), (PathRendering::Sequences, "sequences"), (PathRendering::Sentences, "sentences")];
    for (r, file) in formats {
        compare(&format!("{r:?}"), &render_path(&p, r), &golden(&format!("render/{file}.txt"))?)?;
    }
    Ok(formats.len())
}

fn prompt_for(kind: PromptKind, exemplars: &ExemplarSet) -> String {
    let relations: Vec<String> = ["capital of", "country", "territory", "contains (reverse)"].iter().map(|s| s.to_string()).collect();
    let entities: Vec<String> = ["Australia", "Australian Capital Territory"].iter().map(|s| s.to_string()).collect();
    let knowledge = render_path(&canberra_path(), PathRendering::Triples);
    let spec = match kind {
        PromptKind::TopicExtract => PromptSpec::TopicExtract,
        PromptKind::RelationPrune => PromptSpec::RelationPrune { k: 3, topic_entity: "Canberra", relations: &relations },
        PromptKind::EntityPrune => PromptSpec::EntityPrune { relation: "capital of", entities: &entities },
        PromptKind::SufficiencyEval => PromptSpec::SufficiencyEval { knowledge: &knowledge },
        PromptKind::AnswerGen => PromptSpec::AnswerGen { knowledge: &knowledge },
        PromptKind::TogRReason => PromptSpec::TogRReason { chains: "Canberra → capital of → {Australia}" },
        PromptKind::CotBaseline => PromptSpec::CotBaseline,
        PromptKind::IoBaseline => PromptSpec::IoBaseline,
    };
    build_prompt(QUESTION, &spec, exemplars)
}

/// All prompt kinds, with a marker standing in for the few-shot block.
pub fn check_prompts() -> Result<usize, String> {
    let mut marked = ExemplarSet::default();
    for kind in PromptKind::ALL {
        if !matches!(kind, PromptKind::CotBaseline | PromptKind::IoBaseline) {
            marked.set_block(kind, EXEMPLAR_MARKER.to_string());
        }
    }
    for kind in PromptKind::ALL {
        let want = golden(&format!("prompts/{}.txt", ExemplarSet::asset_name(kind)))?;
        compare(&format!("{kind:?}"), &prompt_for(kind, &marked), &want)?;
    }
    Ok(PromptKind::ALL.len())
}
