//! Independent oracles for integration tests: random graph generation,
//! linear-scan neighborhood queries, exhaustive walk enumeration and beam
//! invariant checks.
#![allow(dead_code)]

pub mod goldens;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tog_core::engine::{run, Beam, PendingBeam, SearchConfig, Trace, Variant};
use tog_core::{Direction, EntityRef, KnowledgeGraph, RelationRef, Triple};

pub type Raw = (String, String, String);

pub struct RandomKg {
    pub triples: Vec<Raw>,
    pub entities: usize,
    pub relations: usize,
    pub kg: KnowledgeGraph,
}

pub fn entity(i: usize) -> String {
    format!("e{i}")
}

pub fn relation(i: usize) -> String {
    format!("r{i}")
}

/// Random graph over `e0..` whose every entity takes part in at most
/// `max_degree` triples. `e0` gets a triple whenever one fits.
pub fn random_kg(rng: &mut ChaCha8Rng, max_entities: usize, max_degree: usize, relations: usize) -> RandomKg {
    let n = rng.random_range(2..=max_entities);
    let mut degree = vec![0usize; n];
    let mut seen = BTreeSet::new();
    let mut triples = Vec::new();
    let attempts = rng.random_range(n..=3 * n);
    let mut add = |s: usize, r: usize, o: usize, degree: &mut Vec<usize>, triples: &mut Vec<Raw>| {
        if s == o || degree[s] >= max_degree || degree[o] >= max_degree {
            return;
        }
        let t = (entity(s), relation(r), entity(o));
        if seen.insert(t.clone()) {
            degree[s] += 1;
            degree[o] += 1;
            triples.push(t);
        }
    };
    for _ in 0..attempts {
        let (s, o, r) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..relations));
        add(s, r, o, &mut degree, &mut triples);
    }
    if degree[0] == 0 {
        if let Some(o) = (1..n).find(|&i| degree[i] < max_degree) {
            let r = rng.random_range(0..relations);
            add(0, r, o, &mut degree, &mut triples);
        }
    }
    let mut kg = KnowledgeGraph::new();
    for (s, r, o) in &triples {
        kg.insert(Triple::new(EntityRef::new(s.clone()), RelationRef::new(r.clone()), EntityRef::new(o.clone())));
    }
    RandomKg { triples, entities: n, relations, kg }
}

pub fn scan_relations(triples: &[Raw], e: &str) -> BTreeSet<(String, Direction)> {
    let mut out = BTreeSet::new();
    for (s, r, o) in triples {
        if s == e {
            out.insert((r.clone(), Direction::Outward));
        }
        if o == e {
            out.insert((r.clone(), Direction::Inward));
        }
    }
    out
}

pub fn scan_neighbors(triples: &[Raw], e: &str, rel: &str, dir: Direction) -> BTreeSet<String> {
    triples
        .iter()
        .filter(|(_, r, _)| r == rel)
        .filter_map(|(s, _, o)| match dir {
            Direction::Outward if s == e => Some(o.clone()),
            Direction::Inward if o == e => Some(s.clone()),
            _ => None,
        })
        .collect()
}

/// Name a relation is offered under: the inward form of a relation that
/// also occurs outward is marked as reverse.
pub fn candidate_name(pairs: &BTreeSet<(String, Direction)>, rel: &str, dir: Direction) -> String {
    if dir == Direction::Inward && pairs.contains(&(rel.to_string(), Direction::Outward)) {
        format!("{rel} (reverse)")
    } else {
        rel.to_string()
    }
}

#[derive(Clone, Debug)]
pub struct Walk {
    pub hops: Vec<(String, Direction, String)>,
    pub product: f64,
}

impl Walk {
    /// Tie-break key: origin, then per hop the direction, relation and entity.
    pub fn key(&self, origin: &str) -> String {
        let mut s = origin.to_string();
        for (r, d, e) in &self.hops {
            s.push('\u{1f}');
            s.push(if *d == Direction::Outward { '>' } else { '<' });
            s.push_str(r);
            s.push('\u{1f}');
            s.push_str(e);
        }
        s
    }
}

/// Every maximal walk of at most `depth` hops from `origin`, scored by the
/// product of per-set normalized weights.
pub fn enumerate_walks(triples: &[Raw], origin: &str, depth: usize, weights: &BTreeMap<String, f64>) -> Vec<Walk> {
    let mut out = Vec::new();
    let mut stack = vec![(origin.to_string(), Walk { hops: Vec::new(), product: 1.0 })];
    while let Some((at, walk)) = stack.pop() {
        let pairs = scan_relations(triples, &at);
        if walk.hops.len() == depth || pairs.is_empty() {
            out.push(walk);
            continue;
        }
        let w = |name: &str| weights.get(name).copied().unwrap_or(0.0);
        let rel_total: f64 = pairs.iter().map(|(r, d)| w(&candidate_name(&pairs, r, *d))).sum();
        for (r, d) in &pairs {
            let wr = w(&candidate_name(&pairs, r, *d)) / rel_total;
            let nbrs = scan_neighbors(triples, &at, r, *d);
            let ent_total: f64 = nbrs.iter().map(|e| w(e)).sum();
            for e in &nbrs {
                let we = if nbrs.len() == 1 { 1.0 } else { w(e) / ent_total };
                let mut next = walk.clone();
                next.hops.push((r.clone(), *d, e.clone()));
                next.product *= wr * we;
                stack.push((e.clone(), next));
            }
        }
    }
    out
}

/// Random positive weight for every relation and entity candidate name.
pub fn random_weights(rng: &mut ChaCha8Rng, kg: &RandomKg, zero_probability: f64) -> BTreeMap<String, f64> {
    let mut w = BTreeMap::new();
    let draw = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(zero_probability) {
            0.0
        } else {
            rng.random_range(0.05..1.0)
        }
    };
    for r in 0..kg.relations {
        w.insert(relation(r), draw(rng));
        w.insert(format!("{} (reverse)", relation(r)), draw(rng));
    }
    for e in 0..kg.entities {
        w.insert(entity(e), draw(rng));
    }
    w
}

fn check_sum(scores: &[f64], width: usize, what: &str, depth: usize) -> Result<(), String> {
    if scores.is_empty() {
        return Err(format!("depth {depth}: empty {what}"));
    }
    if scores.len() > width {
        return Err(format!("depth {depth}: {what} has {} members, width {width}", scores.len()));
    }
    let sum: f64 = scores.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(format!("depth {depth}: {what} scores sum to {sum}"));
    }
    if let Some(s) = scores.iter().find(|s| !(**s > 0.0 && **s <= 1.0 + 1e-12)) {
        return Err(format!("depth {depth}: {what} score {s} outside (0, 1]"));
    }
    Ok(())
}

/// Score normalization, width, connectivity and depth law for every
/// completed depth, plus trace replay.
pub fn check_invariants(trace: &Trace, triples: &[Raw]) -> Result<(), String> {
    let width = trace.config.width;
    let set: BTreeSet<&Raw> = triples.iter().collect();
    let has = |s: &str, r: &str, o: &str| set.contains(&(s.to_string(), r.to_string(), o.to_string()));
    if !trace.init.beam.is_empty() {
        check_sum(&trace.init.beam.scores(), width, "initial beam", 0)?;
    }
    for dt in trace.depths.iter().filter(|d| d.verdict.is_some()) {
        let d = dt.depth;
        let pending_scores: Vec<f64> = match &dt.pending {
            PendingBeam::Paths(p) => p.iter().map(|x| x.score).collect(),
            PendingBeam::Chains(c) => c.iter().map(|x| x.score).collect(),
        };
        if !pending_scores.is_empty() {
            check_sum(&pending_scores, width, "pending set", d)?;
        }
        check_sum(&dt.beam.scores(), width, "beam", d)?;
        match &dt.beam {
            Beam::Paths(paths) => {
                let mut ids = BTreeSet::new();
                for p in paths {
                    if !ids.insert(p.identity()) {
                        return Err(format!("depth {d}: duplicate path"));
                    }
                    if p.stalled && p.depth() > d || !p.stalled && p.depth() != d {
                        return Err(format!("depth {d}: path with {} hops (stalled: {})", p.depth(), p.stalled));
                    }
                    for t in p.triples() {
                        if !has(&t.subject.id, t.relation.name(), &t.object.id) {
                            return Err(format!("depth {d}: hop {t:?} is not a graph triple"));
                        }
                    }
                }
            }
            Beam::Chains(chains) => {
                for c in chains {
                    if c.stalled && c.depth() > d || !c.stalled && c.depth() != d {
                        return Err(format!("depth {d}: chain with {} relations", c.depth()));
                    }
                    if c.frontier.is_empty() {
                        return Err(format!("depth {d}: chain with empty frontier"));
                    }
                    if let (Some(link), false) = (c.relations.last(), c.stalled) {
                        for e in &c.frontier {
                            let linked = triples.iter().any(|(s, r, o)| {
                                r == link.relation.name()
                                    && match link.direction {
                                        Direction::Outward => *o == e.id,
                                        Direction::Inward => *s == e.id,
                                    }
                            });
                            if !linked {
                                return Err(format!("depth {d}: frontier entity {} not reached via {}", e.id, link.relation));
                            }
                        }
                    }
                }
            }
        }
        if let Some(rp) = &dt.random_prune {
            let pairs: usize = rp.beam.iter().map(|c| c.frontier.len()).sum();
            if pairs > width {
                return Err(format!("depth {d}: random prune kept {pairs} pairs"));
            }
            check_sum(&rp.beam.iter().map(|c| c.score).collect::<Vec<_>>(), width, "sampled beam", d)?;
        }
        if trace.config.variant == Variant::TogR && matches!(dt.beam, Beam::Paths(ref p) if !p.is_empty()) {
            return Err(format!("depth {d}: ToG-R trace holds entity paths"));
        }
    }
    trace.replay().map_err(|e| e.to_string())
}

/// Scripted backend scoring every set from `weights`, extracting `topics`
/// and answering No to every sufficiency check unless `yes_at` names the
/// 1-based call that should get Yes.
pub fn weighted_backend(weights: BTreeMap<String, f64>, topics: &[String], yes_at: Option<usize>) -> tog_core::ScriptedBackend {
    use tog_core::scoring::{Script, TopicCandidate, TopicRule, VerdictRule};
    let verdicts = yes_at
        .map(|n| VerdictRule { question: None, evidence_contains: None, call: Some(n), verdict: tog_core::Verdict::Yes })
        .into_iter()
        .collect();
    tog_core::ScriptedBackend::new(Script {
        topics: vec![TopicRule { question: None, topics: topics.iter().map(TopicCandidate::new).collect() }],
        weights,
        verdicts,
        default_answer: "The answer is {unknown}.".into(),
        ..Script::default()
    })
}

/// Run the engine wide enough that no candidate is ever cut and compare its
/// best path with the exhaustive maximum-product walk.
pub fn best_matches_oracle(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_kg(&mut rng, 40, 4, 3);
    let weights = random_weights(&mut rng, &g, 0.0);
    let depth = rng.random_range(1..=3);
    let width = 4usize.pow(depth as u32);
    let cfg = SearchConfig { width, depth, ..SearchConfig::default() };
    let backend = weighted_backend(weights.clone(), &[entity(0)], None);
    let out = run("q", &cfg, &backend, &backend, &g.kg).map_err(|e| e.to_string())?;
    check_invariants(&out.trace, &g.triples)?;

    let walks = enumerate_walks(&g.triples, &entity(0), depth, &weights);
    let total: f64 = walks.iter().map(|w| w.product).sum();
    let max = walks.iter().map(|w| w.product).fold(0.0, f64::max);
    let paths = out.outcome.paths.paths().ok_or("no paths")?;
    let best = &paths[0];
    let hops: Vec<_> = best.hops.iter().map(|h| (h.relation.name().to_string(), h.direction, h.entity.id.clone())).collect();
    let matched = walks.iter().find(|w| w.hops == hops).ok_or_else(|| format!("seed {seed}: best path is not a walk"))?;
    if matched.product < max * (1.0 - 1e-9) {
        return Err(format!("seed {seed}: best product {} below maximum {max}", matched.product));
    }
    let tied: Vec<&Walk> = walks.iter().filter(|w| w.product >= max * (1.0 - 1e-9)).collect();
    if tied.len() > 1 {
        let key = tied.iter().map(|w| w.key(&entity(0))).min().unwrap();
        if matched.key(&entity(0)) != key && tied.iter().all(|w| w.product == max) {
            return Err(format!("seed {seed}: tie not broken by path order"));
        }
    }
    if (best.score - max / total).abs() > 1e-9 {
        return Err(format!("seed {seed}: score {} vs oracle {}", best.score, max / total));
    }
    if paths.len() != walks.len().min(width) {
        return Err(format!("seed {seed}: {} paths vs {} walks", paths.len(), walks.len()));
    }
    Ok(())
}
