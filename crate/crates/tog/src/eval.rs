//! Dataset loading and batch evaluation.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use tog_core::engine::{Outcome, SearchConfig};
use tog_core::metrics::{exact_match, gold_relations, overlap_ratio, MetricsReport, OverlapBucket, RecordResult};
use tog_core::{run, KgSource, PruneScorer, Reasoner};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparql: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
}

/// One JSON object per line; blank lines are skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut out: Vec<DatasetRecord> = Vec::new();
    let mut ids = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DatasetError::Record { line: idx + 1, message };
        let rec: DatasetRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if rec.answers.is_empty() {
            return Err(err(format!("record {:?} has no gold answers", rec.id)));
        }
        if !ids.insert(rec.id.clone()) {
            return Err(err(format!("duplicate record id {:?}", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_dataset(&text)
}

/// Relation names along the final beam.
pub fn explored_relations(outcome: &Outcome) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    if let Some(paths) = outcome.paths.paths() {
        out.extend(paths.iter().flat_map(|p| p.relations()).map(|r| r.name().to_string()));
    }
    if let Some(chains) = outcome.paths.chains() {
        out.extend(chains.iter().flat_map(|c| &c.relations).map(|l| l.relation.name().to_string()));
    }
    out
}

pub fn evaluate_record(
    rec: &DatasetRecord,
    config: &SearchConfig,
    scorer: &dyn PruneScorer,
    reasoner: &dyn Reasoner,
    kg: &dyn KgSource,
) -> RecordResult {
    let gold = rec.sparql.as_deref().map(gold_relations).unwrap_or_default();
    let gold_depth = (!gold.is_empty()).then_some(gold.len());
    match run(&rec.question, config, scorer, reasoner, kg) {
        Ok(r) => {
            let explored = explored_relations(&r.outcome);
            let overlap = overlap_ratio(explored.iter().map(String::as_str), gold.iter().map(String::as_str)).ok();
            RecordResult {
                id: rec.id.clone(),
                correct: exact_match(&r.outcome.answer, &rec.answers),
                prediction: r.outcome.answer,
                calls: r.outcome.ledger.total(),
                all_calls: r.outcome.ledger.all_calls(),
                depth_reached: r.outcome.depth,
                gold_depth,
                overlap,
                fallback: r.outcome.fallback,
                error: None,
            }
        }
        Err(e) => RecordResult {
            id: rec.id.clone(),
            prediction: String::new(),
            correct: false,
            calls: e.trace.ledger.total(),
            all_calls: e.trace.ledger.all_calls(),
            depth_reached: e.trace.depths.len(),
            gold_depth,
            overlap: (!gold.is_empty()).then_some(0.0),
            fallback: false,
            error: Some(e.to_string()),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: MetricsReport,
    pub records: Vec<RecordResult>,
}

/// Evaluate every record with up to `workers` threads. Results keep dataset
/// order whatever the completion order.
pub fn run_eval(
    records: &[DatasetRecord],
    config: &SearchConfig,
    scorer: &(dyn PruneScorer + Sync),
    reasoner: &(dyn Reasoner + Sync),
    kg: &(dyn KgSource + Sync),
    workers: usize,
) -> EvalReport {
    let slots: Mutex<Vec<Option<RecordResult>>> = Mutex::new(vec![None; records.len()]);
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(rec) = records.get(i) else { break };
        let result = evaluate_record(rec, config, scorer, reasoner, kg);
        slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
    };
    std::thread::scope(|s| {
        for _ in 1..workers.clamp(1, records.len().max(1)) {
            s.spawn(work);
        }
        work();
    });
    let results: Vec<RecordResult> =
        slots.into_inner().unwrap_or_else(|e| e.into_inner()).into_iter().flatten().collect();
    EvalReport { metrics: MetricsReport::aggregate(&results), records: results }
}

pub fn render_table(m: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "records                      {}", m.records);
    let _ = writeln!(s, "correct                      {}", m.correct);
    let _ = writeln!(s, "hits@1                       {:.4}", m.hits_at_1);
    let _ = writeln!(s, "average calls                {:.2}", m.average_calls);
    let _ = writeln!(s, "average calls (w/ topics)    {:.2}", m.average_calls_with_extraction);
    let _ = writeln!(s, "errors                       {}", m.errors);
    if !m.per_depth.is_empty() {
        let _ = writeln!(s, "\ngold depth  total  correct  accuracy");
        for row in &m.per_depth {
            let _ = writeln!(s, "{:>10}  {:>5}  {:>7}  {:>8.4}", row.depth, row.total, row.correct, row.accuracy);
        }
    }
    if m.overlap_histogram.values().any(|&n| n > 0) {
        let _ = writeln!(s, "\noverlap %   records");
        for b in OverlapBucket::ALL {
            let _ = writeln!(s, "{:>9}   {:>7}", b.label(), m.overlap_histogram.get(&b).copied().unwrap_or(0));
        }
    }
    s
}
