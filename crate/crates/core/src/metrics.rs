//! Evaluation metrics: exact match, relation overlap and reasoning depth.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("overlap ratio is undefined for an empty gold relation set")]
    EmptyGold,
}

/// Case-fold, trim, collapse internal whitespace, strip terminal periods.
/// Idempotent.
pub fn normalize(text: &str) -> String {
    let mut s = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    loop {
        let trimmed = s.trim_end_matches('.').trim_end();
        if trimmed.len() == s.len() {
            return s;
        }
        s = trimmed.to_string();
    }
}

pub fn exact_match(prediction: &str, golds: &[String]) -> bool {
    let p = normalize(prediction);
    golds.iter().any(|g| normalize(g) == p)
}

/// `|explored ∩ gold| / |gold|` over deduplicated relation names.
pub fn overlap_ratio<'a>(
    explored: impl IntoIterator<Item = &'a str>,
    gold: impl IntoIterator<Item = &'a str>,
) -> Result<f64, MetricError> {
    let explored: BTreeSet<&str> = explored.into_iter().collect();
    let gold: BTreeSet<&str> = gold.into_iter().collect();
    if gold.is_empty() {
        return Err(MetricError::EmptyGold);
    }
    let hit = gold.iter().filter(|g| explored.contains(*g)).count();
    Ok(hit as f64 / gold.len() as f64)
}

/// Relation predicates in a gold query: `ns:` tokens with at least two dots,
/// which excludes entity ids such as `ns:m.0abc`.
pub fn gold_relations(query: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = query;
    while let Some(pos) = rest.find("ns:") {
        let boundary = pos == 0 || !rest[..pos].ends_with(|c: char| c.is_alphanumeric() || c == '_');
        let tail = &rest[pos + 3..];
        let end = tail
            .find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.'))
            .unwrap_or(tail.len());
        let token = tail[..end].trim_end_matches('.');
        if boundary && token.matches('.').count() >= 2 {
            out.insert(token.to_string());
        }
        rest = &tail[end..];
    }
    out
}

pub fn reasoning_depth(query: &str) -> usize {
    gold_relations(query).len()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OverlapBucket {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "(0,25]")]
    UpTo25,
    #[serde(rename = "(25,50]")]
    UpTo50,
    #[serde(rename = "(50,75]")]
    UpTo75,
    #[serde(rename = "(75,100)")]
    Below100,
    #[serde(rename = "100")]
    Full,
}

impl OverlapBucket {
    pub const ALL: [OverlapBucket; 6] = [
        OverlapBucket::Zero,
        OverlapBucket::UpTo25,
        OverlapBucket::UpTo50,
        OverlapBucket::UpTo75,
        OverlapBucket::Below100,
        OverlapBucket::Full,
    ];

    pub fn of(ratio: f64) -> Self {
        let pct = ratio * 100.0;
        if ratio <= 0.0 {
            OverlapBucket::Zero
        } else if ratio >= 1.0 {
            OverlapBucket::Full
        } else if pct <= 25.0 {
            OverlapBucket::UpTo25
        } else if pct <= 50.0 {
            OverlapBucket::UpTo50
        } else if pct <= 75.0 {
            OverlapBucket::UpTo75
        } else {
            OverlapBucket::Below100
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OverlapBucket::Zero => "0",
            OverlapBucket::UpTo25 => "(0,25]",
            OverlapBucket::UpTo50 => "(25,50]",
            OverlapBucket::UpTo75 => "(50,75]",
            OverlapBucket::Below100 => "(75,100)",
            OverlapBucket::Full => "100",
        }
    }
}

/// What evaluation keeps from one dataset record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub id: String,
    pub prediction: String,
    pub correct: bool,
    /// Ledger total for the run.
    pub calls: usize,
    /// Calls including topic extraction.
    pub all_calls: usize,
    pub depth_reached: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records: usize,
    pub correct: usize,
    pub hits_at_1: f64,
    pub average_calls: f64,
    pub average_calls_with_extraction: f64,
    pub errors: usize,
    /// Accuracy by gold reasoning depth.
    pub per_depth: Vec<DepthRow>,
    pub overlap_histogram: BTreeMap<OverlapBucket, usize>,
}

impl MetricsReport {
    pub fn aggregate(results: &[RecordResult]) -> Self {
        let n = results.len();
        let correct = results.iter().filter(|r| r.correct).count();
        let mean = |f: fn(&RecordResult) -> usize| {
            if n == 0 {
                0.0
            } else {
                results.iter().map(f).sum::<usize>() as f64 / n as f64
            }
        };
        let mut by_depth: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for r in results {
            if let Some(d) = r.gold_depth {
                let e = by_depth.entry(d).or_default();
                e.0 += 1;
                e.1 += usize::from(r.correct);
            }
        }
        let mut overlap_histogram: BTreeMap<OverlapBucket, usize> =
            OverlapBucket::ALL.iter().map(|b| (*b, 0)).collect();
        for ratio in results.iter().filter_map(|r| r.overlap) {
            *overlap_histogram.entry(OverlapBucket::of(ratio)).or_default() += 1;
        }
        Self {
            records: n,
            correct,
            hits_at_1: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
            average_calls: mean(|r| r.calls),
            average_calls_with_extraction: mean(|r| r.all_calls),
            errors: results.iter().filter(|r| r.error.is_some()).count(),
            per_depth: by_depth
                .into_iter()
                .map(|(depth, (total, correct))| DepthRow {
                    depth,
                    total,
                    correct,
                    accuracy: correct as f64 / total as f64,
                })
                .collect(),
            overlap_histogram,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn exact_match_cases() {
        assert!(exact_match("Massachusetts.", &s(&["Massachusetts"])));
        assert!(exact_match("washington, d.c.", &s(&["Washington, D.C."])));
        assert!(!exact_match("Florida", &s(&["Pittsburgh Pennsylvania"])));
        assert!(exact_match("  New   York ", &s(&["new york"])));
    }

    #[test]
    fn normalize_is_idempotent() {
        for t in ["A. . ", "x..", "  Foo  Bar. ", "", "...", "D.C."] {
            assert_eq!(normalize(&normalize(t)), normalize(t));
        }
    }

    #[test]
    fn overlap_cases() {
        assert_eq!(overlap_ratio(["r1", "r2"], ["r1", "r2"]), Ok(1.0));
        assert_eq!(overlap_ratio(["r1"], ["r1", "r2"]), Ok(0.5));
        assert_eq!(overlap_ratio(["r3"], ["r1", "r2"]), Ok(0.0));
        assert_eq!(overlap_ratio(["r1"], []), Err(MetricError::EmptyGold));
    }

    #[test]
    fn depth_counting() {
        assert_eq!(reasoning_depth("?x ns:a.b.c ?y . ?y ns:d.e.f ?z ."), 2);
        assert_eq!(reasoning_depth(""), 0);
        assert_eq!(reasoning_depth("ns:m.0abc ns:a.b.c ?x . ?x ns:a.b.c ?y"), 1);
        let q = "PREFIX ns: <http://rdf.freebase.com/ns/>\nSELECT DISTINCT ?x\nWHERE {\n\
                 ?c ns:sports.sports_team.team_mascot ns:m.03_dwn .\n\
                 ?c ns:base.schemastaging.sports_team_extra.training_ground ?y .\n\
                 ?y ns:base.schemastaging.team_training_ground_relationship.facility ?x .\n}";
        assert_eq!(reasoning_depth(q), 3);
    }

    #[test]
    fn buckets() {
        assert_eq!(OverlapBucket::of(0.0), OverlapBucket::Zero);
        assert_eq!(OverlapBucket::of(0.25), OverlapBucket::UpTo25);
        assert_eq!(OverlapBucket::of(0.5), OverlapBucket::UpTo50);
        assert_eq!(OverlapBucket::of(2.0 / 3.0), OverlapBucket::UpTo75);
        assert_eq!(OverlapBucket::of(0.8), OverlapBucket::Below100);
        assert_eq!(OverlapBucket::of(1.0), OverlapBucket::Full);
    }

    #[test]
    fn aggregate_counts() {
        let rec = |id: &str, correct: bool, overlap: Option<f64>| RecordResult {
            id: id.into(),
            prediction: String::new(),
            correct,
            calls: 4,
            all_calls: 5,
            depth_reached: 1,
            gold_depth: Some(1),
            overlap,
            fallback: false,
            error: None,
        };
        let r = MetricsReport::aggregate(&[
            rec("1", true, Some(1.0)),
            rec("2", true, Some(0.0)),
            rec("3", false, Some(0.5)),
            rec("4", true, Some(0.5)),
        ]);
        assert_eq!(r.hits_at_1, 0.75);
        assert_eq!(r.average_calls, 4.0);
        assert_eq!(r.overlap_histogram.values().sum::<usize>(), 4);
        assert_eq!(r.per_depth, vec![DepthRow { depth: 1, total: 4, correct: 3, accuracy: 0.75 }]);
    }
}
