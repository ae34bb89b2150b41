//! Retrieval method tags and the scored-candidate result type shared by all backends.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Candidate-generation method that produced (or can produce) a candidate.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lookup,
    Dense,
    Bm25,
}

impl Method {
    /// Report column order: lookup, dense, bm25.
    pub const ALL: [Method; 3] = [Method::Lookup, Method::Dense, Method::Bm25];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lookup => "lookup",
            Method::Dense => "dense",
            Method::Bm25 => "bm25",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "lookup" => Ok(Method::Lookup),
            "dense" => Ok(Method::Dense),
            "bm25" => Ok(Method::Bm25),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

/// One ranked retrieval result.
///
/// Within a result list the ordering contract is score-descending with
/// ascending-id tie-break, so identical inputs always yield identical lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub id: String,
    pub score: f64,
    pub method: Method,
}

impl ScoredCandidate {
    pub fn new(id: impl Into<String>, score: f64, method: Method) -> Self {
        ScoredCandidate {
            id: id.into(),
            score,
            method,
        }
    }
}

/// The single ordering contract used everywhere results are ranked:
/// score descending, then id ascending.
pub fn rank_order(score_a: f64, id_a: &str, score_b: f64, id_b: &str) -> Ordering {
    score_b
        .total_cmp(&score_a)
        .then_with(|| id_a.cmp(id_b))
}

/// Canonicalize a score for ordering: collapses -0.0 to 0.0 so that
/// `total_cmp` agrees with numeric equality on ties.
pub(crate) fn clean_score(s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_order_prefers_high_score_then_low_id() {
        assert_eq!(rank_order(2.0, "b", 1.0, "a"), Ordering::Less);
        assert_eq!(rank_order(1.0, "a", 1.0, "b"), Ordering::Less);
        assert_eq!(rank_order(1.0, "b", 1.0, "a"), Ordering::Greater);
    }

    #[test]
    fn negative_zero_ties_with_zero() {
        let a = clean_score(-0.0);
        let b = clean_score(0.0);
        assert_eq!(a.total_cmp(&b), Ordering::Equal);
    }

    #[test]
    fn method_round_trips_through_serde() {
        let s = serde_json::to_string(&Method::Bm25).unwrap();
        assert_eq!(s, "\"bm25\"");
        let m: Method = serde_json::from_str(&s).unwrap();
        assert_eq!(m, Method::Bm25);
    }
}
