//! Per-span candidate generation across methods and the hybrid union.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::candidate::Method;
use crate::dense::{knn_search, DenseIndex};
use crate::encode::{build_mention_input, mention_key, Provider, SpanAnnotation};
use crate::error::{Error, Result};
use crate::kb::EntityStore;
use crate::sparse::{bm25_search, lookup_candidates, AliasTable, Bm25Index, NormalizationConfig};

/// How one method contributed to a candidate set: ranked to a cutoff
/// (`k: Some(n)`) or retrieve-all (`k: None`, the lookup evaluation mode).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    pub k: Option<usize>,
}

/// One candidate with its per-method provenance and scores. Scores are kept
/// side by side per method; nothing is fused across methods.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub methods: BTreeSet<Method>,
    pub scores: BTreeMap<Method, f64>,
}

/// Retrieved candidates for one span. Candidates are unique by entity id and
/// every candidate names at least one producing method.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub span: SpanAnnotation,
    pub candidates: Vec<Candidate>,
    pub method_config: Vec<MethodSpec>,
}

impl CandidateSet {
    pub fn tweet_id(&self) -> &str {
        &self.span.tweet_id
    }

    pub fn contains(&self, id: &str) -> bool {
        self.candidates.iter().any(|c| c.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.id.as_str())
    }
}

/// Everything retrieval can draw on. Backends are immutable once built;
/// spans may be processed in parallel.
pub struct Backends {
    pub store: EntityStore,
    pub provider: Provider,
    pub alias: Option<AliasTable>,
    pub bm25: Option<Bm25Index>,
    pub dense: Option<DenseIndex>,
    pub normalization: NormalizationConfig,
    /// Ranked-method cutoff used where no explicit k is passed.
    pub k: usize,
}

/// Generate candidates for one span with one method. Dense and BM25 return
/// at most `k` ranked candidates; lookup returns every exact match.
pub fn retrieve(
    backends: &Backends,
    method: Method,
    tweet_text: &str,
    span: &SpanAnnotation,
    k: usize,
) -> Result<CandidateSet> {
    let mention = build_mention_input(tweet_text, span)?;
    let (scored, spec) = match method {
        Method::Lookup => {
            let table = backends
                .alias
                .as_ref()
                .ok_or(Error::MissingBackend(Method::Lookup))?;
            (
                lookup_candidates(table, &span.surface, None),
                MethodSpec {
                    method,
                    k: None,
                },
            )
        }
        Method::Bm25 => {
            let index = backends
                .bm25
                .as_ref()
                .ok_or(Error::MissingBackend(Method::Bm25))?;
            (
                bm25_search(index, &span.surface, k),
                MethodSpec { method, k: Some(k) },
            )
        }
        Method::Dense => {
            let index = backends
                .dense
                .as_ref()
                .ok_or(Error::MissingBackend(Method::Dense))?;
            let vector = backends
                .provider
                .mention_vector(&mention_key(span), &mention.render())?;
            (
                knn_search(index, &vector, k)?,
                MethodSpec { method, k: Some(k) },
            )
        }
    };
    let candidates = scored
        .into_iter()
        .map(|c| Candidate {
            id: c.id,
            methods: BTreeSet::from([method]),
            scores: BTreeMap::from([(method, c.score)]),
        })
        .collect();
    Ok(CandidateSet {
        span: span.clone(),
        candidates,
        method_config: vec![spec],
    })
}

/// Union of two candidate sets for the same span: ids deduplicated,
/// provenance merged, per-method scores kept side by side. Ordering is a's
/// candidates in their ranking, then b's candidates not already present.
pub fn hybrid_union(a: &CandidateSet, b: &CandidateSet) -> Result<CandidateSet> {
    if a.span.key() != b.span.key() {
        return Err(Error::SpanMismatch {
            a: format!("{:?}", a.span.key()),
            b: format!("{:?}", b.span.key()),
        });
    }
    let mut candidates: Vec<Candidate> = a.candidates.clone();
    let mut position: HashMap<String, usize> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.clone(), i))
        .collect();
    for c in &b.candidates {
        match position.get(&c.id) {
            Some(&i) => {
                let existing = &mut candidates[i];
                existing.methods.extend(c.methods.iter().copied());
                for (m, s) in &c.scores {
                    existing.scores.entry(*m).or_insert(*s);
                }
            }
            None => {
                position.insert(c.id.clone(), candidates.len());
                candidates.push(c.clone());
            }
        }
    }
    let mut method_config = a.method_config.clone();
    for spec in &b.method_config {
        if !method_config.iter().any(|s| s.method == spec.method) {
            method_config.push(*spec);
        }
    }
    Ok(CandidateSet {
        span: a.span.clone(),
        candidates,
        method_config,
    })
}

/// Serialized row of the candidates output file.
#[derive(Debug, Serialize, Deserialize)]
struct CandidateSetRecord {
    tweet_id: String,
    start: usize,
    end: usize,
    candidates: Vec<CandidateRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateRecord {
    id: String,
    methods: Vec<Method>,
    scores: BTreeMap<Method, f64>,
}

/// Write candidate sets as line-delimited JSON records.
pub fn write_candidate_sets(w: &mut impl Write, sets: &[CandidateSet]) -> Result<()> {
    for set in sets {
        let record = CandidateSetRecord {
            tweet_id: set.span.tweet_id.clone(),
            start: set.span.start,
            end: set.span.end,
            candidates: set
                .candidates
                .iter()
                .map(|c| CandidateRecord {
                    id: c.id.clone(),
                    methods: c.methods.iter().copied().collect(),
                    scores: c.scores.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut *w, &record)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read candidate-set records back. Spans are reconstructed without surface
/// or gold information, which lives in the dataset file.
pub fn read_candidate_sets(r: impl BufRead, path: &str) -> Result<Vec<CandidateSet>> {
    let mut sets = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io_path(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CandidateSetRecord = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
        let methods_present: BTreeSet<Method> = record
            .candidates
            .iter()
            .flat_map(|c| c.methods.iter().copied())
            .collect();
        sets.push(CandidateSet {
            span: SpanAnnotation {
                tweet_id: record.tweet_id,
                start: record.start,
                end: record.end,
                surface: String::new(),
                gold_ids: vec![],
                source: Default::default(),
            },
            candidates: record
                .candidates
                .into_iter()
                .map(|c| Candidate {
                    id: c.id,
                    methods: c.methods.into_iter().collect(),
                    scores: c.scores,
                })
                .collect(),
            method_config: methods_present
                .into_iter()
                .map(|m| MethodSpec {
                    method: m,
                    k: match m {
                        Method::Lookup => None,
                        _ => Some(usize::MAX),
                    },
                })
                .collect(),
        });
    }
    Ok(sets)
}
