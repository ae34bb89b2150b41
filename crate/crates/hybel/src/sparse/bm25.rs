//! Okapi BM25 over entity abstracts.
//!
//! Scoring uses idf = ln((N - df + 0.5) / (df + 0.5) + 1), which stays
//! non-negative even for terms present in almost every document of a tiny
//! corpus.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::candidate::{Method, ScoredCandidate};
use crate::encode::{build_entity_input, tokenize};
use crate::error::{Error, Result};
use crate::kb::{DescriptionMode, EntityStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

/// Inverted index over (entity id, abstract) documents.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    postings: HashMap<String, Vec<(u32, u32)>>, // term -> (doc idx, tf)
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    pub params: Bm25Params,
}

impl Bm25Index {
    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, id: &str) -> Option<u32> {
        self.doc_ids
            .iter()
            .position(|d| d == id)
            .map(|i| self.doc_lengths[i])
    }

    pub fn term_frequency(&self, term: &str, id: &str) -> u32 {
        let Some(idx) = self.doc_ids.iter().position(|d| d == id) else {
            return 0;
        };
        self.postings
            .get(term)
            .and_then(|p| p.iter().find(|(d, _)| *d as usize == idx))
            .map_or(0, |(_, tf)| *tf)
    }
}

/// Build the index from (entity id, abstract text) documents. Empty
/// abstracts yield length-0 documents with no postings; duplicate doc ids
/// are an error.
pub fn build_bm25_index(
    docs: impl IntoIterator<Item = (String, String)>,
    params: Bm25Params,
) -> Result<Bm25Index> {
    let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
    let mut doc_ids = Vec::new();
    let mut doc_lengths = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (id, text) in docs {
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let idx = doc_ids.len() as u32;
        let tokens = tokenize(&text);
        doc_lengths.push(tokens.len() as u32);
        let mut tf: HashMap<String, u32> = HashMap::new();
        for t in tokens {
            *tf.entry(t).or_insert(0) += 1;
        }
        for (term, freq) in tf {
            postings.entry(term).or_default().push((idx, freq));
        }
        doc_ids.push(id);
    }
    for list in postings.values_mut() {
        list.sort_by_key(|&(d, _)| d);
    }
    let avg_doc_length = if doc_ids.is_empty() {
        0.0
    } else {
        doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_ids.len() as f64
    };
    Ok(Bm25Index {
        postings,
        doc_ids,
        doc_lengths,
        avg_doc_length,
        params,
    })
}

/// Abstracts for a BM25 corpus: the first `max_sentences` sentences of each
/// entity's long description, in store order.
pub fn entity_abstracts(store: &EntityStore, max_sentences: usize) -> Vec<(String, String)> {
    store
        .iter()
        .map(|e| {
            let input = build_entity_input(e, DescriptionMode::Long, max_sentences);
            (e.id.clone(), input.description)
        })
        .collect()
}

/// Okapi BM25 search. Query terms are tokenized like documents; repeated
/// query terms contribute once per occurrence. Documents scoring zero are
/// omitted; results follow the score-descending, id-ascending contract.
pub fn bm25_search(index: &Bm25Index, query: &str, k: usize) -> Vec<ScoredCandidate> {
    if k == 0 || index.doc_count() == 0 {
        return Vec::new();
    }
    let n = index.doc_count() as f64;
    let Bm25Params { k1, b } = index.params;
    let avg = index.avg_doc_length;
    let mut scores: HashMap<u32, f64> = HashMap::new();
    for term in tokenize(query) {
        let Some(postings) = index.postings.get(&term) else {
            continue;
        };
        let df = postings.len() as f64;
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        for &(doc, tf) in postings {
            let len = f64::from(index.doc_lengths[doc as usize]);
            let tf = f64::from(tf);
            let contrib = idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
            *scores.entry(doc).or_insert(0.0) += contrib;
        }
    }
    let mut scored: Vec<(f64, &str)> = scores
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .map(|(doc, s)| (s, index.doc_ids[doc as usize].as_str()))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.truncate(k);
    scored
        .into_iter()
        .map(|(score, id)| ScoredCandidate::new(id, score, Method::Bm25))
        .collect()
}
