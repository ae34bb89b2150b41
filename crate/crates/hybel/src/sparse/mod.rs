//! Sparse candidate generation: exact-match alias lookup ranked by
//! p(entity | surface form), and an Okapi BM25 index over entity abstracts.

mod alias;
mod bm25;

pub use alias::{build_alias_table, lookup_candidates, read_count_records, AliasEntry, AliasTable, CountRecord};
pub use bm25::{build_bm25_index, bm25_search, entity_abstracts, Bm25Index, Bm25Params};

use serde::{Deserialize, Serialize};

/// Surface-form normalization switches. Normalization is idempotent under
/// every flag combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationConfig {
    pub case_fold: bool,
    pub collapse_whitespace: bool,
    pub strip_outer_punct: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            case_fold: true,
            collapse_whitespace: true,
            strip_outer_punct: false,
        }
    }
}

/// Normalize a surface form: case folding, internal-whitespace collapse,
/// outer trim, then optional outer-punctuation strip, in that order.
///
/// The punctuation strip re-trims until a fixed point so the result never
/// regains outer whitespace (which would break idempotence).
pub fn normalize_surface(s: &str, config: &NormalizationConfig) -> String {
    let mut out = if config.case_fold {
        s.to_lowercase()
    } else {
        s.to_string()
    };

    if config.collapse_whitespace {
        let mut collapsed = String::with_capacity(out.len());
        let mut in_ws = false;
        for ch in out.chars() {
            if ch.is_whitespace() {
                if !in_ws {
                    collapsed.push(' ');
                }
                in_ws = true;
            } else {
                collapsed.push(ch);
                in_ws = false;
            }
        }
        out = collapsed;
    }

    let mut trimmed = out.trim();

    if config.strip_outer_punct {
        loop {
            let next = trimmed
                .trim_matches(|c: char| c.is_ascii_punctuation())
                .trim();
            if next == trimmed {
                break;
            }
            trimmed = next;
        }
    }

    trimmed.to_string()
}
