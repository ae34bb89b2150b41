//! Alias table: normalized surface form -> entity candidates scored by the
//! maximum-likelihood conditional probability p(entity | surface form).

use std::collections::HashMap;
use std::io::BufRead;

use crate::candidate::{Method, ScoredCandidate};
use crate::error::{Error, Result};
use crate::kb::EntityStore;
use crate::sparse::{normalize_surface, NormalizationConfig};

/// One candidate under a surface form. `prob` is count over the total count
/// for that surface, no smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasEntry {
    pub entity_id: String,
    pub count: u64,
    pub prob: f64,
}

/// Surface-keyed candidate table. Keys are stored in normalized form and
/// entries are kept in (prob descending, id ascending) order.
#[derive(Debug, Clone)]
pub struct AliasTable {
    entries: HashMap<String, Vec<AliasEntry>>,
    pub normalization: NormalizationConfig,
    /// Count records referencing unknown entity ids, skipped during build.
    pub skipped_unknown: u64,
}

impl AliasTable {
    pub fn entries(&self, normalized_surface: &str) -> Option<&[AliasEntry]> {
        self.entries.get(normalized_surface).map(Vec::as_slice)
    }

    pub fn surface_count(&self) -> usize {
        self.entries.len()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// A raw (surface, entity, count) observation, pre-normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub surface: String,
    pub entity_id: String,
    pub count: u64,
}

/// Parse the alias counts file: three tab-separated columns, no header.
pub fn read_count_records(reader: impl BufRead, path: &str) -> Result<Vec<CountRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io_path(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (surface, entity_id, count) = match (cols.next(), cols.next(), cols.next(), cols.next())
        {
            (Some(s), Some(e), Some(c), None) => (s, e, c),
            _ => {
                return Err(Error::malformed(
                    path,
                    idx + 1,
                    "expected 3 tab-separated columns: surface, entity id, count",
                ))
            }
        };
        let count: u64 = count.trim().parse().map_err(|_| {
            Error::malformed(path, idx + 1, format!("count {count:?} is not an integer"))
        })?;
        if count == 0 {
            return Err(Error::malformed(path, idx + 1, "count must be positive"));
        }
        records.push(CountRecord {
            surface: surface.to_string(),
            entity_id: entity_id.to_string(),
            count,
        });
    }
    Ok(records)
}

/// Build the alias table from count observations plus the store's titles and
/// aliases. Counts for the same (normalized surface, entity) are summed;
/// titles and aliases absent from the count stream are injected with count 1;
/// records referencing unknown entities are skipped and tallied.
pub fn build_alias_table(
    store: &EntityStore,
    counts: &[CountRecord],
    normalization: NormalizationConfig,
) -> AliasTable {
    let mut merged: HashMap<String, HashMap<String, u64>> = HashMap::new();
    let mut skipped_unknown = 0u64;
    for rec in counts {
        if !store.contains(&rec.entity_id) {
            skipped_unknown += 1;
            continue;
        }
        let key = normalize_surface(&rec.surface, &normalization);
        if key.is_empty() {
            continue;
        }
        *merged
            .entry(key)
            .or_default()
            .entry(rec.entity_id.clone())
            .or_insert(0) += rec.count;
    }
    if skipped_unknown > 0 {
        log::warn!("alias table: skipped {skipped_unknown} count records with unknown entity ids");
    }
    for entity in store.iter() {
        for surface in std::iter::once(&entity.title).chain(entity.aliases.iter()) {
            let key = normalize_surface(surface, &normalization);
            if key.is_empty() {
                continue;
            }
            merged
                .entry(key)
                .or_default()
                .entry(entity.id.clone())
                .or_insert(1);
        }
    }

    let mut entries = HashMap::with_capacity(merged.len());
    for (surface, by_entity) in merged {
        let total: u64 = by_entity.values().sum();
        let mut list: Vec<AliasEntry> = by_entity
            .into_iter()
            .map(|(entity_id, count)| AliasEntry {
                entity_id,
                count,
                prob: count as f64 / total as f64,
            })
            .collect();
        list.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then_with(|| a.entity_id.cmp(&b.entity_id))
        });
        entries.insert(surface, list);
    }
    AliasTable {
        entries,
        normalization,
        skipped_unknown,
    }
}

/// All exact-match candidates for a surface form, scored by conditional
/// probability. With no `limit` every entry is returned (the evaluation
/// mode); otherwise the top entries by probability.
pub fn lookup_candidates(
    table: &AliasTable,
    surface: &str,
    limit: Option<usize>,
) -> Vec<ScoredCandidate> {
    let key = normalize_surface(surface, &table.normalization);
    let Some(entries) = table.entries(&key) else {
        return Vec::new();
    };
    let take = limit.unwrap_or(entries.len()).min(entries.len());
    entries[..take]
        .iter()
        .map(|e| ScoredCandidate::new(e.entity_id.clone(), e.prob, Method::Lookup))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::Entity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Cursor;

    fn entity(id: &str, title: &str, aliases: &[&str]) -> Entity {
        Entity {
            id: id.into(),
            title: title.into(),
            long_description: String::new(),
            short_description: String::new(),
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
            type_tags: vec![],
            pagerank: 0.0,
            link_count: 0,
        }
    }

    fn amber_store() -> EntityStore {
        EntityStore::from_entities(vec![
            entity("Q1202607", "AMBER Alert", &["Amber"]),
            entity("Q8197166", "Amber, Rajasthan", &["Amber"]),
            entity("Q290856", "Amber Rose", &[]),
        ])
        .unwrap()
    }

    #[test]
    fn counts_become_conditional_probabilities() {
        let store = amber_store();
        let counts = vec![
            CountRecord {
                surface: "amber".into(),
                entity_id: "Q290856".into(),
                count: 3,
            },
            CountRecord {
                surface: "amber".into(),
                entity_id: "Q1202607".into(),
                count: 1,
            },
        ];
        let table = build_alias_table(&store, &counts, NormalizationConfig::default());
        let entries = table.entries("amber").unwrap();
        // alias injection adds Q8197166 with count 1 -> totals 3 + 1 + 1
        let by_id: HashMap<&str, f64> = entries
            .iter()
            .map(|e| (e.entity_id.as_str(), e.prob))
            .collect();
        assert_eq!(by_id["Q290856"], 3.0 / 5.0);
        assert_eq!(by_id["Q1202607"], 1.0 / 5.0);
        assert_eq!(by_id["Q8197166"], 1.0 / 5.0);
    }

    #[test]
    fn probabilities_without_injection_match_mle() {
        let store = EntityStore::from_entities(vec![
            entity("Q290856", "Amber Rose", &[]),
            entity("Q1202607", "AMBER Alert", &[]),
        ])
        .unwrap();
        let counts = vec![
            CountRecord {
                surface: "amber".into(),
                entity_id: "Q290856".into(),
                count: 3,
            },
            CountRecord {
                surface: "amber".into(),
                entity_id: "Q1202607".into(),
                count: 1,
            },
        ];
        let table = build_alias_table(&store, &counts, NormalizationConfig::default());
        let entries = table.entries("amber").unwrap();
        assert_eq!(entries[0].entity_id, "Q290856");
        assert_eq!(entries[0].prob, 0.75);
        assert_eq!(entries[1].prob, 0.25);
        // limit=1 keeps only the most probable entry
        let top = lookup_candidates(&table, "amber", Some(1));
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].id, "Q290856");
    }

    #[test]
    fn titles_are_injected_with_count_one() {
        let store = EntityStore::from_entities(vec![entity("Q290856", "Amber Rose", &[])]).unwrap();
        let table = build_alias_table(&store, &[], NormalizationConfig::default());
        let entries = table.entries("amber rose").unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].count, 1);
        assert_eq!(entries[0].prob, 1.0);
    }

    #[test]
    fn exact_match_respects_alias_boundaries() {
        let table = build_alias_table(&amber_store(), &[], NormalizationConfig::default());
        let ids: Vec<String> = lookup_candidates(&table, "Amber", None)
            .into_iter()
            .map(|c| c.id)
            .collect();
        assert!(ids.contains(&"Q1202607".to_string()));
        assert!(ids.contains(&"Q8197166".to_string()));
        assert!(!ids.contains(&"Q290856".to_string()));
    }

    #[test]
    fn unseen_surface_is_empty() {
        let table = build_alias_table(&amber_store(), &[], NormalizationConfig::default());
        assert!(lookup_candidates(&table, "zzqx", None).is_empty());
    }

    #[test]
    fn lookup_is_normalization_invariant() {
        let table = build_alias_table(&amber_store(), &[], NormalizationConfig::default());
        for raw in ["  AMBER ", "Amber", "amber"] {
            let normalized = normalize_surface(raw, &table.normalization);
            assert_eq!(
                lookup_candidates(&table, raw, None),
                lookup_candidates(&table, &normalized, None)
            );
        }
    }

    #[test]
    fn unknown_entity_ids_are_skipped_with_a_tally() {
        let store = EntityStore::from_entities(vec![entity("Q1", "One", &[])]).unwrap();
        let counts = vec![CountRecord {
            surface: "ghost".into(),
            entity_id: "Q404".into(),
            count: 9,
        }];
        let table = build_alias_table(&store, &counts, NormalizationConfig::default());
        assert_eq!(table.skipped_unknown, 1);
        assert!(table.entries("ghost").is_none());
    }

    #[test]
    fn tsv_parser_reports_malformed_lines() {
        let ok = read_count_records(Cursor::new("amber\tQ1\t3\n"), "t").unwrap();
        assert_eq!(ok[0].count, 3);
        assert!(read_count_records(Cursor::new("amber\tQ1\n"), "t").is_err());
        assert!(read_count_records(Cursor::new("amber\tQ1\tx\n"), "t").is_err());
        assert!(read_count_records(Cursor::new("a\tb\tc\td\n"), "t").is_err());
    }

    #[test]
    fn per_surface_probabilities_sum_to_one_on_random_streams() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let entities: Vec<Entity> = (0..30)
            .map(|i| entity(&format!("Q{i}"), &format!("Entity {i}"), &[]))
            .collect();
        let store = EntityStore::from_entities(entities).unwrap();
        let mut counts = Vec::new();
        for _ in 0..500 {
            counts.push(CountRecord {
                surface: format!("surf{}", rng.gen_range(0..40)),
                entity_id: format!("Q{}", rng.gen_range(0..35)), // some unknown
                count: rng.gen_range(1..50),
            });
        }
        let table = build_alias_table(&store, &counts, NormalizationConfig::default());
        for surface in table.surfaces() {
            let sum: f64 = table.entries(surface).unwrap().iter().map(|e| e.prob).sum();
            assert!(
                (sum - 1.0).abs() < 1e-9,
                "probs for {surface:?} sum to {sum}"
            );
        }
    }
}
