//! Entity knowledge-base store: load, validate, type-filter, and serve
//! entity records and their descriptions.
//!
//! The entities file is line-delimited JSON, one record per line, so stores
//! of any size can be streamed without holding the raw file in memory.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{normalize_surface, NormalizationConfig};

/// One knowledge-base record. `id` and `title` are required; everything else
/// defaults to empty/zero because real KB coverage is partial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub long_description: String,
    #[serde(default)]
    pub short_description: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub type_tags: Vec<String>,
    #[serde(default)]
    pub pagerank: f64,
    #[serde(default)]
    pub link_count: u64,
}

/// Which description field to use when rendering an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionMode {
    #[default]
    Long,
    Short,
}

/// Immutable collection of entities, keyed by id. Entities keep their load
/// order; all derived results (rankings, tables) are order-independent.
#[derive(Debug, Clone)]
pub struct EntityStore {
    entities: Vec<Entity>,
    by_id: HashMap<String, usize>,
    pub description_mode: DescriptionMode,
}

impl EntityStore {
    pub fn from_entities(entities: Vec<Entity>) -> Result<Self> {
        let mut store = EntityStore {
            entities: Vec::with_capacity(entities.len()),
            by_id: HashMap::with_capacity(entities.len()),
            description_mode: DescriptionMode::default(),
        };
        for e in entities {
            store.push(e)?;
        }
        Ok(store)
    }

    fn push(&mut self, mut entity: Entity) -> Result<()> {
        if entity.id.is_empty() {
            return Err(Error::InvalidInput("entity with empty id".into()));
        }
        if entity.title.is_empty() {
            return Err(Error::InvalidInput(format!(
                "entity {:?} with empty title",
                entity.id
            )));
        }
        if self.by_id.contains_key(&entity.id) {
            return Err(Error::DuplicateId(entity.id));
        }
        dedup_aliases(&mut entity.aliases);
        self.by_id.insert(entity.id.clone(), self.entities.len());
        self.entities.push(entity);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.by_id.get(id).map(|&i| &self.entities[i])
    }

    /// Lookup that fails cleanly on unknown ids.
    pub fn require(&self, id: &str) -> Result<&Entity> {
        self.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Entity> {
        self.entities.iter()
    }

    /// The requested description field, verbatim; empty text if that field
    /// is empty. Errors on unknown ids.
    pub fn description(&self, id: &str, mode: DescriptionMode) -> Result<&str> {
        let e = self.require(id)?;
        Ok(match mode {
            DescriptionMode::Long => &e.long_description,
            DescriptionMode::Short => &e.short_description,
        })
    }
}

/// Drop aliases that collide after surface normalization, keeping the first.
fn dedup_aliases(aliases: &mut Vec<String>) {
    let cfg = NormalizationConfig::default();
    let mut seen = HashSet::new();
    aliases.retain(|a| seen.insert(normalize_surface(a, &cfg)));
}

/// Load an entity store from a line-delimited JSON stream. Blank lines are
/// skipped; malformed lines and duplicate ids are errors with line numbers.
pub fn load_entities(reader: impl BufRead, path: &str) -> Result<EntityStore> {
    let mut store = EntityStore {
        entities: Vec::new(),
        by_id: HashMap::new(),
        description_mode: DescriptionMode::default(),
    };
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io_path(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entity: Entity = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
        store.push(entity).map_err(|e| match e {
            Error::DuplicateId(id) => {
                Error::malformed(path, idx + 1, format!("duplicate id {id:?}"))
            }
            Error::InvalidInput(msg) => Error::malformed(path, idx + 1, msg),
            other => other,
        })?;
    }
    Ok(store)
}

pub fn load_entities_file(path: &Path) -> Result<EntityStore> {
    let file = File::open(path).map_err(|e| Error::io_path(path.display().to_string(), e))?;
    load_entities(BufReader::new(file), &path.display().to_string())
}

/// How a [`TypeFilter`] decides: drop an entity when any of its type tags
/// appears on the denylist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterMode {
    #[default]
    DropIfAnyMatch,
}

/// Type-tag denylist used to remove non-entity pages (disambiguation pages,
/// list pages, and similar) from a store.
#[derive(Debug, Clone, Default)]
pub struct TypeFilter {
    pub denylist: HashSet<String>,
    pub mode: FilterMode,
}

impl TypeFilter {
    pub fn new(denylist: impl IntoIterator<Item = String>) -> Self {
        TypeFilter {
            denylist: denylist.into_iter().collect(),
            mode: FilterMode::DropIfAnyMatch,
        }
    }

    fn drops(&self, entity: &Entity) -> bool {
        entity.type_tags.iter().any(|t| self.denylist.contains(t))
    }
}

/// Parse a denylist file: one type-tag id per line, `#` starts a comment.
pub fn load_denylist(reader: impl BufRead, path: &str) -> Result<TypeFilter> {
    let mut tags = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io_path(path, e))?;
        let content = line.split('#').next().unwrap_or("").trim();
        if !content.is_empty() {
            tags.push(content.to_string());
        }
    }
    Ok(TypeFilter::new(tags))
}

pub fn load_denylist_file(path: &Path) -> Result<TypeFilter> {
    let file = File::open(path).map_err(|e| Error::io_path(path.display().to_string(), e))?;
    load_denylist(BufReader::new(file), &path.display().to_string())
}

/// Return a store containing exactly the entities whose type tags are
/// disjoint from the denylist. The input store is left untouched, and
/// filtering twice with the same filter changes nothing.
pub fn apply_type_filter(store: &EntityStore, filter: &TypeFilter) -> EntityStore {
    let retained: Vec<Entity> = store
        .iter()
        .filter(|e| !filter.drops(e))
        .cloned()
        .collect();
    let mut out = EntityStore::from_entities(retained)
        .expect("filtered entities come from a validated store");
    out.description_mode = store.description_mode;
    out
}
