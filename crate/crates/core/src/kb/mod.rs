//! Cultural knowledge base: record loading, alias indexing and
//! mention-to-entity matching.

mod matching;
mod normalize;

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::category::Category;

pub use matching::{fuzzy_score, match_entity, MatchCandidate, MatchConfig, MatchMethod};
pub use normalize::normalize_text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionalVariant {
    pub region: String,
    pub note: String,
}

/// One catalogued cultural concept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CulturalEntity {
    pub id: String,
    pub canonical_name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub category: Category,
    pub description: String,
    #[serde(default)]
    pub historical_context: String,
    #[serde(default)]
    pub ceremonial_function: String,
    #[serde(default)]
    pub regional_variants: Vec<RegionalVariant>,
    #[serde(default)]
    pub source: String,
}

impl CulturalEntity {
    /// Canonical name first, then the declared aliases.
    pub fn all_names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.canonical_name.as_str()).chain(self.aliases.iter().map(String::as_str))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: unknown category `{category}` for entity `{id}`")]
    UnknownCategory { line: usize, id: String, category: String },
    #[error("line {line}: entity `{id}`: {message}")]
    Invalid { line: usize, id: String, message: String },
    #[error("entity `{0}` not found")]
    NotFound(String),
    #[error("reading knowledge base: {0}")]
    Io(#[from] std::io::Error),
}

// Category is read as text first so the error can name the entity.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntity {
    id: String,
    canonical_name: String,
    #[serde(default)]
    aliases: Vec<String>,
    category: String,
    description: String,
    #[serde(default)]
    historical_context: String,
    #[serde(default)]
    ceremonial_function: String,
    #[serde(default)]
    regional_variants: Vec<RegionalVariant>,
    #[serde(default)]
    source: String,
}

#[derive(Debug, Clone)]
pub(crate) struct AliasEntry {
    pub entity: usize,
    pub alias: String,
    pub folded: String,
}

/// Immutable, indexed store of cultural entities.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    entities: Vec<CulturalEntity>,
    by_id: HashMap<String, usize>,
    pub(crate) aliases: Vec<AliasEntry>,
    pub(crate) plain_index: HashMap<String, Vec<usize>>,
    pub(crate) folded_index: HashMap<String, Vec<usize>>,
}

impl KnowledgeBase {
    /// A store with no entities; every match fails.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_entities(entities: Vec<CulturalEntity>) -> Result<Self, KbError> {
        let mut kb = KnowledgeBase::default();
        for (i, e) in entities.into_iter().enumerate() {
            kb.insert(i + 1, e)?;
        }
        Ok(kb)
    }

    fn insert(&mut self, line: usize, entity: CulturalEntity) -> Result<(), KbError> {
        if entity.id.trim().is_empty() {
            return Err(KbError::Invalid {
                line,
                id: entity.id,
                message: "empty id".into(),
            });
        }
        if normalize_text(&entity.canonical_name, false).is_empty() {
            return Err(KbError::Invalid {
                line,
                id: entity.id,
                message: "empty canonical_name".into(),
            });
        }
        if self.by_id.contains_key(&entity.id) {
            return Err(KbError::DuplicateId { line, id: entity.id });
        }
        let idx = self.entities.len();
        for name in entity.all_names() {
            let plain = normalize_text(name, false);
            if plain.is_empty() {
                continue;
            }
            let folded = normalize_text(name, true);
            let slot = self.aliases.len();
            self.plain_index.entry(plain).or_default().push(slot);
            self.folded_index.entry(folded.clone()).or_default().push(slot);
            self.aliases.push(AliasEntry {
                entity: idx,
                alias: name.to_string(),
                folded,
            });
        }
        self.by_id.insert(entity.id.clone(), idx);
        self.entities.push(entity);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Entities in load order.
    pub fn entities(&self) -> &[CulturalEntity] {
        &self.entities
    }

    pub fn entity(&self, id: &str) -> Option<&CulturalEntity> {
        self.by_id.get(id).map(|&i| &self.entities[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub(crate) fn entity_at(&self, idx: usize) -> &CulturalEntity {
        &self.entities[idx]
    }

    /// Entity ids whose alias normalizes (without folding) to `normalized_alias`.
    pub fn alias_ids(&self, normalized_alias: &str) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .plain_index
            .get(normalized_alias)
            .into_iter()
            .flatten()
            .map(|&slot| self.entities[self.aliases[slot].entity].id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Reads line-delimited entity records. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn load_kb<R: BufRead>(source: R) -> Result<KnowledgeBase, KbError> {
    let mut kb = KnowledgeBase::default();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEntity = serde_json::from_str(&line).map_err(|e| KbError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let category = raw.category.parse::<Category>().map_err(|_| KbError::UnknownCategory {
            line: line_no,
            id: raw.id.clone(),
            category: raw.category.clone(),
        })?;
        kb.insert(
            line_no,
            CulturalEntity {
                id: raw.id,
                canonical_name: raw.canonical_name,
                aliases: raw.aliases,
                category,
                description: raw.description,
                historical_context: raw.historical_context,
                ceremonial_function: raw.ceremonial_function,
                regional_variants: raw.regional_variants,
                source: raw.source,
            },
        )?;
    }
    Ok(kb)
}

/// Looks up an entity by its case-sensitive id.
pub fn get_entity<'a>(id: &str, kb: &'a KnowledgeBase) -> Result<&'a CulturalEntity, KbError> {
    kb.entity(id).ok_or_else(|| KbError::NotFound(id.to_string()))
}

/// Writes entities back out in the line-delimited record format.
pub fn write_kb<W: std::io::Write>(kb: &KnowledgeBase, mut out: W) -> std::io::Result<()> {
    for e in kb.entities() {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
