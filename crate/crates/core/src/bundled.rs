//! Data files shipped with the crate: starter knowledge base, few-shot
//! exemplars, fallback keyword table, explanation templates, sample
//! manifest, detection fixtures and the published category counts.

use crate::dataset::{self, CountsManifest, ManifestLoad};
use crate::explain::Templates;
use crate::kb::{self, KnowledgeBase};
use crate::perception::{self, DetectionIndex};
use crate::progen::{self, Exemplar, KeywordTable};

pub const STARTER_KB: &str = include_str!("../data/starter_kb.jsonl");
pub const EXEMPLARS: &str = include_str!("../data/exemplars.jsonl");
pub const QTYPE_KEYWORDS: &str = include_str!("../data/qtype_keywords.jsonl");
pub const TEMPLATES: &str = include_str!("../data/templates.json");
pub const FIXTURES: &str = include_str!("../data/fixtures.jsonl");
pub const SAMPLE_MANIFEST: &str = include_str!("../data/sample_manifest.jsonl");
pub const COMPOSITION_COUNTS: &str = include_str!("../data/composition_counts.jsonl");

pub fn starter_kb() -> KnowledgeBase {
    kb::load_kb(STARTER_KB.as_bytes()).expect("bundled knowledge base is valid")
}

pub fn exemplars() -> Vec<Exemplar> {
    progen::load_exemplars(EXEMPLARS.as_bytes()).expect("bundled exemplars are valid")
}

pub fn keyword_table() -> KeywordTable {
    KeywordTable::load(QTYPE_KEYWORDS.as_bytes()).expect("bundled keyword table is valid")
}

pub fn templates() -> Templates {
    Templates::from_json(TEMPLATES).expect("bundled templates are valid")
}

pub fn fixtures() -> DetectionIndex {
    perception::load_detection_index(FIXTURES.as_bytes()).expect("bundled fixtures are valid")
}

pub fn sample_manifest(kb: Option<&KnowledgeBase>) -> ManifestLoad {
    dataset::load_manifest(SAMPLE_MANIFEST.as_bytes(), kb).expect("bundled manifest is valid")
}

pub fn composition_counts() -> CountsManifest {
    dataset::load_counts_manifest(COMPOSITION_COUNTS.as_bytes()).expect("bundled counts are valid")
}
