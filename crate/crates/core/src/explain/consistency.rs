use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Explanation;
use crate::dsl::ExecutionTrace;
use crate::kb::{match_entity, normalize_text, CulturalEntity, KnowledgeBase};
use crate::perception::Detection;
use crate::templates::Templates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckId {
    EntityGrounded,
    RegionGrounded,
    ClaimSupported,
    SectionComplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check_id: CheckId,
    pub target: String,
    pub passed: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub checks: Vec<CheckResult>,
    pub overall: bool,
}

impl ConsistencyReport {
    pub fn check(&self, id: CheckId) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check_id == id)
    }

    pub fn passed(&self, id: CheckId) -> bool {
        self.check(id).is_some_and(|c| c.passed)
    }

    pub fn pass_fraction(&self) -> f64 {
        if self.checks.is_empty() {
            return 0.0;
        }
        self.checks.iter().filter(|c| c.passed).count() as f64 / self.checks.len() as f64
    }
}

/// Splits after `.`, `!` or `?` when followed by whitespace or the end.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|(_, n)| n.is_whitespace()) {
            let end = i + c.len_utf8();
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn words(text: &str) -> Vec<String> {
    normalize_text(text, false)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn failure_note(bad: &[String]) -> String {
    bad.join("; ")
}

fn result(check_id: CheckId, target: &str, bad: Vec<String>) -> CheckResult {
    CheckResult {
        check_id,
        target: target.into(),
        passed: bad.is_empty(),
        note: failure_note(&bad),
    }
}

/// Raw field text of an entity that a claim may quote.
fn quotable_fields(e: &CulturalEntity) -> Vec<&str> {
    let mut f = vec![e.description.as_str(), e.historical_context.as_str(), e.ceremonial_function.as_str()];
    f.extend(e.regional_variants.iter().map(|v| v.note.as_str()));
    f.retain(|s| !s.is_empty());
    f
}

/// Sentences produced by filling templates from an entity's fields.
fn templated_sentences(e: &CulturalEntity, templates: &Templates) -> BTreeSet<String> {
    e.regional_variants
        .iter()
        .map(|v| templates.regional_variant_sentence(&v.region, &v.note))
        .flat_map(|s| split_sentences(&s).into_iter().map(str::to_string).collect::<Vec<_>>())
        .collect()
}

/// Verifies an explanation against its evidence, trace and knowledge base.
///
/// * `entity_grounded`: every evidence entity exists in the KB and was
///   touched by the trace.
/// * `region_grounded`: every canonical entity name mentioned in the
///   sections resolves to a trace entity that came from an existing
///   detection (or, for `lookup_entity`, from the question text).
/// * `claim_supported`: every context/elaboration sentence quotes or is
///   templated from a field of a trace-touched entity.
/// * `section_complete`: certain explanations have identification and
///   cultural context.
pub fn check_consistency(
    e: &Explanation,
    detections: &[Detection],
    kb: &KnowledgeBase,
    trace: &ExecutionTrace,
    templates: &Templates,
) -> ConsistencyReport {
    let touched = trace.touched_entities();
    let links = trace.region_links();
    let text_resolved = trace.text_resolved_entities();

    let bad_entities: Vec<String> = e
        .evidence
        .iter()
        .filter_map(|ev| ev.entity_id.as_ref())
        .filter(|id| !kb.contains(id) || !touched.contains(*id))
        .map(|id| format!("entity `{id}` not grounded"))
        .collect();

    let grounded = |id: &str| {
        touched.contains(id)
            && (text_resolved.contains(id) || links.iter().any(|(r, l)| l == id && *r < detections.len()))
    };
    let section_words: Vec<String> = [
        &e.sections.identification,
        &e.sections.cultural_context,
        &e.sections.elaboration,
    ]
    .iter()
    .flat_map(|s| words(s))
    .collect();
    let mut mentions = BTreeSet::new();
    for entity in kb.entities() {
        let name = words(&entity.canonical_name);
        if !name.is_empty() && section_words.windows(name.len()).any(|w| w == name.as_slice()) {
            mentions.insert(name.join(" "));
        }
    }
    let bad_mentions: Vec<String> = mentions
        .into_iter()
        .filter(|span| !match_entity(span, kb, 1.0).iter().any(|m| grounded(&m.entity_id)))
        .map(|span| format!("mention `{span}` has no grounded entity"))
        .collect();

    let sources: Vec<&CulturalEntity> = touched.iter().filter_map(|id| kb.entity(id)).collect();
    let templated: BTreeSet<String> = sources.iter().flat_map(|s| templated_sentences(s, templates)).collect();
    let supported = |sentence: &str| {
        templated.contains(sentence)
            || sources
                .iter()
                .any(|s| quotable_fields(s).iter().any(|f| f.contains(sentence)))
    };
    let bad_claims: Vec<String> = split_sentences(&e.sections.cultural_context)
        .into_iter()
        .chain(split_sentences(&e.sections.elaboration))
        .filter(|s| !supported(s))
        .map(|s| format!("unsupported sentence: \"{s}\""))
        .collect();

    let mut incomplete = Vec::new();
    if !e.uncertain {
        if e.sections.identification.trim().is_empty() {
            incomplete.push("identification is empty".to_string());
        }
        if e.sections.cultural_context.trim().is_empty() {
            incomplete.push("cultural_context is empty".to_string());
        }
    }

    let checks = vec![
        result(CheckId::EntityGrounded, "evidence", bad_entities),
        result(CheckId::RegionGrounded, "sections", bad_mentions),
        result(CheckId::ClaimSupported, "cultural_context+elaboration", bad_claims),
        result(CheckId::SectionComplete, "sections", incomplete),
    ];
    let overall = checks.iter().all(|c| c.passed);
    ConsistencyReport { checks, overall }
}
