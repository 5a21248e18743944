//! Dual-channel explanations: templated text sections grounded in the
//! knowledge base, region evidence with saliencies, a consistency checker
//! and an SVG overlay renderer.

mod consistency;
mod svg;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dsl::{Builtin, ExecutionTrace};
use crate::kb::KnowledgeBase;
use crate::perception::{top_region_indices, Detection};
pub use crate::templates::Templates;
use crate::templates::fill;

pub use consistency::{check_consistency, split_sentences, CheckId, CheckResult, ConsistencyReport};
pub use svg::render_overlay_svg;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sections {
    pub identification: String,
    pub cultural_context: String,
    pub elaboration: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    /// Index into the image's detections.
    pub region: usize,
    pub detection: Detection,
    pub entity_id: Option<String>,
    pub saliency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub answer: String,
    pub sections: Sections,
    pub evidence: Vec<EvidenceItem>,
    pub uncertain: bool,
}

#[derive(Debug, Clone)]
pub struct ExplainConfig {
    /// Evidence regions kept.
    pub k: usize,
    /// When false, no region evidence is attached.
    pub visual: bool,
    pub templates: Templates,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            k: 3,
            visual: true,
            templates: Templates::default(),
        }
    }
}

fn evidence(trace: &ExecutionTrace, detections: &[Detection], k: usize) -> Vec<EvidenceItem> {
    let links = trace.region_links();
    let picked = top_region_indices(detections, k);
    let total: f64 = picked.iter().map(|&i| detections[i].confidence).sum();
    let n = picked.len() as f64;
    picked
        .into_iter()
        .map(|i| EvidenceItem {
            region: i,
            detection: detections[i].clone(),
            entity_id: links.iter().find(|(r, _)| *r == i).map(|(_, e)| e.clone()),
            saliency: if total > 0.0 { detections[i].confidence / total } else { 1.0 / n },
        })
        .collect()
}

fn elaboration(trace: &ExecutionTrace, kb: &KnowledgeBase, templates: &Templates) -> String {
    let mut seen = BTreeSet::new();
    let mut parts: Vec<String> = Vec::new();
    for r in trace.records.iter().filter(|r| !r.unresolved) {
        let Some(func) = Builtin::from_name(&r.func) else { continue };
        if !matches!(func, Builtin::CompareRegionalVariations | Builtin::DescribeHistory) {
            continue;
        }
        for id in &r.entities {
            if !seen.insert((func.name(), id.clone())) {
                continue;
            }
            let Some(e) = kb.entity(id) else { continue };
            match func {
                Builtin::CompareRegionalVariations => parts.extend(
                    e.regional_variants
                        .iter()
                        .map(|v| templates.regional_variant_sentence(&v.region, &v.note)),
                ),
                _ if !e.historical_context.is_empty() => parts.push(e.historical_context.clone()),
                _ => {}
            }
        }
    }
    parts.join(" ")
}

/// Builds the explanation for an executed program.
///
/// Identification names the resolved entity and the detection it came
/// from; cultural context is the entity's description plus its ceremonial
/// function; elaboration carries regional variants and history when the
/// program asked for them. Uncertain traces get the fixed "not
/// determined" identification and no context.
pub fn synthesize_explanation(
    trace: &ExecutionTrace,
    kb: &KnowledgeBase,
    detections: &[Detection],
    config: &ExplainConfig,
) -> Explanation {
    let t = &config.templates;
    let answer = trace.answer().map(|a| a.text.clone()).unwrap_or_default();
    let evidence = if config.visual {
        evidence(trace, detections, config.k)
    } else {
        Vec::new()
    };
    let primary = trace
        .primary_entity()
        .and_then(|p| kb.entity(&p.id).map(|e| (e, p.region)));
    let resolved = primary.filter(|_| !trace.uncertain());
    let Some((entity, region)) = resolved else {
        return Explanation {
            answer,
            sections: Sections {
                identification: t.uncertain.clone(),
                ..Sections::default()
            },
            evidence,
            uncertain: true,
        };
    };

    let identification = match region.and_then(|r| detections.get(r)) {
        Some(d) => fill(
            &t.identification_region,
            &[("name", &entity.canonical_name), ("label", &d.label)],
        ),
        None => fill(&t.identification_text, &[("name", &entity.canonical_name)]),
    };
    let cultural_context = if entity.ceremonial_function.is_empty() {
        entity.description.clone()
    } else {
        format!("{} {}", entity.description, entity.ceremonial_function)
    };
    Explanation {
        answer,
        sections: Sections {
            identification,
            cultural_context,
            elaboration: elaboration(trace, kb, t),
        },
        evidence,
        uncertain: false,
    }
}
