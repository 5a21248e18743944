use std::collections::BTreeSet;
use std::io::BufRead;

use serde::Deserialize;

use super::{LabelHint, QuestionType};
use crate::dsl::{parse_program, Builtin, Program};
use crate::kb::normalize_text;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeywordRow {
    pattern: String,
    qtype: QuestionType,
}

/// Ordered `pattern → question type` rules; the first match wins.
#[derive(Debug, Clone, Default)]
pub struct KeywordTable {
    rules: Vec<(Vec<String>, QuestionType)>,
}

fn words(text: &str) -> Vec<String> {
    normalize_text(text, true)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

impl KeywordTable {
    pub fn load<R: BufRead>(source: R) -> Result<Self, serde_json::Error> {
        let mut rules = Vec::new();
        for line in source.lines() {
            let line = line.map_err(serde_json::Error::io)?;
            if line.trim().is_empty() {
                continue;
            }
            let row: KeywordRow = serde_json::from_str(&line)?;
            let pattern = words(&row.pattern);
            if !pattern.is_empty() {
                rules.push((pattern, row.qtype));
            }
        }
        Ok(KeywordTable { rules })
    }

    /// Matching is on whole words of the diacritic-folded question, so
    /// accent-free input classifies the same way.
    pub fn classify(&self, question: &str) -> QuestionType {
        let q = words(question);
        self.rules
            .iter()
            .find(|(pattern, _)| q.windows(pattern.len()).any(|w| w == pattern.as_slice()))
            .map(|(_, t)| *t)
            .unwrap_or(QuestionType::Identification)
    }
}

/// The narrowest `identify_*` covering every label; `identify_object` when
/// labels are absent, unknown, or span several families.
fn identifier(labels: &[LabelHint]) -> Builtin {
    let families: BTreeSet<&str> = labels
        .iter()
        .map(|l| l.category.map_or(Builtin::IdentifyObject, Builtin::identifier_for).name())
        .collect();
    match families.into_iter().collect::<Vec<_>>().as_slice() {
        [only] => Builtin::from_name(only).unwrap_or(Builtin::IdentifyObject),
        _ => Builtin::IdentifyObject,
    }
}

/// Template program for a question, chosen by keyword classification.
pub fn fallback_generate(question: &str, labels: &[LabelHint], keywords: &KeywordTable) -> Program {
    let ident = identifier(labels).name();
    let head = format!("r = detect_objects()\ns = select_region(r, \"largest\")\ne = {ident}(s)\n");
    let tail = match keywords.classify(question) {
        QuestionType::Identification => "t = explain_cultural_significance(e)\na = compose_answer(t)\n",
        QuestionType::Explanation => {
            "t = explain_cultural_significance(e)\nh = describe_history(e)\na = compose_answer(t, h)\n"
        }
        QuestionType::Description => "t = describe_architecture(e)\nh = describe_history(e)\na = compose_answer(t, h)\n",
        QuestionType::Comparison => {
            "t = describe_architecture(e)\nc = compare_regional_variations(e)\na = compose_answer(t, c)\n"
        }
    };
    parse_program(&(head + tail)).expect("fallback templates are valid programs")
}
