use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{normalize_text, CulturalEntity, KnowledgeBase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    Exact,
    Fuzzy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub entity_id: String,
    pub score: f64,
    pub matched_alias: String,
    pub method: MatchMethod,
}

/// Weights and acceptance threshold for mention matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub threshold: f64,
    pub edit_weight: f64,
    pub token_weight: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            threshold: 0.75,
            edit_weight: 0.6,
            token_weight: 0.4,
        }
    }
}

impl MatchConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        MatchConfig {
            threshold,
            ..Self::default()
        }
    }
}

fn edit_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / longest as f64
}

fn token_jaccard(a: &str, b: &str) -> f64 {
    let ta: BTreeSet<&str> = a.split(' ').filter(|t| !t.is_empty()).collect();
    let tb: BTreeSet<&str> = b.split(' ').filter(|t| !t.is_empty()).collect();
    let union = ta.union(&tb).count();
    if union == 0 {
        return 1.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

/// Weighted lexical similarity of two already-folded strings.
pub fn fuzzy_score(folded_a: &str, folded_b: &str, config: &MatchConfig) -> f64 {
    let s = config.edit_weight * edit_similarity(folded_a, folded_b)
        + config.token_weight * token_jaccard(folded_a, folded_b);
    s.clamp(0.0, 1.0)
}

type Best = (f64, usize, MatchMethod);

impl KnowledgeBase {
    /// Matches a free-text mention against entities accepted by `filter`.
    pub fn match_filtered<F>(&self, mention: &str, config: &MatchConfig, filter: F) -> Vec<MatchCandidate>
    where
        F: Fn(&CulturalEntity) -> bool,
    {
        let plain = normalize_text(mention, false);
        let folded = normalize_text(mention, true);

        // best[entity] = (score, alias slot, method)
        let mut best: Vec<Option<Best>> = vec![None; self.len()];
        let consider = |best: &mut [Option<Best>], slot: usize, score: f64, method: MatchMethod| {
            let entity = self.aliases[slot].entity;
            let replace = match best[entity] {
                None => true,
                Some((s, prev_slot, _)) => score > s || (score == s && slot < prev_slot),
            };
            if replace {
                best[entity] = Some((score, slot, method));
            }
        };

        for index_hit in [self.plain_index.get(&plain), self.folded_index.get(&folded)]
            .into_iter()
            .flatten()
        {
            for &slot in index_hit {
                consider(&mut best, slot, 1.0, MatchMethod::Exact);
            }
        }
        for (slot, entry) in self.aliases.iter().enumerate() {
            if matches!(best[entry.entity], Some((_, _, MatchMethod::Exact))) {
                continue;
            }
            // identical folded forms were already caught by the index above
            let score = fuzzy_score(&folded, &entry.folded, config);
            consider(&mut best, slot, score, MatchMethod::Fuzzy);
        }

        let mut out: Vec<MatchCandidate> = best
            .into_iter()
            .enumerate()
            .filter_map(|(idx, b)| b.map(|b| (idx, b)))
            .filter(|(idx, (score, _, _))| *score >= config.threshold && filter(self.entity_at(*idx)))
            .map(|(idx, (score, slot, method))| MatchCandidate {
                entity_id: self.entity_at(idx).id.clone(),
                score,
                matched_alias: self.aliases[slot].alias.clone(),
                method,
            })
            .collect();
        out.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.entity_id.cmp(&b.entity_id))
        });
        out
    }
}

/// Resolves a mention to knowledge-base entities with default weights.
///
/// Exact hits on the plain or diacritic-folded alias index score 1.0;
/// everything else is scored with [`fuzzy_score`] and kept when it reaches
/// `threshold`. Sorted by score descending, then entity id.
pub fn match_entity(mention: &str, kb: &KnowledgeBase, threshold: f64) -> Vec<MatchCandidate> {
    kb.match_filtered(mention, &MatchConfig::with_threshold(threshold), |_| true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn exact_and_folded_hits() {
        let kb = bundled::starter_kb();
        let hits = match_entity("bánh xèo", &kb, 0.75);
        assert_eq!(hits[0].entity_id, "banh_xeo");
        assert_eq!(hits[0].score, 1.0);
        assert_eq!(hits[0].method, MatchMethod::Exact);

        let hits = match_entity("banh xeo", &kb, 0.75);
        assert_eq!(hits[0].entity_id, "banh_xeo");
        assert_eq!(hits[0].score, 1.0);
        assert_eq!(hits[0].method, MatchMethod::Exact);
    }

    #[test]
    fn unrelated_mention_has_no_match() {
        let kb = bundled::starter_kb();
        assert!(match_entity("zzzz", &kb, 0.75).is_empty());
    }

    #[test]
    fn one_typo_in_three_word_name_is_scored_fuzzily() {
        let kb = bundled::starter_kb();
        let hits = match_entity("múa rối nướv", &kb, 0.5);
        assert_eq!(hits[0].entity_id, "mua_roi_nuoc");
        assert_eq!(hits[0].method, MatchMethod::Fuzzy);
        // edit part: 1 - 1/12; token part: 2 shared of 4
        let expected = 0.6 * (1.0 - 1.0 / 12.0) + 0.4 * 0.5;
        assert!((hits[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn filter_restricts_candidates() {
        let kb = bundled::starter_kb();
        let hits = kb.match_filtered("áo dài", &MatchConfig::default(), |e| {
            e.category == crate::Category::Cuisine
        });
        assert!(hits.is_empty());
    }

    #[test]
    fn self_similarity_is_one() {
        let c = MatchConfig::default();
        assert_eq!(fuzzy_score("dan bau", "dan bau", &c), 1.0);
        assert_eq!(fuzzy_score("", "", &c), 1.0);
    }
}
