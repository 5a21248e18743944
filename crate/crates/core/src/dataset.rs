//! Cultural VQA manifests: loading, validation and corpus statistics.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::kb::KnowledgeBase;
use crate::progen::QuestionType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaItem {
    pub question: String,
    pub answer: String,
    pub qtype: QuestionType,
    #[serde(default)]
    pub gold_entities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub image_id: String,
    pub image_ref: String,
    pub category: Category,
    pub questions: Vec<QaItem>,
    /// Annotated difficulty, carried but not used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    image_id: String,
    image_ref: String,
    category: String,
    questions: Vec<QaItem>,
    #[serde(default)]
    complexity: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate image_id `{image_id}`")]
    DuplicateImageId { line: usize, image_id: String },
    #[error("line {line}: unknown category `{category}` for image `{image_id}`")]
    UnknownCategory { line: usize, image_id: String, category: String },
    #[error("line {line}: image `{image_id}` has no questions")]
    NoQuestions { line: usize, image_id: String },
    #[error("reading manifest: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestWarning {
    pub line: usize,
    pub image_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ManifestLoad {
    pub records: Vec<DatasetRecord>,
    pub warnings: Vec<ManifestWarning>,
}

/// Loads and validates a manifest. Gold entities missing from `kb` (when
/// given) are reported as warnings and the record is kept.
pub fn load_manifest<R: BufRead>(source: R, kb: Option<&KnowledgeBase>) -> Result<ManifestLoad, ManifestError> {
    let mut out = ManifestLoad::default();
    let mut seen = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| ManifestError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let category = raw.category.parse::<Category>().map_err(|_| ManifestError::UnknownCategory {
            line: line_no,
            image_id: raw.image_id.clone(),
            category: raw.category.clone(),
        })?;
        if raw.questions.is_empty() {
            return Err(ManifestError::NoQuestions {
                line: line_no,
                image_id: raw.image_id,
            });
        }
        if !seen.insert(raw.image_id.clone()) {
            return Err(ManifestError::DuplicateImageId {
                line: line_no,
                image_id: raw.image_id,
            });
        }
        if let Some(kb) = kb {
            for gold in raw.questions.iter().flat_map(|q| &q.gold_entities) {
                if !kb.contains(gold) {
                    out.warnings.push(ManifestWarning {
                        line: line_no,
                        image_id: raw.image_id.clone(),
                        message: format!("unknown gold entity `{gold}`"),
                    });
                }
            }
        }
        out.records.push(DatasetRecord {
            image_id: raw.image_id,
            image_ref: raw.image_ref,
            category,
            questions: raw.questions,
            complexity: raw.complexity,
        });
    }
    Ok(out)
}

pub fn write_manifest<W: Write>(records: &[DatasetRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Per-category image counts without per-record detail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: Category,
    pub images: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclaredTotals {
    pub images: u64,
    pub questions: u64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum CountsRow {
    Category {
        category: Category,
        images: u64,
        #[serde(default)]
        complexity: Option<String>,
    },
    Totals {
        images: u64,
        questions: u64,
    },
}

/// Counts-only manifest: category rows plus optional declared totals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountsManifest {
    pub categories: Vec<CategoryCount>,
    pub declared: Option<DeclaredTotals>,
}

pub fn load_counts_manifest<R: BufRead>(source: R) -> Result<CountsManifest, ManifestError> {
    let mut m = CountsManifest::default();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: CountsRow = serde_json::from_str(&line).map_err(|e| ManifestError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        match row {
            CountsRow::Category {
                category,
                images,
                complexity,
            } => m.categories.push(CategoryCount {
                category,
                images,
                complexity,
            }),
            CountsRow::Totals { images, questions } => m.declared = Some(DeclaredTotals { images, questions }),
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryStat {
    pub category: Category,
    pub images: u64,
    /// Percentage of all images, one decimal.
    pub percent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complexity: Option<String>,
}

/// A row of the published composition view, where the four categories
/// without their own row are grouped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionRow {
    pub label: String,
    pub images: u64,
    pub percent: f64,
}

pub const GROUPED_LABEL: &str = "Miscellaneous Categories";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub categories: Vec<CategoryStat>,
    pub composition: Vec<CompositionRow>,
    pub total_images: u64,
    pub total_questions: u64,
    pub mean_questions_per_image: f64,
    pub mean_question_tokens: Option<f64>,
    pub mean_answer_tokens: Option<f64>,
    pub warnings: Vec<String>,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Percentages in tenths of a percent.
///
/// When the counts partition `total`, the largest-remainder method keeps
/// the rounded values summing to exactly 100.0 (ties go to the earlier
/// row). Otherwise each value is rounded half-up on its own.
fn percent_tenths(counts: &[u64], total: u64) -> Vec<u64> {
    if total == 0 {
        return vec![0; counts.len()];
    }
    let scaled: Vec<(u64, u64)> = counts
        .iter()
        .map(|&c| {
            let num = u128::from(c) * 1000;
            ((num / u128::from(total)) as u64, (num % u128::from(total)) as u64)
        })
        .collect();
    if counts.iter().sum::<u64>() != total {
        return scaled
            .iter()
            .map(|&(q, r)| q + u64::from(2 * u128::from(r) >= u128::from(total)))
            .collect();
    }
    let mut out: Vec<u64> = scaled.iter().map(|&(q, _)| q).collect();
    let short = 1000 - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| scaled[b].1.cmp(&scaled[a].1).then(a.cmp(&b)));
    for &i in order.iter().take(short as usize) {
        out[i] += 1;
    }
    out
}

fn stats_from_counts(
    counts: &[CategoryCount],
    total_images: u64,
    total_questions: u64,
    token_means: (Option<f64>, Option<f64>),
    mut warnings: Vec<String>,
) -> DatasetStats {
    let mut merged: BTreeMap<Category, (u64, Option<String>)> = BTreeMap::new();
    for c in counts {
        let slot = merged.entry(c.category).or_insert((0, None));
        slot.0 += c.images;
        if slot.1.is_none() {
            slot.1.clone_from(&c.complexity);
        }
    }
    let rows: Vec<(Category, u64, Option<String>)> = merged.into_iter().map(|(c, (n, x))| (c, n, x)).collect();
    let counted: u64 = rows.iter().map(|r| r.1).sum();
    if counted != total_images {
        warnings.push(format!(
            "category counts sum to {counted} but the declared image total is {total_images}"
        ));
    }
    let tenths = percent_tenths(&rows.iter().map(|r| r.1).collect::<Vec<_>>(), total_images);
    let categories = rows
        .iter()
        .zip(&tenths)
        .map(|((category, images, complexity), t)| CategoryStat {
            category: *category,
            images: *images,
            percent: *t as f64 / 10.0,
            complexity: complexity.clone(),
        })
        .collect();

    let mut comp: Vec<(String, u64)> = rows
        .iter()
        .filter(|r| r.0.listed_in_composition_table())
        .map(|r| (r.0.as_str().to_string(), r.1))
        .collect();
    let grouped: u64 = rows.iter().filter(|r| !r.0.listed_in_composition_table()).map(|r| r.1).sum();
    if rows.iter().any(|r| !r.0.listed_in_composition_table()) {
        comp.push((GROUPED_LABEL.to_string(), grouped));
    }
    let comp_tenths = percent_tenths(&comp.iter().map(|c| c.1).collect::<Vec<_>>(), total_images);
    let composition = comp
        .into_iter()
        .zip(comp_tenths)
        .map(|((label, images), t)| CompositionRow {
            label,
            images,
            percent: t as f64 / 10.0,
        })
        .collect();

    DatasetStats {
        categories,
        composition,
        total_images,
        total_questions,
        mean_questions_per_image: if total_images == 0 {
            0.0
        } else {
            round1(total_questions as f64 / total_images as f64)
        },
        mean_question_tokens: token_means.0.map(round1),
        mean_answer_tokens: token_means.1.map(round1),
        warnings,
    }
}

/// Corpus statistics over loaded records.
pub fn compute_stats(records: &[DatasetRecord]) -> DatasetStats {
    let counts: Vec<CategoryCount> = records
        .iter()
        .map(|r| CategoryCount {
            category: r.category,
            images: 1,
            complexity: r.complexity.clone(),
        })
        .collect();
    let questions: Vec<&QaItem> = records.iter().flat_map(|r| &r.questions).collect();
    let mean = |f: &dyn Fn(&QaItem) -> usize| {
        (!questions.is_empty()).then(|| questions.iter().map(|q| f(q)).sum::<usize>() as f64 / questions.len() as f64)
    };
    let q_tokens = mean(&|q| q.question.split_whitespace().count());
    let a_tokens = mean(&|q| q.answer.split_whitespace().count());
    stats_from_counts(&counts, records.len() as u64, questions.len() as u64, (q_tokens, a_tokens), Vec::new())
}

/// Statistics from a counts-only manifest. Declared totals, when present,
/// are the denominators.
pub fn compute_stats_from_counts(m: &CountsManifest) -> DatasetStats {
    let counted: u64 = m.categories.iter().map(|c| c.images).sum();
    let (images, questions) = m.declared.map_or((counted, 0), |d| (d.images, d.questions));
    stats_from_counts(&m.categories, images, questions, (None, None), Vec::new())
}

impl DatasetStats {
    pub fn composition_percent(&self, label: &str) -> Option<f64> {
        self.composition.iter().find(|r| r.label == label).map(|r| r.percent)
    }

    /// Plain-text table in the layout of the published composition table.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<[String; 3]> = vec![["Cultural Category".into(), "Sample Count".into(), "Percentage".into()]];
        for r in &self.composition {
            rows.push([r.label.clone(), r.images.to_string(), format!("{:.1}%", r.percent)]);
        }
        let total_pct: f64 = self.composition.iter().map(|r| r.percent).sum();
        rows.push(["Total".into(), self.total_images.to_string(), format!("{total_pct:.1}%")]);
        let widths: Vec<usize> = (0..3).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, w))| {
                    let pad = w - s.chars().count();
                    if c == 0 { format!("{s}{}", " ".repeat(pad)) } else { format!("{}{s}", " ".repeat(pad)) }
                })
                .collect();
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        out.push_str(&format!(
            "\nimages: {}  questions: {}  questions/image: {:.1}",
            self.total_images, self.total_questions, self.mean_questions_per_image
        ));
        if let (Some(q), Some(a)) = (self.mean_question_tokens, self.mean_answer_tokens) {
            out.push_str(&format!("  question tokens: {q:.1}  answer tokens: {a:.1}"));
        }
        out.push('\n');
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(id: &str, category: &str, questions: &[(&str, &[&str])]) -> String {
        let qs: Vec<String> = questions
            .iter()
            .map(|(q, gold)| {
                serde_json::json!({"question": q, "answer": "a b c", "qtype": "identification", "gold_entities": gold})
                    .to_string()
            })
            .collect();
        format!(
            r#"{{"image_id":"{id}","image_ref":"x.jpg","category":"{category}","questions":[{}]}}"#,
            qs.join(",")
        )
    }

    #[test]
    fn loads_valid_records() {
        let src = [
            rec("a", "Cuisine", &[("q", &["banh_xeo"])]),
            rec("b", "Architecture", &[("q", &[])]),
            rec("c", "Landscapes", &[("q", &[]), ("q2", &[])]),
        ]
        .join("\n");
        let load = load_manifest(src.as_bytes(), None).unwrap();
        assert_eq!(load.records.len(), 3);
        assert!(load.warnings.is_empty());
    }

    #[test]
    fn zero_questions_names_image() {
        let src = rec("img_7", "Cuisine", &[]);
        let err = load_manifest(src.as_bytes(), None).unwrap_err();
        assert!(matches!(err, ManifestError::NoQuestions { .. }));
        assert!(err.to_string().contains("img_7"));
    }

    #[test]
    fn unknown_gold_entity_is_a_warning() {
        let kb = bundled::starter_kb();
        let src = rec("a", "Cuisine", &[("q", &["banh_xeo", "khong_co"])]);
        let load = load_manifest(src.as_bytes(), Some(&kb)).unwrap();
        assert_eq!(load.records.len(), 1);
        assert_eq!(load.warnings.len(), 1);
        assert!(load.warnings[0].message.contains("khong_co"));
    }

    #[test]
    fn duplicate_and_unknown_category() {
        let src = [rec("a", "Cuisine", &[("q", &[])]), rec("a", "Cuisine", &[("q", &[])])].join("\n");
        assert!(matches!(load_manifest(src.as_bytes(), None), Err(ManifestError::DuplicateImageId { .. })));
        let src = rec("a", "Spacecraft", &[("q", &[])]);
        assert!(matches!(load_manifest(src.as_bytes(), None), Err(ManifestError::UnknownCategory { .. })));
    }

    #[test]
    fn published_composition_percentages() {
        let stats = compute_stats_from_counts(&bundled::composition_counts());
        let expected = [
            ("Cuisine", 10.3),
            ("Architecture", 10.5),
            ("Traditional Clothing", 8.7),
            ("Cultural Festivals", 8.4),
            ("Daily Life Practices", 8.2),
            ("Traditional Sports", 8.1),
            ("Transportation", 8.0),
            ("Handicrafts", 7.9),
            (GROUPED_LABEL, 43.9),
        ];
        for (label, pct) in expected {
            assert_eq!(stats.composition_percent(label), Some(pct), "{label}");
        }
        assert_eq!(stats.mean_questions_per_image, 3.2);
        assert_eq!(stats.total_images, 28484);
        // the published rows add up to 32,484, not the stated total
        assert_eq!(stats.warnings.len(), 1);
    }

    #[test]
    fn question_length_mean() {
        let src = rec("a", "Cuisine", &[("một hai ba bốn", &[]), ("một hai ba bốn năm sáu", &[])]);
        let stats = compute_stats(&load_manifest(src.as_bytes(), None).unwrap().records);
        assert_eq!(stats.mean_question_tokens, Some(5.0));
        assert_eq!(stats.mean_answer_tokens, Some(3.0));
        assert_eq!(stats.mean_questions_per_image, 2.0);
    }

    #[test]
    fn sample_manifest_round_trips() {
        let kb = bundled::starter_kb();
        let load = bundled::sample_manifest(Some(&kb));
        assert_eq!(load.records.len(), 60);
        assert!(load.warnings.is_empty());
        let cats: HashSet<Category> = load.records.iter().map(|r| r.category).collect();
        assert_eq!(cats.len(), 12);
        let mut buf = Vec::new();
        write_manifest(&load.records, &mut buf).unwrap();
        let again = load_manifest(buf.as_slice(), Some(&kb)).unwrap();
        assert_eq!(again.records, load.records);
    }

    fn arb_record() -> impl Strategy<Value = DatasetRecord> {
        (0usize..12, 1usize..4).prop_map(|(c, nq)| DatasetRecord {
            image_id: String::new(),
            image_ref: "x".into(),
            category: Category::ALL[c],
            questions: (0..nq)
                .map(|i| QaItem {
                    question: "w ".repeat(i + 1),
                    answer: "a".into(),
                    qtype: QuestionType::Identification,
                    gold_entities: vec![],
                })
                .collect(),
            complexity: None,
        })
    }

    proptest! {
        #[test]
        fn percentages_sum_to_hundred(records in prop::collection::vec(arb_record(), 1..80)) {
            let stats = compute_stats(&records);
            let sum: f64 = stats.categories.iter().map(|c| c.percent).sum();
            prop_assert!((sum - 100.0).abs() <= 0.1 + 1e-9, "sum {}", sum);
            let comp: f64 = stats.composition.iter().map(|c| c.percent).sum();
            prop_assert!((comp - 100.0).abs() <= 0.1 + 1e-9);
        }

        #[test]
        fn stats_are_permutation_invariant(records in prop::collection::vec(arb_record(), 1..40), seed in any::<u64>()) {
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(compute_stats(&records), compute_stats(&shuffled));
        }
    }
}
