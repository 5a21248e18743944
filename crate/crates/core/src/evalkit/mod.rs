//! Evaluation: text metrics, cultural accuracy, explanation quality,
//! annotator agreement and ablation runs.

mod agreement;
mod metrics;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::explain::{CheckId, ConsistencyReport, Explanation};
use crate::pipeline::{AblationConfig, DetectionSource, Engine};
use crate::scalar::Scalar;

pub use agreement::{cohen_kappa, cohen_kappa_from_confusion, load_label_pairs, KappaError};
pub use metrics::{bleu4, lcs_len, meteor_lite, rouge_l, tokenize, Bleu};

/// 1.0 when the answered entity is one of the gold entities. Items with no
/// gold entity count as correct only when the system abstained.
pub fn cultural_accuracy<F: Scalar>(answered: Option<&str>, gold: &[String]) -> F {
    let hit = match answered {
        Some(id) => gold.iter().any(|g| g == id),
        None => gold.is_empty(),
    };
    if hit { F::one() } else { F::zero() }
}

/// Weights of the explanation quality score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityWeights {
    pub checks: f64,
    pub linked_evidence: f64,
    pub sections: f64,
}

impl Default for QualityWeights {
    fn default() -> Self {
        QualityWeights {
            checks: 0.5,
            linked_evidence: 0.3,
            sections: 0.2,
        }
    }
}

/// Weighted sum of the consistency pass fraction, the share of evidence
/// regions linked to an entity (0 without evidence) and section
/// completeness.
pub fn explanation_quality<F: Scalar>(e: &Explanation, report: &ConsistencyReport, w: QualityWeights) -> F {
    let linked = if e.evidence.is_empty() {
        0.0
    } else {
        e.evidence.iter().filter(|ev| ev.entity_id.is_some()).count() as f64 / e.evidence.len() as f64
    };
    let complete = if report.passed(CheckId::SectionComplete) { 1.0 } else { 0.0 };
    F::of((w.checks * report.pass_fraction() + w.linked_evidence * linked + w.sections * complete).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    /// `<image_id>#<question index>`.
    pub item_id: String,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor_lite: f64,
    pub cultural_accuracy: f64,
    pub explanation_quality: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateScores {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor_lite: f64,
    pub cultural_accuracy: f64,
    pub explanation_quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: AblationConfig,
    /// Items scored; failed items are listed but not aggregated.
    pub n: usize,
    pub failed: usize,
    pub aggregate: AggregateScores,
    pub per_item: Vec<ItemScores>,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    pub quality: QualityWeights,
}

struct Item<'a> {
    id: String,
    image_id: &'a str,
    question: &'a str,
    answer: &'a str,
    gold: &'a [String],
}

fn score_item(engine: &Engine, source: &DetectionSource, item: &Item<'_>, config: AblationConfig, opts: &EvalOptions) -> ItemScores {
    let failed = |msg: String| ItemScores {
        item_id: item.id.clone(),
        bleu4: 0.0,
        rouge_l: 0.0,
        meteor_lite: 0.0,
        cultural_accuracy: 0.0,
        explanation_quality: 0.0,
        error: Some(msg),
    };
    let out = match source
        .detections(item.image_id)
        .and_then(|d| engine.answer_with(item.image_id, &d, item.question, config))
    {
        Ok(out) => out,
        Err(e) => return failed(e.to_string()),
    };
    let cand = tokenize(&out.explanation.answer);
    let reference = tokenize(item.answer);
    ItemScores {
        item_id: item.id.clone(),
        bleu4: bleu4::<f64, _, _>(&cand, std::slice::from_ref(&reference)).score,
        rouge_l: rouge_l(&cand, &reference),
        meteor_lite: meteor_lite(&cand, &reference),
        cultural_accuracy: cultural_accuracy(out.answered_entity().as_deref(), item.gold),
        explanation_quality: explanation_quality(&out.explanation, &out.consistency, opts.quality),
        error: None,
    }
}

fn aggregate(items: &[ItemScores]) -> AggregateScores {
    let ok: Vec<&ItemScores> = items.iter().filter(|i| i.error.is_none()).collect();
    if ok.is_empty() {
        return AggregateScores::default();
    }
    let n = ok.len() as f64;
    let mean = |f: fn(&ItemScores) -> f64| ok.iter().map(|i| f(i)).sum::<f64>() / n;
    AggregateScores {
        bleu4: mean(|i| i.bleu4),
        rouge_l: mean(|i| i.rouge_l),
        meteor_lite: mean(|i| i.meteor_lite),
        cultural_accuracy: mean(|i| i.cultural_accuracy),
        explanation_quality: mean(|i| i.explanation_quality),
    }
}

/// Scores every question of `records` under one pipeline configuration.
/// Items are processed in parallel; the report keeps manifest order.
pub fn run_ablation(
    engine: &Engine,
    source: &DetectionSource,
    records: &[DatasetRecord],
    config: AblationConfig,
    opts: &EvalOptions,
) -> Result<MetricReport, rayon::ThreadPoolBuildError> {
    let items: Vec<Item<'_>> = records
        .iter()
        .flat_map(|r| {
            r.questions.iter().enumerate().map(move |(i, q)| Item {
                id: format!("{}#{i}", r.image_id),
                image_id: &r.image_id,
                question: &q.question,
                answer: &q.answer,
                gold: &q.gold_entities,
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.threads).build()?;
    let per_item: Vec<ItemScores> = pool.install(|| {
        items
            .par_iter()
            .map(|item| score_item(engine, source, item, config, opts))
            .collect()
    });
    let failed = per_item.iter().filter(|i| i.error.is_some()).count();
    Ok(MetricReport {
        config,
        n: per_item.len() - failed,
        failed,
        aggregate: aggregate(&per_item),
        per_item,
    })
}

/// Aligned plain-text comparison table, one row per report.
pub fn render_table(reports: &[MetricReport]) -> String {
    let header = ["Method/config", "BLEU-4", "Cultural Accuracy", "Explanation Quality"];
    let mut rows: Vec<[String; 4]> = vec![header.map(str::to_string)];
    for r in reports {
        rows.push([
            r.config.to_string(),
            format!("{:.4}", r.aggregate.bleu4),
            format!("{:.4}", r.aggregate.cultural_accuracy),
            format!("{:.4}", r.aggregate.explanation_quality),
        ]);
    }
    let widths: Vec<usize> = (0..4).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("-+-"));
            out.push('\n');
        }
    }
    out
}
