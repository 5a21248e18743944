//! End-to-end answering: detections, program generation, execution,
//! explanation and consistency checking.

use serde::{Deserialize, Serialize};

use crate::dsl::{
    execute_program, format_program, AnswerValue, Builtin, ExecConfig, ExecContext, ExecError,
    ExecutionTrace, TraceRecord, Value,
};
use crate::explain::{check_consistency, synthesize_explanation, ConsistencyReport, ExplainConfig, Explanation};
use crate::kb::KnowledgeBase;
use crate::perception::{fetch_detections, top_region_indices, Detection, DetectionIndex, FetchError};
use crate::progen::{label_hints, GenerationError, GenerationSource, GeneratorBackend, ProgramGenerator};

/// Pipeline variants used for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationConfig {
    Full,
    /// Empty knowledge base.
    NoKb,
    /// Text-only explanations with no region evidence.
    NoVisual,
    /// Top-1 detection label looked up directly, no program.
    NoProgram,
}

impl AblationConfig {
    pub const ALL: [AblationConfig; 4] = [
        AblationConfig::Full,
        AblationConfig::NoKb,
        AblationConfig::NoVisual,
        AblationConfig::NoProgram,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationConfig::Full => "full",
            AblationConfig::NoKb => "no_kb",
            AblationConfig::NoVisual => "no_visual",
            AblationConfig::NoProgram => "no_program",
        }
    }
}

impl std::fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AblationConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AblationConfig::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown configuration `{s}` (expected full, no_kb, no_visual or no_program)"))
    }
}

/// Where detections come from.
#[derive(Debug, Clone)]
pub enum DetectionSource {
    Fixtures(DetectionIndex),
    Remote { endpoint: String },
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("no detections for image `{0}`")]
    MissingImage(String),
    #[error("detector: {0}")]
    Detector(#[from] FetchError),
    #[error("generator: {0}")]
    Generator(#[from] GenerationError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

impl DetectionSource {
    pub fn detections(&self, image_id: &str) -> Result<Vec<Detection>, PipelineError> {
        match self {
            DetectionSource::Fixtures(index) => index
                .get(image_id)
                .map(<[Detection]>::to_vec)
                .ok_or_else(|| PipelineError::MissingImage(image_id.to_string())),
            DetectionSource::Remote { endpoint } => Ok(fetch_detections(image_id, endpoint)?),
        }
    }
}

/// Everything produced for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutput {
    pub image_id: String,
    pub question: String,
    pub config: AblationConfig,
    /// Canonical program text; empty for `no_program`.
    pub program: String,
    pub generation: Option<GenerationSource>,
    pub trace: ExecutionTrace,
    pub explanation: Explanation,
    pub consistency: ConsistencyReport,
}

impl AnswerOutput {
    /// The entity the answer is about, if it was resolved.
    pub fn answered_entity(&self) -> Option<String> {
        if self.explanation.uncertain {
            return None;
        }
        self.trace.primary_entity().map(|e| e.id)
    }
}

/// The answering pipeline with its resources.
pub struct Engine {
    pub kb: KnowledgeBase,
    pub generator: ProgramGenerator,
    pub backend: Option<Box<dyn GeneratorBackend>>,
    pub exec: ExecConfig,
    pub explain: ExplainConfig,
}

impl Engine {
    pub fn new(kb: KnowledgeBase) -> Self {
        Engine {
            kb,
            generator: ProgramGenerator::default(),
            backend: None,
            exec: ExecConfig::default(),
            explain: ExplainConfig::default(),
        }
    }

    pub fn answer(
        &self,
        image_id: &str,
        detections: &[Detection],
        question: &str,
    ) -> Result<AnswerOutput, PipelineError> {
        self.answer_with(image_id, detections, question, AblationConfig::Full)
    }

    pub fn answer_with(
        &self,
        image_id: &str,
        detections: &[Detection],
        question: &str,
        config: AblationConfig,
    ) -> Result<AnswerOutput, PipelineError> {
        let empty = KnowledgeBase::empty();
        let kb = if config == AblationConfig::NoKb { &empty } else { &self.kb };
        let mut explain = self.explain.clone();
        explain.visual = config != AblationConfig::NoVisual;

        let (program, generation, trace) = if config == AblationConfig::NoProgram {
            (String::new(), None, self.direct_lookup(kb, detections))
        } else {
            let hints = label_hints(detections, kb, &self.exec.matching);
            let outcome = self.generator.generate(question, &hints, self.backend.as_deref())?;
            let ctx = ExecContext {
                detections,
                kb,
                question,
                config: &self.exec,
            };
            let trace = execute_program(&outcome.program, &ctx)?;
            (format_program(&outcome.program), Some(outcome.source), trace)
        };

        let explanation = synthesize_explanation(&trace, kb, detections, &explain);
        let consistency = check_consistency(&explanation, detections, kb, &trace, &explain.templates);
        Ok(AnswerOutput {
            image_id: image_id.to_string(),
            question: question.to_string(),
            config,
            program,
            generation,
            trace,
            explanation,
            consistency,
        })
    }

    /// Matches the most confident detection's label against the whole KB
    /// and answers with the entity's description.
    fn direct_lookup(&self, kb: &KnowledgeBase, detections: &[Detection]) -> ExecutionTrace {
        let templates = &self.exec.templates;
        let top = top_region_indices(detections, 1).first().copied();
        let hit = top.and_then(|r| {
            kb.match_filtered(&detections[r].label, &self.exec.matching, |_| true)
                .into_iter()
                .next()
                .map(|m| (r, m.entity_id))
        });
        let entity = hit.as_ref().and_then(|(_, id)| kb.entity(id));
        let record = TraceRecord {
            step: 0,
            var: "e".into(),
            func: Builtin::IdentifyObject.name().into(),
            inputs: top.map(|r| format!("region#{r}({})", detections[r].label)).into_iter().collect(),
            output: match &hit {
                Some((_, id)) => format!("entity:{id}"),
                None => "entity:none".into(),
            },
            entities: hit.iter().map(|(_, id)| id.clone()).collect(),
            regions: top.into_iter().collect(),
            unresolved: hit.is_none(),
            note: Some("direct label lookup".into()),
        };
        let answer = match entity {
            Some(e) => AnswerValue {
                text: templates.answer_part(&e.canonical_name, &e.description),
                uncertain: false,
            },
            None => AnswerValue {
                text: templates.unresolved_answer.clone(),
                uncertain: true,
            },
        };
        ExecutionTrace {
            records: vec![record],
            final_value: Value::Answer(answer),
        }
    }
}

/// Fetches detections and answers one question.
pub fn run_answer(
    engine: &Engine,
    source: &DetectionSource,
    image_id: &str,
    question: &str,
    config: AblationConfig,
) -> Result<AnswerOutput, PipelineError> {
    let detections = source.detections(image_id)?;
    engine.answer_with(image_id, &detections, question, config)
}
