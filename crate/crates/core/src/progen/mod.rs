//! Question-to-program generation: few-shot prompt construction, a
//! pluggable text-generation backend with parse/typecheck repair retries,
//! and a deterministic keyword-driven fallback.

mod backend;
mod fallback;

use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::dsl::{parse_program, registry, typecheck_program, Program};
use crate::kb::{KnowledgeBase, MatchConfig};
use crate::perception::{top_region_indices, Detection};

pub use backend::{BackendError, ExemplarEchoBackend, GeneratorBackend, RemoteGenerator, GENERATOR_KEY_ENV};
pub use fallback::{fallback_generate, KeywordTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Identification,
    Comparison,
    Description,
    Explanation,
}

impl QuestionType {
    pub const ALL: [QuestionType; 4] = [
        QuestionType::Identification,
        QuestionType::Comparison,
        QuestionType::Description,
        QuestionType::Explanation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Identification => "identification",
            QuestionType::Comparison => "comparison",
            QuestionType::Description => "description",
            QuestionType::Explanation => "explanation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exemplar {
    pub question: String,
    pub qtype: QuestionType,
    pub program: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ExemplarError {
    #[error("exemplar line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("reading exemplars: {0}")]
    Io(#[from] std::io::Error),
}

/// Loads an exemplar bundle; every program must parse and typecheck.
pub fn load_exemplars<R: BufRead>(source: R) -> Result<Vec<Exemplar>, ExemplarError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| ExemplarError::Invalid { line: line_no, message };
        let ex: Exemplar = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
        let program = parse_program(&ex.program).map_err(|e| invalid(e.to_string()))?;
        let diags = typecheck_program(&program);
        if let Some(d) = diags.first() {
            return Err(invalid(d.to_string()));
        }
        out.push(ex);
    }
    Ok(out)
}

/// A detected label offered to the generator, with the category of its
/// best knowledge-base match when one exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelHint {
    pub label: String,
    pub category: Option<Category>,
}

impl From<&str> for LabelHint {
    fn from(label: &str) -> Self {
        LabelHint {
            label: label.to_string(),
            category: None,
        }
    }
}

/// Hints for every detection, most salient first.
pub fn label_hints(detections: &[Detection], kb: &KnowledgeBase, matching: &MatchConfig) -> Vec<LabelHint> {
    top_region_indices(detections, detections.len())
        .into_iter()
        .map(|i| {
            let label = detections[i].label.clone();
            let category = kb
                .match_filtered(&label, matching, |_| true)
                .first()
                .and_then(|m| kb.entity(&m.entity_id))
                .map(|e| e.category);
            LabelHint { label, category }
        })
        .collect()
}

pub(crate) const QUESTION_MARKER: &str = "Câu hỏi: ";
const PROGRAM_MARKER: &str = "Chương trình:";

/// Fixed instruction block: function list, grammar rules, disambiguation.
pub fn prompt_header() -> String {
    let mut h = String::new();
    h.push_str("Bạn chuyển câu hỏi tiếng Việt về văn hóa Việt Nam thành chương trình thực thi được.\n\n");
    h.push_str("## Các hàm được phép\n");
    for sig in registry() {
        let _ = writeln!(h, "- {}", sig.render());
    }
    h.push_str("\n## Quy tắc ngữ pháp\n");
    h.push_str("- Mỗi dòng là một câu lệnh dạng `biến = hàm(đối_số, ...)`.\n");
    h.push_str("- Đối số chỉ là biến đã gán ở dòng trước, chuỗi trong dấu nháy kép, hoặc số nguyên; không lồng lời gọi hàm.\n");
    h.push_str("- Tên biến theo mẫu [a-z][a-z0-9_]* và mỗi biến chỉ được gán một lần.\n");
    h.push_str("- Bộ chọn vùng hợp lệ: \"largest\", \"most_confident\", \"leftmost\", \"rightmost\".\n");
    h.push_str("- Câu lệnh cuối cùng phải trả về Answer.\n");
    h.push_str("\n## Xử lý câu hỏi đa nghĩa\n");
    h.push_str("Nếu câu hỏi có thể hiểu theo nhiều cách (thành ngữ, từ đa nghĩa, tiểu từ tình thái như \"nhỉ\", \"à\", \"vậy\"), ");
    h.push_str("hãy chọn cách hiểu khớp nhất với các đối tượng được phát hiện và ngữ cảnh văn hóa Việt Nam.\n");
    h.push_str("Chỉ trả về chương trình, không giải thích.\n");
    h
}

/// Full few-shot prompt. Byte-deterministic in its inputs.
pub fn build_prompt(question: &str, exemplars: &[Exemplar], labels: &[LabelHint]) -> String {
    let mut p = prompt_header();
    p.push_str("\n## Ví dụ\n");
    for ex in exemplars {
        let _ = write!(
            p,
            "\n{QUESTION_MARKER}{}\nLoại: {}\n{PROGRAM_MARKER}\n{}\n",
            ex.question,
            ex.qtype.as_str(),
            ex.program.trim_end()
        );
    }
    p.push_str("\n## Đối tượng phát hiện trong ảnh\n");
    if labels.is_empty() {
        p.push_str("(không có)\n");
    }
    for l in labels {
        let _ = writeln!(p, "- {}", l.label);
    }
    let _ = write!(p, "\n## Câu hỏi cần chuyển\n{QUESTION_MARKER}{}\n{PROGRAM_MARKER}\n", question.trim());
    p
}

fn repair_prompt(base: &str, previous_output: &str, diagnostics: &[String]) -> String {
    let mut p = base.to_string();
    p.push_str("\n## Chương trình trước đó bị lỗi\n");
    p.push_str(previous_output.trim_end());
    p.push_str("\n## Chẩn đoán\n");
    for d in diagnostics {
        let _ = writeln!(p, "{d}");
    }
    let _ = write!(p, "Hãy viết lại toàn bộ chương trình.\n{PROGRAM_MARKER}\n");
    p
}

/// Drops Markdown code fences a model may wrap its program in.
fn strip_fences(output: &str) -> String {
    output
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses and typechecks candidate text, returning diagnostics on failure.
fn accept(output: &str) -> Result<Program, Vec<String>> {
    let program = parse_program(&strip_fences(output)).map_err(|e| vec![e.to_string()])?;
    let diags = typecheck_program(&program);
    if diags.is_empty() {
        Ok(program)
    } else {
        Err(diags.iter().map(ToString::to_string).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationSource {
    Backend,
    BackendRepaired,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub program: Program,
    pub source: GenerationSource,
    /// Backend calls made; zero when only the fallback ran.
    pub attempts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationPolicy {
    pub max_repairs: usize,
    /// When disabled, backend transport failures are returned as errors.
    pub fallback_on_transport_error: bool,
}

impl Default for GenerationPolicy {
    fn default() -> Self {
        GenerationPolicy {
            max_repairs: 2,
            fallback_on_transport_error: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Bundled resources the generator draws on.
#[derive(Debug, Clone)]
pub struct ProgramGenerator {
    pub exemplars: Vec<Exemplar>,
    pub keywords: KeywordTable,
    pub policy: GenerationPolicy,
}

impl Default for ProgramGenerator {
    fn default() -> Self {
        ProgramGenerator {
            exemplars: crate::bundled::exemplars(),
            keywords: crate::bundled::keyword_table(),
            policy: GenerationPolicy::default(),
        }
    }
}

impl ProgramGenerator {
    /// Compiles a question into a well-typed program.
    ///
    /// With a backend, its output is parsed and typechecked; failures are
    /// retried up to `max_repairs` times with the diagnostics appended to
    /// the prompt, after which the fallback takes over. Without a backend
    /// the fallback runs directly.
    pub fn generate(
        &self,
        question: &str,
        labels: &[LabelHint],
        backend: Option<&dyn GeneratorBackend>,
    ) -> Result<GenerationOutcome, GenerationError> {
        let fallback = |attempts| GenerationOutcome {
            program: fallback_generate(question, labels, &self.keywords),
            source: GenerationSource::Fallback,
            attempts,
        };
        let Some(backend) = backend else {
            return Ok(fallback(0));
        };
        let base = build_prompt(question, &self.exemplars, labels);
        let mut prompt = base.clone();
        for attempt in 1..=self.policy.max_repairs + 1 {
            let output = match backend.complete(&prompt) {
                Ok(text) => text,
                Err(_) if self.policy.fallback_on_transport_error => return Ok(fallback(attempt)),
                Err(e) => return Err(e.into()),
            };
            match accept(&output) {
                Ok(program) => {
                    return Ok(GenerationOutcome {
                        program,
                        source: if attempt == 1 {
                            GenerationSource::Backend
                        } else {
                            GenerationSource::BackendRepaired
                        },
                        attempts: attempt,
                    })
                }
                Err(diags) => prompt = repair_prompt(&base, &output, &diags),
            }
        }
        Ok(fallback(self.policy.max_repairs + 1))
    }
}

/// Free-function form of [`ProgramGenerator::generate`].
pub fn generate_program(
    question: &str,
    labels: &[LabelHint],
    backend: Option<&dyn GeneratorBackend>,
    max_repairs: usize,
) -> Result<GenerationOutcome, GenerationError> {
    let mut generator = ProgramGenerator::default();
    generator.policy.max_repairs = max_repairs;
    generator.generate(question, labels, backend)
}
