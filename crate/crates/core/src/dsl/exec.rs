use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::registry::{typecheck_program, Builtin, Diagnostic};
use super::{Arg, Program};
use crate::kb::{CulturalEntity, KnowledgeBase, MatchConfig};
use crate::perception::Detection;
use crate::templates::{fill, Templates};

#[derive(Debug, Clone, Default)]
pub struct ExecConfig {
    pub matching: MatchConfig,
    pub templates: Templates,
}

/// Everything a program can observe while running.
#[derive(Debug, Clone, Copy)]
pub struct ExecContext<'a> {
    pub detections: &'a [Detection],
    pub kb: &'a KnowledgeBase,
    pub question: &'a str,
    pub config: &'a ExecConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRef {
    pub id: String,
    /// Detection the entity was identified from; `None` for text lookups.
    pub region: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextValue {
    pub text: String,
    pub entity: Option<String>,
    pub unresolved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerValue {
    pub text: String,
    pub uncertain: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Value {
    RegionList { regions: Vec<usize> },
    Region { region: Option<usize> },
    Entity { entity: Option<EntityRef> },
    Text(TextValue),
    Answer(AnswerValue),
}

impl Value {
    fn render(&self, detections: &[Detection]) -> String {
        match self {
            Value::RegionList { regions } => {
                let ids: Vec<String> = regions.iter().map(usize::to_string).collect();
                format!("regions[{}]", ids.join(","))
            }
            Value::Region { region: Some(i) } => format!("region#{i}({})", detections[*i].label),
            Value::Region { region: None } => "region:none".into(),
            Value::Entity { entity: Some(e) } => format!("entity:{}", e.id),
            Value::Entity { entity: None } => "entity:none".into(),
            Value::Text(t) => serde_json::to_string(&t.text).unwrap_or_default(),
            Value::Answer(a) => format!(
                "answer{}({})",
                if a.uncertain { "?" } else { "" },
                serde_json::to_string(&a.text).unwrap_or_default()
            ),
        }
    }
}

/// What one executed step saw and produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub var: String,
    pub func: String,
    pub inputs: Vec<String>,
    pub output: String,
    pub entities: Vec<String>,
    pub regions: Vec<usize>,
    pub unresolved: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub records: Vec<TraceRecord>,
    pub final_value: Value,
}

impl ExecutionTrace {
    pub fn answer(&self) -> Option<&AnswerValue> {
        match &self.final_value {
            Value::Answer(a) => Some(a),
            _ => None,
        }
    }

    pub fn uncertain(&self) -> bool {
        self.records.iter().any(|r| r.unresolved) || self.answer().is_none_or(|a| a.uncertain)
    }

    fn identifying_records(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| {
            Builtin::from_name(&r.func)
                .is_some_and(|b| b.category_family().is_some() || b == Builtin::LookupEntity)
                && !r.unresolved
        })
    }

    /// `(region, entity)` pairs established by `identify_*` steps, in step order.
    pub fn region_links(&self) -> Vec<(usize, String)> {
        self.identifying_records()
            .filter(|r| r.func != Builtin::LookupEntity.name())
            .filter_map(|r| Some((*r.regions.first()?, r.entities.first()?.clone())))
            .collect()
    }

    /// Entities resolved from text by `lookup_entity`.
    pub fn text_resolved_entities(&self) -> BTreeSet<String> {
        self.identifying_records()
            .filter(|r| r.func == Builtin::LookupEntity.name())
            .filter_map(|r| r.entities.first().cloned())
            .collect()
    }

    pub fn touched_entities(&self) -> BTreeSet<String> {
        self.records.iter().flat_map(|r| r.entities.iter().cloned()).collect()
    }

    /// The last entity a step resolved, with the region it came from.
    pub fn primary_entity(&self) -> Option<EntityRef> {
        self.identifying_records().last().and_then(|r| {
            Some(EntityRef {
                id: r.entities.first()?.clone(),
                region: if r.func == Builtin::LookupEntity.name() {
                    None
                } else {
                    r.regions.first().copied()
                },
            })
        })
    }

    /// Entities passed to resolved steps calling `func`, in step order.
    pub fn entities_for(&self, func: Builtin) -> Vec<String> {
        self.records
            .iter()
            .filter(|r| r.func == func.name() && !r.unresolved)
            .flat_map(|r| r.entities.iter().cloned())
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("program does not typecheck: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    IllTyped(Vec<Diagnostic>),
    #[error("internal error at step {step}: {message}")]
    Internal { step: usize, message: String },
}

impl Templates {
    pub fn regional_variant_sentence(&self, region: &str, note: &str) -> String {
        fill(&self.regional_variant, &[("region", region), ("note", note)])
    }

    pub fn answer_part(&self, name: &str, text: &str) -> String {
        fill(&self.answer_part, &[("name", name), ("text", text)])
    }
}

/// Text a describing function renders from the entity's fields.
pub(crate) fn field_text(func: Builtin, e: &CulturalEntity, templates: &Templates) -> String {
    match func {
        Builtin::DescribeArchitecture => e.description.clone(),
        Builtin::ExplainCulturalSignificance => {
            if e.ceremonial_function.is_empty() {
                e.description.clone()
            } else {
                format!("{} {}", e.description, e.ceremonial_function)
            }
        }
        Builtin::CompareRegionalVariations => e
            .regional_variants
            .iter()
            .map(|v| templates.regional_variant_sentence(&v.region, &v.note))
            .collect::<Vec<_>>()
            .join(" "),
        Builtin::DescribeHistory => e.historical_context.clone(),
        _ => String::new(),
    }
}

struct StepResult {
    value: Value,
    entities: Vec<String>,
    regions: Vec<usize>,
    unresolved: bool,
    note: Option<String>,
}

impl StepResult {
    fn ok(value: Value) -> Self {
        StepResult {
            value,
            entities: Vec::new(),
            regions: Vec::new(),
            unresolved: false,
            note: None,
        }
    }

    fn unresolved(value: Value, note: String) -> Self {
        StepResult {
            unresolved: true,
            note: Some(note),
            ..StepResult::ok(value)
        }
    }
}

fn select(detections: &[Detection], regions: &[usize], selector: &str) -> Option<usize> {
    let key = |i: &usize| &detections[*i];
    let it = regions.iter().copied();
    // ties resolve to the lower detection index
    match selector {
        "largest" => it.min_by(|a, b| key(b).bbox.area().total_cmp(&key(a).bbox.area()).then(a.cmp(b))),
        "most_confident" => it.min_by(|a, b| {
            key(b)
                .confidence
                .total_cmp(&key(a).confidence)
                .then(key(b).bbox.area().total_cmp(&key(a).bbox.area()))
                .then(a.cmp(b))
        }),
        "leftmost" => it.min_by(|a, b| key(a).bbox.x1.total_cmp(&key(b).bbox.x1).then(a.cmp(b))),
        "rightmost" => it.min_by(|a, b| key(b).bbox.x2.total_cmp(&key(a).bbox.x2).then(a.cmp(b))),
        _ => None,
    }
}

pub const SELECTORS: [&str; 4] = ["largest", "most_confident", "leftmost", "rightmost"];

fn internal(step: usize, message: impl Into<String>) -> ExecError {
    ExecError::Internal {
        step,
        message: message.into(),
    }
}

/// Runs a well-typed program step by step and records a trace.
///
/// Unresolvable regions or entities do not abort execution: the step is
/// marked unresolved and the final answer is flagged uncertain.
pub fn execute_program(p: &Program, ctx: &ExecContext<'_>) -> Result<ExecutionTrace, ExecError> {
    let diags = typecheck_program(p);
    if !diags.is_empty() {
        return Err(ExecError::IllTyped(diags));
    }
    let templates = &ctx.config.templates;
    let mut env: HashMap<&str, Value> = HashMap::new();
    let mut records: Vec<TraceRecord> = Vec::with_capacity(p.steps.len());

    for (i, step) in p.steps.iter().enumerate() {
        let builtin = Builtin::from_name(&step.func).ok_or_else(|| internal(i, "unknown function"))?;
        let args: Vec<Value> = step
            .args
            .iter()
            .map(|a| match a {
                Arg::Var(v) => env.get(v.as_str()).cloned().ok_or_else(|| internal(i, format!("unbound `{v}`"))),
                Arg::Str(s) => Ok(Value::Text(TextValue {
                    text: s.clone(),
                    entity: None,
                    unresolved: false,
                })),
                Arg::Int(_) => Err(internal(i, "integer argument")),
            })
            .collect::<Result<_, _>>()?;

        let result = match builtin {
            Builtin::DetectObjects => {
                let regions: Vec<usize> = (0..ctx.detections.len()).collect();
                StepResult {
                    regions: regions.clone(),
                    ..StepResult::ok(Value::RegionList { regions })
                }
            }
            Builtin::SelectRegion => {
                let (Some(Value::RegionList { regions }), Some(Value::Text(sel))) = (args.first(), args.get(1)) else {
                    return Err(internal(i, "select_region argument types"));
                };
                if regions.is_empty() {
                    StepResult::unresolved(Value::Region { region: None }, "no regions to select from".into())
                } else if !SELECTORS.contains(&sel.text.as_str()) {
                    StepResult::unresolved(
                        Value::Region { region: None },
                        format!("unknown selector `{}`", sel.text),
                    )
                } else {
                    let region = select(ctx.detections, regions, &sel.text);
                    StepResult {
                        regions: region.into_iter().collect(),
                        ..StepResult::ok(Value::Region { region })
                    }
                }
            }
            Builtin::IdentifyFood | Builtin::IdentifyLandmark | Builtin::IdentifyClothing | Builtin::IdentifyObject => {
                let Some(Value::Region { region }) = args.first() else {
                    return Err(internal(i, "identify argument type"));
                };
                let family = builtin.category_family().unwrap_or(&[]);
                match region {
                    None => StepResult::unresolved(Value::Entity { entity: None }, "no region to identify".into()),
                    Some(r) => {
                        let label = &ctx.detections[*r].label;
                        let hits = ctx.kb.match_filtered(label, &ctx.config.matching, |e| {
                            family.is_empty() || family.contains(&e.category)
                        });
                        match hits.first() {
                            Some(hit) => StepResult {
                                entities: vec![hit.entity_id.clone()],
                                regions: vec![*r],
                                ..StepResult::ok(Value::Entity {
                                    entity: Some(EntityRef {
                                        id: hit.entity_id.clone(),
                                        region: Some(*r),
                                    }),
                                })
                            },
                            None => StepResult {
                                regions: vec![*r],
                                ..StepResult::unresolved(
                                    Value::Entity { entity: None },
                                    format!("no entity matches label `{label}`"),
                                )
                            },
                        }
                    }
                }
            }
            Builtin::LookupEntity => {
                let Some(Value::Text(t)) = args.first() else {
                    return Err(internal(i, "lookup_entity argument type"));
                };
                let hits = if t.unresolved {
                    Vec::new()
                } else {
                    ctx.kb.match_filtered(&t.text, &ctx.config.matching, |_| true)
                };
                match hits.first() {
                    Some(hit) => StepResult {
                        entities: vec![hit.entity_id.clone()],
                        ..StepResult::ok(Value::Entity {
                            entity: Some(EntityRef {
                                id: hit.entity_id.clone(),
                                region: None,
                            }),
                        })
                    },
                    None => StepResult::unresolved(
                        Value::Entity { entity: None },
                        format!("no entity matches `{}`", t.text),
                    ),
                }
            }
            Builtin::DescribeArchitecture
            | Builtin::ExplainCulturalSignificance
            | Builtin::CompareRegionalVariations
            | Builtin::DescribeHistory => {
                let Some(Value::Entity { entity }) = args.first() else {
                    return Err(internal(i, "describe argument type"));
                };
                let found = entity.as_ref().and_then(|e| ctx.kb.entity(&e.id));
                match found {
                    None => StepResult::unresolved(
                        Value::Text(TextValue {
                            text: String::new(),
                            entity: None,
                            unresolved: true,
                        }),
                        "no entity to describe".into(),
                    ),
                    Some(e) => {
                        let body = field_text(builtin, e, templates);
                        let text = if body.is_empty() {
                            String::new()
                        } else {
                            templates.answer_part(&e.canonical_name, &body)
                        };
                        StepResult {
                            entities: vec![e.id.clone()],
                            ..StepResult::ok(Value::Text(TextValue {
                                text,
                                entity: Some(e.id.clone()),
                                unresolved: false,
                            }))
                        }
                    }
                }
            }
            Builtin::ComposeAnswer => {
                let mut parts = Vec::with_capacity(args.len());
                for a in &args {
                    let Value::Text(t) = a else {
                        return Err(internal(i, "compose_answer argument type"));
                    };
                    if !t.text.is_empty() {
                        parts.push(t.text.as_str());
                    }
                }
                let uncertain = records.iter().any(|r| r.unresolved)
                    || args.iter().any(|a| matches!(a, Value::Text(t) if t.unresolved));
                let mut text = parts.join(" ");
                if text.is_empty() && uncertain {
                    text = templates.unresolved_answer.clone();
                }
                StepResult::ok(Value::Answer(AnswerValue { text, uncertain }))
            }
        };

        records.push(TraceRecord {
            step: i,
            var: step.var.clone(),
            func: step.func.clone(),
            inputs: args.iter().map(|a| a.render(ctx.detections)).collect(),
            output: result.value.render(ctx.detections),
            entities: result.entities,
            regions: result.regions,
            unresolved: result.unresolved,
            note: result.note,
        });
        env.insert(&step.var, result.value);
    }

    let final_value = p
        .result_var()
        .and_then(|v| env.remove(v))
        .ok_or_else(|| internal(p.steps.len(), "program produced no value"))?;
    Ok(ExecutionTrace { records, final_value })
}
