use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Arg, Program};
use crate::category::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValueType {
    RegionList,
    Region,
    Entity,
    Text,
    Answer,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSignature {
    pub name: &'static str,
    pub param_types: &'static [ValueType],
    /// When set, the last parameter type repeats one or more times.
    pub variadic: bool,
    pub return_type: ValueType,
}

impl FunctionSignature {
    pub fn render(&self) -> String {
        let params: Vec<String> = self.param_types.iter().map(ValueType::to_string).collect();
        let mut p = params.join(", ");
        if self.variadic {
            p.push_str(", ...");
        }
        format!("{}({}) -> {}", self.name, p, self.return_type)
    }
}

/// The closed set of functions a program may call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    DetectObjects,
    SelectRegion,
    IdentifyFood,
    IdentifyLandmark,
    IdentifyClothing,
    IdentifyObject,
    LookupEntity,
    DescribeArchitecture,
    ExplainCulturalSignificance,
    CompareRegionalVariations,
    DescribeHistory,
    ComposeAnswer,
}

use ValueType::*;

impl Builtin {
    pub const ALL: [Builtin; 12] = [
        Builtin::DetectObjects,
        Builtin::SelectRegion,
        Builtin::IdentifyFood,
        Builtin::IdentifyLandmark,
        Builtin::IdentifyClothing,
        Builtin::IdentifyObject,
        Builtin::LookupEntity,
        Builtin::DescribeArchitecture,
        Builtin::ExplainCulturalSignificance,
        Builtin::CompareRegionalVariations,
        Builtin::DescribeHistory,
        Builtin::ComposeAnswer,
    ];

    pub fn signature(self) -> FunctionSignature {
        let (name, param_types, variadic, return_type): (_, &'static [ValueType], _, _) = match self {
            Builtin::DetectObjects => ("detect_objects", &[], false, RegionList),
            Builtin::SelectRegion => ("select_region", &[RegionList, Text], false, Region),
            Builtin::IdentifyFood => ("identify_food", &[Region], false, Entity),
            Builtin::IdentifyLandmark => ("identify_landmark", &[Region], false, Entity),
            Builtin::IdentifyClothing => ("identify_clothing", &[Region], false, Entity),
            Builtin::IdentifyObject => ("identify_object", &[Region], false, Entity),
            Builtin::LookupEntity => ("lookup_entity", &[Text], false, Entity),
            Builtin::DescribeArchitecture => ("describe_architecture", &[Entity], false, Text),
            Builtin::ExplainCulturalSignificance => ("explain_cultural_significance", &[Entity], false, Text),
            Builtin::CompareRegionalVariations => ("compare_regional_variations", &[Entity], false, Text),
            Builtin::DescribeHistory => ("describe_history", &[Entity], false, Text),
            Builtin::ComposeAnswer => ("compose_answer", &[Text], true, Answer),
        };
        FunctionSignature {
            name,
            param_types,
            variadic,
            return_type,
        }
    }

    pub fn name(self) -> &'static str {
        self.signature().name
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::ALL.into_iter().find(|b| b.name() == name)
    }

    /// Category family an `identify_*` function restricts matching to.
    /// `None` for functions that do not identify regions; an empty slice
    /// for `identify_object`, which accepts any category.
    pub fn category_family(self) -> Option<&'static [Category]> {
        match self {
            Builtin::IdentifyFood => Some(&[Category::Cuisine]),
            Builtin::IdentifyLandmark => Some(&[Category::Architecture, Category::Landscapes]),
            Builtin::IdentifyClothing => Some(&[Category::TraditionalClothing]),
            Builtin::IdentifyObject => Some(&[]),
            _ => None,
        }
    }

    /// The `identify_*` function whose family covers `category` most narrowly.
    pub fn identifier_for(category: Category) -> Builtin {
        match category {
            Category::Cuisine => Builtin::IdentifyFood,
            Category::Architecture | Category::Landscapes => Builtin::IdentifyLandmark,
            Category::TraditionalClothing => Builtin::IdentifyClothing,
            _ => Builtin::IdentifyObject,
        }
    }
}

pub fn registry() -> Vec<FunctionSignature> {
    Builtin::ALL.iter().map(|b| b.signature()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 0-based step index.
    pub step: usize,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Checks function existence, arity, argument types and that the program
/// ends in an `Answer`. An empty result means the program is well typed.
pub fn typecheck_program(p: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    // None: bound, but its type is unknown because its own step failed
    let mut env: HashMap<&str, Option<ValueType>> = HashMap::new();
    let mut last_type = None;

    for (i, step) in p.steps.iter().enumerate() {
        let mut report = |message: String| {
            diags.push(Diagnostic {
                step: i,
                line: step.line,
                message,
            })
        };
        let Some(builtin) = Builtin::from_name(&step.func) else {
            report(format!("unknown function `{}`", step.func));
            env.insert(&step.var, None);
            last_type = None;
            continue;
        };
        let sig = builtin.signature();
        let arity_ok = if sig.variadic {
            step.args.len() >= sig.param_types.len()
        } else {
            step.args.len() == sig.param_types.len()
        };
        if !arity_ok {
            let expected = if sig.variadic {
                format!("at least {}", sig.param_types.len())
            } else {
                sig.param_types.len().to_string()
            };
            report(format!(
                "`{}` expects {expected} argument(s), found {}",
                sig.name,
                step.args.len()
            ));
        }
        for (j, arg) in step.args.iter().enumerate() {
            let Some(&expected) = sig.param_types.get(j).or(if sig.variadic { sig.param_types.last() } else { None })
            else {
                break;
            };
            let found = match arg {
                Arg::Str(_) => Some(Text),
                Arg::Int(_) => {
                    report(format!(
                        "argument {} of `{}`: expected {expected}, found integer literal",
                        j + 1,
                        sig.name
                    ));
                    continue;
                }
                Arg::Var(v) => match env.get(v.as_str()) {
                    Some(t) => *t,
                    None => {
                        report(format!("reference to unbound variable `{v}`"));
                        continue;
                    }
                },
            };
            if let Some(found) = found {
                if found != expected {
                    report(format!(
                        "argument {} of `{}`: expected {expected}, found {found}",
                        j + 1,
                        sig.name
                    ));
                }
            }
        }
        if env.insert(&step.var, Some(sig.return_type)).is_some() {
            report(format!("duplicate variable `{}`", step.var));
        }
        last_type = Some(sig.return_type);
    }

    match (p.steps.last(), last_type) {
        (None, _) => diags.push(Diagnostic {
            step: 0,
            line: 0,
            message: "program must end in Answer, but it is empty".into(),
        }),
        (Some(last), Some(t)) if t != Answer => diags.push(Diagnostic {
            step: p.steps.len() - 1,
            line: last.line,
            message: format!("program must end in Answer, found {t}"),
        }),
        _ => {}
    }
    diags
}
