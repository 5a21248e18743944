//! The flat single-assignment program language questions compile into.
//!
//! ```text
//! r = detect_objects()
//! s = select_region(r, "largest")
//! e = identify_food(s)
//! t = explain_cultural_significance(e)
//! a = compose_answer(t)
//! ```

mod exec;
mod parser;
mod registry;

use std::fmt::{self, Write as _};

pub use exec::{
    execute_program, AnswerValue, EntityRef, ExecConfig, ExecContext, ExecError, ExecutionTrace, TextValue,
    TraceRecord, Value,
};
pub use parser::{parse_program, ParseError, ParseErrorKind};
pub use registry::{registry, typecheck_program, Builtin, Diagnostic, FunctionSignature, ValueType};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    Var(String),
    Str(String),
    Int(i64),
}

/// One binding `var = func(args)`. `line` is the 1-based source line and is
/// ignored by equality.
#[derive(Debug, Clone, Eq)]
pub struct Step {
    pub var: String,
    pub func: String,
    pub args: Vec<Arg>,
    pub line: usize,
}

impl PartialEq for Step {
    fn eq(&self, other: &Self) -> bool {
        self.var == other.var && self.func == other.func && self.args == other.args
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub steps: Vec<Step>,
}

impl Program {
    pub fn result_var(&self) -> Option<&str> {
        self.steps.last().map(|s| s.var.as_str())
    }
}

fn write_string_literal(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Var(v) => f.write_str(v),
            Arg::Int(i) => write!(f, "{i}"),
            Arg::Str(s) => {
                let mut buf = String::new();
                write_string_literal(&mut buf, s);
                f.write_str(&buf)
            }
        }
    }
}

/// Canonical text: one statement per line, `", "` between arguments,
/// trailing newline. Comments and blank lines are not preserved.
pub fn format_program(p: &Program) -> String {
    let mut out = String::new();
    for step in &p.steps {
        let _ = write!(out, "{} = {}(", step.var, step.func);
        for (i, arg) in step.args.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{arg}");
        }
        out.push_str(")\n");
    }
    out
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_program(self))
    }
}
