use std::collections::HashSet;
use std::fmt;
use std::iter::Peekable;
use std::str::CharIndices;

use super::{Arg, Program, Step};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    DuplicateVariable(String),
    UnboundVariable(String),
}

/// Parse failure at a 1-based line and column (columns count characters).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: ", self.line, self.column)?;
        match &self.kind {
            ParseErrorKind::Syntax(msg) => write!(f, "syntax error: {msg}"),
            ParseErrorKind::DuplicateVariable(v) => write!(f, "duplicate variable `{v}`"),
            ParseErrorKind::UnboundVariable(v) => write!(f, "reference to unbound variable `{v}`"),
        }
    }
}

struct LineLexer<'a> {
    line: usize,
    chars: Peekable<CharIndices<'a>>,
    column: usize,
}

impl<'a> LineLexer<'a> {
    fn new(line: usize, text: &'a str) -> Self {
        LineLexer {
            line,
            chars: text.char_indices().peekable(),
            column: 1,
        }
    }

    fn err(&self, column: usize, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column,
            kind: ParseErrorKind::Syntax(msg.into()),
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next().map(|(_, c)| c);
        if c.is_some() {
            self.column += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c == ' ' || c == '\t' || c == '\r') {
            self.bump();
        }
    }

    /// True when only whitespace or a comment remains.
    fn at_end(&mut self) -> bool {
        self.skip_ws();
        matches!(self.peek(), None | Some('#'))
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        self.skip_ws();
        let col = self.column;
        match self.bump() {
            Some(c) if c == want => Ok(()),
            Some(c) => Err(self.err(col, format!("expected `{want}`, found `{c}`"))),
            None => Err(self.err(col, format!("expected `{want}`, found end of line"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize), ParseError> {
        self.skip_ws();
        let col = self.column;
        match self.peek() {
            Some(c) if c.is_ascii_lowercase() => {}
            Some(c) => return Err(self.err(col, format!("expected {what}, found `{c}`"))),
            None => return Err(self.err(col, format!("expected {what}, found end of line"))),
        }
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        Ok((s, col))
    }

    fn string_literal(&mut self) -> Result<String, ParseError> {
        let start = self.column;
        self.bump(); // opening quote
        let mut s = String::new();
        loop {
            let col = self.column;
            match self.bump() {
                None => return Err(self.err(start, "unterminated string literal")),
                Some('"') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('r') => s.push('\r'),
                    Some(c) => return Err(self.err(col, format!("unknown escape `\\{c}`"))),
                    None => return Err(self.err(start, "unterminated string literal")),
                },
                Some(c) => s.push(c),
            }
        }
    }

    fn int_literal(&mut self) -> Result<i64, ParseError> {
        let col = self.column;
        let mut s = String::new();
        if self.peek() == Some('-') {
            s.push('-');
            self.bump();
        }
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            s.push(c);
            self.bump();
        }
        s.parse::<i64>()
            .map_err(|_| self.err(col, format!("invalid integer literal `{s}`")))
    }

    /// `(arg, ...)` including both parentheses. Returns args with their columns.
    fn args(&mut self) -> Result<Vec<(Arg, usize)>, ParseError> {
        self.expect('(')?;
        let mut args = Vec::new();
        self.skip_ws();
        if self.peek() == Some(')') {
            self.bump();
            return Ok(args);
        }
        loop {
            self.skip_ws();
            let col = self.column;
            let arg = match self.peek() {
                Some('"') => Arg::Str(self.string_literal()?),
                Some(c) if c.is_ascii_digit() || c == '-' => Arg::Int(self.int_literal()?),
                Some(c) if c.is_ascii_lowercase() => {
                    let (name, _) = self.ident("argument")?;
                    self.skip_ws();
                    if self.peek() == Some('(') {
                        return Err(self.err(
                            self.column,
                            "nested calls are not allowed; bind the inner call to a variable",
                        ));
                    }
                    Arg::Var(name)
                }
                Some(c) => return Err(self.err(col, format!("expected argument, found `{c}`"))),
                None => return Err(self.err(col, "expected argument, found end of line")),
            };
            args.push((arg, col));
            self.skip_ws();
            let col = self.column;
            match self.bump() {
                Some(',') => continue,
                Some(')') => return Ok(args),
                Some(c) => return Err(self.err(col, format!("expected `,` or `)`, found `{c}`"))),
                None => return Err(self.err(col, "expected `,` or `)`, found end of line")),
            }
        }
    }
}

/// Parses program text. Variables must be bound before use and bound once.
pub fn parse_program(source: &str) -> Result<Program, ParseError> {
    let mut steps = Vec::new();
    let mut bound: HashSet<String> = HashSet::new();
    for (i, text) in source.lines().enumerate() {
        let line = i + 1;
        let mut lx = LineLexer::new(line, text);
        if lx.at_end() {
            continue;
        }
        let (var, var_col) = lx.ident("variable name")?;
        lx.expect('=')?;
        let (func, _) = lx.ident("function name")?;
        let args = lx.args()?;
        if !lx.at_end() {
            let col = lx.column;
            return Err(lx.err(col, "unexpected text after statement"));
        }
        for (arg, col) in &args {
            if let Arg::Var(name) = arg {
                if !bound.contains(name) {
                    return Err(ParseError {
                        line,
                        column: *col,
                        kind: ParseErrorKind::UnboundVariable(name.clone()),
                    });
                }
            }
        }
        if !bound.insert(var.clone()) {
            return Err(ParseError {
                line,
                column: var_col,
                kind: ParseErrorKind::DuplicateVariable(var),
            });
        }
        steps.push(Step {
            var,
            func,
            args: args.into_iter().map(|(a, _)| a).collect(),
            line,
        });
    }
    Ok(Program { steps })
}
