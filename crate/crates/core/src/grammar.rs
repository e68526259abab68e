//! Probabilistic context-free grammars and their text file format.
//!
//! ```text
//! # linear grammar with two variables
//! start: E
//! E -> E '+' 'c' V [0.5]
//! E -> 'c' [0.5]
//! V -> 'x1' [0.5]
//! V -> 'x2' [0.5]
//! ```
//!
//! Nonterminals match `[A-Z][A-Za-z0-9_]*`, terminals are single-quoted
//! literals (escapes `\'` and `\\`), the bracketed number is the rule
//! probability, and a rule with nothing between `->` and `[` is a null rule.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

/// Tolerance for per-nonterminal probability sums.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Index into a grammar's nonterminal table.
pub type NonterminalId = usize;
/// Index into a grammar's terminal table.
pub type TerminalId = usize;
/// Index into a grammar's rule list.
pub type RuleId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Terminal(TerminalId),
    Nonterminal(NonterminalId),
}

impl Symbol {
    pub fn as_nonterminal(self) -> Option<NonterminalId> {
        match self {
            Symbol::Nonterminal(a) => Some(a),
            Symbol::Terminal(_) => None,
        }
    }

    pub fn as_terminal(self) -> Option<TerminalId> {
        match self {
            Symbol::Terminal(t) => Some(t),
            Symbol::Nonterminal(_) => None,
        }
    }
}

/// `lhs -> rhs [probability]`; an empty `rhs` is a null rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub lhs: NonterminalId,
    pub rhs: Vec<Symbol>,
    pub probability: f64,
}

impl Rule {
    pub fn is_null(&self) -> bool {
        self.rhs.is_empty()
    }

    /// The target of a unit rule `A -> B`.
    pub fn unit_target(&self) -> Option<NonterminalId> {
        match self.rhs.as_slice() {
            [Symbol::Nonterminal(b)] => Some(*b),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate start declaration at line {line}")]
    DuplicateStart { line: usize },
    #[error("unknown escape '\\{escape}' at line {line}, column {column}")]
    UnknownEscape {
        line: usize,
        column: usize,
        escape: char,
    },
    #[error("grammar has no start symbol (no start declaration and no rules)")]
    NoStart,
    #[error("invalid nonterminal name {0:?}")]
    InvalidNonterminalName(String),
    #[error("invalid terminal name {0:?}")]
    InvalidTerminalName(String),
    #[error("duplicate {kind} name {name:?}")]
    DuplicateName { kind: &'static str, name: String },
    #[error("nonterminal index {0} out of range")]
    NonterminalOutOfRange(usize),
}

/// A probabilistic context-free grammar.
///
/// Values are immutable once built; transformations return new grammars.
#[derive(Debug, Clone, PartialEq)]
pub struct Pcfg {
    nonterminals: Vec<String>,
    terminals: Vec<String>,
    start: NonterminalId,
    rules: Vec<Rule>,
    by_lhs: Vec<Vec<RuleId>>,
}

pub(crate) fn is_nonterminal_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn is_terminal_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_whitespace)
}

impl Pcfg {
    /// Builds a grammar from explicit tables.
    ///
    /// Names and the start symbol are checked here; rule right-hand sides
    /// are not (an out-of-range symbol is reported by [`Pcfg::validate`]).
    pub fn new(
        nonterminals: Vec<String>,
        terminals: Vec<String>,
        start: NonterminalId,
        rules: Vec<Rule>,
    ) -> Result<Self, GrammarError> {
        let mut seen = HashMap::new();
        for name in &nonterminals {
            if !is_nonterminal_name(name) {
                return Err(GrammarError::InvalidNonterminalName(name.clone()));
            }
            if seen.insert(name.as_str(), ()).is_some() {
                return Err(GrammarError::DuplicateName {
                    kind: "nonterminal",
                    name: name.clone(),
                });
            }
        }
        seen.clear();
        for name in &terminals {
            if !is_terminal_name(name) {
                return Err(GrammarError::InvalidTerminalName(name.clone()));
            }
            if seen.insert(name.as_str(), ()).is_some() {
                return Err(GrammarError::DuplicateName {
                    kind: "terminal",
                    name: name.clone(),
                });
            }
        }
        if start >= nonterminals.len() {
            return Err(GrammarError::NonterminalOutOfRange(start));
        }
        if let Some(rule) = rules.iter().find(|r| r.lhs >= nonterminals.len()) {
            return Err(GrammarError::NonterminalOutOfRange(rule.lhs));
        }
        Ok(Self::from_parts(nonterminals, terminals, start, rules))
    }

    /// Caller guarantees names are valid and every `lhs` is in range.
    pub(crate) fn from_parts(
        nonterminals: Vec<String>,
        terminals: Vec<String>,
        start: NonterminalId,
        rules: Vec<Rule>,
    ) -> Self {
        let mut by_lhs = vec![Vec::new(); nonterminals.len()];
        for (id, rule) in rules.iter().enumerate() {
            by_lhs[rule.lhs].push(id);
        }
        Pcfg {
            nonterminals,
            terminals,
            start,
            rules,
            by_lhs,
        }
    }

    /// Same tables and start symbol, different rules.
    pub(crate) fn with_rules(&self, rules: Vec<Rule>) -> Self {
        Self::from_parts(
            self.nonterminals.clone(),
            self.terminals.clone(),
            self.start,
            rules,
        )
    }

    pub fn start(&self) -> NonterminalId {
        self.start
    }

    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn terminals(&self) -> &[String] {
        &self.terminals
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: RuleId) -> &Rule {
        &self.rules[id]
    }

    /// Rule ids with the given left-hand side, in stored order.
    pub fn rules_for(&self, lhs: NonterminalId) -> &[RuleId] {
        &self.by_lhs[lhs]
    }

    pub fn nonterminal_name(&self, id: NonterminalId) -> &str {
        &self.nonterminals[id]
    }

    pub fn terminal_name(&self, id: TerminalId) -> &str {
        &self.terminals[id]
    }

    pub fn nonterminal_id(&self, name: &str) -> Option<NonterminalId> {
        self.nonterminals.iter().position(|n| n == name)
    }

    pub fn terminal_id(&self, name: &str) -> Option<TerminalId> {
        self.terminals.iter().position(|n| n == name)
    }

    pub fn has_null_rules(&self) -> bool {
        self.rules.iter().any(Rule::is_null)
    }

    pub(crate) fn symbols_in_range(&self, rule: &Rule) -> bool {
        rule.rhs.iter().all(|s| match *s {
            Symbol::Terminal(t) => t < self.terminals.len(),
            Symbol::Nonterminal(a) => a < self.nonterminals.len(),
        })
    }

    /// Terminal names joined by single spaces.
    pub fn render(&self, terminals: &[TerminalId]) -> String {
        let names: Vec<&str> = terminals.iter().map(|&t| self.terminal_name(t)).collect();
        names.join(" ")
    }

    /// Human-readable form of one rule, e.g. `S -> S 'x' [0.5]`.
    pub fn display_rule(&self, rule: &Rule) -> String {
        let mut out = String::new();
        self.write_rule(&mut out, rule, |p| format!("{p}"));
        out
    }

    fn write_rule(&self, out: &mut String, rule: &Rule, fmt_prob: impl Fn(f64) -> String) {
        out.push_str(self.nonterminal_name(rule.lhs));
        out.push_str(" ->");
        for sym in &rule.rhs {
            out.push(' ');
            match *sym {
                Symbol::Nonterminal(a) => out.push_str(self.nonterminal_name(a)),
                Symbol::Terminal(t) => {
                    out.push('\'');
                    for c in self.terminal_name(t).chars() {
                        if c == '\'' || c == '\\' {
                            out.push('\\');
                        }
                        out.push(c);
                    }
                    out.push('\'');
                }
            }
        }
        let _ = write!(out, " [{}]", fmt_prob(rule.probability));
    }

    /// Serializes to the text format: a `start:` line followed by the rules
    /// in stored order, probabilities with 17 significant digits.
    pub fn serialize(&self) -> String {
        let mut out = format!("start: {}\n", self.nonterminal_name(self.start));
        for rule in &self.rules {
            self.write_rule(&mut out, rule, |p| format!("{p:.16e}"));
            out.push('\n');
        }
        out
    }

    /// Structural and probabilistic well-formedness checks.
    pub fn validate(&self) -> ValidationReport {
        crate::validate::validate(self)
    }
}

/// One finding of [`Pcfg::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    ProbabilitySum,
    ProbabilityRange,
    NoRules,
    UndeclaredSymbol,
    Unreachable,
    NonProductive,
    NullRule,
    LinearCycle,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_error(&self, kind: DiagnosticKind) -> bool {
        self.errors.iter().any(|d| d.kind == kind)
    }

    pub fn has_warning(&self, kind: DiagnosticKind) -> bool {
        self.warnings.iter().any(|d| d.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Nonterminal(String),
    Terminal(String),
    Arrow,
    Probability(f64),
}

struct Line<'a> {
    number: usize,
    chars: Vec<(usize, char)>,
    pos: usize,
    _text: &'a str,
}

impl<'a> Line<'a> {
    fn new(number: usize, text: &'a str) -> Self {
        Line {
            number,
            chars: text.chars().enumerate().map(|(i, c)| (i + 1, c)).collect(),
            pos: 0,
            _text: text,
        }
    }

    fn column(&self) -> usize {
        self.chars
            .get(self.pos)
            .map(|&(col, _)| col)
            .unwrap_or(self.chars.len() + 1)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        self.pos += 1;
        c
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        matches!(self.peek(), None | Some('#'))
    }

    fn error(&self, column: usize, message: impl Into<String>) -> GrammarError {
        GrammarError::Syntax {
            line: self.number,
            column,
            message: message.into(),
        }
    }

    fn next_token(&mut self) -> Result<Option<(usize, Token)>, GrammarError> {
        if self.at_end() {
            return Ok(None);
        }
        let column = self.column();
        let c = self.peek().expect("not at end");
        match c {
            '-' => {
                self.bump();
                if self.bump() == Some('>') {
                    Ok(Some((column, Token::Arrow)))
                } else {
                    Err(self.error(column, "expected '->'"))
                }
            }
            '\'' => {
                self.bump();
                let mut name = String::new();
                loop {
                    let col = self.column();
                    match self.bump() {
                        None => return Err(self.error(column, "unterminated terminal literal")),
                        Some('\'') => break,
                        Some('\\') => match self.bump() {
                            Some(e @ ('\'' | '\\')) => name.push(e),
                            Some(other) => {
                                return Err(GrammarError::UnknownEscape {
                                    line: self.number,
                                    column: col,
                                    escape: other,
                                })
                            }
                            None => return Err(self.error(column, "unterminated terminal literal")),
                        },
                        Some(ch) => name.push(ch),
                    }
                }
                if !is_terminal_name(&name) {
                    return Err(self.error(
                        column,
                        "terminal literal must be non-empty and contain no whitespace",
                    ));
                }
                Ok(Some((column, Token::Terminal(name))))
            }
            '[' => {
                self.bump();
                let mut body = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.error(column, "unterminated probability")),
                        Some(']') => break,
                        Some(ch) => body.push(ch),
                    }
                }
                match body.trim().parse::<f64>() {
                    Ok(p) if p.is_finite() => Ok(Some((column, Token::Probability(p)))),
                    _ => Err(self.error(column, format!("invalid probability {:?}", body.trim()))),
                }
            }
            c if c.is_ascii_uppercase() => {
                let mut name = String::new();
                while let Some(ch) = self.peek() {
                    if ch.is_ascii_alphanumeric() || ch == '_' {
                        name.push(ch);
                        self.bump();
                    } else {
                        break;
                    }
                }
                Ok(Some((column, Token::Nonterminal(name))))
            }
            other => Err(self.error(column, format!("unexpected character {other:?}"))),
        }
    }
}

#[derive(Default)]
struct Tables {
    nonterminals: Vec<String>,
    nt_index: HashMap<String, NonterminalId>,
    terminals: Vec<String>,
    t_index: HashMap<String, TerminalId>,
}

impl Tables {
    fn nonterminal(&mut self, name: &str) -> NonterminalId {
        if let Some(&id) = self.nt_index.get(name) {
            return id;
        }
        let id = self.nonterminals.len();
        self.nonterminals.push(name.to_owned());
        self.nt_index.insert(name.to_owned(), id);
        id
    }

    fn terminal(&mut self, name: &str) -> TerminalId {
        if let Some(&id) = self.t_index.get(name) {
            return id;
        }
        let id = self.terminals.len();
        self.terminals.push(name.to_owned());
        self.t_index.insert(name.to_owned(), id);
        id
    }
}

/// Parses the text grammar format. Validation is a separate step.
pub fn parse_grammar(text: &str) -> Result<Pcfg, GrammarError> {
    let mut tables = Tables::default();
    let mut start: Option<(usize, NonterminalId)> = None;
    let mut rules = Vec::new();

    for (index, raw) in text.lines().enumerate() {
        let mut line = Line::new(index + 1, raw);
        if line.at_end() {
            continue;
        }
        let rest = raw.trim_start();
        if let Some(after) = rest.strip_prefix("start") {
            if after.trim_start().starts_with(':') {
                if let Some((_, _)) = start {
                    return Err(GrammarError::DuplicateStart { line: line.number });
                }
                if !rules.is_empty() {
                    return Err(line.error(1, "start declaration must precede all rules"));
                }
                // skip "start" and ':'
                line.skip_ws();
                line.pos += "start".len();
                line.skip_ws();
                line.bump();
                let column = {
                    line.skip_ws();
                    line.column()
                };
                match line.next_token()? {
                    Some((_, Token::Nonterminal(name))) => {
                        let id = tables.nonterminal(&name);
                        start = Some((line.number, id));
                    }
                    _ => return Err(line.error(column, "expected a nonterminal after 'start:'")),
                }
                if !line.at_end() {
                    let col = line.column();
                    return Err(line.error(col, "unexpected text after start declaration"));
                }
                continue;
            }
        }

        let lhs = match line.next_token()? {
            Some((_, Token::Nonterminal(name))) => tables.nonterminal(&name),
            Some((col, _)) => return Err(line.error(col, "expected a nonterminal")),
            None => unreachable!("blank lines are skipped"),
        };
        match line.next_token()? {
            Some((_, Token::Arrow)) => {}
            Some((col, _)) => return Err(line.error(col, "expected '->'")),
            None => {
                let col = line.column();
                return Err(line.error(col, "expected '->'"));
            }
        }
        let mut rhs = Vec::new();
        let probability = loop {
            match line.next_token()? {
                Some((_, Token::Nonterminal(name))) => {
                    rhs.push(Symbol::Nonterminal(tables.nonterminal(&name)))
                }
                Some((_, Token::Terminal(name))) => {
                    rhs.push(Symbol::Terminal(tables.terminal(&name)))
                }
                Some((_, Token::Probability(p))) => break p,
                Some((col, Token::Arrow)) => return Err(line.error(col, "unexpected '->'")),
                None => {
                    let col = line.column();
                    return Err(line.error(col, "missing rule probability '[p]'"));
                }
            }
        };
        if !line.at_end() {
            let col = line.column();
            return Err(line.error(col, "unexpected text after rule probability"));
        }
        rules.push(Rule {
            lhs,
            rhs,
            probability,
        });
    }

    let start = match start {
        Some((_, id)) => id,
        None => rules.first().map(|r| r.lhs).ok_or(GrammarError::NoStart)?,
    };
    Ok(Pcfg::from_parts(
        tables.nonterminals,
        tables.terminals,
        start,
        rules,
    ))
}
