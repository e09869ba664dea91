//! Rule language: derivation rules (positive Horn clauses) and suggestion
//! rules (positive conditions, negation-as-failure, a text template and an
//! optional proposed action).
//!
//! ```text
//! # comment
//! rule m: SuspiciousMasquerade(F) :- IsExecutable(F), HasDoubleExtension(F).
//! suggest s: when SuspiciousMasquerade(F), not ViewedImports(F)
//!     text "Inspect imports of {F}." action ViewImports(F).
//! ```
//!
//! Variables start with an uppercase letter (`_` is an anonymous variable),
//! strings are double-quoted, integers are bare and artifact constants are
//! written `@a3` (or `@3`).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::term::Term;
use crate::engine::ArtifactId;

/// An argument position in a rule atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    Var(String),
    Const(Term),
    Wildcard,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Var(v) => f.write_str(v),
            Pattern::Const(t) => t.fmt(f),
            Pattern::Wildcard => f.write_str("_"),
        }
    }
}

/// Source position, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Equality ignores the source span.
#[derive(Debug, Clone, Eq, Serialize, Deserialize)]
pub struct RuleAtom {
    pub predicate: String,
    pub args: Vec<Pattern>,
    #[serde(skip)]
    pub span: Span,
}

impl PartialEq for RuleAtom {
    fn eq(&self, other: &Self) -> bool {
        self.predicate == other.predicate && self.args == other.args
    }
}

impl RuleAtom {
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|p| match p {
            Pattern::Var(v) => Some(v.as_str()),
            _ => None,
        })
    }
}

impl fmt::Display for RuleAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// One piece of a suggestion text template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Literal(String),
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub source: String,
    pub segments: Vec<Segment>,
}

impl Template {
    /// Parses `{Var}` placeholders; `{{` and `}}` are literal braces.
    pub fn parse(source: &str) -> Result<Self, String> {
        let mut segments = Vec::new();
        let mut lit = String::new();
        let mut chars = source.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    lit.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    lit.push('}');
                }
                '{' => {
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some(ch) if ch.is_ascii_alphanumeric() || ch == '_' => name.push(ch),
                            Some(ch) => return Err(format!("invalid character {ch:?} in placeholder")),
                            None => return Err("unterminated placeholder".into()),
                        }
                    }
                    if !name.starts_with(|c: char| c.is_ascii_uppercase()) {
                        return Err(format!("placeholder {{{name}}} is not a variable"));
                    }
                    if !lit.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut lit)));
                    }
                    segments.push(Segment::Var(name));
                }
                other => lit.push(other),
            }
        }
        if !lit.is_empty() {
            segments.push(Segment::Literal(lit));
        }
        Ok(Self {
            source: source.to_string(),
            segments,
        })
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Var(v) => Some(v.as_str()),
            Segment::Literal(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationRule {
    pub name: String,
    pub head: RuleAtom,
    pub body: Vec<RuleAtom>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionRule {
    pub name: String,
    pub body: Vec<RuleAtom>,
    pub negations: Vec<RuleAtom>,
    pub template: Template,
    pub action: Option<RuleAtom>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleKind {
    Derivation,
    Suggestion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    Derivation(DerivationRule),
    Suggestion(SuggestionRule),
}

impl Rule {
    pub fn name(&self) -> &str {
        match self {
            Rule::Derivation(r) => &r.name,
            Rule::Suggestion(r) => &r.name,
        }
    }

    pub fn kind(&self) -> RuleKind {
        match self {
            Rule::Derivation(_) => RuleKind::Derivation,
            Rule::Suggestion(_) => RuleKind::Suggestion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("syntax error at {span}: {message}")]
    Syntax { span: Span, message: String },
    #[error("rule {rule}: variable {variable} at {span} is not bound by a positive body atom")]
    Unsafe {
        rule: String,
        variable: String,
        span: Span,
    },
    #[error("predicate {predicate} used with arity {first_arity} at {first} and arity {second_arity} at {second}")]
    Arity {
        predicate: String,
        first: Span,
        first_arity: usize,
        second: Span,
        second_arity: usize,
    },
    #[error("duplicate rule name {name} at {span}")]
    Duplicate { name: String, span: Span },
}

/// A validated collection of rules in declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    rules: Vec<Rule>,
    sources: Vec<String>,
}

impl RuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(source: &str) -> Result<Self, RuleError> {
        let mut set = Self::new();
        set.extend_from_source(source)?;
        Ok(set)
    }

    /// Adds another rule pack, re-validating names and arities across packs.
    pub fn extend_from_source(&mut self, source: &str) -> Result<(), RuleError> {
        let parsed = parse_rules(source)?;
        let mut all = self.rules.clone();
        all.extend(parsed);
        validate_program(&all)?;
        self.rules = all;
        self.sources.push(source.to_string());
        Ok(())
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Concatenated pack sources; re-parsing it yields the same rule set.
    pub fn source(&self) -> String {
        self.sources.join("\n")
    }

    pub fn derivations(&self) -> impl Iterator<Item = &DerivationRule> {
        self.rules.iter().filter_map(|r| match r {
            Rule::Derivation(d) => Some(d),
            _ => None,
        })
    }

    pub fn suggestions(&self) -> impl Iterator<Item = &SuggestionRule> {
        self.rules.iter().filter_map(|r| match r {
            Rule::Suggestion(s) => Some(s),
            _ => None,
        })
    }

    pub fn get(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name() == name)
    }
}

/// Parses and validates a rule pack.
pub fn parse_rules(source: &str) -> Result<Vec<Rule>, RuleError> {
    let tokens = lex(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut rules = Vec::new();
    while !parser.at_end() {
        rules.push(parser.statement()?);
    }
    validate_program(&rules)?;
    Ok(rules)
}

fn validate_program(rules: &[Rule]) -> Result<(), RuleError> {
    let mut names: HashSet<&str> = HashSet::new();
    let mut arities: HashMap<&str, (usize, Span)> = HashMap::new();
    let mut action_arities: HashMap<&str, (usize, Span)> = HashMap::new();

    fn check<'a>(
        table: &mut HashMap<&'a str, (usize, Span)>,
        atom: &'a RuleAtom,
    ) -> Result<(), RuleError> {
        match table.get(atom.predicate.as_str()) {
            Some(&(arity, span)) if arity != atom.args.len() => Err(RuleError::Arity {
                predicate: atom.predicate.clone(),
                first: span,
                first_arity: arity,
                second: atom.span,
                second_arity: atom.args.len(),
            }),
            Some(_) => Ok(()),
            None => {
                table.insert(&atom.predicate, (atom.args.len(), atom.span));
                Ok(())
            }
        }
    }

    for rule in rules {
        let (name, span) = match rule {
            Rule::Derivation(r) => (r.name.as_str(), r.head.span),
            Rule::Suggestion(r) => (r.name.as_str(), r.body.first().map(|a| a.span).unwrap_or_default()),
        };
        if !names.insert(name) {
            return Err(RuleError::Duplicate {
                name: name.to_string(),
                span,
            });
        }
        match rule {
            Rule::Derivation(r) => {
                check(&mut arities, &r.head)?;
                for a in &r.body {
                    check(&mut arities, a)?;
                }
                let bound: BTreeSet<&str> = r.body.iter().flat_map(|a| a.variables()).collect();
                for p in &r.head.args {
                    match p {
                        Pattern::Var(v) if !bound.contains(v.as_str()) => {
                            return Err(RuleError::Unsafe {
                                rule: r.name.clone(),
                                variable: v.clone(),
                                span: r.head.span,
                            })
                        }
                        Pattern::Wildcard => {
                            return Err(RuleError::Unsafe {
                                rule: r.name.clone(),
                                variable: "_".into(),
                                span: r.head.span,
                            })
                        }
                        _ => {}
                    }
                }
            }
            Rule::Suggestion(r) => {
                for a in r.body.iter().chain(&r.negations) {
                    check(&mut arities, a)?;
                }
                if let Some(action) = &r.action {
                    check(&mut action_arities, action)?;
                }
                let bound: BTreeSet<&str> = r.body.iter().flat_map(|a| a.variables()).collect();
                let span = r.body.first().map(|a| a.span).unwrap_or_default();
                let unbound = r
                    .negations
                    .iter()
                    .chain(r.action.iter())
                    .flat_map(|a| a.variables().map(move |v| (v, a.span)))
                    .chain(r.template.variables().map(|v| (v, span)))
                    .find(|(v, _)| !bound.contains(v));
                if let Some((v, span)) = unbound {
                    return Err(RuleError::Unsafe {
                        rule: r.name.clone(),
                        variable: v.to_string(),
                        span,
                    });
                }
                if let Some(action) = &r.action {
                    if action.args.contains(&Pattern::Wildcard) {
                        return Err(RuleError::Unsafe {
                            rule: r.name.clone(),
                            variable: "_".into(),
                            span: action.span,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    ArtRef(ArtifactId),
    LParen,
    RParen,
    Comma,
    Dot,
    Colon,
    Turnstile,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

fn syntax(span: Span, message: impl Into<String>) -> RuleError {
    RuleError::Syntax {
        span,
        message: message.into(),
    }
}

fn lex(source: &str) -> Result<Vec<Token>, RuleError> {
    let mut out = Vec::new();
    let chars: Vec<char> = source.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(1, &mut i, &mut col),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => {
                out.push(Token { tok: Tok::LParen, span });
                advance(1, &mut i, &mut col);
            }
            ')' => {
                out.push(Token { tok: Tok::RParen, span });
                advance(1, &mut i, &mut col);
            }
            ',' => {
                out.push(Token { tok: Tok::Comma, span });
                advance(1, &mut i, &mut col);
            }
            '.' => {
                out.push(Token { tok: Tok::Dot, span });
                advance(1, &mut i, &mut col);
            }
            ':' if chars.get(i + 1) == Some(&'-') => {
                out.push(Token { tok: Tok::Turnstile, span });
                advance(2, &mut i, &mut col);
            }
            ':' => {
                out.push(Token { tok: Tok::Colon, span });
                advance(1, &mut i, &mut col);
            }
            '"' => {
                let mut s = String::new();
                advance(1, &mut i, &mut col);
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err(syntax(span, "unterminated string")),
                        Some('"') => {
                            advance(1, &mut i, &mut col);
                            break;
                        }
                        Some('\\') => match chars.get(i + 1) {
                            Some('"') => {
                                s.push('"');
                                advance(2, &mut i, &mut col);
                            }
                            Some('\\') => {
                                s.push('\\');
                                advance(2, &mut i, &mut col);
                            }
                            Some('n') => {
                                s.push('\n');
                                advance(2, &mut i, &mut col);
                            }
                            _ => {
                                return Err(syntax(Span { line, col }, "invalid escape in string"))
                            }
                        },
                        Some(&ch) => {
                            s.push(ch);
                            advance(1, &mut i, &mut col);
                        }
                    }
                }
                out.push(Token { tok: Tok::Str(s), span });
            }
            '@' => {
                advance(1, &mut i, &mut col);
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    advance(1, &mut i, &mut col);
                }
                let text: String = chars[start..i].iter().collect();
                let id = text
                    .parse::<ArtifactId>()
                    .map_err(|_| syntax(span, format!("invalid artifact reference @{text}")))?;
                out.push(Token { tok: Tok::ArtRef(id), span });
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let start = i;
                advance(1, &mut i, &mut col);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(1, &mut i, &mut col);
                }
                let text: String = chars[start..i].iter().collect();
                let value = text
                    .parse::<i64>()
                    .map_err(|_| syntax(span, format!("integer out of range: {text}")))?;
                out.push(Token { tok: Tok::Int(value), span });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '-') {
                    advance(1, &mut i, &mut col);
                }
                let text: String = chars[start..i].iter().collect();
                out.push(Token { tok: Tok::Ident(text), span });
            }
            other => return Err(syntax(span, format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eof_span(&self) -> Span {
        self.tokens.last().map(|t| t.span).unwrap_or(Span { line: 1, col: 1 })
    }

    fn next(&mut self, what: &str) -> Result<Token, RuleError> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| syntax(self.eof_span(), format!("unexpected end of input, expected {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Span, RuleError> {
        let t = self.next(what)?;
        if t.tok == tok {
            Ok(t.span)
        } else {
            Err(syntax(t.span, format!("expected {what}")))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Ident(s), .. }) if s == kw)
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), RuleError> {
        let t = self.next(what)?;
        match t.tok {
            Tok::Ident(s) => Ok((s, t.span)),
            _ => Err(syntax(t.span, format!("expected {what}"))),
        }
    }

    fn statement(&mut self) -> Result<Rule, RuleError> {
        let (kw, span) = self.ident("`rule` or `suggest`")?;
        match kw.as_str() {
            "rule" => self.derivation(),
            "suggest" => self.suggestion(),
            _ => Err(syntax(span, format!("expected `rule` or `suggest`, found {kw:?}"))),
        }
    }

    fn rule_name(&mut self) -> Result<String, RuleError> {
        let (name, _) = self.ident("rule name")?;
        self.expect(Tok::Colon, "`:` after rule name")?;
        Ok(name)
    }

    fn derivation(&mut self) -> Result<Rule, RuleError> {
        let name = self.rule_name()?;
        let head = self.atom()?;
        self.expect(Tok::Turnstile, "`:-`")?;
        let mut body = Vec::new();
        loop {
            if self.is_keyword("not") {
                let span = self.peek().map(|t| t.span).unwrap_or_default();
                return Err(syntax(span, "negation is only allowed in suggest rules"));
            }
            body.push(self.atom()?);
            if self.at_end() {
                break;
            }
            let t = self.next("`,` or `.`")?;
            match t.tok {
                Tok::Comma => continue,
                Tok::Dot => break,
                _ => return Err(syntax(t.span, "expected `,` or `.`")),
            }
        }
        Ok(Rule::Derivation(DerivationRule { name, head, body }))
    }

    fn suggestion(&mut self) -> Result<Rule, RuleError> {
        let name = self.rule_name()?;
        let (kw, span) = self.ident("`when`")?;
        if kw != "when" {
            return Err(syntax(span, "expected `when`"));
        }
        let mut body = Vec::new();
        let mut negations = Vec::new();
        loop {
            if self.is_keyword("not") {
                self.pos += 1;
                negations.push(self.atom()?);
            } else {
                body.push(self.atom()?);
            }
            if matches!(self.peek(), Some(Token { tok: Tok::Comma, .. })) {
                self.pos += 1;
                continue;
            }
            break;
        }
        if body.is_empty() {
            return Err(syntax(span, "suggest rule needs at least one positive condition"));
        }
        let (kw, span) = self.ident("`text`")?;
        if kw != "text" {
            return Err(syntax(span, "expected `text`"));
        }
        let t = self.next("template string")?;
        let template = match t.tok {
            Tok::Str(s) => Template::parse(&s).map_err(|m| syntax(t.span, m))?,
            _ => return Err(syntax(t.span, "expected template string")),
        };
        let action = if self.is_keyword("action") {
            self.pos += 1;
            Some(self.atom()?)
        } else {
            None
        };
        if !self.at_end() {
            self.expect(Tok::Dot, "`.` at end of rule")?;
        }
        Ok(Rule::Suggestion(SuggestionRule {
            name,
            body,
            negations,
            template,
            action,
        }))
    }

    fn atom(&mut self) -> Result<RuleAtom, RuleError> {
        let (predicate, span) = self.ident("predicate")?;
        if !predicate.starts_with(|c: char| c.is_ascii_uppercase()) {
            return Err(syntax(span, format!("predicate {predicate} must start with an uppercase letter")));
        }
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if matches!(self.peek(), Some(Token { tok: Tok::RParen, .. })) {
            self.pos += 1;
            return Ok(RuleAtom { predicate, args, span });
        }
        loop {
            let t = self.next("term")?;
            let pat = match t.tok {
                Tok::Ident(s) if s == "_" => Pattern::Wildcard,
                Tok::Ident(s) if s.starts_with(|c: char| c.is_ascii_uppercase()) => Pattern::Var(s),
                Tok::Str(s) => Pattern::Const(Term::Str(s)),
                Tok::Int(i) => Pattern::Const(Term::Int(i)),
                Tok::ArtRef(id) => Pattern::Const(Term::Artifact(id)),
                _ => return Err(syntax(t.span, "expected term (Variable, \"string\", integer or @id)")),
            };
            args.push(pat);
            let t = self.next("`,` or `)`")?;
            match t.tok {
                Tok::Comma => continue,
                Tok::RParen => break,
                _ => return Err(syntax(t.span, "expected `,` or `)`")),
            }
        }
        Ok(RuleAtom { predicate, args, span })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_derivation_rule() {
        let rules =
            parse_rules("rule m: SuspiciousMasquerade(F) :- IsExecutable(F), HasDoubleExtension(F).").unwrap();
        assert_eq!(rules.len(), 1);
        let Rule::Derivation(r) = &rules[0] else { panic!() };
        assert_eq!(r.name, "m");
        assert_eq!(r.head.predicate, "SuspiciousMasquerade");
        assert_eq!(r.body.len(), 2);
    }

    #[test]
    fn parses_suggestion_rule() {
        let src = r#"suggest s: when SuspiciousMasquerade(F), not ViewedImports(F) text "Inspect imports of {F}." action ViewImports(F)."#;
        let rules = parse_rules(src).unwrap();
        let Rule::Suggestion(r) = &rules[0] else { panic!() };
        assert_eq!(r.body.len(), 1);
        assert_eq!(r.negations.len(), 1);
        assert_eq!(r.action.as_ref().unwrap().predicate, "ViewImports");
        assert_eq!(
            r.template.segments,
            vec![
                Segment::Literal("Inspect imports of ".into()),
                Segment::Var("F".into()),
                Segment::Literal(".".into())
            ]
        );
    }

    #[test]
    fn final_terminator_is_optional_at_end_of_input() {
        let src = r#"suggest s: when SuspiciousMasquerade(F), not ViewedImports(F) text "Inspect imports of {F}." action ViewImports(F)"#;
        assert_eq!(parse_rules(src).unwrap().len(), 1);
        let src = r#"suggest s: when A(F) text "x" suggest t: when A(F) text "y"."#;
        assert!(matches!(parse_rules(src), Err(RuleError::Syntax { .. })));
    }

    #[test]
    fn unbound_head_variable_is_unsafe() {
        let err = parse_rules("rule bad: P(X) :- Q(Y).").unwrap_err();
        match err {
            RuleError::Unsafe { variable, rule, .. } => {
                assert_eq!(variable, "X");
                assert_eq!(rule, "bad");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unbound_template_and_negation_variables_are_unsafe() {
        let err = parse_rules(r#"suggest s: when A(F) text "{G}"."#).unwrap_err();
        assert!(matches!(err, RuleError::Unsafe { ref variable, .. } if variable == "G"));
        let err = parse_rules(r#"suggest s: when A(F), not B(F, H) text "x"."#).unwrap_err();
        assert!(matches!(err, RuleError::Unsafe { ref variable, .. } if variable == "H"));
    }

    #[test]
    fn negation_in_derivation_is_rejected() {
        let err = parse_rules("rule r: P(X) :- Q(X), not R(X).").unwrap_err();
        assert!(matches!(err, RuleError::Syntax { .. }));
    }

    #[test]
    fn arity_conflict_names_both_uses() {
        let err = parse_rules("rule a: P(X) :- Q(X).\nrule b: P(X, Y) :- Q(X), Q(Y).").unwrap_err();
        match err {
            RuleError::Arity {
                predicate,
                first,
                second,
                first_arity,
                second_arity,
            } => {
                assert_eq!(predicate, "P");
                assert_eq!((first.line, first_arity), (1, 1));
                assert_eq!((second.line, second_arity), (2, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let err = parse_rules("rule a: P(X) :- Q(X).\nrule a: R(X) :- Q(X).").unwrap_err();
        assert!(matches!(err, RuleError::Duplicate { ref name, .. } if name == "a"));
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let err = parse_rules("# header\nrule a: P(X) :- Q(X\n").unwrap_err();
        match err {
            RuleError::Syntax { span, .. } => assert_eq!(span.line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_rules("rule a: p(X) :- Q(X).").unwrap_err();
        assert_eq!(
            err,
            RuleError::Syntax {
                span: Span { line: 1, col: 9 },
                message: "predicate p must start with an uppercase letter".into()
            }
        );
    }

    #[test]
    fn constants_and_comments() {
        let src = "# pack\nrule k: Keylogger(F) :- ImportsApi(F, \"SetWindowsHookExA\"), Size(F, -3), Is(@a7). # trailing\n";
        let rules = parse_rules(src).unwrap();
        let Rule::Derivation(r) = &rules[0] else { panic!() };
        assert_eq!(r.body[0].args[1], Pattern::Const(Term::str("SetWindowsHookExA")));
        assert_eq!(r.body[1].args[1], Pattern::Const(Term::Int(-3)));
        assert_eq!(r.body[2].args[0], Pattern::Const(Term::Artifact(ArtifactId::new(7))));
    }

    #[test]
    fn template_escapes() {
        let t = Template::parse("{{F}}").unwrap();
        assert_eq!(t.segments, vec![Segment::Literal("{F}".into())]);
        assert!(Template::parse("{f}").is_err());
        assert!(Template::parse("{F").is_err());
    }

    #[test]
    fn rule_sets_validate_across_packs() {
        let mut set = RuleSet::parse("rule a: P(X) :- Q(X).").unwrap();
        assert!(set.extend_from_source("rule b: R(X) :- P(X, X).").is_err());
        assert!(set.extend_from_source("rule a: R(X) :- P(X).").is_err());
        set.extend_from_source("rule b: R(X) :- P(X).").unwrap();
        assert_eq!(set.rules().len(), 2);
        assert_eq!(RuleSet::parse(&set.source()).unwrap().rules(), set.rules());
    }
}
