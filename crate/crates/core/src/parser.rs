//! Text format for knowledge bases (`.ckb`).
//!
//! ```text
//! # comment
//! var v1 in 1..5;
//! var v2 in {1, 3, 5};
//! constraint c1: v1 = 3 -> v2 > 1;
//! ```
//!
//! Binding strength, tightest first: comparisons, `not`, `and`, `or`, then
//! `->` / `<-`. Implications are right-associative and the two arrows may not
//! be mixed in one chain without parentheses.

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::model::{CmpOp, Constraint, Domain, Expr, KnowledgeBase, ModelError, Operand, Variable};

/// Deepest expression tree (and parenthesis nesting) the parser accepts.
pub const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseErrorKind {
    Syntax,
    UnknownVariable,
    DuplicateId,
    EmptyDomain,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Syntax => "syntax",
            ParseErrorKind::UnknownVariable => "unknown-variable",
            ParseErrorKind::DuplicateId => "duplicate-id",
            ParseErrorKind::EmptyDomain => "empty-domain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{line}:{column}: {kind} error: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub kind: ParseErrorKind,
}

/// Every error found in one pass over the source.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(transparent)]
pub struct ParseErrors(pub Vec<ParseError>);

impl fmt::Display for ParseErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_char('\n')?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl ParseErrors {
    pub fn kinds(&self) -> Vec<ParseErrorKind> {
        self.0.iter().map(|e| e.kind).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Var,
    In,
    Constraint,
    And,
    Or,
    Not,
    Semi,
    Colon,
    DotDot,
    LBrace,
    RBrace,
    Comma,
    LParen,
    RParen,
    Arrow,
    BackArrow,
    Cmp(CmpOp),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(i) => write!(f, "integer {i}"),
            Tok::Var => f.write_str("`var`"),
            Tok::In => f.write_str("`in`"),
            Tok::Constraint => f.write_str("`constraint`"),
            Tok::And => f.write_str("`and`"),
            Tok::Or => f.write_str("`or`"),
            Tok::Not => f.write_str("`not`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::DotDot => f.write_str("`..`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::BackArrow => f.write_str("`<-`"),
            Tok::Cmp(op) => write!(f, "`{op}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn err(pos: Pos, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
    ParseError { line: pos.line, column: pos.column, message: message.into(), kind }
}

fn lex(src: &str, errors: &mut Vec<ParseError>) -> Vec<(Tok, Pos)> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let advance = |i: &mut usize, col: &mut usize, n: usize| {
        *i += n;
        *col += n;
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        let next = chars.get(i + 1).copied();
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(&mut i, &mut col, 1),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    advance(&mut i, &mut col, 1);
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    advance(&mut i, &mut col, 1);
                }
                let word: String = chars[start..i].iter().collect();
                let tok = match word.as_str() {
                    "var" => Tok::Var,
                    "in" => Tok::In,
                    "constraint" => Tok::Constraint,
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    _ => Tok::Ident(word),
                };
                toks.push((tok, pos));
            }
            c if c.is_ascii_digit() || (c == '-' && next.is_some_and(|n| n.is_ascii_digit())) => {
                let start = i;
                advance(&mut i, &mut col, 1);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(&mut i, &mut col, 1);
                }
                let text: String = chars[start..i].iter().collect();
                match text.parse::<i64>() {
                    Ok(v) => toks.push((Tok::Int(v), pos)),
                    Err(_) => {
                        errors.push(err(pos, ParseErrorKind::Syntax, format!("integer `{text}` out of range")));
                        toks.push((Tok::Int(0), pos));
                    }
                }
            }
            _ => {
                let two = next.map(|n| [c, n]);
                let (tok, len) = match (c, two) {
                    (_, Some(['-', '>'])) => (Some(Tok::Arrow), 2),
                    (_, Some(['<', '-'])) => (Some(Tok::BackArrow), 2),
                    (_, Some(['<', '='])) => (Some(Tok::Cmp(CmpOp::Le)), 2),
                    (_, Some(['>', '='])) => (Some(Tok::Cmp(CmpOp::Ge)), 2),
                    (_, Some(['!', '='])) => (Some(Tok::Cmp(CmpOp::Ne)), 2),
                    (_, Some(['.', '.'])) => (Some(Tok::DotDot), 2),
                    ('=', _) => (Some(Tok::Cmp(CmpOp::Eq)), 1),
                    ('<', _) => (Some(Tok::Cmp(CmpOp::Lt)), 1),
                    ('>', _) => (Some(Tok::Cmp(CmpOp::Gt)), 1),
                    (';', _) => (Some(Tok::Semi), 1),
                    (':', _) => (Some(Tok::Colon), 1),
                    ('{', _) => (Some(Tok::LBrace), 1),
                    ('}', _) => (Some(Tok::RBrace), 1),
                    (',', _) => (Some(Tok::Comma), 1),
                    ('(', _) => (Some(Tok::LParen), 1),
                    (')', _) => (Some(Tok::RParen), 1),
                    _ => (None, 1),
                };
                match tok {
                    Some(t) => toks.push((t, pos)),
                    None => errors.push(err(pos, ParseErrorKind::Syntax, format!("unexpected character {c:?}"))),
                }
                advance(&mut i, &mut col, len);
            }
        }
    }
    toks.push((Tok::Eof, Pos { line, column: col }));
    toks
}

struct VarDecl {
    name: String,
    name_pos: Pos,
    domain: Option<Domain>,
}

struct ConstraintDecl {
    id: String,
    id_pos: Pos,
    expr: Expr,
    refs: Vec<(String, Pos)>,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    refs: Vec<(String, Pos)>,
    errors: Vec<ParseError>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        err(self.pos(), ParseErrorKind::Syntax, format!("expected {wanted}, found {}", self.peek()))
    }

    fn expect(&mut self, tok: Tok) -> PResult<Pos> {
        if *self.peek() == tok {
            Ok(self.bump().1)
        } else {
            Err(self.unexpected(&tok.to_string()))
        }
    }

    fn ident(&mut self) -> PResult<(String, Pos)> {
        match self.peek().clone() {
            Tok::Ident(s) => Ok((s, self.bump().1)),
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        match *self.peek() {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            _ => Err(self.unexpected("integer")),
        }
    }

    /// Skips past the next `;` (or to end of input) after an error.
    fn recover(&mut self) {
        while !matches!(self.peek(), Tok::Semi | Tok::Eof) {
            self.bump();
        }
        if *self.peek() == Tok::Semi {
            self.bump();
        }
    }

    fn var_decl(&mut self) -> PResult<VarDecl> {
        self.expect(Tok::Var)?;
        let (name, name_pos) = self.ident()?;
        self.expect(Tok::In)?;
        let domain_pos = self.pos();
        let domain = if *self.peek() == Tok::LBrace {
            self.bump();
            let mut values = Vec::new();
            if *self.peek() != Tok::RBrace {
                values.push(self.int()?);
                while *self.peek() == Tok::Comma {
                    self.bump();
                    values.push(self.int()?);
                }
            }
            self.expect(Tok::RBrace)?;
            Domain::new(values)
        } else {
            let lo = self.int()?;
            self.expect(Tok::DotDot)?;
            let hi = self.int()?;
            Domain::interval(lo, hi)
        };
        self.expect(Tok::Semi)?;
        let domain = match domain {
            Ok(d) => Some(d),
            Err(ModelError::EmptyDomain) => {
                self.errors.push(err(
                    domain_pos,
                    ParseErrorKind::EmptyDomain,
                    format!("variable `{name}` has an empty domain"),
                ));
                None
            }
            Err(e) => {
                self.errors.push(err(domain_pos, ParseErrorKind::Syntax, format!("variable `{name}`: {e}")));
                None
            }
        };
        Ok(VarDecl { name, name_pos, domain })
    }

    fn constraint_decl(&mut self) -> PResult<ConstraintDecl> {
        self.expect(Tok::Constraint)?;
        let (id, id_pos) = self.ident()?;
        self.expect(Tok::Colon)?;
        self.refs.clear();
        let (expr, _) = self.expr(0)?;
        self.expect(Tok::Semi)?;
        Ok(ConstraintDecl { id, id_pos, expr, refs: std::mem::take(&mut self.refs) })
    }

    fn check_depth(&self, depth: usize, pos: Pos) -> PResult<()> {
        if depth > MAX_DEPTH {
            Err(err(pos, ParseErrorKind::Syntax, format!("expression nested deeper than {MAX_DEPTH}")))
        } else {
            Ok(())
        }
    }

    // Each production returns the tree together with its depth.

    fn expr(&mut self, nesting: usize) -> PResult<(Expr, usize)> {
        let first = self.disjunction(nesting)?;
        let arrow = match self.peek() {
            Tok::Arrow | Tok::BackArrow => self.peek().clone(),
            _ => return Ok(first),
        };
        let mut operands = vec![first];
        while matches!(self.peek(), Tok::Arrow | Tok::BackArrow) {
            if *self.peek() != arrow {
                return Err(err(
                    self.pos(),
                    ParseErrorKind::Syntax,
                    "`->` and `<-` cannot be chained without parentheses",
                ));
            }
            self.bump();
            operands.push(self.disjunction(nesting)?);
        }
        let pos = self.pos();
        let mut acc = operands.pop().expect("at least two operands");
        while let Some((l, ld)) = operands.pop() {
            let depth = 1 + ld.max(acc.1);
            self.check_depth(depth, pos)?;
            let node =
                if arrow == Tok::Arrow { Expr::implies(l, acc.0) } else { Expr::implied_by(l, acc.0) };
            acc = (node, depth);
        }
        Ok(acc)
    }

    fn disjunction(&mut self, nesting: usize) -> PResult<(Expr, usize)> {
        let mut acc = self.conjunction(nesting)?;
        while *self.peek() == Tok::Or {
            let pos = self.bump().1;
            let rhs = self.conjunction(nesting)?;
            let depth = 1 + acc.1.max(rhs.1);
            self.check_depth(depth, pos)?;
            acc = (Expr::or(acc.0, rhs.0), depth);
        }
        Ok(acc)
    }

    fn conjunction(&mut self, nesting: usize) -> PResult<(Expr, usize)> {
        let mut acc = self.negation(nesting)?;
        while *self.peek() == Tok::And {
            let pos = self.bump().1;
            let rhs = self.negation(nesting)?;
            let depth = 1 + acc.1.max(rhs.1);
            self.check_depth(depth, pos)?;
            acc = (Expr::and(acc.0, rhs.0), depth);
        }
        Ok(acc)
    }

    fn negation(&mut self, nesting: usize) -> PResult<(Expr, usize)> {
        let mut nots = Vec::new();
        while *self.peek() == Tok::Not {
            nots.push(self.bump().1);
        }
        let (mut e, mut depth) = self.primary(nesting)?;
        for pos in nots.into_iter().rev() {
            depth += 1;
            self.check_depth(depth, pos)?;
            e = Expr::not(e);
        }
        Ok((e, depth))
    }

    fn primary(&mut self, nesting: usize) -> PResult<(Expr, usize)> {
        if *self.peek() == Tok::LParen {
            let pos = self.bump().1;
            self.check_depth(nesting + 1, pos)?;
            let inner = self.expr(nesting + 1)?;
            self.expect(Tok::RParen)?;
            return Ok(inner);
        }
        let (var, var_pos) = self.ident().map_err(|_| self.unexpected("comparison or `(`"))?;
        self.refs.push((var.clone(), var_pos));
        let op = match *self.peek() {
            Tok::Cmp(op) => {
                self.bump();
                op
            }
            _ => return Err(self.unexpected("comparison operator")),
        };
        let rhs = match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Operand::Value(v)
            }
            Tok::Ident(other) => {
                let pos = self.bump().1;
                self.refs.push((other.clone(), pos));
                Operand::Var(other)
            }
            _ => return Err(self.unexpected("integer or variable")),
        };
        Ok((Expr::Cmp { var, op, rhs }, 1))
    }
}

/// Parses a knowledge base, collecting every recoverable error.
pub fn parse_kb(source: &str) -> Result<KnowledgeBase, ParseErrors> {
    let mut errors = Vec::new();
    let toks = lex(source, &mut errors);
    let mut p = Parser { toks, at: 0, refs: Vec::new(), errors };
    let mut vars = Vec::new();
    let mut constraints = Vec::new();
    loop {
        let result = match p.peek() {
            Tok::Eof => break,
            Tok::Var => p.var_decl().map(|v| vars.push(v)),
            Tok::Constraint => p.constraint_decl().map(|c| constraints.push(c)),
            _ => Err(p.unexpected("`var` or `constraint`")),
        };
        if let Err(e) = result {
            p.errors.push(e);
            p.recover();
        }
    }
    let mut errors = p.errors;

    let mut names = HashSet::new();
    for v in &vars {
        if !names.insert(v.name.as_str()) {
            errors.push(err(v.name_pos, ParseErrorKind::DuplicateId, format!("variable `{}` declared twice", v.name)));
        }
    }
    let mut ids = HashSet::new();
    for c in &constraints {
        if !ids.insert(c.id.as_str()) {
            errors.push(err(c.id_pos, ParseErrorKind::DuplicateId, format!("constraint `{}` declared twice", c.id)));
        }
        for (name, pos) in &c.refs {
            if !names.contains(name.as_str()) {
                errors.push(err(
                    *pos,
                    ParseErrorKind::UnknownVariable,
                    format!("constraint `{}` references undeclared variable `{name}`", c.id),
                ));
            }
        }
    }

    if !errors.is_empty() {
        errors.sort_by_key(|e| (e.line, e.column));
        return Err(ParseErrors(errors));
    }
    let variables = vars
        .into_iter()
        .map(|v| Variable::new(v.name, v.domain.expect("domain errors reported above")))
        .collect();
    let constraints = constraints.into_iter().map(|c| Constraint::new(c.id, c.expr)).collect();
    KnowledgeBase::new(variables, constraints).map_err(|e| {
        ParseErrors(vec![ParseError { line: 1, column: 1, message: e.to_string(), kind: ParseErrorKind::Syntax }])
    })
}

/// Like [`parse_kb`] but accepts raw bytes, reporting invalid UTF-8 as a
/// syntax error.
pub fn parse_kb_bytes(bytes: &[u8]) -> Result<KnowledgeBase, ParseErrors> {
    match std::str::from_utf8(bytes) {
        Ok(s) => parse_kb(s),
        Err(e) => {
            let prefix = &bytes[..e.valid_up_to()];
            let line = 1 + prefix.iter().filter(|b| **b == b'\n').count();
            let line_start = prefix.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
            let column = 1 + String::from_utf8_lossy(&prefix[line_start..]).chars().count();
            Err(ParseErrors(vec![ParseError {
                line,
                column,
                message: "invalid UTF-8".into(),
                kind: ParseErrorKind::Syntax,
            }]))
        }
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Implies(..) | Expr::ImpliedBy(..) => 1,
        Expr::Or(..) => 2,
        Expr::And(..) => 3,
        Expr::Not(_) => 4,
        Expr::Cmp { .. } => 5,
    }
}

fn write_child(out: &mut String, e: &Expr, parens: bool) {
    if parens {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Cmp { var, op, rhs } => {
            let _ = match rhs {
                Operand::Value(v) => write!(out, "{var} {op} {v}"),
                Operand::Var(other) => write!(out, "{var} {op} {other}"),
            };
        }
        Expr::Not(x) => {
            out.push_str("not ");
            write_child(out, x, precedence(x) < 4);
        }
        Expr::And(l, r) => {
            write_child(out, l, precedence(l) < 3);
            out.push_str(" and ");
            write_child(out, r, precedence(r) <= 3);
        }
        Expr::Or(l, r) => {
            write_child(out, l, precedence(l) < 2);
            out.push_str(" or ");
            write_child(out, r, precedence(r) <= 2);
        }
        Expr::Implies(l, r) => {
            write_child(out, l, precedence(l) <= 1);
            out.push_str(" -> ");
            write_child(out, r, matches!(**r, Expr::ImpliedBy(..)));
        }
        Expr::ImpliedBy(l, r) => {
            write_child(out, l, precedence(l) <= 1);
            out.push_str(" <- ");
            write_child(out, r, matches!(**r, Expr::Implies(..)));
        }
    }
}

/// Canonical text for an expression, with the minimal parentheses needed to
/// preserve the tree shape.
pub fn format_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

fn format_domain(d: &Domain) -> String {
    if d.is_interval() {
        format!("{}..{}", d.min(), d.max())
    } else {
        let values: Vec<String> = d.values().iter().map(i64::to_string).collect();
        format!("{{{}}}", values.join(", "))
    }
}

/// Canonical `.ckb` text: variables first, then constraints, both in
/// declaration order.
pub fn serialize_kb(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    for v in kb.variables() {
        let _ = writeln!(out, "var {} in {};", v.name, format_domain(&v.domain));
    }
    if !kb.variables().is_empty() && !kb.constraints().is_empty() {
        out.push('\n');
    }
    for c in kb.constraints() {
        let _ = writeln!(out, "constraint {}: {};", c.id, format_expr(&c.expr));
    }
    out
}

/// Parses a single expression (no trailing `;`). Variable references are not
/// resolved.
pub fn parse_expr(source: &str) -> Result<Expr, ParseErrors> {
    let mut errors = Vec::new();
    let toks = lex(source, &mut errors);
    let mut p = Parser { toks, at: 0, refs: Vec::new(), errors };
    let result = p.expr(0).and_then(|(e, _)| if *p.peek() == Tok::Eof { Ok(e) } else { Err(p.unexpected("end of input")) });
    match result {
        Ok(e) if p.errors.is_empty() => Ok(e),
        Ok(_) => Err(ParseErrors(p.errors)),
        Err(e) => {
            p.errors.push(e);
            Err(ParseErrors(p.errors))
        }
    }
}
