//! Value types for constraint knowledge bases: variables with finite integer
//! domains, constraint expression trees, assignments, and evaluation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A finite, sorted, duplicate-free set of integers. Never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct Domain(Vec<i64>);

impl Domain {
    /// Largest number of values a single domain may hold.
    pub const MAX_SIZE: usize = 1 << 20;

    pub fn new(values: impl IntoIterator<Item = i64>) -> Result<Self, ModelError> {
        let mut values: Vec<i64> = values.into_iter().collect();
        values.sort_unstable();
        values.dedup();
        if values.is_empty() {
            return Err(ModelError::EmptyDomain);
        }
        if values.len() > Self::MAX_SIZE {
            return Err(ModelError::DomainTooLarge(values.len()));
        }
        Ok(Domain(values))
    }

    /// Inclusive integer interval `lo..=hi`.
    pub fn interval(lo: i64, hi: i64) -> Result<Self, ModelError> {
        if lo > hi {
            return Err(ModelError::EmptyDomain);
        }
        let size = (hi as i128 - lo as i128 + 1) as u128;
        if size > Self::MAX_SIZE as u128 {
            return Err(ModelError::DomainTooLarge(usize::try_from(size).unwrap_or(usize::MAX)));
        }
        Ok(Domain((lo..=hi).collect()))
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, value: i64) -> bool {
        self.0.binary_search(&value).is_ok()
    }

    /// True when the values form one gap-free run, i.e. print as `lo..hi`.
    pub fn is_interval(&self) -> bool {
        let (first, last) = (self.0[0], self.0[self.0.len() - 1]);
        (last as i128 - first as i128) as usize + 1 == self.0.len()
    }

    pub fn min(&self) -> i64 {
        self.0[0]
    }

    pub fn max(&self) -> i64 {
        self.0[self.0.len() - 1]
    }
}

impl TryFrom<Vec<i64>> for Domain {
    type Error = ModelError;

    fn try_from(values: Vec<i64>) -> Result<Self, Self::Error> {
        Domain::new(values)
    }
}

impl From<Domain> for Vec<i64> {
    fn from(domain: Domain) -> Self {
        domain.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub domain: Domain,
}

impl Variable {
    pub fn new(name: impl Into<String>, domain: Domain) -> Self {
        Variable { name: name.into(), domain }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge];

    pub fn apply(self, lhs: i64, rhs: i64) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }

    /// DSL spelling.
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Right-hand side of a comparison: a constant or another variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Value(i64),
    Var(String),
}

/// Constraint expression tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Cmp { var: String, op: CmpOp, rhs: Operand },
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    /// `left -> right`
    Implies(Box<Expr>, Box<Expr>),
    /// `left <- right`, i.e. `right -> left`
    ImpliedBy(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn cmp(var: impl Into<String>, op: CmpOp, value: i64) -> Expr {
        Expr::Cmp { var: var.into(), op, rhs: Operand::Value(value) }
    }

    pub fn cmp_var(var: impl Into<String>, op: CmpOp, other: impl Into<String>) -> Expr {
        Expr::Cmp { var: var.into(), op, rhs: Operand::Var(other.into()) }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr) -> Expr {
        Expr::Not(Box::new(e))
    }

    pub fn and(l: Expr, r: Expr) -> Expr {
        Expr::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Expr, r: Expr) -> Expr {
        Expr::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Expr, r: Expr) -> Expr {
        Expr::Implies(Box::new(l), Box::new(r))
    }

    pub fn implied_by(l: Expr, r: Expr) -> Expr {
        Expr::ImpliedBy(Box::new(l), Box::new(r))
    }

    /// Every variable occurrence in left-to-right, depth-first in-order
    /// traversal. A variable-versus-variable comparison yields both sides.
    pub fn occurrences(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_occurrences(&mut out);
        out
    }

    fn collect_occurrences<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Cmp { var, rhs, .. } => {
                out.push(var);
                if let Operand::Var(other) = rhs {
                    out.push(other);
                }
            }
            Expr::Not(e) => e.collect_occurrences(out),
            Expr::And(l, r) | Expr::Or(l, r) | Expr::Implies(l, r) | Expr::ImpliedBy(l, r) => {
                l.collect_occurrences(out);
                r.collect_occurrences(out);
            }
        }
    }

    /// Distinct referenced variables in order of first appearance.
    pub fn variables(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.occurrences().into_iter().filter(|v| seen.insert(*v)).collect()
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Cmp { .. } => 1,
            Expr::Not(e) => 1 + e.depth(),
            Expr::And(l, r) | Expr::Or(l, r) | Expr::Implies(l, r) | Expr::ImpliedBy(l, r) => {
                1 + l.depth().max(r.depth())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub id: String,
    pub expr: Expr,
}

impl Constraint {
    pub fn new(id: impl Into<String>, expr: Expr) -> Self {
        Constraint { id: id.into(), expr }
    }
}

/// A CSP: ordered variables with domains plus ordered constraints.
///
/// Declaration order is significant: it is the display order, the solver's
/// variable order, and the tie-break order for every engine downstream.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KnowledgeBase {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
}

impl KnowledgeBase {
    /// Builds a knowledge base, checking name uniqueness and that every
    /// constraint references only declared variables.
    pub fn new(variables: Vec<Variable>, constraints: Vec<Constraint>) -> Result<Self, ModelError> {
        let mut names = HashSet::new();
        for v in &variables {
            if !names.insert(v.name.as_str()) {
                return Err(ModelError::DuplicateVariable(v.name.clone()));
            }
        }
        let mut ids = HashSet::new();
        for c in &constraints {
            if !ids.insert(c.id.as_str()) {
                return Err(ModelError::DuplicateConstraint(c.id.clone()));
            }
            if let Some(unknown) = c.expr.occurrences().into_iter().find(|v| !names.contains(v)) {
                return Err(ModelError::UnknownVariable {
                    constraint: c.id.clone(),
                    variable: unknown.to_string(),
                });
            }
        }
        Ok(KnowledgeBase { variables, constraints })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn constraint(&self, id: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.id == id)
    }

    pub fn constraint_index(&self, id: &str) -> Option<usize> {
        self.constraints.iter().position(|c| c.id == id)
    }

    pub fn constraint_ids(&self) -> Vec<&str> {
        self.constraints.iter().map(|c| c.id.as_str()).collect()
    }

    /// Same variables, constraints replaced. References are re-checked.
    pub fn with_constraints(&self, constraints: Vec<Constraint>) -> Result<Self, ModelError> {
        KnowledgeBase::new(self.variables.clone(), constraints)
    }
}

/// Variable name to value, in insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(IndexMap<String, i64>);

impl Assignment {
    pub fn new() -> Self {
        Assignment::default()
    }

    pub fn set(&mut self, var: impl Into<String>, value: i64) {
        self.0.insert(var.into(), value);
    }

    pub fn get(&self, var: &str) -> Option<i64> {
        self.0.get(var).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Checks that every assigned variable exists in `kb` and its value lies
    /// in that variable's domain.
    pub fn check_domains(&self, kb: &KnowledgeBase) -> Result<(), ModelError> {
        for (name, value) in self.iter() {
            let var = kb.variable(name).ok_or_else(|| ModelError::UnknownAssigned(name.to_string()))?;
            if !var.domain.contains(value) {
                return Err(ModelError::OutOfDomain { variable: name.to_string(), value });
            }
        }
        Ok(())
    }
}

impl<S: Into<String>> FromIterator<(S, i64)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (S, i64)>>(iter: T) -> Self {
        Assignment(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (name, value) in self.iter() {
            if !first {
                f.write_str(", ")?;
            }
            write!(f, "{name}={value}")?;
            first = false;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("domain is empty")]
    EmptyDomain,
    #[error("domain has {0} values, more than the supported maximum")]
    DomainTooLarge(usize),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("duplicate constraint id `{0}`")]
    DuplicateConstraint(String),
    #[error("constraint `{constraint}` references undeclared variable `{variable}`")]
    UnknownVariable { constraint: String, variable: String },
    #[error("variable `{0}` is not bound by the assignment")]
    Unbound(String),
    #[error("assignment binds unknown variable `{0}`")]
    UnknownAssigned(String),
    #[error("value {value} is outside the domain of `{variable}`")]
    OutOfDomain { variable: String, value: i64 },
}

/// `(variable, position)` pairs: distinct variables in order of first
/// appearance, each with the 1-based index of its first occurrence among all
/// variable occurrences (repeats still advance the counter).
pub fn variable_occurrences(c: &Constraint) -> Vec<(String, usize)> {
    let mut seen = HashSet::new();
    c.expr
        .occurrences()
        .into_iter()
        .enumerate()
        .filter(|(_, v)| seen.insert(*v))
        .map(|(i, v)| (v.to_string(), i + 1))
        .collect()
}

/// Two-valued evaluation. `Implies(l, r)` is `!l || r`; `ImpliedBy(l, r)` is
/// `!r || l`.
pub fn evaluate(expr: &Expr, a: &Assignment) -> Result<bool, ModelError> {
    let lookup = |name: &str| a.get(name).ok_or_else(|| ModelError::Unbound(name.to_string()));
    Ok(match expr {
        Expr::Cmp { var, op, rhs } => {
            let lhs = lookup(var)?;
            let rhs = match rhs {
                Operand::Value(v) => *v,
                Operand::Var(other) => lookup(other)?,
            };
            op.apply(lhs, rhs)
        }
        Expr::Not(e) => !evaluate(e, a)?,
        Expr::And(l, r) => {
            // Both sides are evaluated so a partial assignment is always reported.
            let (l, r) = (evaluate(l, a)?, evaluate(r, a)?);
            l && r
        }
        Expr::Or(l, r) => {
            let (l, r) = (evaluate(l, a)?, evaluate(r, a)?);
            l || r
        }
        Expr::Implies(l, r) => {
            let (l, r) = (evaluate(l, a)?, evaluate(r, a)?);
            !l || r
        }
        Expr::ImpliedBy(l, r) => {
            let (l, r) = (evaluate(l, a)?, evaluate(r, a)?);
            !r || l
        }
    })
}

/// Operator tag counted by [`operator_multiset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpTag {
    Cmp(CmpOp),
    Not,
    And,
    Or,
    Implies,
    ImpliedBy,
}

impl fmt::Display for OpTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpTag::Cmp(op) => op.fmt(f),
            OpTag::Not => f.write_str("not"),
            OpTag::And => f.write_str("and"),
            OpTag::Or => f.write_str("or"),
            OpTag::Implies => f.write_str("->"),
            OpTag::ImpliedBy => f.write_str("<-"),
        }
    }
}

pub type OperatorMultiset = BTreeMap<OpTag, usize>;

pub fn operator_multiset(c: &Constraint) -> OperatorMultiset {
    fn walk(e: &Expr, out: &mut OperatorMultiset) {
        let (tag, left, right) = match e {
            Expr::Cmp { op, .. } => (OpTag::Cmp(*op), None, None),
            Expr::Not(x) => (OpTag::Not, Some(x), None),
            Expr::And(l, r) => (OpTag::And, Some(l), Some(r)),
            Expr::Or(l, r) => (OpTag::Or, Some(l), Some(r)),
            Expr::Implies(l, r) => (OpTag::Implies, Some(l), Some(r)),
            Expr::ImpliedBy(l, r) => (OpTag::ImpliedBy, Some(l), Some(r)),
        };
        *out.entry(tag).or_default() += 1;
        for child in left.into_iter().chain(right) {
            walk(child, out);
        }
    }
    let mut out = OperatorMultiset::new();
    walk(&c.expr, &mut out);
    out
}
