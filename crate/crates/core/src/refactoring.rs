//! Representation forms of `requires` and `incompatibility` relationships,
//! their measured error rates, and rewrites toward the lowest-error form.
//!
//! A form is a template over two placeholders `X` and `Y`. A placeholder
//! binds a comparison or a binary-connective subtree, never a negation: a
//! negated operand belongs to the template. That keeps `X -> not Y`
//! (incompatibility) apart from `X -> Y` (requires) and makes every
//! template match structurally unambiguous up to the symmetry of
//! incompatibility.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{evaluate, Assignment, Constraint, Expr, KnowledgeBase, Variable};
use crate::parser::format_expr;

pub const DEFAULT_STATE_BOUND: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Requires,
    Incompatibility,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Requires => "requires",
            Family::Incompatibility => "incompatibility",
        })
    }
}

/// Template over the placeholders `X` and `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    X,
    Y,
    Not(&'static Pattern),
    And(&'static Pattern, &'static Pattern),
    Or(&'static Pattern, &'static Pattern),
    Implies(&'static Pattern, &'static Pattern),
    ImpliedBy(&'static Pattern, &'static Pattern),
}

use Pattern::{Implies, ImpliedBy, Not, Or, X, Y};

const NOT_X: Pattern = Not(&X);
const NOT_Y: Pattern = Not(&Y);
const X_AND_NOT_Y: Pattern = Pattern::And(&X, &NOT_Y);
const X_AND_Y: Pattern = Pattern::And(&X, &Y);

/// Error rate in hundredths of a percentage point (2143 = 21.43%).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ErrorRate(pub u32);

impl ErrorRate {
    pub fn percent(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

impl fmt::Display for ErrorRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}%", self.0 / 100, self.0 % 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefactoringForm {
    pub family: Family,
    /// 1..=5
    pub index: u8,
    pub template: Pattern,
    pub error_rate: ErrorRate,
}

impl RefactoringForm {
    /// Template text with `X`/`Y` placeholders.
    pub fn display_template(&self) -> String {
        fn write(p: &Pattern, top: bool) -> String {
            let s = match p {
                X => return "X".into(),
                Y => return "Y".into(),
                Not(inner) => return format!("not {}", write(inner, false)),
                Pattern::And(l, r) => format!("{} and {}", write(l, false), write(r, false)),
                Or(l, r) => format!("{} or {}", write(l, false), write(r, false)),
                Implies(l, r) => format!("{} -> {}", write(l, false), write(r, false)),
                ImpliedBy(l, r) => format!("{} <- {}", write(l, false), write(r, false)),
            };
            if top {
                s
            } else {
                format!("({s})")
            }
        }
        write(&self.template, true)
    }
}

impl fmt::Display for RefactoringForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ({})", self.family, self.index, self.display_template())
    }
}

impl Serialize for RefactoringForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("RefactoringForm", 4)?;
        st.serialize_field("family", &self.family)?;
        st.serialize_field("index", &self.index)?;
        st.serialize_field("template", &self.display_template())?;
        st.serialize_field("error_rate", &self.error_rate.percent())?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for RefactoringForm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Key {
            family: Family,
            index: u8,
        }
        let key = Key::deserialize(d)?;
        form(key.family, key.index)
            .ok_or_else(|| serde::de::Error::custom(format!("no form {} {}", key.family, key.index)))
    }
}

/// Catalog order: requires 1..5, then incompatibility 1..5.
pub const CATALOG: [RefactoringForm; 10] = [
    RefactoringForm { family: Family::Requires, index: 1, template: Implies(&X, &Y), error_rate: ErrorRate(2143) },
    RefactoringForm { family: Family::Requires, index: 2, template: Or(&NOT_X, &Y), error_rate: ErrorRate(5000) },
    RefactoringForm { family: Family::Requires, index: 3, template: Implies(&NOT_Y, &NOT_X), error_rate: ErrorRate(9643) },
    RefactoringForm { family: Family::Requires, index: 4, template: Not(&X_AND_NOT_Y), error_rate: ErrorRate(7308) },
    RefactoringForm { family: Family::Requires, index: 5, template: ImpliedBy(&Y, &X), error_rate: ErrorRate(2500) },
    RefactoringForm { family: Family::Incompatibility, index: 1, template: Implies(&X, &NOT_Y), error_rate: ErrorRate(1429) },
    RefactoringForm { family: Family::Incompatibility, index: 2, template: Or(&NOT_X, &NOT_Y), error_rate: ErrorRate(3462) },
    RefactoringForm { family: Family::Incompatibility, index: 3, template: Implies(&Y, &NOT_X), error_rate: ErrorRate(5000) },
    RefactoringForm { family: Family::Incompatibility, index: 4, template: Not(&X_AND_Y), error_rate: ErrorRate(4231) },
    RefactoringForm { family: Family::Incompatibility, index: 5, template: ImpliedBy(&NOT_Y, &X), error_rate: ErrorRate(1667) },
];

pub fn form(family: Family, index: u8) -> Option<RefactoringForm> {
    CATALOG.iter().copied().find(|f| f.family == family && f.index == index)
}

pub fn score(form: &RefactoringForm) -> ErrorRate {
    form.error_rate
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormMatch {
    pub form: RefactoringForm,
    pub x: Expr,
    pub y: Expr,
}

#[derive(Default)]
struct Bindings<'a> {
    x: Option<&'a Expr>,
    y: Option<&'a Expr>,
}

fn bind<'a>(slot: &mut Option<&'a Expr>, e: &'a Expr) -> bool {
    if matches!(e, Expr::Not(_)) {
        return false;
    }
    match slot {
        Some(bound) => *bound == e,
        None => {
            *slot = Some(e);
            true
        }
    }
}

fn match_pattern<'a>(p: &Pattern, e: &'a Expr, b: &mut Bindings<'a>) -> bool {
    match (p, e) {
        (X, _) => bind(&mut b.x, e),
        (Y, _) => bind(&mut b.y, e),
        (Not(p), Expr::Not(e)) => match_pattern(p, e, b),
        (Pattern::And(pl, pr), Expr::And(l, r))
        | (Or(pl, pr), Expr::Or(l, r))
        | (Implies(pl, pr), Expr::Implies(l, r))
        | (ImpliedBy(pl, pr), Expr::ImpliedBy(l, r)) => match_pattern(pl, l, b) && match_pattern(pr, r, b),
        _ => false,
    }
}

/// Builds the expression for `p` with the given placeholder bindings.
pub fn instantiate(p: &Pattern, x: &Expr, y: &Expr) -> Expr {
    match p {
        X => x.clone(),
        Y => y.clone(),
        Not(inner) => Expr::not(instantiate(inner, x, y)),
        Pattern::And(l, r) => Expr::and(instantiate(l, x, y), instantiate(r, x, y)),
        Or(l, r) => Expr::or(instantiate(l, x, y), instantiate(r, x, y)),
        Implies(l, r) => Expr::implies(instantiate(l, x, y), instantiate(r, x, y)),
        ImpliedBy(l, r) => Expr::implied_by(instantiate(l, x, y), instantiate(r, x, y)),
    }
}

/// Every catalog form `e` matches, in catalog order.
pub fn matching_forms(e: &Expr) -> Vec<FormMatch> {
    CATALOG
        .iter()
        .filter_map(|form| {
            let mut b = Bindings::default();
            if match_pattern(&form.template, e, &mut b) {
                Some(FormMatch { form: *form, x: b.x?.clone(), y: b.y?.clone() })
            } else {
                None
            }
        })
        .collect()
}

/// First catalog form the constraint matches.
///
/// Incompatibility is symmetric, so `A -> not B` is both form 1 (X = A) and
/// form 3 (X = B); catalog order reports form 1.
pub fn classify(c: &Constraint) -> Option<FormMatch> {
    matching_forms(&c.expr).into_iter().next()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefactoringSuggestion {
    pub constraint: String,
    pub matched: RefactoringForm,
    pub target: RefactoringForm,
    pub original: Expr,
    pub rewritten: Expr,
    /// matched rate minus target rate
    pub score_delta: ErrorRate,
}

impl RefactoringSuggestion {
    pub fn delta_percent(&self) -> f64 {
        self.score_delta.percent()
    }
}

/// Rewrite toward form 1 of the matched family, if not already there.
/// The rewrite is not verified here; see [`refactor_kb`].
pub fn recommend(c: &Constraint) -> Option<RefactoringSuggestion> {
    let m = classify(c)?;
    if m.form.index == 1 {
        return None;
    }
    let target = form(m.form.family, 1).expect("every family has form 1");
    Some(RefactoringSuggestion {
        constraint: c.id.clone(),
        matched: m.form,
        target,
        original: c.expr.clone(),
        rewritten: instantiate(&target.template, &m.x, &m.y),
        score_delta: ErrorRate(m.form.error_rate.0 - target.error_rate.0),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EquivalenceError {
    #[error("{size} assignments exceed the enumeration bound of {bound}")]
    StateSpaceExceeded { size: u128, bound: u64 },
    #[error("variable `{0}` has no declared domain")]
    UnknownVariable(String),
}

/// True iff `a` and `b` agree on every assignment to the variables either
/// references, by exhaustive enumeration.
pub fn check_equivalence(a: &Expr, b: &Expr, vars: &[Variable], bound: u64) -> Result<bool, EquivalenceError> {
    let mut names: Vec<&str> = a.variables();
    for v in b.variables() {
        if !names.contains(&v) {
            names.push(v);
        }
    }
    let domains: Vec<&[i64]> = names
        .iter()
        .map(|n| {
            vars.iter()
                .find(|v| v.name == *n)
                .map(|v| v.domain.values())
                .ok_or_else(|| EquivalenceError::UnknownVariable(n.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let size: u128 = domains.iter().map(|d| d.len() as u128).product();
    if size > u128::from(bound) {
        return Err(EquivalenceError::StateSpaceExceeded { size, bound });
    }

    // Odometer over the domains.
    let mut digits = vec![0usize; names.len()];
    loop {
        let assignment: Assignment = names.iter().zip(&digits).zip(&domains).map(|((n, &i), d)| (*n, d[i])).collect();
        let (ra, rb) = (
            evaluate(a, &assignment).expect("assignment covers a"),
            evaluate(b, &assignment).expect("assignment covers b"),
        );
        if ra != rb {
            return Ok(false);
        }
        let mut pos = 0;
        loop {
            if pos == digits.len() {
                return Ok(true);
            }
            digits[pos] += 1;
            if digits[pos] < domains[pos].len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRewrite {
    pub constraint: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefactorReport {
    pub kb: KnowledgeBase,
    pub applied: Vec<RefactoringSuggestion>,
    /// Suggestions that failed or could not complete verification.
    pub skipped: Vec<SkippedRewrite>,
}

/// Applies every verified suggestion. Constraints whose rewrite fails the
/// equivalence check, or whose check exceeds `bound`, stay untouched and are
/// listed in `skipped`.
pub fn refactor_kb(kb: &KnowledgeBase, bound: u64) -> RefactorReport {
    let mut applied = Vec::new();
    let mut skipped = Vec::new();
    let constraints = kb
        .constraints()
        .iter()
        .map(|c| {
            let Some(s) = recommend(c) else { return c.clone() };
            match check_equivalence(&s.original, &s.rewritten, kb.variables(), bound) {
                Ok(true) => {
                    let rewritten = Constraint::new(c.id.clone(), s.rewritten.clone());
                    applied.push(s);
                    rewritten
                }
                Ok(false) => {
                    skipped.push(SkippedRewrite {
                        constraint: c.id.clone(),
                        reason: format!("rewrite `{}` is not equivalent", format_expr(&s.rewritten)),
                    });
                    c.clone()
                }
                Err(e) => {
                    skipped.push(SkippedRewrite { constraint: c.id.clone(), reason: e.to_string() });
                    c.clone()
                }
            }
        })
        .collect();
    let kb = kb.with_constraints(constraints).expect("rewrites reference the same variables");
    RefactorReport { kb, applied, skipped }
}
