//! Solutions, consistency checks and minimal conflicts.
//!
//! Search is chronological backtracking over variables in declaration order
//! with values ascending; a constraint is checked as soon as its last
//! variable (in declaration order) is assigned. Minimal conflicts come from
//! QuickXplain-style divide and conquer over the constraints in declaration
//! order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Assignment, CmpOp, Expr, KnowledgeBase, Operand};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("unknown constraint `{0}`")]
    UnknownConstraint(String),
}

/// An inconsistent set of constraints whose proper subsets are all
/// consistent. Ids are in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub constraints: Vec<String>,
}

#[derive(Debug, Clone)]
enum Compiled {
    Cmp { var: usize, op: CmpOp, rhs: Rhs },
    Not(Box<Compiled>),
    And(Box<Compiled>, Box<Compiled>),
    Or(Box<Compiled>, Box<Compiled>),
    Implies(Box<Compiled>, Box<Compiled>),
}

#[derive(Debug, Clone, Copy)]
enum Rhs {
    Value(i64),
    Var(usize),
}

impl Compiled {
    fn from_expr(e: &Expr, index: &HashMap<&str, usize>) -> Compiled {
        let c = |x: &Expr| Box::new(Compiled::from_expr(x, index));
        match e {
            Expr::Cmp { var, op, rhs } => Compiled::Cmp {
                var: index[var.as_str()],
                op: *op,
                rhs: match rhs {
                    Operand::Value(v) => Rhs::Value(*v),
                    Operand::Var(other) => Rhs::Var(index[other.as_str()]),
                },
            },
            Expr::Not(x) => Compiled::Not(c(x)),
            Expr::And(l, r) => Compiled::And(c(l), c(r)),
            Expr::Or(l, r) => Compiled::Or(c(l), c(r)),
            Expr::Implies(l, r) => Compiled::Implies(c(l), c(r)),
            Expr::ImpliedBy(l, r) => Compiled::Implies(c(r), c(l)),
        }
    }

    fn eval(&self, values: &[i64]) -> bool {
        match self {
            Compiled::Cmp { var, op, rhs } => {
                let rhs = match rhs {
                    Rhs::Value(v) => *v,
                    Rhs::Var(i) => values[*i],
                };
                op.apply(values[*var], rhs)
            }
            Compiled::Not(x) => !x.eval(values),
            Compiled::And(l, r) => l.eval(values) && r.eval(values),
            Compiled::Or(l, r) => l.eval(values) || r.eval(values),
            Compiled::Implies(l, r) => !l.eval(values) || r.eval(values),
        }
    }
}

/// A knowledge base compiled for repeated consistency checks.
pub struct Solver<'kb> {
    kb: &'kb KnowledgeBase,
    constraints: Vec<Compiled>,
    /// Index of the last variable each constraint mentions.
    last_var: Vec<usize>,
}

impl<'kb> Solver<'kb> {
    pub fn new(kb: &'kb KnowledgeBase) -> Self {
        let index: HashMap<&str, usize> =
            kb.variables().iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect();
        let constraints = kb.constraints().iter().map(|c| Compiled::from_expr(&c.expr, &index)).collect();
        let last_var = kb
            .constraints()
            .iter()
            .map(|c| c.expr.occurrences().into_iter().map(|v| index[v]).max().unwrap_or(0))
            .collect();
        Solver { kb, constraints, last_var }
    }

    pub fn indices_of(&self, ids: &[&str]) -> Result<Vec<usize>, SolverError> {
        ids.iter()
            .map(|id| self.kb.constraint_index(id).ok_or_else(|| SolverError::UnknownConstraint(id.to_string())))
            .collect()
    }

    /// First solution in enumeration order of the constraints at `subset`
    /// (indices into the knowledge base), or `None` when unsatisfiable.
    pub fn solve(&self, subset: &[usize]) -> Option<Vec<i64>> {
        let n = self.kb.variables().len();
        if n == 0 {
            // Only reachable with no constraints at all.
            return Some(Vec::new());
        }
        let mut checks: Vec<Vec<&Compiled>> = vec![Vec::new(); n];
        for &c in subset {
            checks[self.last_var[c]].push(&self.constraints[c]);
        }
        let domains: Vec<&[i64]> = self.kb.variables().iter().map(|v| v.domain.values()).collect();
        let mut values: Vec<i64> = domains.iter().map(|d| d[0]).collect();
        let mut cursor = vec![0usize; n];
        let mut depth = 0usize;
        loop {
            if cursor[depth] == domains[depth].len() {
                cursor[depth] = 0;
                if depth == 0 {
                    return None;
                }
                depth -= 1;
                cursor[depth] += 1;
                continue;
            }
            values[depth] = domains[depth][cursor[depth]];
            if checks[depth].iter().all(|c| c.eval(&values)) {
                if depth + 1 == n {
                    return Some(values);
                }
                depth += 1;
            } else {
                cursor[depth] += 1;
            }
        }
    }

    pub fn is_consistent(&self, subset: &[usize]) -> bool {
        self.solve(subset).is_some()
    }

    fn to_assignment(&self, values: &[i64]) -> Assignment {
        self.kb.variables().iter().zip(values).map(|(v, &x)| (v.name.as_str(), x)).collect()
    }

    /// QuickXplain over `constraints` (declaration order), with an empty
    /// background. `None` when the whole set is consistent.
    pub fn quickxplain(&self, constraints: &[usize]) -> Option<Vec<usize>> {
        if self.is_consistent(constraints) {
            return None;
        }
        let mut conflict = self.qx(&[], false, constraints);
        conflict.sort_unstable();
        Some(conflict)
    }

    fn qx(&self, background: &[usize], delta_nonempty: bool, constraints: &[usize]) -> Vec<usize> {
        if delta_nonempty && !self.is_consistent(background) {
            return Vec::new();
        }
        if constraints.len() == 1 {
            return constraints.to_vec();
        }
        let (c1, c2) = constraints.split_at(constraints.len() / 2);
        let with_c1: Vec<usize> = background.iter().chain(c1).copied().collect();
        let d2 = self.qx(&with_c1, !c1.is_empty(), c2);
        let with_d2: Vec<usize> = background.iter().chain(&d2).copied().collect();
        let d1 = self.qx(&with_d2, !d2.is_empty(), c1);
        d1.into_iter().chain(d2).collect()
    }
}

/// First satisfying assignment for the constraints named in `subset` (all
/// constraints when `None`), or `Ok(None)` when unsatisfiable.
pub fn find_solution(kb: &KnowledgeBase, subset: Option<&[&str]>) -> Result<Option<Assignment>, SolverError> {
    let solver = Solver::new(kb);
    let idx = match subset {
        Some(ids) => solver.indices_of(ids)?,
        None => (0..kb.constraints().len()).collect(),
    };
    Ok(solver.solve(&idx).map(|v| solver.to_assignment(&v)))
}

pub fn is_consistent(kb: &KnowledgeBase, subset: Option<&[&str]>) -> Result<bool, SolverError> {
    find_solution(kb, subset).map(|s| s.is_some())
}

/// One minimal conflict of the whole knowledge base, or `None` when it is
/// consistent.
pub fn minimal_conflict(kb: &KnowledgeBase) -> Option<Conflict> {
    let solver = Solver::new(kb);
    let all: Vec<usize> = (0..kb.constraints().len()).collect();
    solver.quickxplain(&all).map(|idx| Conflict {
        constraints: idx.into_iter().map(|i| kb.constraints()[i].id.clone()).collect(),
    })
}
