//! Random knowledge bases for tests and benchmarks.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::model::{CmpOp, Constraint, Domain, Expr, KnowledgeBase, Operand, Variable};

/// Size parameters of a generated knowledge base.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KbShape {
    pub variables: usize,
    pub domain_size: usize,
    pub constraints: usize,
}

impl KbShape {
    pub const fn new(variables: usize, domain_size: usize, constraints: usize) -> Self {
        KbShape { variables, domain_size, constraints }
    }

    /// Number of complete assignments.
    pub fn state_space(&self) -> u128 {
        (self.domain_size as u128).pow(self.variables as u32)
    }
}

/// Shapes of the desk-scale knowledge bases used for the solution and
/// conflict tasks: (variables, domain size, constraints).
pub const REFERENCE_SHAPES: [KbShape; 4] =
    [KbShape::new(5, 5, 15), KbShape::new(10, 3, 10), KbShape::new(5, 5, 7), KbShape::new(3, 3, 5)];

fn comparison(vars: &[Variable], rng: &mut impl Rng) -> Expr {
    let v = vars.choose(rng).expect("at least one variable");
    let op = *CmpOp::ALL.choose(rng).expect("non-empty");
    let rhs = if vars.len() > 1 && rng.random_bool(0.1) {
        let other = vars.iter().filter(|o| o.name != v.name).collect::<Vec<_>>();
        Operand::Var(other.choose(rng).expect("two or more variables").name.clone())
    } else {
        Operand::Value(*v.domain.values().choose(rng).expect("non-empty domain"))
    };
    Expr::Cmp { var: v.name.clone(), op, rhs }
}

/// Random expression no deeper than `depth + 1`.
pub fn random_expr(vars: &[Variable], depth: usize, rng: &mut impl Rng) -> Expr {
    if depth == 0 || rng.random_bool(0.3) {
        return comparison(vars, rng);
    }
    let sub = |rng: &mut _| random_expr(vars, depth - 1, rng);
    match rng.random_range(0..20) {
        0..=1 => Expr::not(sub(rng)),
        2..=6 => Expr::and(sub(rng), sub(rng)),
        7..=11 => Expr::or(sub(rng), sub(rng)),
        12..=16 => Expr::implies(sub(rng), sub(rng)),
        _ => Expr::implied_by(sub(rng), sub(rng)),
    }
}

/// A knowledge base of the given shape with domains `1..=domain_size` and
/// constraints of depth at most 3.
pub fn generate_kb(shape: &KbShape, rng: &mut impl Rng) -> KnowledgeBase {
    let domain = Domain::interval(1, shape.domain_size as i64).expect("domain_size >= 1");
    let vars: Vec<Variable> =
        (1..=shape.variables).map(|i| Variable::new(format!("v{i}"), domain.clone())).collect();
    let constraints = (1..=shape.constraints)
        .map(|i| Constraint::new(format!("c{i}"), random_expr(&vars, 2, rng)))
        .collect();
    KnowledgeBase::new(vars, constraints).expect("generated names are unique")
}

/// A knowledge base with varied shape: enumerated and negative domains,
/// deeper expressions, possibly no constraints.
pub fn generate_varied_kb(rng: &mut impl Rng) -> KnowledgeBase {
    let n_vars = rng.random_range(1..=8);
    let vars: Vec<Variable> = (0..n_vars)
        .map(|i| {
            let domain = if rng.random_bool(0.5) {
                let lo = rng.random_range(-10..=10);
                Domain::interval(lo, lo + rng.random_range(0..8)).expect("non-empty")
            } else {
                let count = rng.random_range(1..=6);
                Domain::new((0..count).map(|_| rng.random_range(-50..=50))).expect("non-empty")
            };
            Variable::new(format!("x_{i}"), domain)
        })
        .collect();
    let n_constraints = rng.random_range(0..=10);
    let constraints = (0..n_constraints)
        .map(|i| {
            let depth = rng.random_range(0..=5);
            Constraint::new(format!("k{i}"), random_expr(&vars, depth, rng))
        })
        .collect();
    KnowledgeBase::new(vars, constraints).expect("generated names are unique")
}
