//! Brute-force oracles shared by the integration suites. They use only the
//! name-based `evaluate` and plain enumeration, never the solver.

#![allow(dead_code)]

use kbtool_core::model::{evaluate, Assignment};
use kbtool_core::KnowledgeBase;

/// Every complete assignment of `kb`, in enumeration order (first variable
/// slowest, values ascending).
pub fn all_assignments(kb: &KnowledgeBase) -> Vec<Assignment> {
    let mut out = vec![Assignment::new()];
    for v in kb.variables() {
        out = out
            .into_iter()
            .flat_map(|a| {
                v.domain.values().iter().map(move |&x| {
                    let mut next = a.clone();
                    next.set(v.name.clone(), x);
                    next
                })
            })
            .collect();
    }
    out
}

/// Per-constraint truth tables over [`all_assignments`], packed as bits.
pub struct TruthTables {
    pub states: usize,
    pub tables: Vec<Vec<u64>>,
}

impl TruthTables {
    pub fn new(kb: &KnowledgeBase) -> Self {
        let states = all_assignments(kb);
        let words = states.len().div_ceil(64);
        let tables = kb
            .constraints()
            .iter()
            .map(|c| {
                let mut bits = vec![0u64; words];
                for (i, a) in states.iter().enumerate() {
                    if evaluate(&c.expr, a).expect("complete assignment") {
                        bits[i / 64] |= 1 << (i % 64);
                    }
                }
                bits
            })
            .collect();
        TruthTables { states: states.len(), tables }
    }

    /// Index of the first assignment satisfying every constraint in `subset`.
    pub fn first_model(&self, subset: &[usize]) -> Option<usize> {
        let words = self.states.div_ceil(64);
        for w in 0..words {
            let mut word = if w + 1 == words && !self.states.is_multiple_of(64) { (1u64 << (self.states % 64)) - 1 } else { u64::MAX };
            for &c in subset {
                word &= self.tables[c][w];
            }
            if word != 0 {
                return Some(w * 64 + word.trailing_zeros() as usize);
            }
        }
        None
    }

    pub fn consistent(&self, subset: &[usize]) -> bool {
        self.first_model(subset).is_some()
    }
}

/// Solution set of `kb` by enumeration.
pub fn solutions(kb: &KnowledgeBase) -> Vec<Assignment> {
    all_assignments(kb)
        .into_iter()
        .filter(|a| kb.constraints().iter().all(|c| evaluate(&c.expr, a).unwrap()))
        .collect()
}
