//! Recommendation support for constraint knowledge-base engineering.
//!
//! - [`similarity`]: constraint-to-constraint similarity matrices
//! - [`clustering`]: medoid k-means over a similarity matrix
//! - [`cf`]: next-constraint recommendation from navigation logs
//! - [`refactoring`]: rewrites toward lower-error representation forms
//! - [`solver`]: solutions, consistency and minimal conflicts
//!
//! Knowledge bases are read and written with [`parser`]; navigation logs
//! with [`navigation`].

#![forbid(unsafe_code)]

pub mod cf;
pub mod clustering;
pub mod generate;
pub mod model;
pub mod navigation;
pub mod parser;
pub mod refactoring;
pub mod similarity;
pub mod solver;

pub use model::{Assignment, CmpOp, Constraint, Domain, Expr, KnowledgeBase, Operand, Variable};
pub use navigation::{parse_navigation_log, NavigationLog};
pub use parser::{parse_kb, serialize_kb, ParseError, ParseErrorKind, ParseErrors};
pub use similarity::{similarity_matrix, Metric, SimilarityMatrix};
