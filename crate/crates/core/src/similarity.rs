//! Pairwise constraint similarity and similarity matrices.
//!
//! The variable metric scores each variable of `vars(a) ∪ vars(b)` by
//! co-occurrence (1 at the same first-occurrence position, 0.5 at different
//! positions, 0 if absent from either side) and averages over the union.
//! The operator metric is a multiset Jaccard over operator tags.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{operator_multiset, variable_occurrences, Constraint, KnowledgeBase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Variable,
    Operator,
    /// Values supplied from outside (e.g. a CSV fixture).
    External,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Variable => "variable",
            Metric::Operator => "operator",
            Metric::External => "external",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "variable" => Ok(Metric::Variable),
            "operator" => Ok(Metric::Operator),
            other => Err(format!("unknown metric `{other}` (expected `variable` or `operator`)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("similarity of `{0}` and `{1}` is undefined: neither references a variable")]
    Undefined(String, String),
    #[error("knowledge base has no constraints")]
    NoConstraints,
    #[error("matrix csv: {0}")]
    Csv(String),
    #[error("matrix entry ({0}, {1}) = {2} is outside [0, 1]")]
    OutOfRange(String, String, f64),
    #[error("matrix is not symmetric at ({0}, {1})")]
    Asymmetric(String, String),
}

/// Co-occurrence weight of `v` in the two constraints: 1, 0.5 or 0.
pub fn co_occurrence(v: &str, a: &Constraint, b: &Constraint) -> f64 {
    let position = |c: &Constraint| variable_occurrences(c).into_iter().find(|(name, _)| name == v).map(|(_, p)| p);
    match (position(a), position(b)) {
        (Some(pa), Some(pb)) if pa == pb => 1.0,
        (Some(_), Some(_)) => 0.5,
        _ => 0.0,
    }
}

pub fn variable_similarity(a: &Constraint, b: &Constraint) -> Result<f64, SimilarityError> {
    let pa: HashMap<String, usize> = variable_occurrences(a).into_iter().collect();
    let pb: HashMap<String, usize> = variable_occurrences(b).into_iter().collect();
    let union: BTreeSet<&String> = pa.keys().chain(pb.keys()).collect();
    if union.is_empty() {
        return Err(SimilarityError::Undefined(a.id.clone(), b.id.clone()));
    }
    // Sum in half units so the only rounding is the final division.
    let halves: usize = union
        .iter()
        .map(|v| match (pa.get(*v), pb.get(*v)) {
            (Some(x), Some(y)) if x == y => 2,
            (Some(_), Some(_)) => 1,
            _ => 0,
        })
        .sum();
    Ok(halves as f64 / (2 * union.len()) as f64)
}

pub fn operator_similarity(a: &Constraint, b: &Constraint) -> f64 {
    let ma = operator_multiset(a);
    let mb = operator_multiset(b);
    let tags: BTreeSet<_> = ma.keys().chain(mb.keys()).collect();
    let (mut inter, mut union) = (0usize, 0usize);
    for t in tags {
        let (x, y) = (ma.get(t).copied().unwrap_or(0), mb.get(t).copied().unwrap_or(0));
        inter += x.min(y);
        union += x.max(y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Truncates to two decimals, the display convention of published tables
/// (1/6 shows as 0.16, 0.375 as 0.37).
pub fn truncate2(x: f64) -> f64 {
    ((x * 100.0) + 1e-9).floor() / 100.0
}

/// Symmetric similarity matrix indexed by constraint declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    ids: Vec<String>,
    values: Vec<Vec<f64>>,
    metric: Metric,
}

impl SimilarityMatrix {
    /// Wraps precomputed values, validating range and symmetry.
    pub fn from_values(ids: Vec<String>, values: Vec<Vec<f64>>, metric: Metric) -> Result<Self, SimilarityError> {
        let n = ids.len();
        if values.len() != n || values.iter().any(|row| row.len() != n) {
            return Err(SimilarityError::Csv(format!("matrix must be {n}x{n}")));
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[i][j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(SimilarityError::OutOfRange(ids[i].clone(), ids[j].clone(), v));
                }
                if (v - values[j][i]).abs() > 1e-12 {
                    return Err(SimilarityError::Asymmetric(ids[i].clone(), ids[j].clone()));
                }
            }
        }
        Ok(SimilarityMatrix { ids, values, metric })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Similarity by index.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.values[self.index_of(a)?][self.index_of(b)?])
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Reorders to `ids`, which must be a permutation of this matrix's ids.
    pub fn reordered(&self, ids: &[&str]) -> Option<SimilarityMatrix> {
        if ids.len() != self.ids.len() {
            return None;
        }
        let idx: Vec<usize> = ids.iter().map(|id| self.index_of(id)).collect::<Option<_>>()?;
        let values = idx.iter().map(|&i| idx.iter().map(|&j| self.values[i][j]).collect()).collect();
        Some(SimilarityMatrix { ids: ids.iter().map(|s| s.to_string()).collect(), values, metric: self.metric })
    }

    /// CSV with a header row and column of constraint ids.
    pub fn to_csv(&self, truncate: bool) -> String {
        let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("").chain(self.ids.iter().map(String::as_str)).collect();
        writer.write_record(&header).expect("in-memory write");
        for (id, row) in self.ids.iter().zip(&self.values) {
            let mut record = vec![id.clone()];
            record.extend(row.iter().map(|&v| if truncate { format!("{:.2}", truncate2(v)) } else { v.to_string() }));
            writer.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Reads a square CSV matrix. Cells that are empty or `-` are filled
    /// from the mirrored cell, so a lower-triangular table is accepted.
    pub fn from_csv(source: &str) -> Result<SimilarityMatrix, SimilarityError> {
        let csv_err = |e: csv::Error| SimilarityError::Csv(e.to_string());
        let mut reader =
            csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(source.as_bytes());
        let mut records = reader.records();
        let header = records.next().ok_or_else(|| SimilarityError::Csv("empty input".into()))?.map_err(csv_err)?;
        let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let n = ids.len();
        let mut cells: Vec<Vec<Option<f64>>> = Vec::with_capacity(n);
        for (i, record) in records.enumerate() {
            let record = record.map_err(csv_err)?;
            if record.len() != n + 1 {
                return Err(SimilarityError::Csv(format!("row {} has {} fields, expected {}", i + 2, record.len(), n + 1)));
            }
            if i >= n || record[0] != ids[i] {
                return Err(SimilarityError::Csv(format!("row {} must be labelled `{}`", i + 2, ids.get(i).map_or("", |s| s))));
            }
            let row = record
                .iter()
                .skip(1)
                .map(|cell| match cell {
                    "" | "-" => Ok(None),
                    text => text
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| SimilarityError::Csv(format!("`{text}` is not a number"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            cells.push(row);
        }
        if cells.len() != n {
            return Err(SimilarityError::Csv(format!("expected {n} rows, found {}", cells.len())));
        }
        let mut values = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                values[i][j] = cells[i][j].or(cells[j][i]).ok_or_else(|| {
                    SimilarityError::Csv(format!("({}, {}) and its mirror are both missing", ids[i], ids[j]))
                })?;
            }
        }
        SimilarityMatrix::from_values(ids, values, Metric::External)
    }
}

/// Full matrix over `kb`'s constraints under `metric`.
pub fn similarity_matrix(kb: &KnowledgeBase, metric: Metric) -> Result<SimilarityMatrix, SimilarityError> {
    let cs = kb.constraints();
    if cs.is_empty() {
        return Err(SimilarityError::NoConstraints);
    }
    let n = cs.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = match metric {
                Metric::Variable => variable_similarity(&cs[i], &cs[j])?,
                Metric::Operator => operator_similarity(&cs[i], &cs[j]),
                Metric::External => unreachable!("external matrices are loaded, not computed"),
            };
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(SimilarityMatrix { ids: cs.iter().map(|c| c.id.clone()).collect(), values, metric })
}
