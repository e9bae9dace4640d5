//! k-means-style clustering of constraints over a similarity matrix.
//!
//! Centroids are medoids: the member with the highest summed similarity to
//! the rest of its cluster. Each iteration assigns every constraint to its
//! most similar centroid, then recomputes the centroids; the run stops when
//! recomputation leaves the centroids unchanged.

use std::fmt::Write as _;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::KnowledgeBase;
use crate::similarity::SimilarityMatrix;

/// Similarity differences at or below this are ties.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("k = {k} is invalid for {n} constraints (need 1 <= k <= n)")]
    InvalidK { k: usize, n: usize },
    #[error("initial centroid `{0}` is not a constraint of the matrix")]
    UnknownCentroid(String),
    #[error("initial centroid `{0}` is given twice")]
    DuplicateCentroid(String),
    #[error("{given} initial centroids given for k = {k}")]
    InitLength { given: usize, k: usize },
}

/// How the first centroids are chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Init {
    Centroids(Vec<String>),
    Seed(u64),
}

/// One assignment pass: the centroids it used and the resulting clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub centroids: Vec<String>,
    /// Constraint id to 0-based cluster index.
    pub assignment: IndexMap<String, usize>,
    /// Summed similarity of every non-centroid member to its centroid.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub assignment: IndexMap<String, usize>,
    /// `None` for random clusterings.
    pub centroids: Option<Vec<String>>,
    pub trace: Vec<Iteration>,
    /// Set once a centroid recomputation reproduced the centroids of the
    /// last trace row. That confirming recomputation is not a trace row.
    pub converged: bool,
}

impl Clustering {
    /// Members of each cluster, in assignment (declaration) order.
    pub fn clusters(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.k];
        for (id, &cluster) in &self.assignment {
            out[cluster].push(id.as_str());
        }
        out
    }

    /// Grouped listing for display, one line per cluster.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (i, members) in self.clusters().iter().enumerate() {
            let _ = match &self.centroids {
                Some(cs) => writeln!(out, "cluster {} (centroid {}): {}", i + 1, cs[i], members.join(", ")),
                None => writeln!(out, "cluster {}: {}", i + 1, members.join(", ")),
            };
        }
        out
    }
}

fn objective(matrix: &SimilarityMatrix, centroids: &[usize], assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter(|(i, cluster)| centroids[**cluster] != *i)
        .map(|(i, &cluster)| matrix.at(i, centroids[cluster]))
        .sum()
}

fn assign(matrix: &SimilarityMatrix, centroids: &[usize], previous: Option<&[usize]>) -> Vec<usize> {
    (0..matrix.len())
        .map(|i| {
            if let Some(own) = centroids.iter().position(|&c| c == i) {
                return own;
            }
            let best = (0..centroids.len()).map(|j| matrix.at(i, centroids[j])).fold(f64::NEG_INFINITY, f64::max);
            let tied = |j: usize| matrix.at(i, centroids[j]) >= best - TIE_EPS;
            match previous.map(|p| p[i]) {
                Some(prev) if tied(prev) => prev,
                _ => (0..centroids.len()).find(|&j| tied(j)).expect("some centroid attains the maximum"),
            }
        })
        .collect()
}

fn recompute(matrix: &SimilarityMatrix, members: &[usize], current: usize) -> usize {
    let score = |m: usize| members.iter().filter(|&&o| o != m).map(|&o| matrix.at(m, o)).sum::<f64>();
    let best = members.iter().map(|&m| score(m)).fold(f64::NEG_INFINITY, f64::max);
    if members.contains(&current) && score(current) >= best - TIE_EPS {
        return current;
    }
    *members.iter().filter(|&&m| score(m) >= best - TIE_EPS).min().expect("cluster is non-empty")
}

fn to_map(matrix: &SimilarityMatrix, assignment: &[usize]) -> IndexMap<String, usize> {
    matrix.ids().iter().cloned().zip(assignment.iter().copied()).collect()
}

fn resolve_centroids(matrix: &SimilarityMatrix, ids: &[&str]) -> Result<Vec<usize>, ClusterError> {
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let i = matrix.index_of(id).ok_or_else(|| ClusterError::UnknownCentroid(id.to_string()))?;
        if out.contains(&i) {
            return Err(ClusterError::DuplicateCentroid(id.to_string()));
        }
        out.push(i);
    }
    Ok(out)
}

/// Maps each constraint to the index of its most similar centroid. A
/// centroid always maps to its own cluster; ties go to the lower index.
pub fn assign_to_centroids(matrix: &SimilarityMatrix, centroids: &[&str]) -> Result<IndexMap<String, usize>, ClusterError> {
    if centroids.is_empty() {
        return Err(ClusterError::InvalidK { k: 0, n: matrix.len() });
    }
    let idx = resolve_centroids(matrix, centroids)?;
    Ok(to_map(matrix, &assign(matrix, &idx, None)))
}

/// The member with the largest summed similarity to the other members.
/// Ties keep `current`, then prefer the earliest declared constraint.
///
/// Panics if `members` is empty or names an id missing from the matrix.
pub fn recompute_centroid(matrix: &SimilarityMatrix, members: &[&str], current: &str) -> String {
    let idx: Vec<usize> =
        members.iter().map(|m| matrix.index_of(m).unwrap_or_else(|| panic!("`{m}` is not in the matrix"))).collect();
    let current = matrix.index_of(current).unwrap_or(usize::MAX);
    matrix.ids()[recompute(matrix, &idx, current)].clone()
}

fn check_k(k: usize, n: usize) -> Result<(), ClusterError> {
    if k == 0 || k > n {
        Err(ClusterError::InvalidK { k, n })
    } else {
        Ok(())
    }
}

pub fn kmeans(matrix: &SimilarityMatrix, k: usize, init: &Init) -> Result<Clustering, ClusterError> {
    let n = matrix.len();
    check_k(k, n)?;
    let mut centroids = match init {
        Init::Centroids(ids) => {
            if ids.len() != k {
                return Err(ClusterError::InitLength { given: ids.len(), k });
            }
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            resolve_centroids(matrix, &refs)?
        }
        Init::Seed(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
            picked.sort_unstable();
            picked
        }
    };

    let mut trace = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    // Every centroid change strictly raises the objective and every
    // reassignment is strict, so the loop visits no state twice.
    let assignment = loop {
        let assignment = assign(matrix, &centroids, previous.as_deref());
        trace.push(Iteration {
            centroids: centroids.iter().map(|&c| matrix.ids()[c].clone()).collect(),
            assignment: to_map(matrix, &assignment),
            objective: objective(matrix, &centroids, &assignment),
        });
        let next: Vec<usize> = (0..k)
            .map(|cluster| {
                let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == cluster).collect();
                recompute(matrix, &members, centroids[cluster])
            })
            .collect();
        if next == centroids {
            break assignment;
        }
        centroids = next;
        previous = Some(assignment);
    };

    Ok(Clustering {
        k,
        assignment: to_map(matrix, &assignment),
        centroids: Some(centroids.iter().map(|&c| matrix.ids()[c].clone()).collect()),
        trace,
        converged: true,
    })
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Draws uniformly from the assignments of `ids` to `k` labelled clusters
/// that leave no cluster empty.
pub fn random_partition(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    // log_cover[r][e]: log-probability that r uniform draws over k clusters
    // hit every one of e given clusters.
    let kf = k as f64;
    let mut log_cover = vec![vec![f64::NEG_INFINITY; k + 1]; n + 1];
    log_cover[0][0] = 0.0;
    for r in 1..=n {
        for e in 0..=k {
            let stay = if e < k { ((kf - e as f64) / kf).ln() + log_cover[r - 1][e] } else { f64::NEG_INFINITY };
            let fill = if e > 0 { (e as f64 / kf).ln() + log_cover[r - 1][e - 1] } else { f64::NEG_INFINITY };
            log_cover[r][e] = log_add_exp(stay, fill);
        }
    }

    let mut sizes = vec![0usize; k];
    let mut out = Vec::with_capacity(n);
    for item in 0..n {
        let remaining = n - item - 1;
        let empty = sizes.iter().filter(|&&s| s == 0).count();
        // Relative weight of one specific occupied vs. one specific empty cluster.
        let w_occupied = log_cover[remaining][empty];
        let w_empty = if empty > 0 { log_cover[remaining][empty - 1] } else { f64::NEG_INFINITY };
        let top = w_occupied.max(w_empty);
        let (p_occ, p_emp) = ((w_occupied - top).exp(), (w_empty - top).exp());
        let total = p_occ * (k - empty) as f64 + p_emp * empty as f64;
        let mut draw = rng.random::<f64>() * total;
        let mut chosen = None;
        for (cluster, &size) in sizes.iter().enumerate() {
            let w = if size == 0 { p_emp } else { p_occ };
            if w > 0.0 {
                chosen = Some(cluster);
                if draw < w {
                    break;
                }
                draw -= w;
            }
        }
        let cluster = chosen.expect("a cluster with positive weight exists");
        sizes[cluster] += 1;
        out.push(cluster);
    }
    out
}

/// Random baseline: a uniform, seed-determined assignment with no empty
/// cluster and no centroids.
pub fn random_clustering(kb: &KnowledgeBase, k: usize, seed: u64) -> Result<Clustering, ClusterError> {
    let ids = kb.constraint_ids();
    check_k(k, ids.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partition = random_partition(ids.len(), k, &mut rng);
    let assignment: IndexMap<String, usize> =
        ids.iter().map(|s| s.to_string()).zip(partition.iter().copied()).collect();
    Ok(Clustering {
        k,
        assignment: assignment.clone(),
        centroids: None,
        trace: vec![Iteration { centroids: Vec::new(), assignment, objective: 0.0 }],
        converged: true,
    })
}
