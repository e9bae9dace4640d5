//! Navigation logs: the order in which each engineer visited constraints.
//!
//! On disk a log is CSV with header `user,constraint,rank`, one row per visit.

use std::cmp::Ordering;
use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::KnowledgeBase;

/// Orders user ids numerically when both are integers, else lexically.
pub fn compare_user_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

/// Per-user rank vectors. Ranks within one user are distinct positive
/// integers; constraint ids keep first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NavigationLog {
    users: IndexMap<String, IndexMap<String, u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: user `{user}` has rank {rank} for both `{first}` and `{second}`")]
    DuplicateRank { line: u64, user: String, rank: u32, first: String, second: String },
    #[error("line {line}: user `{user}` visits `{constraint}` twice")]
    DuplicateVisit { line: u64, user: String, constraint: String },
}

impl NavigationLog {
    pub fn new() -> Self {
        NavigationLog::default()
    }

    /// Records that `user` visited `constraint` at `rank`.
    pub fn insert(&mut self, user: &str, constraint: &str, rank: u32) -> Result<(), LogError> {
        self.insert_at(user, constraint, rank, 0)
    }

    fn insert_at(&mut self, user: &str, constraint: &str, rank: u32, line: u64) -> Result<(), LogError> {
        if rank == 0 {
            return Err(LogError::Malformed { line, message: "rank must be a positive integer".into() });
        }
        let ranks = self.users.entry(user.to_string()).or_default();
        if ranks.contains_key(constraint) {
            return Err(LogError::DuplicateVisit {
                line,
                user: user.to_string(),
                constraint: constraint.to_string(),
            });
        }
        if let Some((first, _)) = ranks.iter().find(|(_, r)| **r == rank) {
            return Err(LogError::DuplicateRank {
                line,
                user: user.to_string(),
                rank,
                first: first.clone(),
                second: constraint.to_string(),
            });
        }
        ranks.insert(constraint.to_string(), rank);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    /// Users in ascending id order.
    pub fn users(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.users.keys().map(String::as_str).collect();
        ids.sort_by(|a, b| compare_user_ids(a, b));
        ids
    }

    pub fn ranks(&self, user: &str) -> Option<&IndexMap<String, u32>> {
        self.users.get(user)
    }

    /// The user's visits sorted by rank.
    pub fn visit_order(&self, user: &str) -> Vec<(&str, u32)> {
        let mut visits: Vec<(&str, u32)> = self
            .users
            .get(user)
            .map(|r| r.iter().map(|(c, r)| (c.as_str(), *r)).collect())
            .unwrap_or_default();
        visits.sort_by_key(|(_, r)| *r);
        visits
    }

    /// Distinct constraint ids in order of first appearance.
    pub fn constraint_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.users
            .values()
            .flat_map(|r| r.keys())
            .map(String::as_str)
            .filter(|c| seen.insert(*c))
            .collect()
    }

    /// Constraint ids that `kb` does not declare (retired constraints).
    pub fn unknown_constraints(&self, kb: &KnowledgeBase) -> Vec<&str> {
        self.constraint_ids().into_iter().filter(|c| kb.constraint(c).is_none()).collect()
    }

    /// Smallest positive integer not already used as a user id.
    pub fn next_user_id(&self) -> String {
        let max = self.users.keys().filter_map(|u| u.parse::<u64>().ok()).max().unwrap_or(0);
        (max + 1).to_string()
    }

    /// CSV rows (without header), users ascending, visits by rank.
    pub fn to_rows(&self) -> Vec<(String, String, u32)> {
        self.users()
            .into_iter()
            .flat_map(|u| self.visit_order(u).into_iter().map(move |(c, r)| (u.to_string(), c.to_string(), r)))
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    user: String,
    constraint: String,
    rank: String,
}

/// Parses a `user,constraint,rank` CSV log.
pub fn parse_navigation_log(source: &str) -> Result<NavigationLog, LogError> {
    let mut log = NavigationLog::new();
    if source.trim().is_empty() {
        return Ok(log);
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| LogError::Malformed { line: 1, message: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["user", "constraint", "rank"] {
        return Err(LogError::Malformed { line: 1, message: "expected header `user,constraint,rank`".into() });
    }
    for record in reader.records() {
        let record = record.map_err(|e| LogError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record
            .deserialize(Some(&headers))
            .map_err(|e| LogError::Malformed { line, message: e.to_string() })?;
        let rank = row.rank.parse::<u32>().ok().filter(|r| *r > 0).ok_or_else(|| LogError::Malformed {
            line,
            message: format!("rank `{}` is not a positive integer", row.rank),
        })?;
        if row.user.is_empty() || row.constraint.is_empty() {
            return Err(LogError::Malformed { line, message: "empty user or constraint id".into() });
        }
        log.insert_at(&row.user, &row.constraint, rank, line)?;
    }
    Ok(log)
}

/// Writes rows as CSV, with the header when `header` is set.
pub fn write_rows(rows: &[(String, String, u32)], header: bool) -> String {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    if header {
        writer.write_record(["user", "constraint", "rank"]).expect("in-memory write");
    }
    for (u, c, r) in rows {
        writer.write_record([u.as_str(), c.as_str(), &r.to_string()]).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn serialize_navigation_log(log: &NavigationLog) -> String {
    write_rows(&log.to_rows(), true)
}

#[cfg(test)]
mod tests {
    use super::*;

    const USER1: &str = "user,constraint,rank\n1,c5,1\n1,c2,2\n1,c3,3\n1,c1,4\n1,c4,5\n1,c6,6\n";

    #[test]
    fn parses_rank_vector() {
        let log = parse_navigation_log(USER1).unwrap();
        let r = log.ranks("1").unwrap();
        let want = [("c1", 4), ("c2", 2), ("c3", 3), ("c4", 5), ("c5", 1), ("c6", 6)];
        for (c, rank) in want {
            assert_eq!(r[c], rank);
        }
        assert_eq!(r.len(), 6);
    }

    #[test]
    fn empty_log() {
        assert!(parse_navigation_log("").unwrap().is_empty());
        assert!(parse_navigation_log("user,constraint,rank\n").unwrap().is_empty());
    }

    #[test]
    fn duplicate_rank() {
        let e = parse_navigation_log("user,constraint,rank\n7,c2,2\n7,c5,2\n").unwrap_err();
        assert!(matches!(e, LogError::DuplicateRank { line: 3, rank: 2, .. }), "{e:?}");
    }

    #[test]
    fn malformed_rows() {
        assert!(parse_navigation_log("who,what\n1,c1\n").is_err());
        assert!(parse_navigation_log("user,constraint,rank\n1,c1,0\n").is_err());
        assert!(parse_navigation_log("user,constraint,rank\n1,c1,x\n").is_err());
        assert!(parse_navigation_log("user,constraint,rank\n1,c1\n").is_err());
    }

    #[test]
    fn unknown_constraints_are_reported_not_rejected() {
        let kb = crate::parser::parse_kb("var a in 1..2; constraint c1: a = 1;").unwrap();
        let log = parse_navigation_log("user,constraint,rank\n1,c1,1\n1,c_old,2\n").unwrap();
        assert_eq!(log.unknown_constraints(&kb), vec!["c_old"]);
    }

    #[test]
    fn user_ordering_is_numeric() {
        let log = parse_navigation_log("user,constraint,rank\n10,c1,1\n2,c1,1\nbob,c1,1\n").unwrap();
        assert_eq!(log.users(), vec!["2", "10", "bob"]);
        assert_eq!(log.next_user_id(), "11");
    }

    #[test]
    fn serialize_round_trip() {
        let log = parse_navigation_log(USER1).unwrap();
        assert_eq!(parse_navigation_log(&serialize_navigation_log(&log)).unwrap(), log);
    }
}
