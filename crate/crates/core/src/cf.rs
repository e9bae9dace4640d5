//! Collaborative recommendation of the next constraint to inspect.
//!
//! Neighbours are the engineers whose visit ranks on the constraints the
//! current engineer has already seen are closest (Manhattan distance, with
//! the current session's i-th visit taken as rank i). Each neighbour votes
//! for the first constraint it visited at or after the session's next step
//! that the session has not visited yet; the plurality wins.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::navigation::{compare_user_ids, NavigationLog};

pub const DEFAULT_NEIGHBORS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfError {
    #[error("the session has not visited any constraint yet")]
    EmptySession,
    #[error("the navigation log is empty")]
    EmptyLog,
    #[error("k must be at least 1")]
    ZeroNeighbors,
    #[error("no neighbour has an unvisited constraint to recommend")]
    NoCandidates,
    #[error("constraint `{0}` is already in the session")]
    AlreadyVisited(String),
}

/// The current engineer's visits, in order, without repeats.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionState {
    visited: Vec<String>,
}

impl SessionState {
    pub fn new() -> Self {
        SessionState::default()
    }

    pub fn from_visits<I, S>(visits: I) -> Result<Self, CfError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut s = SessionState::new();
        for v in visits {
            s.visit(v)?;
        }
        Ok(s)
    }

    pub fn visit(&mut self, id: impl Into<String>) -> Result<(), CfError> {
        let id = id.into();
        if self.visited.contains(&id) {
            return Err(CfError::AlreadyVisited(id));
        }
        self.visited.push(id);
        Ok(())
    }

    pub fn visited(&self) -> &[String] {
        &self.visited
    }

    pub fn contains(&self, id: &str) -> bool {
        self.visited.iter().any(|v| v == id)
    }

    pub fn len(&self) -> usize {
        self.visited.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visited.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbor {
    pub user: String,
    pub distance: u64,
    /// The constraint this neighbour voted for, if it had one left.
    pub vote: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub constraint: String,
    /// Neighbours that voted for `constraint`.
    pub supporting_neighbors: Vec<String>,
    pub votes: BTreeMap<String, usize>,
    pub neighbors: Vec<Neighbor>,
}

/// Manhattan distance between the session's implied ranks and `ranks` on
/// the visited constraints. A constraint the user never visited costs
/// `universe_size + 1`.
pub fn neighbor_distance(
    session: &SessionState,
    ranks: &indexmap::IndexMap<String, u32>,
    universe_size: usize,
) -> Result<u64, CfError> {
    if session.is_empty() {
        return Err(CfError::EmptySession);
    }
    Ok(session
        .visited()
        .iter()
        .enumerate()
        .map(|(i, id)| match ranks.get(id) {
            Some(&r) => (i as u64 + 1).abs_diff(u64::from(r)),
            None => universe_size as u64 + 1,
        })
        .sum())
}

fn ranked_users(log: &NavigationLog, session: &SessionState) -> Result<Vec<(String, u64)>, CfError> {
    if session.is_empty() {
        return Err(CfError::EmptySession);
    }
    if log.is_empty() {
        return Err(CfError::EmptyLog);
    }
    let universe = log.constraint_ids().len();
    let mut users = log
        .users()
        .into_iter()
        .map(|u| Ok((u.to_string(), neighbor_distance(session, log.ranks(u).expect("listed user"), universe)?)))
        .collect::<Result<Vec<_>, CfError>>()?;
    users.sort_by(|(ua, da), (ub, db)| da.cmp(db).then_with(|| compare_user_ids(ua, ub)));
    Ok(users)
}

/// The `k` closest users, ties broken by ascending user id.
pub fn nearest_neighbors(log: &NavigationLog, session: &SessionState, k: usize) -> Result<Vec<String>, CfError> {
    if k == 0 {
        return Err(CfError::ZeroNeighbors);
    }
    Ok(ranked_users(log, session)?.into_iter().take(k).map(|(u, _)| u).collect())
}

/// Recommends with ties on vote count broken by smaller total voter
/// distance, then by first appearance in the log.
pub fn recommend_next(log: &NavigationLog, session: &SessionState, k: usize) -> Result<Recommendation, CfError> {
    let order: Vec<String> = log.constraint_ids().into_iter().map(str::to_string).collect();
    recommend_next_ordered(log, session, k, &order)
}

/// As [`recommend_next`], with the final tie-break following `order`
/// (normally the knowledge base's declaration order). Constraints missing
/// from `order` sort after it, by id.
pub fn recommend_next_ordered(
    log: &NavigationLog,
    session: &SessionState,
    k: usize,
    order: &[String],
) -> Result<Recommendation, CfError> {
    if k == 0 {
        return Err(CfError::ZeroNeighbors);
    }
    let next_step = session.len() as u32 + 1;
    let visited: HashSet<&str> = session.visited().iter().map(String::as_str).collect();
    let neighbors: Vec<Neighbor> = ranked_users(log, session)?
        .into_iter()
        .take(k)
        .map(|(user, distance)| {
            let vote = log
                .visit_order(&user)
                .into_iter()
                .find(|(c, r)| *r >= next_step && !visited.contains(c))
                .map(|(c, _)| c.to_string());
            Neighbor { user, distance, vote }
        })
        .collect();

    // constraint -> (votes, summed voter distance)
    let mut tally: BTreeMap<String, (usize, u64)> = BTreeMap::new();
    for n in &neighbors {
        if let Some(c) = &n.vote {
            let e = tally.entry(c.clone()).or_default();
            e.0 += 1;
            e.1 += n.distance;
        }
    }
    let position = |c: &str| order.iter().position(|o| o == c).unwrap_or(usize::MAX);
    let winner = tally
        .iter()
        .min_by(|(ca, (va, da)), (cb, (vb, db))| {
            vb.cmp(va).then(da.cmp(db)).then_with(|| position(ca).cmp(&position(cb))).then_with(|| ca.cmp(cb))
        })
        .map(|(c, _)| c.clone())
        .ok_or(CfError::NoCandidates)?;

    Ok(Recommendation {
        supporting_neighbors: neighbors
            .iter()
            .filter(|n| n.vote.as_deref() == Some(winner.as_str()))
            .map(|n| n.user.clone())
            .collect(),
        votes: tally.into_iter().map(|(c, (v, _))| (c, v)).collect(),
        constraint: winner,
        neighbors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::navigation::parse_navigation_log;

    fn log() -> NavigationLog {
        parse_navigation_log(include_str!("../../../data/navigation.csv")).unwrap()
    }

    fn session(ids: &[&str]) -> SessionState {
        SessionState::from_visits(ids.iter().copied()).unwrap()
    }

    #[test]
    fn distances() {
        let log = log();
        let s = session(&["c5", "c2"]);
        assert_eq!(neighbor_distance(&s, log.ranks("1").unwrap(), 6), Ok(0));
        assert_eq!(neighbor_distance(&s, log.ranks("3").unwrap(), 6), Ok(6));
        assert_eq!(neighbor_distance(&SessionState::new(), log.ranks("1").unwrap(), 6), Err(CfError::EmptySession));
    }

    #[test]
    fn missing_rank_penalty() {
        let log = parse_navigation_log("user,constraint,rank\n1,a,1\n1,b,2\n2,a,1\n").unwrap();
        let s = session(&["a", "b"]);
        // universe {a, b}: missing b costs 3.
        assert_eq!(neighbor_distance(&s, log.ranks("2").unwrap(), 2), Ok(3));
    }

    #[test]
    fn neighbors_of_c5_c2() {
        let log = log();
        let s = session(&["c5", "c2"]);
        assert_eq!(nearest_neighbors(&log, &s, 3).unwrap(), ["1", "2", "4"]);
        assert_eq!(nearest_neighbors(&log, &s, 10).unwrap(), ["1", "2", "4", "3"]);
    }

    #[test]
    fn recommends_c1() {
        let r = recommend_next(&log(), &session(&["c5", "c2"]), 3).unwrap();
        assert_eq!(r.constraint, "c1");
        assert_eq!(r.votes, [("c1".to_string(), 2), ("c3".to_string(), 1)].into_iter().collect());
        assert_eq!(r.supporting_neighbors, ["2", "4"]);
    }

    #[test]
    fn all_visited_has_no_candidates() {
        let s = session(&["c1", "c2", "c3", "c4", "c5", "c6"]);
        assert_eq!(recommend_next(&log(), &s, 3), Err(CfError::NoCandidates));
    }

    #[test]
    fn single_neighbor_skips_visited() {
        // User 3 visits c1, c3, c2, c4, c6, c5. Session [c1, c2]: step 3 is c2
        // (visited), so the vote moves on to c4.
        let log = parse_navigation_log("user,constraint,rank\n3,c1,1\n3,c3,2\n3,c2,3\n3,c4,4\n3,c6,5\n3,c5,6\n").unwrap();
        let r = recommend_next(&log, &session(&["c1", "c2"]), 1).unwrap();
        assert_eq!(r.constraint, "c4");
    }

    #[test]
    fn prefix_match_recommends_next_in_order() {
        let log = log();
        for user in log.users() {
            let order: Vec<&str> = log.visit_order(user).into_iter().map(|(c, _)| c).collect();
            for len in 1..order.len() {
                let s = session(&order[..len]);
                let r = recommend_next(&log, &s, 1).unwrap();
                // k = 1 picks a zero-distance user; any such user continues
                // the same prefix only if its next step matches, so check
                // against the neighbour actually selected.
                let chosen = &r.neighbors[0].user;
                assert_eq!(r.neighbors[0].distance, 0);
                let next = log.visit_order(chosen)[len].0;
                assert_eq!(r.constraint, next, "user {user} prefix {len}");
            }
        }
    }

    #[test]
    fn vote_ties_prefer_closer_voters_then_order() {
        let csv = "user,constraint,rank\n1,a,1\n1,b,2\n2,a,2\n2,c,1\n";
        let log = parse_navigation_log(csv).unwrap();
        // Session [a]: user 1 distance 0 votes b; user 2 distance 1 votes c.
        let r = recommend_next(&log, &session(&["a"]), 2).unwrap();
        assert_eq!(r.constraint, "b");
        // Equal distances: declaration order decides.
        let csv = "user,constraint,rank\n1,a,1\n1,c,2\n2,a,1\n2,b,2\n";
        let log = parse_navigation_log(csv).unwrap();
        let order: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = recommend_next_ordered(&log, &session(&["a"]), 2, &order).unwrap();
        assert_eq!(r.constraint, "b");
    }

    #[test]
    fn session_rejects_duplicates() {
        assert_eq!(SessionState::from_visits(["c1", "c1"]), Err(CfError::AlreadyVisited("c1".into())));
    }
}
