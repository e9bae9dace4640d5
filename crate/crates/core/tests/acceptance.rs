//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kbtool_core::cf::{nearest_neighbors, recommend_next, SessionState};
use kbtool_core::clustering::{kmeans, Init};
use kbtool_core::generate::{generate_kb, generate_varied_kb, KbShape, REFERENCE_SHAPES};
use kbtool_core::model::evaluate;
use kbtool_core::parser::{parse_kb, parse_kb_bytes, serialize_kb};
use kbtool_core::refactoring::{
    check_equivalence, classify, instantiate, matching_forms, recommend, Family, CATALOG, DEFAULT_STATE_BOUND,
};
use kbtool_core::similarity::{similarity_matrix, truncate2, Metric, SimilarityMatrix};
use kbtool_core::solver::{find_solution, minimal_conflict, Solver};
use kbtool_core::{parse_navigation_log, CmpOp, Domain, Expr, Variable};

const EXAMPLE_KB: &str = include_str!("../../../data/example.ckb");
const NAVIGATION_LOG: &str = include_str!("../../../data/navigation.csv");

const IDS: [&str; 7] = ["c1", "c2", "c3", "c4", "c5", "c6", "c7"];

/// Published lower triangle of the example similarity matrix (row i holds
/// columns 0..=i), two decimals, truncated.
const PUBLISHED: [&[f64]; 7] = [
    &[1.0],
    &[0.33, 1.0],
    &[0.16, 0.33, 1.0],
    &[0.16, 0.5, 0.16, 1.0],
    &[0.1, 0.25, 0.1, 0.37, 1.0],
    &[0.0, 0.0, 0.0, 0.0, 0.12, 1.0],
    &[0.0, 0.33, 0.33, 0.16, 0.12, 0.16, 1.0],
];

/// Cells where the published value disagrees with the co-occurrence
/// formula, which gives 0.25 for both. The formula is taken as normative.
const DEVIATING: [(&str, &str, f64); 2] = [("c6", "c5", 0.25), ("c7", "c5", 0.25)];

fn published_matrix() -> SimilarityMatrix {
    let mut values = vec![vec![0.0; 7]; 7];
    for (i, row) in PUBLISHED.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    SimilarityMatrix::from_values(IDS.iter().map(|s| s.to_string()).collect(), values, Metric::External).unwrap()
}

fn similarity_reproduction() -> String {
    let start = Instant::now();
    let kb = parse_kb(EXAMPLE_KB).unwrap();
    let m = similarity_matrix(&kb, Metric::Variable).unwrap();
    let mut matched = 0;
    for (i, row) in PUBLISHED.iter().enumerate() {
        for (j, &published) in row.iter().enumerate().take(i) {
            let got = m.get(IDS[i], IDS[j]).unwrap();
            match DEVIATING.iter().find(|(a, b, _)| *a == IDS[i] && *b == IDS[j]) {
                // documented deviation: formula value, not the published 0.12
                Some((_, _, expected)) => assert_eq!(got, *expected, "({}, {})", IDS[i], IDS[j]),
                None => {
                    assert_eq!(truncate2(got), published, "({}, {}) raw {got}", IDS[i], IDS[j]);
                    matched += 1;
                }
            }
        }
        assert_eq!(m.get(IDS[i], IDS[i]), Some(1.0));
    }
    assert_eq!(matched, 19);
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    format!("19/19 published cells match, (c5,c6)=(c5,c7)=0.25 documented, {elapsed:?}")
}

fn clustering_reproduction() -> String {
    let m = published_matrix();
    let c = kmeans(&m, 2, &Init::Centroids(vec!["c1".into(), "c5".into()])).unwrap();
    // (centroids, 1-based cluster per c1..c7)
    let expected: [([&str; 2], [usize; 7]); 2] =
        [(["c1", "c5"], [1, 1, 1, 2, 2, 2, 2]), (["c2", "c5"], [1, 1, 1, 1, 2, 2, 1])];
    assert_eq!(c.trace.len(), expected.len());
    for (it, (centroids, clusters)) in c.trace.iter().zip(expected) {
        assert_eq!(it.centroids, centroids);
        let got: Vec<usize> = IDS.iter().map(|id| it.assignment[*id] + 1).collect();
        assert_eq!(got, clusters);
    }
    assert_eq!(c.centroids, Some(vec!["c2".to_string(), "c5".to_string()]));
    assert_eq!(c.clusters(), vec![vec!["c1", "c2", "c3", "c4", "c7"], vec!["c5", "c6"]]);
    assert!(c.converged);
    "2 trace rows match exactly; clusters {c1,c2,c3,c4,c7} {c5,c6}, centroids (c2,c5)".into()
}

fn cf_reproduction() -> String {
    let log = parse_navigation_log(NAVIGATION_LOG).unwrap();
    let session = SessionState::from_visits(["c5", "c2"]).unwrap();
    assert_eq!(nearest_neighbors(&log, &session, 3).unwrap(), ["1", "2", "4"]);
    let r = recommend_next(&log, &session, 3).unwrap();
    assert_eq!(r.constraint, "c1");
    assert_eq!(r.votes, [("c1".to_string(), 2), ("c3".to_string(), 1)].into_iter().collect());
    "neighbours [1,2,4], recommendation c1, votes {c1:2, c3:1}".into()
}

const PUBLISHED_RATES: [(Family, u8, f64); 10] = [
    (Family::Requires, 1, 21.43),
    (Family::Requires, 2, 50.0),
    (Family::Requires, 3, 96.43),
    (Family::Requires, 4, 73.08),
    (Family::Requires, 5, 25.0),
    (Family::Incompatibility, 1, 14.29),
    (Family::Incompatibility, 2, 34.62),
    (Family::Incompatibility, 3, 50.0),
    (Family::Incompatibility, 4, 42.31),
    (Family::Incompatibility, 5, 16.67),
];

fn check_rates() {
    assert_eq!(CATALOG.len(), 10);
    for (form, (family, index, rate)) in CATALOG.iter().zip(PUBLISHED_RATES) {
        assert_eq!((form.family, form.index), (family, index));
        assert_eq!(form.error_rate.percent(), rate, "{form}");
    }
}

fn refactoring_catalog() -> String {
    let x = Expr::cmp("v1", CmpOp::Eq, 1);
    let y = Expr::cmp("v2", CmpOp::Eq, 2);
    let mut notes = Vec::new();
    for form in CATALOG {
        let e = instantiate(&form.template, &x, &y);
        let c = kbtool_core::Constraint::new("c", e.clone());
        assert!(matching_forms(&e).iter().any(|m| m.form == form), "{form} not matched");
        let m = classify(&c).unwrap_or_else(|| panic!("{form} unclassified"));
        assert_eq!(m.form.family, form.family);
        if m.form != form {
            // X -> not Y with X, Y swapped; incompatibility is symmetric.
            notes.push(format!("{} {} reported as {} {}", form.family, form.index, m.form.family, m.form.index));
        }
        if let Some(s) = recommend(&c) {
            assert_eq!(s.target.index, 1);
            assert_eq!(s.target.family, form.family);
            assert!(s.score_delta.0 > 0);
        }
    }
    let mut pairs = 0;
    for size in [2, 3, 5] {
        let vars: Vec<Variable> =
            ["v1", "v2"].iter().map(|n| Variable::new(*n, Domain::interval(1, size).unwrap())).collect();
        for a in &CATALOG {
            for b in CATALOG.iter().filter(|b| b.family == a.family && b.index > a.index) {
                let (ea, eb) = (instantiate(&a.template, &x, &y), instantiate(&b.template, &x, &y));
                assert_eq!(check_equivalence(&ea, &eb, &vars, DEFAULT_STATE_BOUND), Ok(true), "{a} vs {b}, |dom| {size}");
                pairs += 1;
            }
        }
    }
    check_rates();
    format!("10/10 forms matched, {pairs} equivalent pairs over |dom| 2,3,5, rates exact; {}", notes.join("; "))
}

/// Shapes for criterion 5: each reference shape, then random shapes within
/// (<= 10 variables, domain <= 5, <= 15 constraints) whose state space
/// stays within the largest reference shape's order of magnitude.
fn solver_shapes(rng: &mut ChaCha8Rng, count: usize) -> Vec<KbShape> {
    const MAX_STATES: u128 = 78_125;
    let mut shapes: Vec<KbShape> = REFERENCE_SHAPES.iter().flat_map(|s| std::iter::repeat_n(*s, 25)).collect();
    while shapes.len() < count {
        let s = KbShape::new(rng.random_range(1..=10), rng.random_range(1..=5), rng.random_range(0..=15));
        if s.state_space() <= MAX_STATES {
            shapes.push(s);
        }
    }
    shapes
}

fn solver_properties() -> String {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut sat, mut unsat, mut conflicts) = (0, 0, 0);
    for shape in solver_shapes(&mut rng, 500) {
        let kb = generate_kb(&shape, &mut rng);
        let oracle = common::TruthTables::new(&kb);
        let all: Vec<usize> = (0..kb.constraints().len()).collect();
        let found = find_solution(&kb, None).unwrap();
        assert_eq!(found.is_some(), oracle.consistent(&all), "satisfiability\n{}", serialize_kb(&kb));
        match found {
            Some(a) => {
                sat += 1;
                for c in kb.constraints() {
                    assert!(evaluate(&c.expr, &a).unwrap(), "{} violated\n{}", c.id, serialize_kb(&kb));
                }
                assert!(minimal_conflict(&kb).is_none());
            }
            None => {
                unsat += 1;
                let conflict = minimal_conflict(&kb).expect("inconsistent kb has a conflict");
                let ids: Vec<&str> = conflict.constraints.iter().map(String::as_str).collect();
                let idx = Solver::new(&kb).indices_of(&ids).unwrap();
                assert!(!oracle.consistent(&idx), "conflict is consistent");
                for skip in 0..idx.len() {
                    let rest: Vec<usize> =
                        idx.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, c)| *c).collect();
                    assert!(oracle.consistent(&rest), "conflict {ids:?} not minimal");
                }
                conflicts += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    assert!(sat > 0 && unsat > 0, "degenerate sample: {sat} sat, {unsat} unsat");
    format!("500 kbs: {sat} sat, {unsat} unsat, {conflicts} minimal conflicts verified, {elapsed:?}")
}

fn human_subject_results() -> String {
    check_rates();
    "error rates enter only as fixed score constants (checked exactly); behavioural results not reproduced".into()
}

fn round_trip_and_fuzz() -> String {
    for seed in 0..1000 {
        let kb = generate_varied_kb(&mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(parse_kb(&serialize_kb(&kb)).unwrap(), kb, "seed {seed}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let seed_text = serialize_kb(&parse_kb(EXAMPLE_KB).unwrap()).into_bytes();
    let mut errors = 0;
    for i in 0..20_000 {
        let bytes: Vec<u8> = if i % 2 == 0 {
            (0..rng.random_range(0..200)).map(|_| rng.random()).collect()
        } else {
            // Mutate valid input so fuzzing reaches past the first token.
            let mut b = seed_text.clone();
            for _ in 0..rng.random_range(1..6) {
                let at = rng.random_range(0..b.len());
                match rng.random_range(0..3) {
                    0 => b[at] = rng.random(),
                    1 => {
                        b.remove(at);
                    }
                    _ => b.insert(at, *b"()-<>=!;{}.not ".get(rng.random_range(0..15)).unwrap()),
                }
            }
            b
        };
        if parse_kb_bytes(&bytes).is_err() {
            errors += 1;
        }
    }
    format!("1000 round trips identical; 20000 fuzz inputs without panic ({errors} rejected)")
}

type Criterion = (&'static str, fn() -> String);

fn main() {
    let criteria: [Criterion; 7] = [
        ("AC1 similarity reproduction", similarity_reproduction),
        ("AC2 clustering reproduction", clustering_reproduction),
        ("AC3 collaborative recommendation", cf_reproduction),
        ("AC4 refactoring catalog", refactoring_catalog),
        ("AC5 solver and conflict properties", solver_properties),
        ("AC6 error rates as fixed scores", human_subject_results),
        ("AC7 round trip and parser robustness", round_trip_and_fuzz),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("[FAIL] {name}: {msg}");
            }
        }
    }
    let _ = panic::take_hook();
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
