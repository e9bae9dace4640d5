use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use kbtool_core::cf::Recommendation;
use kbtool_core::clustering::Clustering;
use kbtool_core::refactoring::RefactorReport;
use kbtool_core::solver::Conflict;
use kbtool_core::{parse_kb, parse_navigation_log, Assignment, SimilarityMatrix};

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name).display().to_string()
}

fn run_with_input(args: &[&str], input: &str) -> Output {
    let mut stdin = input.as_bytes();
    let (mut stdout, mut stderr) = (Vec::new(), Vec::new());
    let argv = std::iter::once("kbtool").chain(args.iter().copied());
    let code = kbtool::run(argv, &mut stdin, &mut stdout, &mut stderr);
    Output { code, stdout: String::from_utf8(stdout).unwrap(), stderr: String::from_utf8(stderr).unwrap() }
}

fn run(args: &[&str]) -> Output {
    run_with_input(args, "")
}

fn write_temp(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn sim_prints_truncated_csv() {
    let out = run(&["sim", &data("example.ckb"), "--truncate2"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let lines: Vec<&str> = out.stdout.lines().collect();
    assert_eq!(lines[0], ",c1,c2,c3,c4,c5,c6,c7");
    assert_eq!(lines[4], "c4,0.16,0.50,0.16,1.00,0.37,0.00,0.16");
    assert_eq!(lines[6], "c6,0.00,0.00,0.00,0.00,0.25,1.00,0.16");
}

#[test]
fn sim_json_round_trips() {
    let out = run(&["sim", &data("example.ckb"), "--metric", "operator", "--json"]);
    assert_eq!(out.code, 0);
    let m: SimilarityMatrix = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(m.len(), 7);
    assert_eq!(m.get("c1", "c3"), Some(0.5));
}

#[test]
fn cluster_reproduces_reference_trace() {
    let out = run(&[
        "cluster",
        &data("example.ckb"),
        "--k",
        "2",
        "--init",
        "c1,c5",
        "--matrix",
        &data("reference_matrix.csv"),
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("1\tc1,c5\t1\t1\t1\t2\t2\t2\t2\n2\tc2,c5\t1\t1\t1\t1\t2\t2\t1\n"), "{}", out.stdout);
    assert!(out.stdout.contains("cluster 1 (centroid c2): c1, c2, c3, c4, c7\n"));
}

#[test]
fn cluster_json_round_trips() {
    let args = ["cluster", "--matrix", &data("reference_matrix.csv"), "--k", "2", "--init", "c1,c5", "--json"];
    let out = run(&args);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let c: Clustering = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(c.trace.len(), 2);
    assert_eq!(c.centroids.as_deref(), Some(&["c2".to_string(), "c5".to_string()][..]));
}

#[test]
fn cluster_rejects_bad_input() {
    assert_eq!(run(&["cluster", &data("example.ckb"), "--k", "0"]).code, 2);
    assert_eq!(run(&["cluster", &data("example.ckb"), "--k", "2", "--init", "c1,zz"]).code, 2);
    assert_eq!(run(&["cluster", "--k", "2"]).code, 2);
    assert_eq!(run(&["cluster", &data("example.ckb"), "--k", "2", "--init", "c1,c5", "--random"]).code, 2);
}

#[test]
fn recommend_example_session() {
    let out = run(&["recommend", "--log", &data("navigation.csv"), "--visited", "c5,c2"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let r: Recommendation = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(r.constraint, "c1");
    assert_eq!(r.votes.get("c1"), Some(&2));
    assert_eq!(r.votes.get("c3"), Some(&1));
    let with_kb = run(&["recommend", "--log", &data("navigation.csv"), "--visited", "c5,c2", "--kb", &data("example.ckb")]);
    assert_eq!(with_kb.stdout, out.stdout);
}

#[test]
fn recommend_with_nothing_left_is_a_domain_result() {
    let out = run(&["recommend", "--log", &data("navigation.csv"), "--visited", "c1,c2,c3,c4,c5,c6,c7"]);
    assert_eq!(out.code, 1);
    assert_eq!(out.stdout.trim(), "null");
    assert_eq!(run(&["recommend", "--log", &data("navigation.csv"), "--visited", "c1", "--k", "0"]).code, 2);
    assert_eq!(run(&["recommend", "--log", &data("navigation.csv"), "--visited", "c1,c1"]).code, 2);
}

#[test]
fn solve_and_conflict_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let unsat = write_temp(&dir, "unsat.ckb", "var a in 1..3;\nconstraint p: a = 1;\nconstraint q: a > 2;\nconstraint r: a < 3;\n");
    let unsat = unsat.to_str().unwrap();

    let out = run(&["solve", &data("example.ckb")]);
    assert_eq!((out.code, out.stdout.as_str()), (0, "v1=3, v2=2, v3=1, v4=2, v5=2\n"));
    let json = run(&["solve", &data("example.ckb"), "--json"]);
    let a: Option<Assignment> = serde_json::from_str(&json.stdout).unwrap();
    assert_eq!(a.unwrap().get("v4"), Some(2));
    assert_eq!(run(&["solve", unsat]).stdout, "UNSAT\n");
    assert_eq!(run(&["solve", unsat]).code, 1);

    let out = run(&["conflict", &data("example.ckb")]);
    assert_eq!((out.code, out.stdout.as_str()), (0, "consistent\n"));
    let out = run(&["conflict", unsat]);
    assert_eq!((out.code, out.stdout.as_str()), (1, "p,q\n"));
    let c: Option<Conflict> = serde_json::from_str(&run(&["conflict", unsat, "--json"]).stdout).unwrap();
    assert_eq!(c.unwrap().constraints, ["p", "q"]);
}

#[test]
fn refactor_table_and_apply() {
    let dir = tempfile::tempdir().unwrap();
    let kb = write_temp(
        &dir,
        "kb.ckb",
        "var a in 1..3;\nvar b in 1..3;\nconstraint r: not a = 1 or b = 2;\nconstraint i: b = 3 <- not (a = 2);\nconstraint s: a = 1 -> b = 1;\n",
    );
    let out_path = dir.path().join("out.ckb");
    let out = run(&["refactor", kb.to_str().unwrap(), "--apply", out_path.to_str().unwrap()]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let rows: Vec<&str> = out.stdout.lines().collect();
    assert_eq!(rows[0], "constraint\tmatched\ttarget\tdelta\trewritten");
    assert_eq!(rows[1], "r\trequires 2\trequires 1\t-28.57%\ta = 1 -> b = 2");
    let applied = parse_kb(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(kbtool_core::parser::format_expr(&applied.constraint("r").unwrap().expr), "a = 1 -> b = 2");
    assert_eq!(applied.constraint("s"), parse_kb(&fs::read_to_string(&kb).unwrap()).unwrap().constraint("s"));

    let json = run(&["refactor", kb.to_str().unwrap(), "--json"]);
    let report: RefactorReport = serde_json::from_str(&json.stdout).unwrap();
    assert_eq!(report.kb, applied);
}

#[test]
fn validate_reports_errors_with_positions() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_temp(&dir, "bad.ckb", "var a in 1..3;\nconstraint c: a = ;\nconstraint d: zz = 1;\n");
    let out = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("bad.ckb:2:"), "{}", out.stderr);
    assert!(out.stderr.contains("bad.ckb:3:"), "{}", out.stderr);

    let out = run(&["validate", &data("example.ckb"), "--log", &data("navigation.csv")]);
    assert_eq!((out.code, out.stdout.as_str()), (0, "ok: 5 variables, 7 constraints\n"));
    let json: serde_json::Value = serde_json::from_str(&run(&["validate", &data("example.ckb"), "--json"]).stdout).unwrap();
    assert_eq!(json["constraints"], 7);

    let binary = write_temp(&dir, "bin.ckb", "");
    fs::write(&binary, [0xff, 0xfe, 0x00]).unwrap();
    assert_eq!(run(&["validate", binary.to_str().unwrap()]).code, 2);
    assert_eq!(run(&["validate", "/nonexistent/kb.ckb"]).code, 2);
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(run(&[]).code, 2);
    assert_eq!(run(&["bogus"]).code, 2);
    assert_eq!(run(&["sim", &data("example.ckb"), "--metric", "nope"]).code, 2);
    let help = run(&["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.stdout.contains("recommend"));
}

#[test]
fn session_walkthrough() {
    let out = run_with_input(&["session", &data("example.ckb"), "--log", &data("navigation.csv")], "c5\nvisit c2\nzz\nc2\nquit\nn\n");
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("next: c1 (2 of 3 neighbours)"), "{}", out.stdout);
    assert!(out.stderr.contains("unknown constraint `zz`"));
    assert!(out.stderr.contains("already in the session"));
    assert!(out.stdout.contains("cluster"));
}

#[test]
fn session_visiting_everything_and_appending() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("nav.csv");
    fs::copy(data("navigation.csv"), &log).unwrap();
    let input = "c1\nc2\nc3\nc4\nc5\nc6\nc7\nquit\ny\n";
    let out = run_with_input(&["session", &data("example.ckb"), "--log", log.to_str().unwrap()], input);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.trim_end().ends_with("appended 7 visits"), "{}", out.stdout);
    assert!(out.stdout.contains("no recommendation"));
    let parsed = parse_navigation_log(&fs::read_to_string(&log).unwrap()).unwrap();
    assert_eq!(parsed.users(), ["1", "2", "3", "4", "5"]);
    assert_eq!(parsed.visit_order("5")[6], ("c7", 7));

    let fresh = dir.path().join("fresh.csv");
    let out = run_with_input(
        &["session", &data("example.ckb"), "--log", fresh.to_str().unwrap(), "--user", "ann"],
        "c3\nquit\ny\n",
    );
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(fs::read_to_string(&fresh).unwrap(), "user,constraint,rank\nann,c3,1\n");
}

#[test]
fn binary_honours_seed_environment() {
    let bin = env!("CARGO_BIN_EXE_kbtool");
    let kb = data("example.ckb");
    let run_bin = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(bin);
        cmd.args(["cluster", &kb, "--k", "3", "--random", "--json"]).args(extra);
        cmd.env_remove("KBTOOL_SEED");
        if let Some(seed) = env {
            cmd.env("KBTOOL_SEED", seed);
        }
        let out = cmd.output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        String::from_utf8(out.stdout).unwrap()
    };
    assert_eq!(run_bin(Some("42"), &[]), run_bin(None, &["--seed", "42"]));
    assert_eq!(run_bin(None, &[]), run_bin(None, &["--seed", "0"]));

    let out = Command::new(bin).args(["solve", "/nonexistent.ckb"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
