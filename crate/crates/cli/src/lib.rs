//! Command dispatch for the `kbtool` binary.
//!
//! Exit codes: 0 success, 1 domain result (unsatisfiable, conflict found,
//! nothing to recommend), 2 usage, parse or engine error.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kbtool_core::cf::{recommend_next_ordered, CfError, Recommendation, SessionState, DEFAULT_NEIGHBORS};
use kbtool_core::clustering::{kmeans, random_clustering, Clustering, Init};
use kbtool_core::navigation::write_rows;
use kbtool_core::parser::format_expr;
use kbtool_core::refactoring::{recommend, refactor_kb, DEFAULT_STATE_BOUND};
use kbtool_core::solver::{find_solution, minimal_conflict};
use kbtool_core::{parse_kb, parse_navigation_log, serialize_kb, similarity_matrix, KnowledgeBase, Metric};
use kbtool_core::{NavigationLog, SimilarityMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "kbtool", version, about = "Similarity, clustering, recommendation and refactoring for constraint knowledge bases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a knowledge base and report its size or errors
    Validate {
        kb: PathBuf,
        /// Also check that a navigation log only names known constraints
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Constraint similarity matrix as CSV
    Sim {
        kb: PathBuf,
        #[arg(long, default_value_t = Metric::Variable)]
        metric: Metric,
        /// Truncate values to two decimals
        #[arg(long)]
        truncate2: bool,
        #[arg(long)]
        json: bool,
    },
    /// Cluster constraints by similarity
    Cluster(ClusterArgs),
    /// Next constraint to inspect, from other engineers' navigation logs
    Recommend {
        #[arg(long)]
        log: PathBuf,
        /// Visited constraint ids in visit order, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        visited: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
        k: usize,
        /// Knowledge base whose declaration order breaks ties
        #[arg(long)]
        kb: Option<PathBuf>,
    },
    /// Suggest rewrites toward lower-error forms
    Refactor {
        kb: PathBuf,
        /// Write the rewritten knowledge base here
        #[arg(long)]
        apply: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Find a solution (exit 1 when unsatisfiable)
    Solve {
        kb: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Report a minimal conflict (exit 1 when one exists)
    Conflict {
        kb: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Interactive navigation session
    Session {
        kb: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        /// User id for appended log rows (default: next numeric id)
        #[arg(long)]
        user: Option<String>,
        #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
        k: usize,
        /// Number of clusters shown next to each visited constraint
        #[arg(long, default_value_t = 2)]
        clusters: usize,
        #[arg(long, env = "KBTOOL_SEED", default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Knowledge base; optional when --matrix is given
    kb: Option<PathBuf>,
    #[arg(long)]
    k: usize,
    /// Initial centroids, comma separated
    #[arg(long, value_delimiter = ',', conflicts_with = "random")]
    init: Option<Vec<String>>,
    #[arg(long, env = "KBTOOL_SEED", default_value_t = 0)]
    seed: u64,
    /// Precomputed similarity matrix (CSV)
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value_t = Metric::Variable)]
    metric: Metric,
    /// Uniform random partition instead of k-means
    #[arg(long)]
    random: bool,
    #[arg(long)]
    json: bool,
}

/// Runs one invocation. `args` includes the program name.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let out: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(out, "{}", e.render());
            return code;
        }
    };
    let mut io = Io { stdin, stdout, stderr };
    match dispatch(cli.command, &mut io) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: {e:#}");
            EXIT_ERROR
        }
    }
}

struct Io<'a> {
    stdin: &'a mut dyn BufRead,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

fn dispatch(command: Command, io: &mut Io) -> Result<i32> {
    match command {
        Command::Validate { kb, log, json } => validate(&kb, log.as_deref(), json, io),
        Command::Sim { kb, metric, truncate2, json } => {
            let kb = load_kb(&kb)?;
            let m = similarity_matrix(&kb, metric)?;
            if json {
                print_json(io.stdout, &m)?;
            } else {
                write!(io.stdout, "{}", m.to_csv(truncate2))?;
            }
            Ok(EXIT_OK)
        }
        Command::Cluster(args) => cluster(args, io),
        Command::Recommend { log, visited, k, kb } => {
            let log = load_log(&log)?;
            let order: Vec<String> = match kb {
                Some(path) => {
                    let kb = load_kb(&path)?;
                    for id in log.unknown_constraints(&kb) {
                        writeln!(io.stderr, "warning: log names unknown constraint `{id}`")?;
                    }
                    kb.constraint_ids().into_iter().map(str::to_string).collect()
                }
                None => log.constraint_ids().into_iter().map(str::to_string).collect(),
            };
            let session = SessionState::from_visits(visited)?;
            match recommend_next_ordered(&log, &session, k, &order) {
                Ok(r) => {
                    print_json(io.stdout, &r)?;
                    Ok(EXIT_OK)
                }
                Err(CfError::NoCandidates) => {
                    print_json(io.stdout, &Option::<Recommendation>::None)?;
                    writeln!(io.stderr, "no recommendation: {}", CfError::NoCandidates)?;
                    Ok(EXIT_DOMAIN)
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Refactor { kb, apply, json } => refactor(&kb, apply.as_deref(), json, io),
        Command::Solve { kb, json } => {
            let kb = load_kb(&kb)?;
            let solution = find_solution(&kb, None)?;
            if json {
                print_json(io.stdout, &solution)?;
            } else {
                match &solution {
                    Some(a) => writeln!(io.stdout, "{a}")?,
                    None => writeln!(io.stdout, "UNSAT")?,
                }
            }
            Ok(if solution.is_some() { EXIT_OK } else { EXIT_DOMAIN })
        }
        Command::Conflict { kb, json } => {
            let kb = load_kb(&kb)?;
            let conflict = minimal_conflict(&kb);
            if json {
                print_json(io.stdout, &conflict)?;
            } else {
                match &conflict {
                    Some(c) => writeln!(io.stdout, "{}", c.constraints.join(","))?,
                    None => writeln!(io.stdout, "consistent")?,
                }
            }
            Ok(if conflict.is_some() { EXIT_DOMAIN } else { EXIT_OK })
        }
        Command::Session { kb, log, user, k, clusters, seed } => {
            session(&kb, log.as_deref(), user, k, clusters, seed, io)
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    String::from_utf8(bytes).map_err(|_| anyhow!("{} is not valid UTF-8", path.display()))
}

fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    let source = read_file(path)?;
    parse_kb(&source).map_err(|errors| {
        let lines: Vec<String> = errors.0.iter().map(|e| format!("{}:{e}", path.display())).collect();
        anyhow!("{} parse error(s)\n{}", errors.0.len(), lines.join("\n"))
    })
}

fn load_log(path: &Path) -> Result<NavigationLog> {
    let source = read_file(path)?;
    parse_navigation_log(&source).with_context(|| format!("in {}", path.display()))
}

fn print_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct ValidationSummary {
    variables: usize,
    constraints: usize,
    unknown_log_constraints: Vec<String>,
}

fn validate(path: &Path, log: Option<&Path>, json: bool, io: &mut Io) -> Result<i32> {
    let kb = load_kb(path)?;
    let unknown: Vec<String> = match log {
        Some(log) => load_log(log)?.unknown_constraints(&kb).into_iter().map(str::to_string).collect(),
        None => Vec::new(),
    };
    let summary = ValidationSummary {
        variables: kb.variables().len(),
        constraints: kb.constraints().len(),
        unknown_log_constraints: unknown,
    };
    if json {
        print_json(io.stdout, &summary)?;
    } else {
        writeln!(io.stdout, "ok: {} variables, {} constraints", summary.variables, summary.constraints)?;
        for id in &summary.unknown_log_constraints {
            writeln!(io.stderr, "warning: log names unknown constraint `{id}`")?;
        }
    }
    Ok(EXIT_OK)
}

fn cluster(args: ClusterArgs, io: &mut Io) -> Result<i32> {
    let kb = args.kb.as_deref().map(load_kb).transpose()?;
    let result = if args.random {
        let kb = kb.ok_or_else(|| anyhow!("--random needs a knowledge base"))?;
        random_clustering(&kb, args.k, args.seed)?
    } else {
        let matrix = match (&args.matrix, &kb) {
            (Some(path), kb) => {
                let m = SimilarityMatrix::from_csv(&read_file(path)?).with_context(|| format!("in {}", path.display()))?;
                match kb {
                    Some(kb) => {
                        let ids = kb.constraint_ids();
                        m.reordered(&ids).ok_or_else(|| {
                            anyhow!("matrix ids {:?} do not match the knowledge base constraints {:?}", m.ids(), ids)
                        })?
                    }
                    None => m,
                }
            }
            (None, Some(kb)) => similarity_matrix(kb, args.metric)?,
            (None, None) => bail!("give a knowledge base or --matrix"),
        };
        let init = match args.init {
            Some(ids) => Init::Centroids(ids),
            None => Init::Seed(args.seed),
        };
        kmeans(&matrix, args.k, &init)?
    };
    if args.json {
        print_json(io.stdout, &result)?;
    } else {
        write_trace(io.stdout, &result)?;
        write!(io.stdout, "{}", result.report())?;
    }
    Ok(EXIT_OK)
}

fn write_trace(out: &mut dyn Write, c: &Clustering) -> Result<()> {
    if c.centroids.is_none() {
        return Ok(());
    }
    let ids: Vec<&str> = c.assignment.keys().map(String::as_str).collect();
    writeln!(out, "iteration\tcentroids\t{}", ids.join("\t"))?;
    for (i, it) in c.trace.iter().enumerate() {
        let cells: Vec<String> = ids.iter().map(|id| (it.assignment[*id] + 1).to_string()).collect();
        writeln!(out, "{}\t{}\t{}", i + 1, it.centroids.join(","), cells.join("\t"))?;
    }
    if c.converged {
        writeln!(out, "stable after {} iteration(s)", c.trace.len())?;
    }
    Ok(())
}

fn refactor(path: &Path, apply: Option<&Path>, json: bool, io: &mut Io) -> Result<i32> {
    let kb = load_kb(path)?;
    let report = refactor_kb(&kb, DEFAULT_STATE_BOUND);
    if json {
        print_json(io.stdout, &report)?;
    } else {
        writeln!(io.stdout, "constraint\tmatched\ttarget\tdelta\trewritten")?;
        for s in &report.applied {
            writeln!(
                io.stdout,
                "{}\t{} {}\t{} {}\t-{}\t{}",
                s.constraint,
                s.matched.family,
                s.matched.index,
                s.target.family,
                s.target.index,
                s.score_delta,
                format_expr(&s.rewritten)
            )?;
        }
        for s in &report.skipped {
            writeln!(io.stderr, "skipped {}: {}", s.constraint, s.reason)?;
        }
    }
    if let Some(out) = apply {
        fs::write(out, serialize_kb(&report.kb)).with_context(|| format!("cannot write {}", out.display()))?;
    }
    Ok(EXIT_OK)
}

const SESSION_HELP: &str = "commands: <id> or visit <id>, status, help, quit";

fn session(
    kb_path: &Path,
    log_path: Option<&Path>,
    user: Option<String>,
    k: usize,
    clusters: usize,
    seed: u64,
    io: &mut Io,
) -> Result<i32> {
    let kb = load_kb(kb_path)?;
    let log = match log_path {
        Some(p) if p.exists() => load_log(p)?,
        _ => NavigationLog::new(),
    };
    let order: Vec<String> = kb.constraint_ids().into_iter().map(str::to_string).collect();
    let grouping = session_clusters(&kb, clusters, seed);
    let mut state = SessionState::new();
    writeln!(io.stdout, "{} constraints, {} logged users. {SESSION_HELP}", order.len(), log.users().len())?;
    loop {
        write!(io.stdout, "> ")?;
        io.stdout.flush()?;
        let mut line = String::new();
        if io.stdin.read_line(&mut line)? == 0 {
            writeln!(io.stdout)?;
            return Ok(EXIT_OK);
        }
        let mut words = line.split_whitespace();
        let id = match (words.next(), words.next()) {
            (None, _) => continue,
            (Some("quit" | "exit"), _) => break,
            (Some("help"), _) => {
                writeln!(io.stdout, "{SESSION_HELP}")?;
                continue;
            }
            (Some("status"), _) => {
                writeln!(io.stdout, "visited: {}", state.visited().join(", "))?;
                continue;
            }
            (Some("visit"), Some(id)) | (Some(id), None) => id.to_string(),
            _ => {
                writeln!(io.stderr, "warning: unrecognised command. {SESSION_HELP}")?;
                continue;
            }
        };
        let Some(constraint) = kb.constraint(&id) else {
            writeln!(io.stderr, "warning: unknown constraint `{id}`")?;
            continue;
        };
        if let Err(e) = state.visit(id.clone()) {
            writeln!(io.stderr, "warning: {e}")?;
            continue;
        }
        writeln!(io.stdout, "{id}: {}", format_expr(&constraint.expr))?;
        if let Some(c) = &grouping {
            let cluster = c.assignment[&id];
            let members = &c.clusters()[cluster];
            writeln!(io.stdout, "  cluster {}: {}", cluster + 1, members.join(", "))?;
        }
        match recommend(constraint) {
            Some(s) => writeln!(
                io.stdout,
                "  refactoring: {} -> {} (-{})",
                s.matched,
                format_expr(&s.rewritten),
                s.score_delta
            )?,
            None => writeln!(io.stdout, "  refactoring: none")?,
        }
        match recommend_next_ordered(&log, &state, k, &order) {
            Ok(r) => writeln!(io.stdout, "  next: {} ({} of {} neighbours)", r.constraint, r.supporting_neighbors.len(), r.neighbors.len())?,
            Err(CfError::NoCandidates | CfError::EmptyLog) => writeln!(io.stdout, "  no recommendation")?,
            Err(e) => return Err(e.into()),
        }
    }
    if let (Some(path), false) = (log_path, state.is_empty()) {
        let user = user.unwrap_or_else(|| log.next_user_id());
        write!(io.stdout, "append session to {} as user {user}? [y/N] ", path.display())?;
        io.stdout.flush()?;
        let mut answer = String::new();
        io.stdin.read_line(&mut answer)?;
        if matches!(answer.trim(), "y" | "Y" | "yes") {
            append_session(path, &log, &user, &state)?;
            writeln!(io.stdout, "appended {} visits", state.len())?;
        }
    }
    Ok(EXIT_OK)
}

fn session_clusters(kb: &KnowledgeBase, k: usize, seed: u64) -> Option<Clustering> {
    let k = k.min(kb.constraints().len());
    if k == 0 {
        return None;
    }
    let m = similarity_matrix(kb, Metric::Variable).ok()?;
    kmeans(&m, k, &Init::Seed(seed)).ok()
}

fn append_session(path: &Path, log: &NavigationLog, user: &str, state: &SessionState) -> Result<()> {
    if log.ranks(user).is_some() {
        bail!("user `{user}` already has entries in {}", path.display());
    }
    let rows: Vec<(String, String, u32)> =
        state.visited().iter().zip(1..).map(|(c, r)| (user.to_string(), c.clone(), r)).collect();
    let existing = if path.exists() { read_file(path)? } else { String::new() };
    let mut text = existing.clone();
    if !text.is_empty() && !text.ends_with('\n') {
        text.push('\n');
    }
    text.push_str(&write_rows(&rows, existing.trim().is_empty()));
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
