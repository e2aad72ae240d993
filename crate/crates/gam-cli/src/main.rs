//! `gam` — command-line front end for the gain-adaptive memory retrieval
//! engine: index a corpus, run queries, apply judged feedback, inspect and
//! export memory state, simulate update dynamics, and run multi-turn
//! evaluations.
//!
//! Exit codes: 0 success, 2 input/config error, 3 adapter failure,
//! 4 snapshot mismatch, 5 label/episode mismatch, 1 anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gam_core::Error as CoreError;

#[derive(Parser)]
#[command(name = "gam", version, about = "Gain-adaptive memory retrieval engine")]
struct Cli {
    /// Run configuration file (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the hierarchical graph snapshot from a JSON-Lines corpus.
    Index {
        /// Corpus path (JSONL: {"id", "title"?, "text"} per line).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output graph snapshot path.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Retrieve passages for one question and write the episode trace.
    Query {
        question: String,
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Memory snapshot; fresh neutral memories when absent.
        #[arg(long)]
        memory: Option<PathBuf>,
        /// Number of passages to print.
        #[arg(long)]
        k_passages: Option<usize>,
        /// Episode trace output path (default: <out_dir>/episode-<id>.json).
        #[arg(long)]
        episode_out: Option<PathBuf>,
    },
    /// Apply judged feedback from an episode trace and a labels file.
    Feedback {
        /// Episode JSON written by `query` (or an eval run).
        #[arg(long)]
        episode: PathBuf,
        /// Labels JSON: {"query_id": ..., "labels": {"<sid>": "supportive" | "nonsupportive"}}.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        memory: Option<PathBuf>,
    },
    /// Run a multi-turn memorization evaluation over a dataset.
    ///
    /// --turns N executes turns 0..N-1 (N reports); the `different` scenario
    /// appends one extra read-only report over the held-out half.
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Number of memorization turns (turn indices 0..turns-1).
        #[arg(long)]
        turns: Option<usize>,
        /// Query scenario: same, similar, or different.
        #[arg(long, default_value = "same")]
        scenario: String,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Simulate the gain/perplexity/projection recursion and write CSV.
    SimulateDynamics {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        y: f64,
        #[arg(long)]
        s0: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        pi0: f64,
        #[arg(long, default_value_t = 0.9)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export per-sentence memory state as CSV (and optionally summarize an
    /// episode trace).
    Inspect {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        memory: Option<PathBuf>,
        /// CSV output path (default: <out_dir>/memory.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print a per-iteration summary of this episode trace.
        #[arg(long)]
        episode: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let config = config::RunConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Index { corpus, graph } => {
            commands::index::run(&config, corpus.as_deref(), graph.as_deref())
        }
        Command::Query {
            question,
            graph,
            memory,
            k_passages,
            episode_out,
        } => commands::query::run(
            &config,
            question,
            graph.as_deref(),
            memory.as_deref(),
            *k_passages,
            episode_out.as_deref(),
        ),
        Command::Feedback {
            episode,
            labels,
            graph,
            memory,
        } => commands::feedback::run(&config, episode, labels, graph.as_deref(), memory.as_deref()),
        Command::Eval {
            dataset,
            graph,
            turns,
            scenario,
            out_dir,
        } => commands::eval::run(
            &config,
            dataset.as_deref(),
            graph.as_deref(),
            *turns,
            scenario,
            out_dir.as_deref(),
        ),
        Command::SimulateDynamics {
            r,
            q,
            y,
            s0,
            n,
            pi0,
            lambda,
            out,
        } => commands::simulate::run(*r, *q, *y, *s0, *n, *pi0, *lambda, out),
        Command::Inspect {
            graph,
            memory,
            out,
            episode,
        } => commands::inspect::run(
            &config,
            graph.as_deref(),
            memory.as_deref(),
            out.as_deref(),
            episode.as_deref(),
        ),
    }
}

/// Exit-code table: 0 ok, 2 input, 3 adapter, 4 snapshot, 5 label mismatch.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(code) = err.downcast_ref::<ExitCoded>() {
        return code.code;
    }
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::Corpus(_)
            | CoreError::InvalidConfig(_)
            | CoreError::InvalidGraph(_)
            | CoreError::DuplicatePassageId(_)
            | CoreError::MissingQuestionType
            | CoreError::Io(_)
            | CoreError::Json(_),
        ) => 2,
        Some(CoreError::Adapter(_)) => 3,
        Some(
            CoreError::VersionMismatch { .. }
            | CoreError::GraphHashMismatch
            | CoreError::Snapshot(_)
            | CoreError::StaleGraphBinding { .. }
            | CoreError::EmptyGraph,
        ) => 4,
        Some(CoreError::UnknownSentenceId(_)) => 5,
        Some(CoreError::InvariantViolation(_) | CoreError::InfeasibleScenario(_)) => 1,
        Some(_) => 1,
        // Plain I/O and parse problems count as input errors.
        None if err.downcast_ref::<std::io::Error>().is_some() => 2,
        None if err.downcast_ref::<serde_json::Error>().is_some() => 2,
        None if err.downcast_ref::<toml::de::Error>().is_some() => 2,
        None => 2,
    }
}

/// Wrapper for CLI-level failures that carry an explicit exit code.
#[derive(Debug)]
pub struct ExitCoded {
    pub code: u8,
    pub message: String,
}

impl std::fmt::Display for ExitCoded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ExitCoded {}

pub fn label_mismatch(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ExitCoded {
        code: 5,
        message: message.into(),
    })
}
