//! Address-profiling toolkit for Ethereum transaction histories: builds
//! quasi-identifier profiles and graph embeddings, links address pairs,
//! measures attack power, analyzes mixer logs, and replays balances for
//! low-digit fingerprints.

mod commands;
mod config;
mod errors;
mod meta;
mod staging;

use clap::Parser;

#[derive(Debug, Parser)]
#[command(
    name = "chainprofiler",
    version,
    about = "Ethereum address profiling, pair linking, and privacy measurement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Subcommand)]
enum Command {
    /// Merge, fetch, and canonicalize transaction corpora.
    Ingest(commands::ingest::IngestArgs),
    /// Extract per-address quasi-identifier feature vectors.
    Features(commands::features::FeaturesArgs),
    /// Build and preprocess the transaction graph.
    Graph(commands::graph::GraphArgs),
    /// Train node embeddings from random walks.
    Embed(commands::embed::EmbedArgs),
    /// Rank candidate addresses for every ground-truth pair.
    Rank(commands::rank::RankArgs),
    /// Score rankings: average rank, AUC, entropy gain.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Link mixer deposits to withdraws and derive ground truth.
    Tornado(commands::tornado::TornadoArgs),
    /// Replay balances and measure low-digit fingerprint survival.
    Fingerprint(commands::fingerprint::FingerprintArgs),
    /// Run the full corpus-to-metrics pipeline from a config file.
    Pipeline(commands::pipeline::PipelineArgs),
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprintln!("{}", one_line(&e));
                    2
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Features(args) => commands::features::run(args),
        Command::Graph(args) => commands::graph::run(args),
        Command::Embed(args) => commands::embed::run(args),
        Command::Rank(args) => commands::rank::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Tornado(args) => commands::tornado::run(args),
        Command::Fingerprint(args) => commands::fingerprint::run(args),
        Command::Pipeline(args) => commands::pipeline::run(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

/// Collapses clap's multi-line diagnostics into a single stderr line that
/// still names the offending flag, dropping the usage trailer.
fn one_line(err: &clap::Error) -> String {
    let rendered = err.render().to_string();
    let mut parts: Vec<&str> = Vec::new();
    for line in rendered.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with("Usage:") || line.starts_with("For more information") {
            break;
        }
        parts.push(line);
    }
    if parts.is_empty() {
        "error: invalid arguments".to_string()
    } else {
        parts.join(" ")
    }
}
