//! `elicit`: simulation harness, data ingest, session replay and the HTTP
//! server behind one binary.

mod args;
mod ingest;
mod output;
mod replay;
mod samples;
mod synth;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "elicit", version, about = "Expert-knowledge elicitation for sparse linear regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs strategies over a grid of feature counts and sample sizes.
    SynthSweep(synth::SweepArgs),
    /// Compares query strategies on synthetic data or a partitioned dataset.
    StrategyCompare(synth::CompareArgs),
    /// How many answers match how many extra training rows.
    FeedbackVsSamples(samples::SamplesArgs),
    /// Builds a dataset file from CSV, triplets or a review corpus.
    Ingest(ingest::IngestArgs),
    /// Serves elicitation sessions over HTTP.
    Serve(elicit_service::ServeArgs),
    /// Re-runs an exported session archive.
    Replay(replay::ReplayArgs),
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::SynthSweep(a) => synth::sweep(&a),
        Command::StrategyCompare(a) => synth::compare(&a),
        Command::FeedbackVsSamples(a) => samples::run(&a),
        Command::Ingest(a) => ingest::run(&a),
        Command::Serve(a) => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(elicit_service::serve(a))?;
            Ok(())
        }
        Command::Replay(a) => replay::run(&a),
    }
}
