//! `gcvos`: equivalence checks, cost benchmarks, streaming stress runs,
//! and synthetic segmentation for the two attention-memory backends.
//!
//! Exit codes: 0 when the run's check passes, 1 on a numeric failure
//! (reports are still written for triage), 2 on usage or configuration
//! errors.

use clap::{Parser, Subcommand};
use std::process::ExitCode;

use gc_cli::commands::{cost, equiv, segment, stream};

#[derive(Parser)]
#[command(
    name = "gcvos",
    version,
    about = "Streaming attention-memory toolbox: fixed-size global context vs space-time memory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the two backends read identically without normalization.
    Equiv(equiv::EquivArgs),
    /// Reproduce the read-cost comparison (FLOPs and memory).
    BenchCost(cost::CostArgs),
    /// Long-run state-size trajectories for both backends.
    BenchStream(stream::StreamArgs),
    /// Streaming segmentation of a synthetic clip.
    Segment(segment::SegmentArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Equiv(args) => equiv::run(args),
        Command::BenchCost(args) => cost::run(args),
        Command::BenchStream(args) => stream::run(args),
        Command::Segment(args) => segment::run(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
