//! `behavsim`: behavioral-similarity metrics for finite MDPs, bound
//! verification, the pixel jumping task, metric-embedding training, and the
//! LQR-with-distractors experiment, behind one executable.
//!
//! Exit codes: 0 success, 1 assertion/bound failure, 2 usage or config
//! error. Every subcommand is deterministic for a fixed config and seed and
//! echoes its resolved configuration next to its outputs.

mod commands;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "behavsim", version, about = "Behavioral similarity metrics and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a pairwise metric table between two MDPs.
    Metric(commands::metric::MetricArgs),
    /// Verify transfer and approximation bounds, or the metric ordering
    /// counterexample.
    Verify(commands::verify::VerifyArgs),
    /// Render jumping-task observations to PGM/PPM files.
    Render(commands::render::RenderArgs),
    /// Train a jumping-task policy with an auxiliary embedding loss.
    TrainJumping(commands::train_jumping::TrainJumpingArgs),
    /// Evaluate a trained model over the full task grid.
    EvalGrid(commands::eval_grid::EvalGridArgs),
    /// Dump trajectory embeddings of a trained model to CSV.
    EmbedDump(commands::embed_dump::EmbedDumpArgs),
    /// Run the LQR-with-distractors generalization experiment.
    Lqr(commands::lqr::LqrArgs),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Metric(args) => commands::metric::run(args),
        Command::Verify(args) => commands::verify::run(args),
        Command::Render(args) => commands::render::run(args),
        Command::TrainJumping(args) => commands::train_jumping::run(args),
        Command::EvalGrid(args) => commands::eval_grid::run(args),
        Command::EmbedDump(args) => commands::embed_dump::run(args),
        Command::Lqr(args) => commands::lqr::run(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code.as_i32()),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(commands::exit_code_for(&err));
        }
    }
}
