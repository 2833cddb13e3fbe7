use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use behavsim_core::embed::{embedding_dump_csv, prepare_tasks, CmeConfig, EmbeddingModel};
use behavsim_core::{Error, Result};

use super::train_jumping::parse_split;
use super::{echo_config, ensure_out_dir, ExitStatus};

#[derive(Args, Serialize)]
pub struct EmbedDumpArgs {
    /// Trained model dump (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Split whose training trajectories are embedded.
    #[arg(long, default_value = "wide")]
    split: String,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

pub fn run(args: EmbedDumpArgs) -> Result<ExitStatus> {
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", args.model.display())))?;
    let model: EmbeddingModel = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", args.model.display())))?;
    let split = parse_split(&args.split, args.split_seed)?;
    let config = CmeConfig {
        downsample: model.arch.downsample,
        ..CmeConfig::default()
    };
    let prepared = prepare_tasks(&split, &config)?;
    ensure_out_dir(&args.out_dir)?;
    echo_config(&args.out_dir, &args)?;
    let csv = embedding_dump_csv(&model, &prepared)?;
    std::fs::write(args.out_dir.join("embeddings.csv"), csv)?;
    println!(
        "embeddings of {} trajectories written to {}",
        prepared.tasks.len(),
        args.out_dir.display()
    );
    Ok(ExitStatus::Success)
}
