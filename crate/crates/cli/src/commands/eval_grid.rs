use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use behavsim_core::embed::{greedy_rollout_solves, CmeConfig, EmbeddingModel};
use behavsim_core::envs::{TaskCoord, N_HEIGHTS, N_POSITIONS};
use behavsim_core::io::write_pgm;
use behavsim_core::{Error, Result};

use super::{echo_config, ensure_out_dir, write_json, ExitStatus};
use super::train_jumping::parse_split;

#[derive(Args, Serialize)]
pub struct EvalGridArgs {
    /// Trained model dump (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Split used to mark training tiles in the image.
    #[arg(long, default_value = "wide")]
    split: String,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct EvalSummary {
    overall_solve_pct: f64,
    test_solve_pct: f64,
    train_solve_pct: f64,
}

pub fn run(args: EvalGridArgs) -> Result<ExitStatus> {
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", args.model.display())))?;
    let model: EmbeddingModel = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", args.model.display())))?;
    let split = parse_split(&args.split, args.split_seed)?;
    let config = CmeConfig {
        downsample: model.arch.downsample,
        ..CmeConfig::default()
    };

    ensure_out_dir(&args.out_dir)?;
    echo_config(&args.out_dir, &args)?;

    let mut tiles = vec![0.0f64; N_POSITIONS * N_HEIGHTS];
    let mut solved_total = 0usize;
    let mut solved_test = 0usize;
    let mut solved_train = 0usize;
    let is_training: std::collections::HashSet<usize> = split
        .training_tasks
        .iter()
        .map(|t| t.grid_index())
        .collect();
    for height_index in 0..N_HEIGHTS {
        for pos_index in 0..N_POSITIONS {
            let coord = TaskCoord::from_indices(pos_index, height_index);
            let solved = greedy_rollout_solves(&model, &coord, &config)?;
            if solved {
                solved_total += 1;
            }
            let training = is_training.contains(&coord.grid_index());
            if training {
                if solved {
                    solved_train += 1;
                }
            } else if solved {
                solved_test += 1;
            }
            let row = N_HEIGHTS - 1 - height_index;
            tiles[row * N_POSITIONS + pos_index] = if training {
                128.0 / 255.0
            } else if solved {
                1.0
            } else {
                0.0
            };
        }
    }
    write_pgm(&args.out_dir.join("solve_grid.pgm"), N_HEIGHTS, N_POSITIONS, &tiles)?;
    let n_total = N_POSITIONS * N_HEIGHTS;
    let n_train = split.training_tasks.len();
    let summary = EvalSummary {
        overall_solve_pct: 100.0 * solved_total as f64 / n_total as f64,
        test_solve_pct: 100.0 * solved_test as f64 / (n_total - n_train) as f64,
        train_solve_pct: 100.0 * solved_train as f64 / n_train as f64,
    };
    write_json(&args.out_dir.join("summary.json"), &summary)?;
    println!(
        "grid evaluation: overall {:.2}%, test {:.2}%, train {:.2}%",
        summary.overall_solve_pct, summary.test_solve_pct, summary.train_solve_pct
    );
    Ok(ExitStatus::Success)
}
