use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use behavsim_core::embed::{
    compute_metric_tables, metrics_log_csv, prepare_tasks, train_jumping_prepared, CmeConfig,
    TrainMethod, TrainRun,
};
use behavsim_core::envs::{grid_split, GridSplit, SplitKind, N_HEIGHTS, N_POSITIONS};
use behavsim_core::io::write_pgm;
use behavsim_core::{Error, Result};

use super::{echo_config, ensure_out_dir, map_seeds, write_json, ExitStatus};

#[derive(Args, Serialize)]
pub struct TrainJumpingArgs {
    /// imitation_only, pse, l2_psm, cme_pi_bisim, or l2_pi_bisim.
    #[arg(long)]
    method: String,
    /// wide, narrow, or random.
    #[arg(long, default_value = "wide")]
    split: String,
    /// Seed of the random split (ignored for fixed layouts).
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Number of training seeds.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// First seed; run covers seed_base..seed_base+seeds.
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// JSON file with a CmeConfig; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    metric_epsilon: Option<f64>,
    #[arg(long)]
    eval_interval: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct SeedResult {
    seed: u64,
    final_test_solve_pct: f64,
}

#[derive(Serialize)]
struct Summary {
    method: String,
    split: String,
    seeds: Vec<SeedResult>,
    mean_test_solve_pct: f64,
}

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    args: &'a TrainJumpingArgs,
    effective: &'a CmeConfig,
}

pub fn resolve_config(
    file: &Option<PathBuf>,
    overrides: impl FnOnce(&mut CmeConfig),
) -> Result<CmeConfig> {
    let mut config = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?
        }
        None => CmeConfig::default(),
    };
    overrides(&mut config);
    config.validate()?;
    Ok(config)
}

pub fn parse_split(kind: &str, seed: u64) -> Result<GridSplit> {
    let kind: SplitKind = kind.parse()?;
    grid_split(kind, seed)
}

/// 26x11 tile image of the grid: training tasks 128, solved test tasks 255,
/// everything else 0. Row 0 is the highest floor.
pub fn solve_grid_image(path: &Path, split: &GridSplit, test_solved: &[bool]) -> Result<()> {
    let mut tiles = vec![0.0f64; N_POSITIONS * N_HEIGHTS];
    let mut put = |pos_index: usize, height_index: usize, v: f64| {
        let row = N_HEIGHTS - 1 - height_index;
        tiles[row * N_POSITIONS + pos_index] = v;
    };
    for t in &split.training_tasks {
        put(t.pos_index(), t.height_index(), 128.0 / 255.0);
    }
    for (t, &ok) in split.test_tasks.iter().zip(test_solved) {
        put(t.pos_index(), t.height_index(), if ok { 1.0 } else { 0.0 });
    }
    write_pgm(path, N_HEIGHTS, N_POSITIONS, &tiles)
}

pub fn run(args: TrainJumpingArgs) -> Result<ExitStatus> {
    let method: TrainMethod = args.method.parse()?;
    let split = parse_split(&args.split, args.split_seed)?;
    let base_config = resolve_config(&args.config, |c| {
        if let Some(v) = args.epochs {
            c.epochs = v;
        }
        if let Some(v) = args.alpha {
            c.alpha = v;
        }
        if let Some(v) = args.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = args.metric_epsilon {
            c.metric_epsilon = v;
        }
        if let Some(v) = args.eval_interval {
            c.eval_interval = v;
        }
    })?;
    if args.seeds == 0 {
        return Err(Error::InvalidArgument("needs at least one seed".into()));
    }

    ensure_out_dir(&args.out_dir)?;
    echo_config(
        &args.out_dir,
        &ResolvedConfig {
            args: &args,
            effective: &base_config,
        },
    )?;

    // Trajectories and metric tables depend only on the split, not on the
    // training seed; share them across seeds.
    let prepared = prepare_tasks(&split, &base_config)?;
    let tables = compute_metric_tables(&prepared, method, &base_config)?;

    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| args.seed_base + i).collect();
    let runs: Vec<TrainRun> = map_seeds(&seeds, |seed| {
        let mut config = base_config.clone();
        config.seed = seed;
        train_jumping_prepared(&prepared, &tables, &split, &config, method)
    })?;

    let mut seed_results = Vec::new();
    for (seed, run) in seeds.iter().zip(&runs) {
        std::fs::write(
            args.out_dir.join(format!("metrics_seed{seed}.csv")),
            metrics_log_csv(&run.logs),
        )?;
        write_json(
            &args.out_dir.join(format!("model_seed{seed}.json")),
            &run.model,
        )?;
        solve_grid_image(
            &args.out_dir.join(format!("solve_grid_seed{seed}.pgm")),
            &split,
            &run.test_solved,
        )?;
        seed_results.push(SeedResult {
            seed: *seed,
            final_test_solve_pct: run.final_test_solve_pct,
        });
    }
    let mean = seed_results
        .iter()
        .map(|r| r.final_test_solve_pct)
        .sum::<f64>()
        / seed_results.len() as f64;
    let summary = Summary {
        method: args.method.clone(),
        split: args.split.clone(),
        seeds: seed_results,
        mean_test_solve_pct: mean,
    };
    write_json(&args.out_dir.join("summary.json"), &summary)?;
    println!(
        "{} on {} split: mean test solve {:.2}% over {} seed(s)",
        args.method,
        args.split,
        mean,
        seeds.len()
    );
    Ok(ExitStatus::Success)
}
