use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use behavsim_core::envs::{lqr_build, LQR_STATE_DIM};
use behavsim_core::lqr_gen::{
    dare_solve, evaluate_generalization, expected_cost, generalizing_policy, init_batch,
    oracle_controller, train_lqr_policy, LqrController, LqrMethod, LqrTrainConfig,
};
use behavsim_core::{Error, Result};

use super::{echo_config, ensure_out_dir, map_seeds, write_json, ExitStatus};

#[derive(Args, Serialize, Clone)]
pub struct LqrArgs {
    /// Comma-separated methods: psm, overparam, l1, kstar.
    #[arg(long, default_value = "psm,overparam,l1,kstar")]
    methods: String,
    /// Distractor dimension (must be at least the state dimension).
    #[arg(long, default_value_t = 500)]
    nd: usize,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// Unseen test environments per seed.
    #[arg(long, default_value_t = 3)]
    test_envs: usize,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Serialize, Clone)]
struct SeedOutcome {
    seed: u64,
    errors: Vec<f64>,
    train_gaps: Vec<f64>,
}

#[derive(Serialize)]
struct LqrSummary {
    nd: usize,
    methods: Vec<String>,
    mean_abs_error: Vec<f64>,
    std_abs_error: Vec<f64>,
    per_seed: Vec<SeedOutcome>,
}

/// Fixed evaluation batch shared by every arm and seed.
const EVAL_BATCH_SEED: u64 = 0xe7a1;
const EVAL_BATCH_SIZE: usize = 100;

pub fn run(args: LqrArgs) -> Result<ExitStatus> {
    let methods: Vec<String> = args
        .methods
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if methods.is_empty() || args.seeds == 0 {
        return Err(Error::InvalidArgument("needs methods and seeds".into()));
    }
    for m in &methods {
        if m != "kstar" {
            let _: LqrMethod = m.parse()?;
        }
    }
    // Reject an impossible distractor dimension before doing any work.
    lqr_build(0, args.nd, 0)?;

    ensure_out_dir(&args.out_dir)?;
    echo_config(&args.out_dir, &args)?;

    let base_config = {
        let mut c = LqrTrainConfig::default();
        if let Some(v) = args.iters {
            c.iters = v;
        }
        if let Some(v) = args.learning_rate {
            c.learning_rate = v;
        }
        c
    };
    let horizon = base_config.horizon;
    let eval_batch = init_batch(EVAL_BATCH_SEED, EVAL_BATCH_SIZE, LQR_STATE_DIM);

    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| args.seed_base + i).collect();
    let outcomes: Vec<SeedOutcome> = map_seeds(&seeds, |seed| {
        let build = lqr_build(seed, args.nd, args.test_envs)?;
        let system = &build.train_envs[0];
        let p_star = dare_solve(system)?;
        let oracle = oracle_controller(system, &p_star)?;
        let oracle_gain = match &oracle {
            LqrController::State(g) => g.clone(),
            LqrController::Observation(_) => unreachable!(),
        };
        let oracle_train: f64 = build
            .train_envs
            .iter()
            .map(|e| expected_cost(e, &oracle_gain, horizon))
            .sum();
        let mut errors = Vec::new();
        let mut train_gaps = Vec::new();
        for m in &methods {
            let (controller, train_gap) = if m == "kstar" {
                let k = generalizing_policy(system, &p_star)?;
                (LqrController::Observation(k), 0.0)
            } else {
                let method: LqrMethod = m.parse()?;
                let mut config = base_config.clone();
                config.seed = seed;
                let run = train_lqr_policy(method, &build.train_envs, &config)?;
                let gap = (run.final_train_cost - oracle_train) / oracle_train;
                (LqrController::Observation(run.policy.effective()), gap)
            };
            let err = evaluate_generalization(
                &controller,
                &build.test_envs,
                &oracle,
                horizon,
                &eval_batch,
            )?;
            errors.push(err);
            train_gaps.push(train_gap);
        }
        Ok(SeedOutcome {
            seed,
            errors,
            train_gaps,
        })
    })?;

    let mut mean = vec![0.0f64; methods.len()];
    let mut std = vec![0.0f64; methods.len()];
    for (i, _) in methods.iter().enumerate() {
        let vals: Vec<f64> = outcomes.iter().map(|o| o.errors[i]).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
        mean[i] = m;
        std[i] = v.sqrt();
    }

    let mut csv = String::from("method,n_d,mean_abs_error,std_abs_error,seeds\n");
    for (i, m) in methods.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            m,
            args.nd,
            mean[i],
            std[i],
            outcomes.len()
        ));
    }
    std::fs::write(args.out_dir.join("results.csv"), &csv)?;
    let summary = LqrSummary {
        nd: args.nd,
        methods: methods.clone(),
        mean_abs_error: mean.clone(),
        std_abs_error: std,
        per_seed: outcomes,
    };
    write_json(&args.out_dir.join("summary.json"), &summary)?;
    for (i, m) in methods.iter().enumerate() {
        println!(
            "{m}: mean |cost - oracle| = {:.4} over {} seed(s) at n_d = {}",
            mean[i],
            seeds.len(),
            args.nd
        );
    }
    Ok(ExitStatus::Success)
}
