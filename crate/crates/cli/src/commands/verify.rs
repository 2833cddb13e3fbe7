use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use behavsim_core::transfer::{
    fuzz_psm_approx_bound, fuzz_transfer_bound, verify_bisim_counterexample, FuzzCorpusConfig,
};
use behavsim_core::{Error, Result};

use super::{echo_config, ensure_out_dir, write_json, ExitStatus};

#[derive(Args, Serialize)]
pub struct VerifyArgs {
    /// Check to run: theorem1, psm-approx, or counterexample.
    #[arg(long, default_value = "theorem1")]
    check: String,
    /// Random MDP pairs in the corpus.
    #[arg(long, default_value_t = 200)]
    pairs: usize,
    #[arg(long, default_value_t = 8)]
    max_states: usize,
    #[arg(long, default_value_t = 3)]
    max_actions: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Comma-separated policy perturbations for psm-approx.
    #[arg(long, default_value = "0.4,0.2,0.1,0.05")]
    eps: String,
    /// Cake rewards and discount for the counterexample check.
    #[arg(long, default_value_t = 1.0)]
    rx: f64,
    #[arg(long, default_value_t = 3.0)]
    ry: f64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

pub fn run(args: VerifyArgs) -> Result<ExitStatus> {
    ensure_out_dir(&args.out_dir)?;
    echo_config(&args.out_dir, &args)?;
    let corpus = FuzzCorpusConfig {
        pairs: args.pairs,
        max_states: args.max_states,
        max_actions: args.max_actions,
        seed: args.seed,
        ..FuzzCorpusConfig::default()
    };
    match args.check.as_str() {
        "theorem1" => {
            let summary = fuzz_transfer_bound(&corpus)?;
            write_json(&args.out_dir.join("report.json"), &summary)?;
            println!(
                "transfer bound: {} pairs, {} states, max violation {:e} -> {}",
                summary.pairs_checked,
                summary.total_states_checked,
                summary.max_violation,
                if summary.holds() { "PASS" } else { "FAIL" }
            );
            Ok(status(summary.holds()))
        }
        "psm-approx" => {
            let epsilons: Vec<f64> = args
                .eps
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("bad eps {s}: {e}")))
                })
                .collect::<Result<_>>()?;
            let summaries = fuzz_psm_approx_bound(&corpus, &epsilons)?;
            write_json(&args.out_dir.join("report.json"), &summaries)?;
            let ok = summaries.iter().all(|s| s.n_violations == 0);
            for s in &summaries {
                println!(
                    "approximation bound eps {}: mean gap {:.6}, max violation {:e}",
                    s.eps, s.mean_gap, s.max_violation
                );
            }
            println!("psm-approx -> {}", if ok { "PASS" } else { "FAIL" });
            Ok(status(ok))
        }
        "counterexample" => {
            let report = verify_bisim_counterexample(args.rx, args.ry, args.gamma)?;
            write_json(&args.out_dir.join("report.json"), &report)?;
            println!(
                "counterexample: bisim ({:.6}, {:.6}), pi-bisim ({:.6}, {:.6}), psm aligned {:.2e} -> {}",
                report.bisim_aligned,
                report.bisim_crossed,
                report.pi_bisim_aligned,
                report.pi_bisim_crossed,
                report.psm_aligned,
                if report.holds { "PASS" } else { "FAIL" }
            );
            Ok(status(report.holds))
        }
        other => Err(Error::InvalidArgument(format!("unknown check {other}"))),
    }
}

fn status(ok: bool) -> ExitStatus {
    if ok {
        ExitStatus::Success
    } else {
        ExitStatus::CheckFailed
    }
}
