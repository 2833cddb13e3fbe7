use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use behavsim_core::mdp::{value_iteration, Policy, TabularMdp};
use behavsim_core::metrics::{
    bisimulation, generalized_psm, pi_bisimulation, psm_exact, DistKind, PairwiseMetricTable,
};
use behavsim_core::{Error, Result};

use super::{echo_config, ensure_out_dir, write_json, ExitStatus};

#[derive(Args, Serialize)]
pub struct MetricArgs {
    /// Metric: psm, pi-bisim, bisim, or generalized-psm.
    #[arg(long)]
    kind: String,
    /// JSON file with the first MDP.
    #[arg(long)]
    x: PathBuf,
    /// JSON file with the second MDP.
    #[arg(long)]
    y: PathBuf,
    /// Local distance: tv or l1-mean-action.
    #[arg(long, default_value = "tv")]
    dist: String,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Grounding policy for the first MDP (JSON); optimal policy by value
    /// iteration when omitted.
    #[arg(long)]
    policy_x: Option<PathBuf>,
    /// Grounding policy for the second MDP (JSON).
    #[arg(long)]
    policy_y: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn load_mdp(path: &PathBuf) -> Result<TabularMdp> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    TabularMdp::from_json(&value)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn load_policy(path: &PathBuf) -> Result<Policy> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    let policy: Policy = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    Ok(policy)
}

fn grounding_policy(mdp: &TabularMdp, path: &Option<PathBuf>) -> Result<Policy> {
    match path {
        Some(p) => load_policy(p),
        None => Ok(value_iteration(mdp, 1e-12)?.1),
    }
}

pub fn run(args: MetricArgs) -> Result<ExitStatus> {
    let dist = match args.dist.as_str() {
        "tv" => DistKind::Tv,
        "l1-mean-action" => DistKind::L1MeanAction,
        other => {
            return Err(Error::InvalidArgument(format!("unknown dist {other}")));
        }
    };
    let mdp_x = load_mdp(&args.x)?;
    let mdp_y = load_mdp(&args.y)?;
    let table: PairwiseMetricTable = match args.kind.as_str() {
        "psm" => {
            let px = grounding_policy(&mdp_x, &args.policy_x)?;
            let py = grounding_policy(&mdp_y, &args.policy_y)?;
            psm_exact(&mdp_x, &px, &mdp_y, &py, dist, args.tol)?
        }
        "pi-bisim" => {
            let px = grounding_policy(&mdp_x, &args.policy_x)?;
            let py = grounding_policy(&mdp_y, &args.policy_y)?;
            pi_bisimulation(&mdp_x, &px, &mdp_y, &py, args.tol)?
        }
        "bisim" => bisimulation(&mdp_x, &mdp_y, args.tol)?,
        "generalized-psm" => {
            let px = grounding_policy(&mdp_x, &args.policy_x)?;
            let py = grounding_policy(&mdp_y, &args.policy_y)?;
            generalized_psm(&mdp_x, &px, &mdp_y, &py, dist, args.tol)?
        }
        other => {
            return Err(Error::InvalidArgument(format!("unknown metric kind {other}")));
        }
    };

    ensure_out_dir(&args.out_dir)?;
    echo_config(&args.out_dir, &args)?;
    std::fs::write(args.out_dir.join("table.csv"), table.to_csv())?;
    write_json(&args.out_dir.join("table.json"), &table)?;
    println!(
        "{} table {}x{} written to {} ({} iterations)",
        table.metric_kind,
        table.n_rows(),
        table.n_cols(),
        args.out_dir.display(),
        table.iterations
    );
    Ok(ExitStatus::Success)
}
