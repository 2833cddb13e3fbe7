use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use behavsim_core::envs::{jumping_optimal_trajectory, JumpingEnv, JumpingInstance, ObstacleColor};
use behavsim_core::io::write_observation;
use behavsim_core::{Error, Result};

use super::{echo_config, ensure_out_dir, ExitStatus};

#[derive(Args, Serialize)]
pub struct RenderArgs {
    /// Obstacle column (20..=45).
    #[arg(long)]
    position: usize,
    /// Floor height (10..=20).
    #[arg(long)]
    height: usize,
    #[arg(long, default_value = "white")]
    color: String,
    /// Render the full optimal trajectory instead of just the start frame.
    #[arg(long, default_value_t = false)]
    trajectory: bool,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

pub fn run(args: RenderArgs) -> Result<ExitStatus> {
    let color = match args.color.as_str() {
        "white" => ObstacleColor::White,
        "red" => ObstacleColor::Red,
        "green" => ObstacleColor::Green,
        other => return Err(Error::InvalidArgument(format!("unknown color {other}"))),
    };
    let instance = JumpingInstance::new(args.position, args.height, color)?;
    let env = JumpingEnv::new(instance)?;
    ensure_out_dir(&args.out_dir)?;
    echo_config(&args.out_dir, &args)?;
    let mut written = Vec::new();
    if args.trajectory {
        let (traj, _) = jumping_optimal_trajectory(&env)?;
        for (i, &state) in traj.states.iter().enumerate() {
            let obs = env.render(state);
            let path = write_observation(&args.out_dir.join(format!("frame_{i:03}")), &obs)?;
            written.push(path);
        }
    } else {
        let obs = env.render(env.start_state());
        written.push(write_observation(&args.out_dir.join("start"), &obs)?);
    }
    println!(
        "rendered {} frame(s) of {} into {}",
        written.len(),
        env.instance.label(),
        args.out_dir.display()
    );
    Ok(ExitStatus::Success)
}
