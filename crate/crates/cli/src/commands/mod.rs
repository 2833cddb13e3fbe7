pub mod embed_dump;
pub mod eval_grid;
pub mod lqr;
pub mod metric;
pub mod render;
pub mod train_jumping;
pub mod verify;

use std::path::{Path, PathBuf};

use behavsim_core::{Error, Result};

/// Subcommand outcome: success, or a failed assertion/bound check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    CheckFailed,
}

impl ExitStatus {
    pub fn as_i32(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::CheckFailed => 1,
        }
    }
}

/// Usage and config problems exit 2; failed checks and runtime breakdowns
/// exit 1.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_)
        | Error::InvalidMdp(_)
        | Error::InvalidDistribution(_)
        | Error::DimensionMismatch(_)
        | Error::GammaMismatch { .. }
        | Error::Io(_)
        | Error::Json(_) => 2,
        Error::NonConvergence { .. }
        | Error::Unsolvable(_)
        | Error::BoundViolation(_)
        | Error::Diverged { .. } => 1,
    }
}

pub fn ensure_out_dir(out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    Ok(())
}

/// Every run writes its fully resolved configuration next to its outputs.
pub fn echo_config<T: serde::Serialize>(out_dir: &Path, config: &T) -> Result<PathBuf> {
    let path = out_dir.join("config.json");
    let text = serde_json::to_string_pretty(config)?;
    std::fs::write(&path, text)?;
    Ok(path)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Worker cap from BEHAVSIM_THREADS (default 1).
pub fn thread_cap() -> usize {
    std::env::var("BEHAVSIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Map a function over seeds, optionally across threads. Results come back
/// in seed order no matter how work was scheduled, so parallelism never
/// changes outputs.
pub fn map_seeds<T, F>(seeds: &[u64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let workers = thread_cap().min(seeds.len().max(1));
    if workers <= 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let mut slots: Vec<Option<Result<T>>> = (0..seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<(usize, &mut [Option<Result<T>>])> = {
            let mut out = Vec::new();
            let mut rest = slots.as_mut_slice();
            let mut start = 0;
            let base = seeds.len() / workers;
            let extra = seeds.len() % workers;
            for w in 0..workers {
                let take = base + usize::from(w < extra);
                let (head, tail) = rest.split_at_mut(take);
                out.push((start, head));
                start += take;
                rest = tail;
            }
            out
        };
        for (offset, chunk) in chunks {
            let f = &f;
            scope.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(f(seeds[offset + i]));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every slot filled"))
        .collect()
}
