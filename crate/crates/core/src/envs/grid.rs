//! Train/test splits of the 26x11 jumping-task grid. The wide and narrow
//! layouts are fixed and shipped as a versioned asset; random splits draw 18
//! tasks without replacement from a seed.

use serde::{Deserialize, Serialize};

use crate::envs::jumping::{
    FLOOR_MIN_HEIGHT, N_POSITIONS, N_TASKS, OBSTACLE_MIN_POS,
};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const N_TRAINING_TASKS: usize = 18;

const LAYOUT_ASSET: &str = include_str!("../../assets/grid_layouts.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Wide,
    Narrow,
    Random,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(SplitKind::Wide),
            "narrow" => Ok(SplitKind::Narrow),
            "random" => Ok(SplitKind::Random),
            other => Err(Error::InvalidArgument(format!("unknown split {other}"))),
        }
    }
}

/// A task on the grid, addressed by absolute obstacle column and floor height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskCoord {
    pub obstacle_position: usize,
    pub floor_height: usize,
}

impl TaskCoord {
    pub fn from_indices(pos_index: usize, height_index: usize) -> Self {
        TaskCoord {
            obstacle_position: OBSTACLE_MIN_POS + pos_index,
            floor_height: FLOOR_MIN_HEIGHT + height_index,
        }
    }

    pub fn pos_index(&self) -> usize {
        self.obstacle_position - OBSTACLE_MIN_POS
    }

    pub fn height_index(&self) -> usize {
        self.floor_height - FLOOR_MIN_HEIGHT
    }

    pub fn grid_index(&self) -> usize {
        self.height_index() * N_POSITIONS + self.pos_index()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSplit {
    pub kind: SplitKind,
    pub seed: u64,
    pub training_tasks: Vec<TaskCoord>,
    pub test_tasks: Vec<TaskCoord>,
}

#[derive(Deserialize)]
struct LayoutAsset {
    version: u32,
    wide: Vec<(usize, usize)>,
    narrow: Vec<(usize, usize)>,
}

fn fixed_layout(kind: SplitKind) -> Result<Vec<TaskCoord>> {
    let asset: LayoutAsset = serde_json::from_str(LAYOUT_ASSET)?;
    if asset.version != 1 {
        return Err(Error::InvalidArgument(format!(
            "unsupported layout asset version {}",
            asset.version
        )));
    }
    let pairs = match kind {
        SplitKind::Wide => asset.wide,
        SplitKind::Narrow => asset.narrow,
        SplitKind::Random => unreachable!("random splits are seeded, not fixed"),
    };
    Ok(pairs
        .into_iter()
        .map(|(p, h)| TaskCoord::from_indices(p, h))
        .collect())
}

/// Partition the 286-task grid into 18 training tasks and the rest.
pub fn grid_split(kind: SplitKind, seed: u64) -> Result<GridSplit> {
    let training: Vec<TaskCoord> = match kind {
        SplitKind::Random => {
            let mut rng = Rng::seed_from_u64(seed);
            let mut picks = rng.sample_without_replacement(N_TASKS, N_TRAINING_TASKS);
            picks.sort_unstable();
            picks
                .into_iter()
                .map(|i| TaskCoord::from_indices(i % N_POSITIONS, i / N_POSITIONS))
                .collect()
        }
        fixed => fixed_layout(fixed)?,
    };
    if training.len() != N_TRAINING_TASKS {
        return Err(Error::InvalidArgument(format!(
            "layout has {} training tasks, expected {N_TRAINING_TASKS}",
            training.len()
        )));
    }
    let mut is_training = vec![false; N_TASKS];
    for t in &training {
        if is_training[t.grid_index()] {
            return Err(Error::InvalidArgument("duplicate training task".into()));
        }
        is_training[t.grid_index()] = true;
    }
    let test: Vec<TaskCoord> = (0..N_TASKS)
        .filter(|&i| !is_training[i])
        .map(|i| TaskCoord::from_indices(i % N_POSITIONS, i / N_POSITIONS))
        .collect();
    Ok(GridSplit {
        kind,
        seed,
        training_tasks: training,
        test_tasks: test,
    })
}
