//! In-scope environments: the cake MDP, the pixel jumping task (plain and
//! colored) with its 26x11 task grid, and LQR systems with distractors.

mod cake;
mod grid;
mod jumping;
mod lqr;

pub use cake::cake_mdp;
pub use grid::{grid_split, GridSplit, SplitKind, TaskCoord, N_TRAINING_TASKS};
pub use jumping::{
    jumping_build, jumping_colored, jumping_optimal_policy, jumping_optimal_trajectory,
    JumpingEnv, JumpingGeometry, JumpingInstance, JumpingState, Observation, ObstacleColor,
    ACTION_JUMP, ACTION_RIGHT, FLOOR_MAX_HEIGHT, FLOOR_MIN_HEIGHT, N_HEIGHTS, N_POSITIONS,
    N_TASKS, OBSTACLE_MAX_POS, OBSTACLE_MIN_POS,
};
pub use lqr::{lqr_build, LqrBuild, LqrSystem, INVARIANT_SCALE, LQR_ACTION_DIM, LQR_STATE_DIM};
