//! Pixel jumping task: an agent walks right along a floor and must jump
//! over an obstacle to reach the right edge of the frame. Tasks vary the
//! obstacle column (26 values) and the floor height (11 values), a 286-task
//! grid. A colored variant flips the objective: green obstacles reward a
//! strike instead of a jump.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp, Trajectory};

pub const ACTION_RIGHT: usize = 0;
pub const ACTION_JUMP: usize = 1;

/// Obstacle columns span 26 positions.
pub const OBSTACLE_MIN_POS: usize = 20;
pub const OBSTACLE_MAX_POS: usize = 45;
/// Floor heights span 11 rows.
pub const FLOOR_MIN_HEIGHT: usize = 10;
pub const FLOOR_MAX_HEIGHT: usize = 20;

pub const N_POSITIONS: usize = OBSTACLE_MAX_POS - OBSTACLE_MIN_POS + 1;
pub const N_HEIGHTS: usize = FLOOR_MAX_HEIGHT - FLOOR_MIN_HEIGHT + 1;
pub const N_TASKS: usize = N_POSITIONS * N_HEIGHTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleColor {
    White,
    Red,
    Green,
}

/// Pixel geometry of the task. The jump ascends diagonally up-right one
/// pixel per step for `jump_height` steps, then descends symmetrically;
/// actions during the arc are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpingGeometry {
    pub frame_height: usize,
    pub frame_width: usize,
    pub agent_width: usize,
    pub agent_height: usize,
    pub obstacle_width: usize,
    pub obstacle_height: usize,
    pub jump_height: usize,
    pub agent_start: usize,
    pub discount: f64,
}

impl Default for JumpingGeometry {
    fn default() -> Self {
        JumpingGeometry {
            frame_height: 60,
            frame_width: 60,
            agent_width: 3,
            agent_height: 6,
            obstacle_width: 5,
            obstacle_height: 6,
            jump_height: 15,
            agent_start: 0,
            discount: 0.99,
        }
    }
}

impl JumpingGeometry {
    /// Agent column at which the episode succeeds (right edge reached).
    pub fn goal_column(&self) -> usize {
        self.frame_width - self.agent_width
    }

    /// Number of airborne phases; phase 0 is grounded.
    fn arc_len(&self) -> usize {
        2 * self.jump_height
    }

    fn offset_of_phase(&self, phase: usize) -> usize {
        if phase <= self.jump_height {
            phase
        } else {
            self.arc_len() - phase
        }
    }
}

/// One task of the grid: an obstacle column, a floor height, and a color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpingInstance {
    pub obstacle_position: usize,
    pub floor_height: usize,
    pub color: ObstacleColor,
    pub geometry: JumpingGeometry,
}

impl JumpingInstance {
    pub fn new(obstacle_position: usize, floor_height: usize, color: ObstacleColor) -> Result<Self> {
        let instance = JumpingInstance {
            obstacle_position,
            floor_height,
            color,
            geometry: JumpingGeometry::default(),
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn validate(&self) -> Result<()> {
        if !(OBSTACLE_MIN_POS..=OBSTACLE_MAX_POS).contains(&self.obstacle_position) {
            return Err(Error::InvalidArgument(format!(
                "obstacle position {} outside {OBSTACLE_MIN_POS}..={OBSTACLE_MAX_POS}",
                self.obstacle_position
            )));
        }
        if !(FLOOR_MIN_HEIGHT..=FLOOR_MAX_HEIGHT).contains(&self.floor_height) {
            return Err(Error::InvalidArgument(format!(
                "floor height {} outside {FLOOR_MIN_HEIGHT}..={FLOOR_MAX_HEIGHT}",
                self.floor_height
            )));
        }
        let g = &self.geometry;
        if self.obstacle_position + g.obstacle_width > g.frame_width
            || g.agent_start + g.agent_width > g.frame_width
        {
            return Err(Error::InvalidArgument("geometry exceeds frame width".into()));
        }
        let tallest = self.floor_height + 1 + g.jump_height + g.agent_height;
        if tallest > g.frame_height {
            return Err(Error::InvalidArgument(
                "jump arc exceeds frame height".into(),
            ));
        }
        if g.jump_height == 0 || g.agent_width == 0 || g.obstacle_width == 0 {
            return Err(Error::InvalidArgument("degenerate geometry".into()));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let color = match self.color {
            ObstacleColor::White => "white",
            ObstacleColor::Red => "red",
            ObstacleColor::Green => "green",
        };
        format!(
            "jump_p{}_h{}_{}",
            self.obstacle_position, self.floor_height, color
        )
    }
}

/// Grayscale or 3-channel pixel observation with values in [0, 1],
/// stored as channel-major planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
}

impl Observation {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Observation {
            height,
            width,
            channels,
            pixels: vec![0.0; height * width * channels],
        }
    }

    pub fn at(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.pixels[channel * self.height * self.width + row * self.width + col]
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f64) {
        self.pixels[channel * self.height * self.width + row * self.width + col] = value;
    }

    /// Flattened input for the encoder, optionally mean-pooled by `factor`.
    pub fn flatten_downsampled(&self, factor: usize) -> Vec<f64> {
        if factor <= 1 {
            return self.pixels.clone();
        }
        let oh = self.height / factor;
        let ow = self.width / factor;
        let mut out = vec![0.0; self.channels * oh * ow];
        let norm = 1.0 / (factor * factor) as f64;
        for c in 0..self.channels {
            for r in 0..oh {
                for col in 0..ow {
                    let mut acc = 0.0;
                    for dr in 0..factor {
                        for dc in 0..factor {
                            acc += self.at(c, r * factor + dr, col * factor + dc);
                        }
                    }
                    out[c * oh * ow + r * ow + col] = acc * norm;
                }
            }
        }
        out
    }
}

/// How a positional state decodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpingState {
    /// Agent at column `x`, `phase` steps into the jump arc (0 = grounded),
    /// standing `offset` pixels above the floor.
    Position { x: usize, phase: usize, offset: usize },
    /// Reached the right edge.
    Edge,
    /// Ran into the obstacle.
    ObstacleHit,
}

/// The task compiled to a deterministic tabular MDP plus its renderer.
#[derive(Debug, Clone)]
pub struct JumpingEnv {
    pub instance: JumpingInstance,
    pub mdp: TabularMdp,
    n_columns: usize,
    arc_len: usize,
}

impl JumpingEnv {
    pub fn new(instance: JumpingInstance) -> Result<Self> {
        instance.validate()?;
        let g = instance.geometry;
        let n_columns = g.goal_column(); // positional columns 0..goal
        let arc_len = g.arc_len();
        let n_positional = n_columns * arc_len;
        let n_states = n_positional + 2;
        let edge = n_positional;
        let hit = n_positional + 1;
        let n_actions = 2;

        let mut reward = vec![0.0; n_states * n_actions];
        let mut transition = vec![0.0; n_states * n_actions * n_states];
        let mut terminal = vec![false; n_states];
        terminal[edge] = true;
        terminal[hit] = true;

        let strike_rewarded = instance.color == ObstacleColor::Green;
        for x in 0..n_columns {
            for phase in 0..arc_len {
                let s = x * arc_len + phase;
                for a in 0..n_actions {
                    let next_phase = if phase == 0 {
                        if a == ACTION_JUMP {
                            1
                        } else {
                            0
                        }
                    } else {
                        (phase + 1) % arc_len
                    };
                    let next_x = x + 1;
                    let (next_state, r) = if next_x >= g.goal_column() {
                        let bonus = if strike_rewarded { 0.0 } else { 100.0 };
                        (edge, 1.0 + bonus)
                    } else if self_collides(&instance, next_x, g.offset_of_phase(next_phase)) {
                        let bonus = if strike_rewarded { 100.0 } else { 0.0 };
                        (hit, 1.0 + bonus)
                    } else {
                        (next_x * arc_len + next_phase, 1.0)
                    };
                    reward[s * n_actions + a] = r;
                    transition[(s * n_actions + a) * n_states + next_state] = 1.0;
                }
            }
        }
        for &t in &[edge, hit] {
            for a in 0..n_actions {
                transition[(t * n_actions + a) * n_states + t] = 1.0;
            }
        }

        let start = instance.geometry.agent_start * arc_len;
        let mdp = TabularMdp::new(
            n_states,
            n_actions,
            reward,
            transition,
            g.discount,
            terminal,
            vec![start],
        )?;
        Ok(JumpingEnv {
            instance,
            mdp,
            n_columns,
            arc_len,
        })
    }

    pub fn start_state(&self) -> usize {
        self.mdp.start_states[0]
    }

    pub fn edge_state(&self) -> usize {
        self.n_columns * self.arc_len
    }

    pub fn obstacle_hit_state(&self) -> usize {
        self.n_columns * self.arc_len + 1
    }

    pub fn state_index(&self, x: usize, phase: usize) -> usize {
        x * self.arc_len + phase
    }

    pub fn decode(&self, state: usize) -> JumpingState {
        if state == self.edge_state() {
            JumpingState::Edge
        } else if state == self.obstacle_hit_state() {
            JumpingState::ObstacleHit
        } else {
            let x = state / self.arc_len;
            let phase = state % self.arc_len;
            JumpingState::Position {
                x,
                phase,
                offset: self.instance.geometry.offset_of_phase(phase),
            }
        }
    }

    /// Whether a terminal state counts as solving this task: reaching the
    /// edge, except for green obstacles where the strike is the payoff.
    pub fn is_solved_terminal(&self, state: usize) -> bool {
        match self.instance.color {
            ObstacleColor::Green => state == self.obstacle_hit_state(),
            _ => state == self.edge_state(),
        }
    }

    pub fn render(&self, state: usize) -> Observation {
        let g = &self.instance.geometry;
        let channels = match self.instance.color {
            ObstacleColor::White => 1,
            _ => 3,
        };
        let mut obs = Observation::zeros(g.frame_height, g.frame_width, channels);

        let all = |obs: &mut Observation, row: usize, col: usize, v: f64| {
            for c in 0..channels {
                obs.set(c, row, col, v);
            }
        };
        let to_row = |row_from_bottom: usize| g.frame_height - 1 - row_from_bottom;

        // Floor line.
        for col in 0..g.frame_width {
            all(&mut obs, to_row(self.instance.floor_height), col, 1.0);
        }

        // Obstacle block, sitting on the floor.
        let obstacle_intensity: Vec<f64> = match self.instance.color {
            ObstacleColor::White => vec![0.5],
            ObstacleColor::Red => vec![1.0, 0.0, 0.0],
            ObstacleColor::Green => vec![0.0, 1.0, 0.0],
        };
        for dr in 0..g.obstacle_height {
            for dc in 0..g.obstacle_width {
                let row = to_row(self.instance.floor_height + 1 + dr);
                let col = self.instance.obstacle_position + dc;
                for (c, &v) in obstacle_intensity.iter().enumerate() {
                    obs.set(c, row, col, v);
                }
            }
        }

        // Agent block.
        let (agent_x, agent_offset) = match self.decode(state) {
            JumpingState::Position { x, offset, .. } => (x, offset),
            JumpingState::Edge => (g.goal_column(), 0),
            JumpingState::ObstacleHit => (self.instance.obstacle_position, 0),
        };
        for dr in 0..g.agent_height {
            for dc in 0..g.agent_width {
                let row = to_row(self.instance.floor_height + 1 + agent_offset + dr);
                let col = agent_x + dc;
                if col < g.frame_width {
                    all(&mut obs, row, col, 1.0);
                }
            }
        }
        obs
    }
}

fn self_collides(instance: &JumpingInstance, x: usize, offset: usize) -> bool {
    let g = &instance.geometry;
    let c = instance.obstacle_position;
    let horizontal = x + g.agent_width > c && x < c + g.obstacle_width;
    let vertical = offset < g.obstacle_height;
    horizontal && vertical
}

/// Build the tabular MDP and renderer for one task.
pub fn jumping_build(instance: JumpingInstance) -> Result<JumpingEnv> {
    JumpingEnv::new(instance)
}

/// The colored variant; `color` must be red or green.
pub fn jumping_colored(
    mut instance: JumpingInstance,
    color: ObstacleColor,
) -> Result<JumpingEnv> {
    if color == ObstacleColor::White {
        return Err(Error::InvalidArgument(
            "colored variant needs red or green".into(),
        ));
    }
    instance.color = color;
    JumpingEnv::new(instance)
}

/// Outcome of simulating one fixed plan.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PlanOutcome {
    total_reward: f64,
    solved: bool,
}

fn simulate_plan(env: &JumpingEnv, jump_at: Option<usize>) -> PlanOutcome {
    let mut state = env.start_state();
    let mut total = 0.0;
    // Columns advance every step, so this always terminates.
    for _ in 0..env.instance.geometry.frame_width + env.arc_len {
        let action = match env.decode(state) {
            JumpingState::Position { x, phase, .. } if phase == 0 && Some(x) == jump_at => {
                ACTION_JUMP
            }
            _ => ACTION_RIGHT,
        };
        total += env.mdp.reward_at(state, action);
        let row = env.mdp.transition_row(state, action);
        state = row.iter().position(|&p| p > 0.5).expect("deterministic row");
        if env.mdp.terminal[state] {
            return PlanOutcome {
                total_reward: total,
                solved: env.is_solved_terminal(state),
            };
        }
    }
    PlanOutcome {
        total_reward: total,
        solved: false,
    }
}

/// Brute-force search over single-jump plans (including never jumping).
/// Returns the greedy policy of the best plan and the jump column, `None`
/// when walking straight is optimal (green obstacles).
pub fn jumping_optimal_policy(env: &JumpingEnv) -> Result<(Policy, Option<usize>)> {
    let g = &env.instance.geometry;
    let mut best: Option<(f64, Option<usize>, bool)> = None;
    let mut consider = |plan: Option<usize>, outcome: PlanOutcome| {
        let better = match best {
            None => true,
            Some((r, _, s)) => {
                outcome.total_reward > r + 1e-9 || (outcome.solved && !s)
            }
        };
        if better {
            best = Some((outcome.total_reward, plan, outcome.solved));
        }
    };
    consider(None, simulate_plan(env, None));
    for j in g.agent_start..g.goal_column() {
        consider(Some(j), simulate_plan(env, Some(j)));
    }
    let (_, plan, solved) = best.expect("at least one plan considered");
    if !solved {
        return Err(Error::Unsolvable(format!(
            "no single-jump plan in columns {}..{} clears the obstacle at {}",
            g.agent_start,
            g.goal_column(),
            env.instance.obstacle_position
        )));
    }

    let n = env.mdp.n_states;
    let mut actions = vec![ACTION_RIGHT; n];
    if let Some(j) = plan {
        actions[env.state_index(j, 0)] = ACTION_JUMP;
    }
    let mut policy = Policy::deterministic(n, 2, &actions)?;
    for s in 0..n {
        if env.mdp.terminal[s] {
            policy.probs[s * 2] = 0.5;
            policy.probs[s * 2 + 1] = 0.5;
        }
    }
    Ok((policy, plan))
}

/// Optimal rollout with trailing terminal entries removed, ready for the
/// trajectory metric DP and for embedding training.
pub fn jumping_optimal_trajectory(env: &JumpingEnv) -> Result<(Trajectory, Policy)> {
    let (policy, _) = jumping_optimal_policy(env)?;
    let horizon = env.instance.geometry.frame_width + env.arc_len;
    let mut traj = crate::mdp::rollout(&env.mdp, &policy, env.start_state(), horizon, 0)?;
    traj.source_mdp = env.instance.label();
    Ok((traj.without_terminal(&env.mdp), policy))
}
