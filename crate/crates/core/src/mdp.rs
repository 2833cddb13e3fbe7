//! Finite MDPs, optimal policies by value iteration, seeded rollouts, policy
//! perturbation, and the exact discounted policy-divergence solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

const PROB_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 10_000;

/// Finite MDP with dense reward and transition tables.
///
/// Terminal states are absorbing self-loops with zero reward for every
/// action; construction rejects anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `state x action`.
    pub reward: Vec<f64>,
    /// `state x action x next_state`, each row a probability vector.
    pub transition: Vec<f64>,
    pub gamma: f64,
    pub terminal: Vec<bool>,
    pub start_states: Vec<usize>,
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidDistribution(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what} sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        reward: Vec<f64>,
        transition: Vec<f64>,
        gamma: f64,
        terminal: Vec<bool>,
        start_states: Vec<usize>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("empty state or action set".into()));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::InvalidMdp("reward table has the wrong size".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::InvalidMdp(
                "transition table has the wrong size".into(),
            ));
        }
        if terminal.len() != n_states {
            return Err(Error::InvalidMdp("terminal flags have the wrong size".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidMdp(format!(
                "gamma must lie in [0, 1), got {gamma}"
            )));
        }
        if start_states.is_empty() || start_states.iter().any(|&s| s >= n_states) {
            return Err(Error::InvalidMdp("start states empty or out of range".into()));
        }
        let mdp = TabularMdp {
            n_states,
            n_actions,
            reward,
            transition,
            gamma,
            terminal,
            start_states,
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                check_distribution(mdp.transition_row(s, a), &format!("P({s},{a})"))?;
                if mdp.terminal[s] {
                    if mdp.reward_at(s, a) != 0.0 {
                        return Err(Error::InvalidMdp(format!(
                            "terminal state {s} has nonzero reward for action {a}"
                        )));
                    }
                    let row = mdp.transition_row(s, a);
                    if (row[s] - 1.0).abs() > PROB_TOL {
                        return Err(Error::InvalidMdp(format!(
                            "terminal state {s} is not absorbing under action {a}"
                        )));
                    }
                }
            }
        }
        Ok(mdp)
    }

    pub fn reward_at(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    /// Expected one-step reward under a policy row.
    pub fn policy_reward(&self, s: usize, pi_row: &[f64]) -> f64 {
        (0..self.n_actions)
            .map(|a| pi_row[a] * self.reward_at(s, a))
            .sum()
    }

    /// State-to-state transition distribution under a policy row.
    pub fn policy_transition(&self, s: usize, pi_row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        for a in 0..self.n_actions {
            let w = pi_row[a];
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.transition_row(s, a)) {
                *o += w * p;
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MdpJson::from(self)).expect("serialization cannot fail")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let raw: MdpJson = serde_json::from_value(value.clone())?;
        raw.try_into()
    }
}

/// Wire format: rewards row-major, transitions as nested arrays.
#[derive(Serialize, Deserialize)]
struct MdpJson {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    reward: Vec<f64>,
    transition: Vec<Vec<Vec<f64>>>,
    terminal: Vec<bool>,
    start_states: Vec<usize>,
}

impl From<&TabularMdp> for MdpJson {
    fn from(mdp: &TabularMdp) -> Self {
        let transition = (0..mdp.n_states)
            .map(|s| {
                (0..mdp.n_actions)
                    .map(|a| mdp.transition_row(s, a).to_vec())
                    .collect()
            })
            .collect();
        MdpJson {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            gamma: mdp.gamma,
            reward: mdp.reward.clone(),
            transition,
            terminal: mdp.terminal.clone(),
            start_states: mdp.start_states.clone(),
        }
    }
}

impl TryFrom<MdpJson> for TabularMdp {
    type Error = Error;
    fn try_from(raw: MdpJson) -> Result<Self> {
        let mut transition = Vec::with_capacity(raw.n_states * raw.n_actions * raw.n_states);
        if raw.transition.len() != raw.n_states {
            return Err(Error::InvalidMdp("transition outer dimension".into()));
        }
        for per_state in &raw.transition {
            if per_state.len() != raw.n_actions {
                return Err(Error::InvalidMdp("transition action dimension".into()));
            }
            for row in per_state {
                if row.len() != raw.n_states {
                    return Err(Error::InvalidMdp("transition row length".into()));
                }
                transition.extend_from_slice(row);
            }
        }
        TabularMdp::new(
            raw.n_states,
            raw.n_actions,
            raw.reward,
            transition,
            raw.gamma,
            raw.terminal,
            raw.start_states,
        )
    }
}

/// Stochastic policy: one action distribution per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `state x action`.
    pub probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch(
                "policy table has the wrong size".into(),
            ));
        }
        let policy = Policy {
            n_states,
            n_actions,
            probs,
        };
        for s in 0..n_states {
            check_distribution(policy.row(s), &format!("pi({s})"))?;
        }
        Ok(policy)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Deterministic policy from a list of action indices.
    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != n_states {
            return Err(Error::DimensionMismatch("one action per state".into()));
        }
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidArgument(format!("action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Policy {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = a;
            }
        }
        best
    }
}

/// States visited by a rollout, with the policy's action distribution at
/// each state (the full rows, not sampled one-hots).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub action_dists: Vec<Vec<f64>>,
    pub source_mdp: String,
    /// True when the rollout stopped at `max_steps` instead of a terminal.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Copy without trailing terminal entries. Metric dynamic programs over
    /// aligned behavior want the last recorded action distribution to be the
    /// behaving policy's row, not a terminal placeholder.
    pub fn without_terminal(&self, mdp: &TabularMdp) -> Trajectory {
        let mut end = self.states.len();
        while end > 1 && mdp.terminal[self.states[end - 1]] {
            end -= 1;
        }
        Trajectory {
            states: self.states[..end].to_vec(),
            action_dists: self.action_dists[..end].to_vec(),
            source_mdp: self.source_mdp.clone(),
            truncated: self.truncated,
        }
    }
}

/// Sparse view of every transition row; value iteration and the linear
/// solvers iterate over nonzero entries only, which matters for the
/// deterministic pixel environments with a thousand-plus states.
fn sparse_rows(mdp: &TabularMdp) -> Vec<Vec<(usize, f64)>> {
    (0..mdp.n_states * mdp.n_actions)
        .map(|sa| {
            let row = &mdp.transition[sa * mdp.n_states..(sa + 1) * mdp.n_states];
            row.iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(i, &p)| (i, p))
                .collect()
        })
        .collect()
}

/// Optimal state values and a greedy policy, by value iteration.
///
/// Ties break toward the lowest action index; terminal states get the
/// uniform row. The returned values have Bellman residual at most `tol` in
/// sup norm.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<(Vec<f64>, Policy)> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let sparse = sparse_rows(mdp);
    let mut values = vec![0.0; mdp.n_states];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let next = bellman_backup(mdp, &sparse, &values);
        residual = sup_diff(&next, &values);
        values = next;
        if residual <= tol {
            let policy = greedy_policy(mdp, &sparse, &values);
            return Ok((values, policy));
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_SWEEPS,
        residual,
    })
}

fn bellman_backup(mdp: &TabularMdp, sparse: &[Vec<(usize, f64)>], values: &[f64]) -> Vec<f64> {
    (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| q_value(mdp, sparse, values, s, a))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn q_value(
    mdp: &TabularMdp,
    sparse: &[Vec<(usize, f64)>],
    values: &[f64],
    s: usize,
    a: usize,
) -> f64 {
    let expected: f64 = sparse[s * mdp.n_actions + a]
        .iter()
        .map(|&(i, p)| p * values[i])
        .sum();
    mdp.reward_at(s, a) + mdp.gamma * expected
}

fn greedy_policy(mdp: &TabularMdp, sparse: &[Vec<(usize, f64)>], values: &[f64]) -> Policy {
    let mut actions = vec![0usize; mdp.n_states];
    for s in 0..mdp.n_states {
        let mut best_a = 0;
        let mut best_q = q_value(mdp, sparse, values, s, 0);
        for a in 1..mdp.n_actions {
            let q = q_value(mdp, sparse, values, s, a);
            if q > best_q {
                best_q = q;
                best_a = a;
            }
        }
        actions[s] = best_a;
    }
    let mut policy = Policy::deterministic(mdp.n_states, mdp.n_actions, &actions)
        .expect("greedy actions are in range");
    let uniform = 1.0 / mdp.n_actions as f64;
    for s in 0..mdp.n_states {
        if mdp.terminal[s] {
            for a in 0..mdp.n_actions {
                policy.probs[s * mdp.n_actions + a] = uniform;
            }
        }
    }
    policy
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Exact policy evaluation: solve v = R^pi + gamma P^pi v by fixed point.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &Policy, tol: f64) -> Result<Vec<f64>> {
    solve_discounted_linear(
        mdp,
        policy,
        &(0..mdp.n_states)
            .map(|s| mdp.policy_reward(s, policy.row(s)))
            .collect::<Vec<_>>(),
        tol,
    )
}

/// Solve v = c + gamma P^pi v to sup residual <= tol.
fn solve_discounted_linear(
    mdp: &TabularMdp,
    policy: &Policy,
    c: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let rows: Vec<Vec<(usize, f64)>> = (0..mdp.n_states)
        .map(|s| {
            mdp.policy_transition(s, policy.row(s))
                .into_iter()
                .enumerate()
                .filter(|(_, p)| *p > 0.0)
                .collect()
        })
        .collect();
    let mut v = vec![0.0; mdp.n_states];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let next: Vec<f64> = (0..mdp.n_states)
            .map(|s| {
                c[s] + mdp.gamma
                    * rows[s].iter().map(|&(i, p)| p * v[i]).sum::<f64>()
            })
            .collect();
        residual = sup_diff(&next, &v);
        v = next;
        if residual <= tol {
            return Ok(v);
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_SWEEPS,
        residual,
    })
}

/// Roll out `policy` from `start`, stopping at a terminal state (included)
/// or after `max_steps` transitions. Stochastic transitions are reproducible
/// from the seed.
pub fn rollout(
    mdp: &TabularMdp,
    policy: &Policy,
    start: usize,
    max_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    if start >= mdp.n_states {
        return Err(Error::InvalidArgument(format!(
            "start state {start} out of range"
        )));
    }
    if max_steps == 0 {
        return Err(Error::InvalidArgument("max_steps must be >= 1".into()));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut states = Vec::new();
    let mut dists = Vec::new();
    let mut state = start;
    let mut truncated = false;
    for step in 0..=max_steps {
        states.push(state);
        dists.push(policy.row(state).to_vec());
        if mdp.terminal[state] {
            break;
        }
        if step == max_steps {
            truncated = true;
            break;
        }
        let action = rng.sample_index(policy.row(state));
        state = rng.sample_index(mdp.transition_row(state, action));
    }
    Ok(Trajectory {
        states,
        action_dists: dists,
        source_mdp: String::new(),
        truncated,
    })
}

/// Mix each policy row toward the uniform distribution over non-greedy
/// actions: mass `1 - eps` on the row's best action, `eps` spread evenly
/// over the rest. `eps = 0` returns the input unchanged.
pub fn epsilon_suboptimal(optimal: &Policy, eps: f64) -> Result<Policy> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "eps must lie in [0, 1], got {eps}"
        )));
    }
    if eps == 0.0 {
        return Ok(optimal.clone());
    }
    if optimal.n_actions < 2 {
        return Err(Error::InvalidArgument(
            "needs at least two actions to spread mass".into(),
        ));
    }
    let spread = eps / (optimal.n_actions - 1) as f64;
    let mut probs = vec![0.0; optimal.probs.len()];
    for s in 0..optimal.n_states {
        let best = optimal.greedy_action(s);
        for a in 0..optimal.n_actions {
            probs[s * optimal.n_actions + a] = if a == best { 1.0 - eps } else { spread };
        }
    }
    Policy::new(optimal.n_states, optimal.n_actions, probs)
}

/// Exact solution of v(y) = TV(pi_tilde(y), pi_star(y)) + gamma * sum_y'
/// P^{pi_tilde}(y'|y) v(y'), the discounted divergence accumulated while
/// following `pi_tilde`. Solved to sup residual <= 1e-10.
pub fn discounted_policy_divergence(
    mdp: &TabularMdp,
    pi_tilde: &Policy,
    pi_star: &Policy,
) -> Result<Vec<f64>> {
    if pi_tilde.n_states != mdp.n_states || pi_star.n_states != mdp.n_states {
        return Err(Error::DimensionMismatch(
            "policies must cover the MDP's states".into(),
        ));
    }
    let tv: Vec<f64> = (0..mdp.n_states)
        .map(|s| crate::metrics::tv_distance(pi_tilde.row(s), pi_star.row(s)))
        .collect::<Result<Vec<_>>>()?;
    solve_discounted_linear(mdp, pi_tilde, &tv, 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::cake_mdp;

    fn single_terminal_mdp() -> TabularMdp {
        TabularMdp::new(
            1,
            2,
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            0.9,
            vec![true],
            vec![0],
        )
        .unwrap()
    }

    // Two states: a0 from s0 pays 1 and enters the terminal s1, a1 pays 0.
    fn two_state_chain() -> TabularMdp {
        TabularMdp::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 0.0],
            vec![
                0.0, 1.0, // s0, a0
                0.0, 1.0, // s0, a1
                0.0, 1.0, // s1, a0
                0.0, 1.0, // s1, a1
            ],
            0.9,
            vec![false, true],
            vec![0],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_transition_row() {
        let err = TabularMdp::new(
            1,
            1,
            vec![0.0],
            vec![0.5],
            0.9,
            vec![false],
            vec![0],
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_nonabsorbing_terminal() {
        let err = TabularMdp::new(
            2,
            1,
            vec![0.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
            0.9,
            vec![true, false],
            vec![0],
        );
        assert!(err.is_err());
    }

    #[test]
    fn value_iteration_on_terminal_singleton() {
        let mdp = single_terminal_mdp();
        let (values, policy) = value_iteration(&mdp, 1e-10).unwrap();
        assert_eq!(values, vec![0.0]);
        assert_eq!(policy.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn value_iteration_on_two_state_chain() {
        let mdp = two_state_chain();
        let (values, policy) = value_iteration(&mdp, 1e-10).unwrap();
        assert!((values[0] - 1.0).abs() <= 1e-9);
        assert_eq!(policy.greedy_action(0), 0);
    }

    #[test]
    fn value_iteration_on_cake_mdp() {
        let mdp = cake_mdp(1.0, 0.9).unwrap();
        let (values, policy) = value_iteration(&mdp, 1e-10).unwrap();
        assert_eq!(policy.greedy_action(0), 0);
        assert_eq!(policy.greedy_action(1), 1);
        assert!((values[0] - 1.9).abs() <= 1e-9);
    }

    #[test]
    fn value_iteration_residual_is_monotone() {
        let mdp = cake_mdp(2.0, 0.95).unwrap();
        let sparse = sparse_rows(&mdp);
        let mut values = vec![0.0; mdp.n_states];
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let next = bellman_backup(&mdp, &sparse, &values);
            let residual = sup_diff(&next, &values);
            assert!(residual <= last + 1e-12);
            last = residual;
            values = next;
        }
    }

    #[test]
    fn greedy_policy_evaluates_to_optimal_values() {
        let mdp = cake_mdp(1.5, 0.9).unwrap();
        let tol = 1e-9;
        let (values, policy) = value_iteration(&mdp, tol).unwrap();
        let evaluated = policy_evaluation(&mdp, &policy, tol).unwrap();
        for (v, e) in values.iter().zip(&evaluated) {
            assert!((v - e).abs() <= 10.0 * tol);
        }
    }

    #[test]
    fn rollout_walks_deterministic_chain() {
        // s0 -> s1 -> s2(terminal), single action.
        let mdp = TabularMdp::new(
            3,
            1,
            vec![0.0, 0.0, 0.0],
            vec![
                0.0, 1.0, 0.0, // s0
                0.0, 0.0, 1.0, // s1
                0.0, 0.0, 1.0, // s2
            ],
            0.9,
            vec![false, false, true],
            vec![0],
        )
        .unwrap();
        let policy = Policy::uniform(3, 1);
        let traj = rollout(&mdp, &policy, 0, 100, 0).unwrap();
        assert_eq!(traj.states, vec![0, 1, 2]);
        assert!(!traj.truncated);
        assert_eq!(traj.len(), traj.action_dists.len());
        let trimmed = traj.without_terminal(&mdp);
        assert_eq!(trimmed.states, vec![0, 1]);
    }

    #[test]
    fn rollout_is_reproducible_from_seed() {
        let mdp = TabularMdp::new(
            2,
            2,
            vec![0.0; 4],
            vec![
                0.5, 0.5, // s0 a0
                0.2, 0.8, // s0 a1
                0.9, 0.1, // s1 a0
                0.3, 0.7, // s1 a1
            ],
            0.9,
            vec![false, false],
            vec![0],
        )
        .unwrap();
        let policy = Policy::uniform(2, 2);
        let a = rollout(&mdp, &policy, 0, 50, 1234).unwrap();
        let b = rollout(&mdp, &policy, 0, 50, 1234).unwrap();
        assert_eq!(a, b);
        assert!(a.truncated);
        assert_eq!(a.len(), 51);
    }

    #[test]
    fn epsilon_zero_is_identity() {
        let policy = Policy::deterministic(3, 2, &[0, 1, 0]).unwrap();
        let same = epsilon_suboptimal(&policy, 0.0).unwrap();
        assert_eq!(policy, same);
    }

    #[test]
    fn epsilon_half_on_two_actions_is_uniform() {
        let policy = Policy::deterministic(3, 2, &[0, 1, 0]).unwrap();
        let perturbed = epsilon_suboptimal(&policy, 0.5).unwrap();
        for s in 0..3 {
            assert_eq!(perturbed.row(s), &[0.5, 0.5]);
        }
    }

    #[test]
    fn epsilon_spreads_over_non_greedy_actions() {
        let policy = Policy::deterministic(1, 3, &[1]).unwrap();
        let perturbed = epsilon_suboptimal(&policy, 0.3).unwrap();
        let row = perturbed.row(0);
        assert!((row[0] - 0.15).abs() < 1e-15);
        assert!((row[1] - 0.7).abs() < 1e-15);
        assert!((row[2] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn epsilon_one_removes_greedy_mass() {
        let policy = Policy::deterministic(1, 3, &[1]).unwrap();
        let perturbed = epsilon_suboptimal(&policy, 1.0).unwrap();
        assert_eq!(perturbed.row(0)[1], 0.0);
    }

    #[test]
    fn epsilon_out_of_range_rejected() {
        let policy = Policy::deterministic(1, 2, &[0]).unwrap();
        assert!(epsilon_suboptimal(&policy, 1.5).is_err());
        assert!(epsilon_suboptimal(&policy, -0.1).is_err());
    }

    #[test]
    fn divergence_zero_for_equal_policies() {
        let mdp = cake_mdp(1.0, 0.9).unwrap();
        let (_, policy) = value_iteration(&mdp, 1e-10).unwrap();
        let v = discounted_policy_divergence(&mdp, &policy, &policy).unwrap();
        assert!(v.iter().all(|&x| x.abs() <= 1e-12));
    }

    #[test]
    fn divergence_geometric_series_on_self_loop() {
        // One non-terminal state looping on itself, policies fully disagree.
        let mdp = TabularMdp::new(
            1,
            2,
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            0.9,
            vec![false],
            vec![0],
        )
        .unwrap();
        let a = Policy::deterministic(1, 2, &[0]).unwrap();
        let b = Policy::deterministic(1, 2, &[1]).unwrap();
        let v = discounted_policy_divergence(&mdp, &a, &b).unwrap();
        assert!((v[0] - 10.0).abs() <= 1e-8, "v = {}", v[0]);
    }

    #[test]
    fn divergence_only_at_start_when_downstream_agrees() {
        // s0 -> s1 -> terminal s2; policies differ only at s0 but both
        // actions at s0 lead to s1, so downstream TV is zero.
        let mdp = TabularMdp::new(
            3,
            2,
            vec![0.0; 6],
            vec![
                0.0, 1.0, 0.0, // s0 a0
                0.0, 1.0, 0.0, // s0 a1
                0.0, 0.0, 1.0, // s1 a0
                0.0, 0.0, 1.0, // s1 a1
                0.0, 0.0, 1.0, // s2 a0
                0.0, 0.0, 1.0, // s2 a1
            ],
            0.5,
            vec![false, false, true],
            vec![0],
        )
        .unwrap();
        let tilde = Policy::deterministic(3, 2, &[0, 0, 0]).unwrap();
        let star = Policy::deterministic(3, 2, &[1, 0, 0]).unwrap();
        let v = discounted_policy_divergence(&mdp, &tilde, &star).unwrap();
        assert!((v[0] - 1.0).abs() <= 1e-9);
        assert!(v[1].abs() <= 1e-10);
    }

    #[test]
    fn divergence_bounded_by_discount_series() {
        let mdp = cake_mdp(1.0, 0.9).unwrap();
        let a = Policy::deterministic(3, 2, &[0, 0, 0]).unwrap();
        let b = Policy::deterministic(3, 2, &[1, 1, 1]).unwrap();
        let v = discounted_policy_divergence(&mdp, &a, &b).unwrap();
        let cap = 1.0 / (1.0 - mdp.gamma) + 1e-9;
        assert!(v.iter().all(|&x| x <= cap));
    }

    #[test]
    fn json_round_trip() {
        let mdp = cake_mdp(1.0, 0.9).unwrap();
        let value = mdp.to_json();
        let back = TabularMdp::from_json(&value).unwrap();
        assert_eq!(mdp, back);
    }
}
