//! Behavioral similarity metrics between the states of two finite MDPs.
//!
//! Everything is computed exactly: the 1-Wasserstein subproblems are solved
//! by an exact transport solver and the recursive metrics by Jacobi
//! fixed-point sweeps of their defining operators, which are gamma
//! contractions. The supported metrics:
//!
//! * bisimulation: worst-case-over-actions reward difference plus discounted
//!   transport of next-state distributions;
//! * pi-bisimulation: the same recursion grounded in a single policy;
//! * policy similarity metric (PSM): the policy-grounded recursion with the
//!   reward difference replaced by a probability distance between the
//!   policies themselves;
//! * generalized PSM: PSM evaluated for two arbitrary (state, policy) pairs.

mod transport;

pub use transport::{wasserstein1, wasserstein1_under_metric, CouplingCertificate};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Bisimulation,
    PiBisimulation,
    Psm,
    GeneralizedPsm,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            MetricKind::Bisimulation => "bisimulation",
            MetricKind::PiBisimulation => "pi_bisimulation",
            MetricKind::Psm => "psm",
            MetricKind::GeneralizedPsm => "generalized_psm",
        };
        f.write_str(name)
    }
}

/// Local distance between two action distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    /// Total variation distance; the right choice for discrete actions.
    Tv,
    /// l1 distance between mean-action vectors, for continuous action
    /// spaces whose policies are summarized by their means.
    L1MeanAction,
}

impl DistKind {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            DistKind::Tv => tv_distance(a, b),
            DistKind::L1MeanAction => {
                if a.len() != b.len() {
                    return Err(Error::DimensionMismatch(
                        "mean-action vectors differ in length".into(),
                    ));
                }
                Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
            }
        }
    }
}

/// Total variation distance between two discrete distributions:
/// half the l1 distance.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "tv_distance got lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Gaussian similarity kernel exp(-d / beta), mapping distances to (0, 1].
pub fn gaussian_kernel(d: f64, beta: f64) -> Result<f64> {
    if beta <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "kernel scale must be positive, got {beta}"
        )));
    }
    if d < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "distance must be nonnegative, got {d}"
        )));
    }
    Ok((-d / beta).exp())
}

/// Dense matrix of metric distances between the states of two MDPs, with
/// the provenance needed to interpret it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairwiseMetricTable {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Row-major |rows| x |cols|.
    pub values: Vec<f64>,
    pub metric_kind: MetricKind,
    pub gamma: f64,
    pub dist_kind: DistKind,
    pub tol: f64,
    pub iterations: usize,
}

impl PairwiseMetricTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols.len() + j]
    }

    /// CSV with row/col state ids in headers and full-precision decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("state");
        for c in &self.cols {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(r);
            for j in 0..self.cols.len() {
                out.push(',');
                out.push_str(&format!("{}", self.at(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-iteration sup-norm residuals of a fixed-point solve; used to check
/// the contraction rate observed while converging.
#[derive(Debug, Clone)]
pub struct SolveDiagnostics {
    pub residuals: Vec<f64>,
    pub gamma: f64,
}

impl SolveDiagnostics {
    /// Largest ratio of successive sup-norm residuals after the first
    /// iteration. Table entries are rounded at 2^-52 times the value scale,
    /// so ratios of residuals below roughly 1e-6 of the starting residual
    /// carry more rounding noise than the 1e-9 slack the contraction bound
    /// is checked against; those trailing iterations are excluded.
    pub fn max_contraction_ratio(&self) -> f64 {
        // Converged values reach first_residual / (1 - gamma), which sets
        // the rounding scale of each table entry.
        let scale = (self.residuals.first().copied().unwrap_or(1.0)
            / (1.0 - self.gamma).max(1e-3))
        .max(1.0);
        self.max_contraction_ratio_above(1e-6 * scale)
    }

    pub fn max_contraction_ratio_above(&self, floor: f64) -> f64 {
        self.residuals
            .windows(2)
            .filter(|w| w[0] > floor)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }
}

fn default_labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Sweeps needed for a gamma contraction to push a residual of size `scale`
/// below `tol`, plus headroom. `scale` is 1 for bounded local distances
/// (TV) and larger for reward-difference bases.
fn iteration_cap(gamma: f64, tol: f64, scale: f64) -> usize {
    if gamma <= 0.0 {
        return 65;
    }
    let needed = (tol * (1.0 - gamma) / scale.max(1.0)).ln() / gamma.ln();
    needed.ceil().max(1.0) as usize + 64
}

struct PairProblem<'a> {
    mdp_x: &'a TabularMdp,
    pi_x: &'a Policy,
    mdp_y: &'a TabularMdp,
    pi_y: &'a Policy,
}

fn check_pair(mdp_x: &TabularMdp, mdp_y: &TabularMdp) -> Result<()> {
    if mdp_x.n_actions != mdp_y.n_actions {
        return Err(Error::DimensionMismatch(format!(
            "action counts differ: {} vs {}",
            mdp_x.n_actions, mdp_y.n_actions
        )));
    }
    if mdp_x.gamma != mdp_y.gamma {
        return Err(Error::GammaMismatch {
            left: mdp_x.gamma,
            right: mdp_y.gamma,
        });
    }
    Ok(())
}

/// Jacobi iteration of `operator` from `init` (all zeros when `None`) until
/// one more application changes no cell by more than `tol`.
fn solve_metric_fixed_point<F>(
    n_rows: usize,
    n_cols: usize,
    gamma: f64,
    tol: f64,
    init: Option<Vec<f64>>,
    operator: F,
) -> Result<(Vec<f64>, usize, SolveDiagnostics)>
where
    F: Fn(&[f64], usize, usize) -> Result<f64>,
{
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let mut current = match init {
        Some(v) => {
            if v.len() != n_rows * n_cols {
                return Err(Error::DimensionMismatch("bad init table size".into()));
            }
            v
        }
        None => vec![0.0; n_rows * n_cols],
    };
    let mut cap = iteration_cap(gamma, tol, 1.0);
    let mut residuals = Vec::new();
    let mut iteration = 0;
    loop {
        iteration += 1;
        let mut next = vec![0.0; n_rows * n_cols];
        let mut residual = 0.0f64;
        for x in 0..n_rows {
            for y in 0..n_cols {
                let v = operator(&current, x, y)?;
                residual = residual.max((v - current[x * n_cols + y]).abs());
                next[x * n_cols + y] = v;
            }
        }
        residuals.push(residual);
        current = next;
        if residual <= tol {
            return Ok((
                current,
                iteration,
                SolveDiagnostics { residuals, gamma },
            ));
        }
        if iteration == 1 {
            // The first sweep reveals the scale of the local distances.
            cap = cap.max(iteration_cap(gamma, tol, residual));
        }
        if iteration >= cap {
            return Err(Error::NonConvergence {
                iterations: cap,
                residual,
            });
        }
    }
}

fn policy_grounded_table(
    problem: &PairProblem,
    dist_kind: DistKind,
    tol: f64,
    metric_kind: MetricKind,
    init: Option<Vec<f64>>,
) -> Result<(PairwiseMetricTable, SolveDiagnostics)> {
    check_pair(problem.mdp_x, problem.mdp_y)?;
    if problem.pi_x.n_states != problem.mdp_x.n_states
        || problem.pi_y.n_states != problem.mdp_y.n_states
    {
        return Err(Error::DimensionMismatch(
            "policy does not cover its MDP".into(),
        ));
    }
    let n = problem.mdp_x.n_states;
    let m = problem.mdp_y.n_states;
    let gamma = problem.mdp_x.gamma;

    // Local distances and state-to-state rows are loop invariants.
    let mut base = vec![0.0; n * m];
    for x in 0..n {
        for y in 0..m {
            base[x * m + y] = match metric_kind {
                MetricKind::PiBisimulation => {
                    let rx = problem.mdp_x.policy_reward(x, problem.pi_x.row(x));
                    let ry = problem.mdp_y.policy_reward(y, problem.pi_y.row(y));
                    (rx - ry).abs()
                }
                _ => dist_kind.eval(problem.pi_x.row(x), problem.pi_y.row(y))?,
            };
        }
    }
    let rows_x: Vec<Vec<f64>> = (0..n)
        .map(|x| problem.mdp_x.policy_transition(x, problem.pi_x.row(x)))
        .collect();
    let rows_y: Vec<Vec<f64>> = (0..m)
        .map(|y| problem.mdp_y.policy_transition(y, problem.pi_y.row(y)))
        .collect();

    let (values, iterations, diagnostics) =
        solve_metric_fixed_point(n, m, gamma, tol, init, |table, x, y| {
            let w1 = wasserstein1_under_metric(table, m, &rows_x[x], &rows_y[y])?;
            Ok(base[x * m + y] + gamma * w1)
        })?;
    Ok((
        PairwiseMetricTable {
            rows: default_labels("x", n),
            cols: default_labels("y", m),
            values,
            metric_kind,
            gamma,
            dist_kind,
            tol,
            iterations,
        },
        diagnostics,
    ))
}

/// Policy similarity metric between the states of two MDPs, grounded in the
/// given (optimal) policies: fixed point of
/// d(x, y) = Dist(pi(x), pi(y)) + gamma * W1(d)(P^pi(.|x), P^pi(.|y)).
pub fn psm_exact(
    mdp_x: &TabularMdp,
    pi_x: &Policy,
    mdp_y: &TabularMdp,
    pi_y: &Policy,
    dist_kind: DistKind,
    tol: f64,
) -> Result<PairwiseMetricTable> {
    psm_exact_diag(mdp_x, pi_x, mdp_y, pi_y, dist_kind, tol, None).map(|(t, _)| t)
}

pub fn psm_exact_diag(
    mdp_x: &TabularMdp,
    pi_x: &Policy,
    mdp_y: &TabularMdp,
    pi_y: &Policy,
    dist_kind: DistKind,
    tol: f64,
    init: Option<Vec<f64>>,
) -> Result<(PairwiseMetricTable, SolveDiagnostics)> {
    policy_grounded_table(
        &PairProblem {
            mdp_x,
            pi_x,
            mdp_y,
            pi_y,
        },
        dist_kind,
        tol,
        MetricKind::Psm,
        init,
    )
}

/// PSM for two arbitrary (state, policy) pairs; the policies need not be
/// optimal. Specializing both to the optimal policy recovers `psm_exact`.
pub fn generalized_psm(
    mdp_x: &TabularMdp,
    pi_1: &Policy,
    mdp_y: &TabularMdp,
    pi_2: &Policy,
    dist_kind: DistKind,
    tol: f64,
) -> Result<PairwiseMetricTable> {
    generalized_psm_diag(mdp_x, pi_1, mdp_y, pi_2, dist_kind, tol, None).map(|(t, _)| t)
}

pub fn generalized_psm_diag(
    mdp_x: &TabularMdp,
    pi_1: &Policy,
    mdp_y: &TabularMdp,
    pi_2: &Policy,
    dist_kind: DistKind,
    tol: f64,
    init: Option<Vec<f64>>,
) -> Result<(PairwiseMetricTable, SolveDiagnostics)> {
    policy_grounded_table(
        &PairProblem {
            mdp_x,
            pi_x: pi_1,
            mdp_y,
            pi_y: pi_2,
        },
        dist_kind,
        tol,
        MetricKind::GeneralizedPsm,
        init,
    )
}

/// Pi-bisimulation: |R^pi(x) - R^pi(y)| + gamma * W1(d)(P^pi, P^pi).
pub fn pi_bisimulation(
    mdp_x: &TabularMdp,
    pi_x: &Policy,
    mdp_y: &TabularMdp,
    pi_y: &Policy,
    tol: f64,
) -> Result<PairwiseMetricTable> {
    pi_bisimulation_diag(mdp_x, pi_x, mdp_y, pi_y, tol, None).map(|(t, _)| t)
}

pub fn pi_bisimulation_diag(
    mdp_x: &TabularMdp,
    pi_x: &Policy,
    mdp_y: &TabularMdp,
    pi_y: &Policy,
    tol: f64,
    init: Option<Vec<f64>>,
) -> Result<(PairwiseMetricTable, SolveDiagnostics)> {
    policy_grounded_table(
        &PairProblem {
            mdp_x,
            pi_x,
            mdp_y,
            pi_y,
        },
        DistKind::Tv,
        tol,
        MetricKind::PiBisimulation,
        init,
    )
}

/// Bisimulation metric: the fixed point of
/// max_a [ |R(x,a) - R(y,a)| + gamma * W1(d)(P^a(.|x), P^a(.|y)) ].
pub fn bisimulation(mdp_x: &TabularMdp, mdp_y: &TabularMdp, tol: f64) -> Result<PairwiseMetricTable> {
    bisimulation_diag(mdp_x, mdp_y, tol, None).map(|(t, _)| t)
}

pub fn bisimulation_diag(
    mdp_x: &TabularMdp,
    mdp_y: &TabularMdp,
    tol: f64,
    init: Option<Vec<f64>>,
) -> Result<(PairwiseMetricTable, SolveDiagnostics)> {
    check_pair(mdp_x, mdp_y)?;
    let n = mdp_x.n_states;
    let m = mdp_y.n_states;
    let gamma = mdp_x.gamma;
    let (values, iterations, diagnostics) =
        solve_metric_fixed_point(n, m, gamma, tol, init, |table, x, y| {
            let mut worst = f64::NEG_INFINITY;
            for a in 0..mdp_x.n_actions {
                let dr = (mdp_x.reward_at(x, a) - mdp_y.reward_at(y, a)).abs();
                let w1 = wasserstein1_under_metric(
                    table,
                    m,
                    mdp_x.transition_row(x, a),
                    mdp_y.transition_row(y, a),
                )?;
                worst = worst.max(dr + gamma * w1);
            }
            Ok(worst)
        })?;
    Ok((
        PairwiseMetricTable {
            rows: default_labels("x", n),
            cols: default_labels("y", m),
            values,
            metric_kind: MetricKind::Bisimulation,
            gamma,
            dist_kind: DistKind::Tv,
            tol,
            iterations,
        },
        diagnostics,
    ))
}

const TRAJECTORY_DP_TOL: f64 = 1e-9;

/// PSM between the states of two trajectories from deterministic rollouts,
/// by the clamped dynamic program
/// d(i, j) = Dist(a_i, b_j) + gamma * d(min(i+1, N-1), min(j+1, M-1)).
/// The last index of each trajectory is absorbing with its stored action
/// distribution, so suffix pairs with identical behavior evaluate to zero.
pub fn psm_trajectory_dp(
    traj_x: &Trajectory,
    traj_y: &Trajectory,
    dist_kind: DistKind,
    gamma: f64,
) -> Result<PairwiseMetricTable> {
    psm_trajectory_dp_diag(traj_x, traj_y, dist_kind, gamma, None).map(|(t, _)| t)
}

pub fn psm_trajectory_dp_diag(
    traj_x: &Trajectory,
    traj_y: &Trajectory,
    dist_kind: DistKind,
    gamma: f64,
    init: Option<Vec<f64>>,
) -> Result<(PairwiseMetricTable, SolveDiagnostics)> {
    if traj_x.is_empty() || traj_y.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "gamma must lie in [0, 1), got {gamma}"
        )));
    }
    let n = traj_x.len();
    let m = traj_y.len();
    let mut base = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            base[i * m + j] = dist_kind.eval(&traj_x.action_dists[i], &traj_y.action_dists[j])?;
        }
    }
    let (values, iterations, diagnostics) =
        solve_metric_fixed_point(n, m, gamma, TRAJECTORY_DP_TOL, init, |table, i, j| {
            let ni = (i + 1).min(n - 1);
            let nj = (j + 1).min(m - 1);
            Ok(base[i * m + j] + gamma * table[ni * m + nj])
        })?;
    Ok((
        PairwiseMetricTable {
            rows: default_labels("x", n),
            cols: default_labels("y", m),
            values,
            metric_kind: MetricKind::Psm,
            gamma,
            dist_kind,
            tol: TRAJECTORY_DP_TOL,
            iterations,
        },
        diagnostics,
    ))
}
