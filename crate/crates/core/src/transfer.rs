//! Nearest-neighbor policy transfer between MDPs and empirical verification
//! of the guarantees that make it sound: the discounted policy-divergence
//! bound, the approximation bound for metrics computed from suboptimal
//! policies, and the cake-MDP ordering that separates reward-based metrics
//! from the policy similarity metric.

use serde::{Deserialize, Serialize};

use crate::envs::cake_mdp;
use crate::error::{Error, Result};
use crate::mdp::{
    discounted_policy_divergence, epsilon_suboptimal, value_iteration, Policy, TabularMdp,
};
use crate::metrics::{
    bisimulation, generalized_psm, pi_bisimulation, psm_exact, DistKind, MetricKind,
    PairwiseMetricTable,
};
use crate::rng::Rng;

/// Per-state record of the transfer bound check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferStateRecord {
    pub state: usize,
    pub matched_source: usize,
    pub metric_distance: f64,
    pub lhs_divergence: f64,
    pub rhs_bound: f64,
    pub slack: f64,
}

/// Self-contained report of one transfer-bound verification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferReport {
    pub gamma: f64,
    pub metric_kind: MetricKind,
    pub tolerance: f64,
    pub per_state: Vec<TransferStateRecord>,
    /// max(LHS - RHS) over states; at most the tolerance when the bound holds.
    pub max_violation: f64,
    pub n_states: usize,
    pub n_violations: usize,
}

impl TransferReport {
    pub fn holds(&self) -> bool {
        self.n_violations == 0
    }
}

/// Column-wise argmin of the metric table: the closest source state for
/// every target state, ties to the lowest row index.
pub fn nearest_neighbor_match(table: &PairwiseMetricTable) -> Result<Vec<usize>> {
    if table.values.is_empty() {
        return Err(Error::InvalidArgument("empty metric table".into()));
    }
    let mut matching = Vec::with_capacity(table.n_cols());
    for y in 0..table.n_cols() {
        let mut best = 0;
        for x in 1..table.n_rows() {
            if table.at(x, y) < table.at(best, y) {
                best = x;
            }
        }
        matching.push(best);
    }
    Ok(matching)
}

/// Lift a source policy through a matching: pi_tilde(y) = pi_x(match(y)).
pub fn transfer_policy(pi_x: &Policy, matching: &[usize], n_target_states: usize) -> Result<Policy> {
    if matching.len() != n_target_states {
        return Err(Error::DimensionMismatch(format!(
            "matching covers {} states, target has {n_target_states}",
            matching.len()
        )));
    }
    let mut probs = Vec::with_capacity(n_target_states * pi_x.n_actions);
    for &x in matching {
        if x >= pi_x.n_states {
            return Err(Error::InvalidArgument(format!(
                "matched source state {x} out of range"
            )));
        }
        probs.extend_from_slice(pi_x.row(x));
    }
    Policy::new(n_target_states, pi_x.n_actions, probs)
}

const BOUND_SLACK_TOL: f64 = 1e-9;

/// Check, state by state, that the exact discounted divergence between the
/// transferred policy and the target's optimal policy stays below
/// (1 + gamma) / (1 - gamma) times the metric distance of the match.
pub fn verify_transfer_bound(
    mdp_y: &TabularMdp,
    pi_star_y: &Policy,
    pi_tilde: &Policy,
    table: &PairwiseMetricTable,
    matching: &[usize],
) -> Result<TransferReport> {
    if table.metric_kind != MetricKind::Psm || table.dist_kind != DistKind::Tv {
        return Err(Error::InvalidArgument(
            "transfer bound needs a PSM table with the TV distance".into(),
        ));
    }
    if table.gamma != mdp_y.gamma {
        return Err(Error::GammaMismatch {
            left: table.gamma,
            right: mdp_y.gamma,
        });
    }
    if matching.len() != mdp_y.n_states || table.n_cols() != mdp_y.n_states {
        return Err(Error::DimensionMismatch(
            "matching/table must cover the target MDP".into(),
        ));
    }
    let lhs = discounted_policy_divergence(mdp_y, pi_tilde, pi_star_y)?;
    let gamma = mdp_y.gamma;
    let factor = (1.0 + gamma) / (1.0 - gamma);
    let mut per_state = Vec::with_capacity(mdp_y.n_states);
    let mut max_violation = f64::NEG_INFINITY;
    let mut n_violations = 0;
    for y in 0..mdp_y.n_states {
        let d = table.at(matching[y], y);
        let rhs = factor * d;
        let violation = lhs[y] - rhs;
        if violation > BOUND_SLACK_TOL {
            n_violations += 1;
        }
        max_violation = max_violation.max(violation);
        per_state.push(TransferStateRecord {
            state: y,
            matched_source: matching[y],
            metric_distance: d,
            lhs_divergence: lhs[y],
            rhs_bound: rhs,
            slack: rhs - lhs[y],
        });
    }
    Ok(TransferReport {
        gamma,
        metric_kind: table.metric_kind,
        tolerance: BOUND_SLACK_TOL,
        per_state,
        max_violation,
        n_states: mdp_y.n_states,
        n_violations,
    })
}

/// Entrywise check of |d*(x,y) - d_hat(x,y)| against the generalized-PSM
/// bound d((x,pi*),(x,pi_hat)) + d((y,pi_hat),(y,pi*)).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxBoundReport {
    pub max_violation: f64,
    pub mean_gap: f64,
    pub max_abs_error: f64,
    pub n_entries: usize,
    pub n_violations: usize,
}

impl ApproxBoundReport {
    pub fn holds(&self) -> bool {
        self.n_violations == 0
    }
}

pub fn verify_psm_approx_bound(
    mdp_x: &TabularMdp,
    mdp_y: &TabularMdp,
    pi_star_x: &Policy,
    pi_star_y: &Policy,
    pi_hat_x: &Policy,
    pi_hat_y: &Policy,
    tol: f64,
) -> Result<ApproxBoundReport> {
    let exact = psm_exact(mdp_x, pi_star_x, mdp_y, pi_star_y, DistKind::Tv, tol)?;
    let approx = generalized_psm(mdp_x, pi_hat_x, mdp_y, pi_hat_y, DistKind::Tv, tol)?;
    let self_x = generalized_psm(mdp_x, pi_star_x, mdp_x, pi_hat_x, DistKind::Tv, tol)?;
    let self_y = generalized_psm(mdp_y, pi_hat_y, mdp_y, pi_star_y, DistKind::Tv, tol)?;

    let mut max_violation = f64::NEG_INFINITY;
    let mut n_violations = 0;
    let mut gap_sum = 0.0;
    let mut max_abs_error = 0.0f64;
    for x in 0..mdp_x.n_states {
        for y in 0..mdp_y.n_states {
            let err = (exact.at(x, y) - approx.at(x, y)).abs();
            let bound = self_x.at(x, x) + self_y.at(y, y);
            let violation = err - bound;
            if violation > BOUND_SLACK_TOL {
                n_violations += 1;
            }
            max_violation = max_violation.max(violation);
            gap_sum += err;
            max_abs_error = max_abs_error.max(err);
        }
    }
    let n_entries = mdp_x.n_states * mdp_y.n_states;
    Ok(ApproxBoundReport {
        max_violation,
        mean_gap: gap_sum / n_entries as f64,
        max_abs_error,
        n_entries,
        n_violations,
    })
}

/// The cake-MDP ordering: reward-based metrics call the out-of-phase states
/// closer whenever r_y > (1 + 1/gamma) r_x, while the PSM puts the aligned
/// start states at distance zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub r_x: f64,
    pub r_y: f64,
    pub gamma: f64,
    pub bisim_aligned: f64,
    pub bisim_crossed: f64,
    pub pi_bisim_aligned: f64,
    pub pi_bisim_crossed: f64,
    pub psm_aligned: f64,
    pub holds: bool,
}

pub fn verify_bisim_counterexample(r_x: f64, r_y: f64, gamma: f64) -> Result<CounterexampleReport> {
    if r_y <= (1.0 + 1.0 / gamma) * r_x {
        return Err(Error::InvalidArgument(format!(
            "needs r_y > (1 + 1/gamma) r_x = {}",
            (1.0 + 1.0 / gamma) * r_x
        )));
    }
    let mx = cake_mdp(r_x, gamma)?;
    let my = cake_mdp(r_y, gamma)?;
    let (_, px) = value_iteration(&mx, 1e-12)?;
    let (_, py) = value_iteration(&my, 1e-12)?;
    let tol = 1e-12;
    let bisim = bisimulation(&mx, &my, tol)?;
    let pi_bisim = pi_bisimulation(&mx, &px, &my, &py, tol)?;
    let psm = psm_exact(&mx, &px, &my, &py, DistKind::Tv, tol)?;
    let report = CounterexampleReport {
        r_x,
        r_y,
        gamma,
        bisim_aligned: bisim.at(0, 0),
        bisim_crossed: bisim.at(0, 1),
        pi_bisim_aligned: pi_bisim.at(0, 0),
        pi_bisim_crossed: pi_bisim.at(0, 1),
        psm_aligned: psm.at(0, 0),
        holds: bisim.at(0, 1) < bisim.at(0, 0) - BOUND_SLACK_TOL
            && pi_bisim.at(0, 1) < pi_bisim.at(0, 0) - BOUND_SLACK_TOL
            && psm.at(0, 0).abs() <= BOUND_SLACK_TOL,
    };
    Ok(report)
}

/// Parameters of the random-MDP corpus; fixed so that failures replay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuzzCorpusConfig {
    pub pairs: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub gammas: Vec<f64>,
    pub seed: u64,
}

impl Default for FuzzCorpusConfig {
    fn default() -> Self {
        FuzzCorpusConfig {
            pairs: 200,
            max_states: 8,
            max_actions: 3,
            gammas: vec![0.5, 0.9, 0.99],
            seed: 2024,
        }
    }
}

/// Random MDP with a mix of deterministic and stochastic rows and an
/// occasional absorbing terminal state.
pub fn random_mdp(
    rng: &mut Rng,
    config: &FuzzCorpusConfig,
    n_actions: usize,
    gamma: f64,
) -> TabularMdp {
    let n_states = 2 + rng.range_usize(config.max_states - 1);
    let deterministic = rng.f64() < 0.5;
    let with_terminal = rng.f64() < 0.4;
    let mut reward = vec![0.0; n_states * n_actions];
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut terminal = vec![false; n_states];
    if with_terminal {
        terminal[n_states - 1] = true;
    }
    for s in 0..n_states {
        for a in 0..n_actions {
            if terminal[s] {
                transition[(s * n_actions + a) * n_states + s] = 1.0;
                continue;
            }
            reward[s * n_actions + a] = rng.f64();
            let base = (s * n_actions + a) * n_states;
            if deterministic {
                let next = rng.range_usize(n_states);
                transition[base + next] = 1.0;
            } else {
                let mut weights: Vec<f64> = (0..n_states).map(|_| rng.f64().powi(2)).collect();
                // Sparsify a little so supports vary.
                for w in weights.iter_mut() {
                    if rng.f64() < 0.4 {
                        *w = 0.0;
                    }
                }
                let sum: f64 = weights.iter().sum();
                if sum <= 0.0 {
                    let next = rng.range_usize(n_states);
                    transition[base + next] = 1.0;
                } else {
                    for (i, w) in weights.iter().enumerate() {
                        transition[base + i] = w / sum;
                    }
                }
            }
        }
    }
    TabularMdp::new(
        n_states,
        n_actions,
        reward,
        transition,
        gamma,
        terminal,
        vec![0],
    )
    .expect("random MDP construction is valid by construction")
}

/// Outcome of fuzzing the transfer bound over the corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuzzSummary {
    pub config: FuzzCorpusConfig,
    pub pairs_checked: usize,
    pub total_states_checked: usize,
    pub max_violation: f64,
    pub n_violations: usize,
}

impl FuzzSummary {
    pub fn holds(&self) -> bool {
        self.n_violations == 0
    }
}

/// For each random MDP pair: optimal policies, PSM, nearest-neighbor
/// transfer, then the divergence bound at every target state.
pub fn fuzz_transfer_bound(config: &FuzzCorpusConfig) -> Result<FuzzSummary> {
    let mut rng = Rng::seed_from_u64(config.seed);
    let mut max_violation = f64::NEG_INFINITY;
    let mut n_violations = 0;
    let mut total_states = 0;
    for pair in 0..config.pairs {
        let gamma = config.gammas[pair % config.gammas.len()];
        let n_actions = 2 + rng.range_usize(config.max_actions - 1);
        let mx = random_mdp(&mut rng, config, n_actions, gamma);
        let my = random_mdp(&mut rng, config, n_actions, gamma);
        let (_, px) = value_iteration(&mx, 1e-12)?;
        let (_, py) = value_iteration(&my, 1e-12)?;
        let table = psm_exact(&mx, &px, &my, &py, DistKind::Tv, 1e-11)?;
        let matching = nearest_neighbor_match(&table)?;
        let pi_tilde = transfer_policy(&px, &matching, my.n_states)?;
        let report = verify_transfer_bound(&my, &py, &pi_tilde, &table, &matching)?;
        max_violation = max_violation.max(report.max_violation);
        n_violations += report.n_violations;
        total_states += report.n_states;
    }
    Ok(FuzzSummary {
        config: config.clone(),
        pairs_checked: config.pairs,
        total_states_checked: total_states,
        max_violation,
        n_violations,
    })
}

/// Per-epsilon aggregate of the approximation-bound fuzz.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxFuzzSummary {
    pub eps: f64,
    pub pairs_checked: usize,
    pub max_violation: f64,
    pub mean_gap: f64,
    pub n_violations: usize,
}

/// Approximation-bound fuzz across a grid of policy perturbations. Reuses
/// one frozen corpus of MDP pairs for every epsilon so the mean gaps are
/// comparable.
pub fn fuzz_psm_approx_bound(
    config: &FuzzCorpusConfig,
    epsilons: &[f64],
) -> Result<Vec<ApproxFuzzSummary>> {
    let mut rng = Rng::seed_from_u64(config.seed);
    let mut corpus = Vec::with_capacity(config.pairs);
    for pair in 0..config.pairs {
        let gamma = config.gammas[pair % config.gammas.len()];
        let n_actions = 2 + rng.range_usize(config.max_actions - 1);
        let mx = random_mdp(&mut rng, config, n_actions, gamma);
        let my = random_mdp(&mut rng, config, n_actions, gamma);
        let (_, px) = value_iteration(&mx, 1e-12)?;
        let (_, py) = value_iteration(&my, 1e-12)?;
        corpus.push((mx, px, my, py));
    }
    // Converged table values carry error up to residual_tol * gamma /
    // (1 - gamma); four tables enter the bound, so solve tightly enough
    // that the stack stays under the 1e-9 slack. The exact table does not
    // depend on eps and is computed once per pair.
    let tol_for = |gamma: f64| ((1.0 - gamma) * 1e-10).max(1e-13);
    let exact_tables: Vec<PairwiseMetricTable> = corpus
        .iter()
        .map(|(mx, px, my, py)| {
            psm_exact(mx, px, my, py, DistKind::Tv, tol_for(mx.gamma))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut max_violation = f64::NEG_INFINITY;
        let mut n_violations = 0;
        let mut gap_sum = 0.0;
        for ((mx, px, my, py), exact) in corpus.iter().zip(&exact_tables) {
            let tol = tol_for(mx.gamma);
            let hat_x = epsilon_suboptimal(px, eps)?;
            let hat_y = epsilon_suboptimal(py, eps)?;
            let approx = generalized_psm(mx, &hat_x, my, &hat_y, DistKind::Tv, tol)?;
            let self_x = generalized_psm(mx, px, mx, &hat_x, DistKind::Tv, tol)?;
            let self_y = generalized_psm(my, &hat_y, my, py, DistKind::Tv, tol)?;
            let mut gap = 0.0;
            for x in 0..mx.n_states {
                for y in 0..my.n_states {
                    let err = (exact.at(x, y) - approx.at(x, y)).abs();
                    let bound = self_x.at(x, x) + self_y.at(y, y);
                    let violation = err - bound;
                    if violation > BOUND_SLACK_TOL {
                        n_violations += 1;
                    }
                    max_violation = max_violation.max(violation);
                    gap += err;
                }
            }
            gap_sum += gap / (mx.n_states * my.n_states) as f64;
        }
        out.push(ApproxFuzzSummary {
            eps,
            pairs_checked: corpus.len(),
            max_violation,
            mean_gap: gap_sum / corpus.len() as f64,
            n_violations,
        });
    }
    Ok(out)
}
