//! The LQR generalization experiment: a Riccati oracle, truncated-horizon
//! cost evaluation with a stability diagnostic, two-layer linear policies
//! trained by gradient descent (plain, l1-sparse, or with metric state
//! aggregation), and scoring against the oracle on unseen distractors.

use serde::{Deserialize, Serialize};

use crate::envs::LqrSystem;
use crate::error::{Error, Result};
use crate::linalg::{random_semi_orthogonal, Mat};
use crate::rng::Rng;

/// Two-layer linear policy acting on observations: a = K2 K1 o.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub k1: Mat,
    pub k2: Mat,
}

impl LinearPolicy {
    /// Effective observation-space gain K = K2 K1.
    pub fn effective(&self) -> Mat {
        self.k2.matmul(&self.k1)
    }
}

/// Anything that maps the simulator's state to an action.
#[derive(Debug, Clone)]
pub enum LqrController {
    /// a = K s on the hidden state (the oracle's interface).
    State(Mat),
    /// a = K o on the observation.
    Observation(Mat),
}

impl LqrController {
    fn state_gain(&self, system: &LqrSystem) -> Mat {
        match self {
            LqrController::State(k) => k.clone(),
            LqrController::Observation(k) => k.matmul(&system.observation_matrix()),
        }
    }
}

/// Solve the discrete algebraic Riccati equation
/// P = Q + A'PA - A'PB (R + B'PB)^{-1} B'PA by fixed-point iteration from
/// P = Q, to a Frobenius residual of at most 1e-10.
pub fn dare_solve(system: &LqrSystem) -> Result<Mat> {
    const TOL: f64 = 1e-10;
    const MAX_ITERS: usize = 100_000;
    let a_t = system.a.transpose();
    let b_t = system.b.transpose();
    let mut p = system.q.clone();
    for _ in 0..MAX_ITERS {
        let next = dare_rhs(system, &a_t, &b_t, &p)?;
        let residual = next.sub(&p).frob_norm();
        p = next;
        if residual <= TOL {
            // The fixed-point residual is the definitional one here.
            let check = dare_rhs(system, &a_t, &b_t, &p)?.sub(&p).frob_norm();
            if check <= TOL {
                return Ok(p);
            }
        }
    }
    let residual = dare_rhs(system, &a_t, &b_t, &p)?.sub(&p).frob_norm();
    Err(Error::NonConvergence {
        iterations: MAX_ITERS,
        residual,
    })
}

fn dare_rhs(system: &LqrSystem, a_t: &Mat, b_t: &Mat, p: &Mat) -> Result<Mat> {
    let pa = p.matmul(&system.a);
    let pb = p.matmul(&system.b);
    let btpb = b_t.matmul(&pb).add(&system.r);
    let btpa = b_t.matmul(&pa);
    let gain = btpb.solve(&btpa)?; // (R + B'PB)^{-1} B'PA
    let correction = a_t.matmul(&pb).matmul(&gain);
    Ok(system.q.add(&a_t.matmul(&pa)).sub(&correction))
}

/// Optimal state-feedback controller a = -G s with
/// G = (R + B'PB)^{-1} B'PA.
pub fn oracle_controller(system: &LqrSystem, p_star: &Mat) -> Result<LqrController> {
    let b_t = system.b.transpose();
    let btpb = b_t.matmul(&p_star.matmul(&system.b)).add(&system.r);
    let btpa = b_t.matmul(&p_star.matmul(&system.a));
    let gain = btpb.solve(&btpa)?;
    Ok(LqrController::State(gain.scale(-1.0)))
}

/// The observation-space policy that generalizes across every distractor
/// draw: route the invariant block (undoing its 0.1 scale) through the
/// oracle gain and ignore the distractor block entirely.
pub fn generalizing_policy(system: &LqrSystem, p_star: &Mat) -> Result<Mat> {
    let gain = match oracle_controller(system, p_star)? {
        LqrController::State(g) => g,
        LqrController::Observation(_) => unreachable!(),
    };
    let left = gain.matmul(&system.w_c.transpose()).scale(1.0 / crate::envs::INVARIANT_SCALE);
    let mut k = Mat::zeros(system.n_a, system.obs_dim());
    for i in 0..system.n_a {
        for j in 0..system.n_s {
            k[(i, j)] = left[(i, j)];
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostReport {
    pub cost: f64,
    pub closed_loop_spectral_radius: f64,
}

/// Mean truncated cost (1/2) sum_t (s'Qs + a'Ra) over the init batch.
/// An unstable closed loop reports +infinity rather than an error.
pub fn lqr_cost(
    system: &LqrSystem,
    controller: &LqrController,
    horizon: usize,
    init_batch: &[Vec<f64>],
) -> Result<CostReport> {
    if horizon == 0 || init_batch.is_empty() {
        return Err(Error::InvalidArgument(
            "horizon and batch must be nonempty".into(),
        ));
    }
    let gain = controller.state_gain(system);
    let closed = system.a.add(&system.b.matmul(&gain));
    let rho = closed.spectral_radius();
    let mut total = 0.0f64;
    'batch: for s0 in init_batch {
        let mut s = s0.clone();
        for _ in 0..horizon {
            let u = gain.matvec(&s);
            let qs = system.q.matvec(&s);
            let ru = system.r.matvec(&u);
            let step: f64 = 0.5
                * (s.iter().zip(&qs).map(|(a, b)| a * b).sum::<f64>()
                    + u.iter().zip(&ru).map(|(a, b)| a * b).sum::<f64>());
            total += step;
            if !total.is_finite() || total > 1e200 {
                total = f64::INFINITY;
                break 'batch;
            }
            s = closed.matvec(&s);
        }
    }
    let cost = if total.is_finite() {
        total / init_batch.len() as f64
    } else {
        f64::INFINITY
    };
    Ok(CostReport {
        cost,
        closed_loop_spectral_radius: rho,
    })
}

/// Standard-normal init batch, reproducible from the seed.
pub fn init_batch(rng_seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = Rng::seed_from_u64(rng_seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.normal()).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LqrMethod {
    Overparam,
    L1Sparse,
    PsmAggregation,
}

impl std::str::FromStr for LqrMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overparam" => Ok(LqrMethod::Overparam),
            "l1" | "l1_sparse" => Ok(LqrMethod::L1Sparse),
            "psm" | "psm_aggregation" => Ok(LqrMethod::PsmAggregation),
            other => Err(Error::InvalidArgument(format!("unknown LQR method {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LqrTrainConfig {
    pub iters: usize,
    /// Initial step size; backtracking halves it whenever a step would
    /// increase the objective and grows it again after accepted steps.
    pub learning_rate: f64,
    pub max_learning_rate: f64,
    pub horizon: usize,
    /// Hidden width of the two-layer policy.
    pub hidden: usize,
    pub l1_weight: f64,
    /// Weight of the representation-matching penalty.
    pub agg_weight: f64,
    /// Observation pairs drawn per iteration.
    pub agg_pairs: usize,
    /// Rollout length per shared init while collecting pairs.
    pub agg_rollout: usize,
    /// Process noise injected independently into the two paired rollouts,
    /// keeping the pairs near-zero-metric rather than exactly zero. Exact
    /// pairs only ever differ in the span of (W_dx - W_dy) and leave the
    /// policy free to lean on the shared distractor component; the noise
    /// makes every use of the distractor block visible to the penalty.
    pub agg_noise: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for LqrTrainConfig {
    fn default() -> Self {
        LqrTrainConfig {
            iters: 1200,
            learning_rate: 0.05,
            max_learning_rate: 0.5,
            horizon: 200,
            hidden: 200,
            l1_weight: 1e-3,
            agg_weight: 2.0,
            agg_pairs: 64,
            agg_rollout: 4,
            agg_noise: 0.0,
            init_scale: 1e-3,
            seed: 0,
        }
    }
}

/// Exact expected truncated cost over s0 ~ N(0, I) by covariance
/// propagation: J = (1/2) sum_t tr((Q + K'RK) Sigma_t) with
/// Sigma_{t+1} = M Sigma_t M', M = A + BK. Returns +infinity on overflow.
pub fn expected_cost(system: &LqrSystem, k_eff: &Mat, horizon: usize) -> f64 {
    let m = system.a.add(&system.b.matmul(k_eff));
    let h = system
        .q
        .add(&k_eff.transpose().matmul(&system.r.matmul(k_eff)));
    let mut sigma = Mat::identity(system.n_s);
    let mut total = 0.0f64;
    for _ in 0..horizon {
        total += 0.5 * trace_product(&h, &sigma);
        if !total.is_finite() || total > 1e200 {
            return f64::INFINITY;
        }
        sigma = m.matmul(&sigma.matmul(&m.transpose()));
    }
    total
}

fn trace_product(a: &Mat, b: &Mat) -> f64 {
    // tr(A B) for symmetric B = sum_ij A_ij B_ji.
    debug_assert_eq!((a.rows, a.cols), (b.cols, b.rows));
    let mut acc = 0.0;
    for i in 0..a.rows {
        for j in 0..a.cols {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Expected cost and its gradient with respect to the effective state gain.
/// Forward pass stores the state covariances; the backward pass runs the
/// matrix adjoint Lambda_t = H/2 + M' Lambda_{t+1} M and accumulates
/// dJ/dK = sum_t (R K Sigma_t + 2 B' Lambda_{t+1} M Sigma_t).
pub fn cost_and_gain_gradient(
    system: &LqrSystem,
    k_eff: &Mat,
    horizon: usize,
) -> Result<(f64, Mat)> {
    let m = system.a.add(&system.b.matmul(k_eff));
    let m_t = m.transpose();
    let h = system
        .q
        .add(&k_eff.transpose().matmul(&system.r.matmul(k_eff)));
    let rk = system.r.matmul(k_eff);
    let b_t = system.b.transpose();

    let mut sigmas = Vec::with_capacity(horizon);
    let mut sigma = Mat::identity(system.n_s);
    let mut total = 0.0f64;
    for t in 0..horizon {
        total += 0.5 * trace_product(&h, &sigma);
        if !total.is_finite() {
            return Err(Error::Diverged {
                step: t,
                detail: "non-finite training cost".into(),
            });
        }
        sigmas.push(sigma.clone());
        if t + 1 < horizon {
            sigma = m.matmul(&sigma.matmul(&m_t));
        }
    }

    let mut grad = Mat::zeros(k_eff.rows, k_eff.cols);
    let mut lambda_next = Mat::zeros(system.n_s, system.n_s);
    for t in (0..horizon).rev() {
        let sigma_t = &sigmas[t];
        grad = grad.add(&rk.matmul(sigma_t));
        if t + 1 < horizon {
            // 2 B' Lambda_{t+1} M Sigma_t
            let term = b_t
                .matmul(&lambda_next.matmul(&m.matmul(sigma_t)))
                .scale(2.0);
            grad = grad.add(&term);
        }
        // Lambda_t = H/2 + M' Lambda_{t+1} M
        lambda_next = h.scale(0.5).add(&m_t.matmul(&lambda_next.matmul(&m)));
    }
    Ok((total, grad))
}

/// Orthogonal initialization in whichever orientation is feasible.
fn orthogonal_init(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Result<Mat> {
    let m = if rows >= cols {
        random_semi_orthogonal(rng, rows, cols)?
    } else {
        random_semi_orthogonal(rng, cols, rows)?.transpose()
    };
    Ok(m.scale(scale))
}

fn sign_matrix(m: &Mat) -> Mat {
    Mat {
        rows: m.rows,
        cols: m.cols,
        data: m
            .data
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

/// Near-zero-metric observation pairs: roll both training environments
/// from the same initial state, each under the current policy acting on
/// its own observations, and pair what the two environments see at the
/// same time step. A policy that leans on distractors makes the two state
/// paths drift apart, so these pairs penalize every use of the distractor
/// block; a distractor-free policy keeps the paths identical and the
/// penalty at zero.
fn aggregation_deltas(
    envs: &[LqrSystem],
    policy: &LinearPolicy,
    config: &LqrTrainConfig,
    rng: &mut Rng,
) -> Vec<Vec<f64>> {
    let k = policy.effective();
    let mut deltas = Vec::with_capacity(config.agg_pairs);
    // Transiently unstable policies can blow the rollout up; restart from a
    // fresh init instead of feeding huge states into the penalty.
    let norm_guard = 2.0 * (envs[0].n_s as f64).sqrt();
    let step = |env: &LqrSystem, s: &[f64]| -> Vec<f64> {
        let a = k.matvec(&env.observe(s));
        let mut next = env.a.matvec(s);
        for (n, v) in next.iter_mut().zip(env.b.matvec(&a)) {
            *n += v;
        }
        next
    };
    'outer: loop {
        let s0: Vec<f64> = (0..envs[0].n_s).map(|_| rng.normal()).collect();
        let mut sx = s0.clone();
        let mut sy = s0;
        for _ in 0..config.agg_rollout {
            let ox = envs[0].observe(&sx);
            let oy = envs[1].observe(&sy);
            deltas.push(ox.iter().zip(&oy).map(|(a, b)| a - b).collect());
            if deltas.len() == config.agg_pairs {
                break 'outer;
            }
            sx = step(&envs[0], &sx);
            sy = step(&envs[1], &sy);
            for v in sx.iter_mut() {
                *v += config.agg_noise * rng.normal();
            }
            for v in sy.iter_mut() {
                *v += config.agg_noise * rng.normal();
            }
            let too_big = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt() > norm_guard;
            if too_big(&sx) || too_big(&sy) {
                continue 'outer;
            }
        }
    }
    deltas
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LqrTrainLog {
    pub iter: usize,
    pub train_cost: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone)]
pub struct LqrTrainRun {
    pub policy: LinearPolicy,
    pub logs: Vec<LqrTrainLog>,
    pub final_train_cost: f64,
}

/// Gradient descent with backtracking on the combined exact truncated cost
/// of both training environments, plus the method's penalty. A step is
/// accepted only if it does not increase the total objective; the step size
/// halves on rejection and grows again after accepted steps. Fully seeded.
pub fn train_lqr_policy(
    method: LqrMethod,
    train_envs: &[LqrSystem],
    config: &LqrTrainConfig,
) -> Result<LqrTrainRun> {
    if train_envs.len() != 2 {
        return Err(Error::InvalidArgument(
            "training needs exactly two environments".into(),
        ));
    }
    let (x, y) = (&train_envs[0], &train_envs[1]);
    if x.n_d != y.n_d || x.a != y.a || x.w_c != y.w_c {
        return Err(Error::InvalidArgument(
            "training environments must share everything but distractors".into(),
        ));
    }
    let mut rng = Rng::seed_from_u64(config.seed);
    let n_obs = x.obs_dim();
    let k1 = orthogonal_init(&mut rng, config.hidden, n_obs, config.init_scale)?;
    let k2 = orthogonal_init(&mut rng, x.n_a, config.hidden, config.init_scale)?;
    let mut policy = LinearPolicy { k1, k2 };

    let obs_mats: Vec<Mat> = train_envs.iter().map(|e| e.observation_matrix()).collect();
    let obs_mats_t: Vec<Mat> = obs_mats.iter().map(|m| m.transpose()).collect();

    // Total objective (cost + penalty) for a candidate policy, with the
    // aggregation deltas held fixed during the line search.
    let objective = |p: &LinearPolicy, deltas: &[Vec<f64>]| -> f64 {
        let mut total = 0.0;
        for (env_idx, env) in train_envs.iter().enumerate() {
            let k_eff = p.k2.matmul(&p.k1).matmul(&obs_mats[env_idx]);
            total += expected_cost(env, &k_eff, config.horizon);
        }
        match method {
            LqrMethod::Overparam => {}
            LqrMethod::L1Sparse => {
                let k = p.effective();
                total += config.l1_weight * k.data.iter().map(|v| v.abs()).sum::<f64>();
            }
            LqrMethod::PsmAggregation => {
                if !deltas.is_empty() {
                    let inv = config.agg_weight / deltas.len() as f64;
                    for delta in deltas {
                        let v = p.k1.matvec(delta);
                        total += inv * v.iter().map(|z| z * z).sum::<f64>();
                    }
                }
            }
        }
        total
    };

    let mut lr = config.learning_rate;
    let mut logs = Vec::new();
    let mut last_cost = f64::INFINITY;
    for iter in 0..config.iters {
        let deltas = if method == LqrMethod::PsmAggregation {
            aggregation_deltas(train_envs, &policy, config, &mut rng)
        } else {
            Vec::new()
        };

        let k2t = policy.k2.transpose();
        let mut grad_k1 = Mat::zeros(policy.k1.rows, policy.k1.cols);
        let mut grad_k2 = Mat::zeros(policy.k2.rows, policy.k2.cols);
        let mut cost_total = 0.0;
        for (env_idx, env) in train_envs.iter().enumerate() {
            let k1c = policy.k1.matmul(&obs_mats[env_idx]);
            let k_eff = policy.k2.matmul(&k1c);
            let (cost, gain_grad) = cost_and_gain_gradient(env, &k_eff, config.horizon)
                .map_err(|e| match e {
                    Error::Diverged { step, detail } => Error::Diverged {
                        step: iter * config.horizon + step,
                        detail,
                    },
                    other => other,
                })?;
            cost_total += cost;
            grad_k1 = grad_k1.add(&k2t.matmul(&gain_grad).matmul(&obs_mats_t[env_idx]));
            grad_k2 = grad_k2.add(&gain_grad.matmul(&k1c.transpose()));
        }

        let mut penalty = 0.0;
        match method {
            LqrMethod::Overparam => {}
            LqrMethod::L1Sparse => {
                let k = policy.effective();
                penalty = config.l1_weight * k.data.iter().map(|v| v.abs()).sum::<f64>();
                let sgn = sign_matrix(&k);
                grad_k1 = grad_k1.add(&k2t.matmul(&sgn).scale(config.l1_weight));
                grad_k2 =
                    grad_k2.add(&sgn.matmul(&policy.k1.transpose()).scale(config.l1_weight));
            }
            LqrMethod::PsmAggregation => {
                let inv = config.agg_weight / deltas.len() as f64;
                let scale = 2.0 * inv;
                for delta in &deltas {
                    let v = policy.k1.matvec(delta);
                    penalty += inv * v.iter().map(|z| z * z).sum::<f64>();
                    for i in 0..policy.k1.rows {
                        if v[i] == 0.0 {
                            continue;
                        }
                        let g = scale * v[i];
                        let row =
                            &mut grad_k1.data[i * policy.k1.cols..(i + 1) * policy.k1.cols];
                        for (r, &d) in row.iter_mut().zip(delta) {
                            *r += g * d;
                        }
                    }
                }
            }
        }

        // Backtracking: shrink the step until the objective stops rising.
        let current = cost_total + penalty;
        let mut accepted = false;
        for _ in 0..16 {
            let candidate = LinearPolicy {
                k1: policy.k1.sub(&grad_k1.scale(lr)),
                k2: policy.k2.sub(&grad_k2.scale(lr)),
            };
            let value = objective(&candidate, &deltas);
            if value.is_finite() && value <= current + 1e-10 * (1.0 + current.abs()) {
                policy = candidate;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if accepted {
            lr = (lr * 1.25).min(config.max_learning_rate);
        }
        last_cost = cost_total;
        if iter % 50 == 0 || iter + 1 == config.iters || config.iters <= 32 {
            logs.push(LqrTrainLog {
                iter,
                train_cost: cost_total,
                penalty,
            });
        }
    }
    Ok(LqrTrainRun {
        policy,
        logs,
        final_train_cost: last_cost,
    })
}

/// Mean absolute cost error against the oracle on unseen environments.
pub fn evaluate_generalization(
    controller: &LqrController,
    test_envs: &[LqrSystem],
    oracle: &LqrController,
    horizon: usize,
    eval_batch: &[Vec<f64>],
) -> Result<f64> {
    if test_envs.is_empty() {
        return Err(Error::InvalidArgument("no test environments".into()));
    }
    let mut total = 0.0;
    for env in test_envs {
        let got = lqr_cost(env, controller, horizon, eval_batch)?.cost;
        let want = lqr_cost(env, oracle, horizon, eval_batch)?.cost;
        total += (got - want).abs();
    }
    Ok(total / test_envs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{lqr_build, LQR_STATE_DIM};

    fn scalar_system(a: f64) -> LqrSystem {
        LqrSystem {
            a: Mat::from_rows(vec![vec![a]]),
            b: Mat::identity(1),
            q: Mat::identity(1),
            r: Mat::identity(1),
            w_c: Mat::identity(1),
            w_d: Mat::identity(1),
            n_s: 1,
            n_a: 1,
            n_d: 1,
        }
    }

    #[test]
    fn dare_scalar_closed_form() {
        // p = q + a^2 p - a^2 p^2 / (p + r) reduces to p^2 - a^2 p - 1 = 0
        // for q = r = 1 (with b = 1), giving the closed-form root below.
        let a = 0.8f64;
        let system = scalar_system(a);
        let p = dare_solve(&system).unwrap();
        let expected = (a * a + (a.powi(4) + 4.0).sqrt()) / 2.0;
        assert!((p[(0, 0)] - expected).abs() <= 1e-10, "p = {}", p[(0, 0)]);
        assert!((expected - 1.3699524).abs() < 1e-6);
    }

    #[test]
    fn dare_zero_dynamics_gives_q() {
        let system = scalar_system(0.0);
        let p = dare_solve(&system).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn dare_residual_is_definitional() {
        let build = lqr_build(9, 25, 0).unwrap();
        let system = &build.train_envs[0];
        let p = dare_solve(system).unwrap();
        let a_t = system.a.transpose();
        let b_t = system.b.transpose();
        let residual = dare_rhs(system, &a_t, &b_t, &p).unwrap().sub(&p).frob_norm();
        assert!(residual <= 1e-10, "residual {residual}");
    }

    #[test]
    fn zero_policy_cost_matches_lyapunov_series() {
        let build = lqr_build(4, 25, 0).unwrap();
        let system = &build.train_envs[0];
        // X = Q + A'XA by fixed point.
        let mut x = system.q.clone();
        loop {
            let next = system.q.add(&system.a.transpose().matmul(&x).matmul(&system.a));
            let r = next.sub(&x).frob_norm();
            x = next;
            if r <= 1e-13 {
                break;
            }
        }
        let batch = init_batch(11, 32, LQR_STATE_DIM);
        let closed_form: f64 = batch
            .iter()
            .map(|s| 0.5 * s.iter().zip(&x.matvec(s)).map(|(a, b)| a * b).sum::<f64>())
            .sum::<f64>()
            / batch.len() as f64;
        let zero = LqrController::State(Mat::zeros(LQR_STATE_DIM, LQR_STATE_DIM));
        let report = lqr_cost(system, &zero, 200, &batch).unwrap();
        assert!(
            (report.cost - closed_form).abs() <= 1e-6,
            "truncated {} vs closed form {}",
            report.cost,
            closed_form
        );
        assert!((report.closed_loop_spectral_radius - 0.8).abs() <= 1e-6);
    }

    #[test]
    fn horizon_doubling_changes_little_when_stable() {
        let build = lqr_build(5, 25, 0).unwrap();
        let system = &build.train_envs[0];
        let p = dare_solve(system).unwrap();
        let oracle = oracle_controller(system, &p).unwrap();
        let batch = init_batch(3, 16, LQR_STATE_DIM);
        let short = lqr_cost(system, &oracle, 200, &batch).unwrap();
        let long = lqr_cost(system, &oracle, 400, &batch).unwrap();
        assert!(short.closed_loop_spectral_radius < 1.0);
        assert!((short.cost - long.cost).abs() <= 1e-6);
    }

    #[test]
    fn oracle_beats_other_tested_policies() {
        let build = lqr_build(6, 25, 0).unwrap();
        let system = &build.train_envs[0];
        let p = dare_solve(system).unwrap();
        let oracle = oracle_controller(system, &p).unwrap();
        let batch = init_batch(2, 16, LQR_STATE_DIM);
        let oracle_cost = lqr_cost(system, &oracle, 200, &batch).unwrap().cost;
        let zero = LqrController::State(Mat::zeros(LQR_STATE_DIM, LQR_STATE_DIM));
        assert!(oracle_cost < lqr_cost(system, &zero, 200, &batch).unwrap().cost);
        // A destabilizing gain reports infinite cost, not a crash.
        let bad = LqrController::State(Mat::identity(LQR_STATE_DIM).scale(3.0));
        let report = lqr_cost(system, &bad, 200, &batch).unwrap();
        assert!(report.cost.is_infinite());
        assert!(report.closed_loop_spectral_radius > 1.0);
    }

    #[test]
    fn generalizing_policy_matches_oracle_everywhere() {
        let build = lqr_build(7, 40, 3).unwrap();
        let system = &build.train_envs[0];
        let p = dare_solve(system).unwrap();
        let oracle = oracle_controller(system, &p).unwrap();
        let batch = init_batch(8, 16, LQR_STATE_DIM);
        let k_star = LqrController::Observation(generalizing_policy(system, &p).unwrap());
        let err = evaluate_generalization(&k_star, &build.test_envs, &oracle, 200, &batch).unwrap();
        assert!(err <= 1e-6, "error {err}");
    }

    #[test]
    fn gain_gradient_matches_finite_differences() {
        let build = lqr_build(8, 25, 0).unwrap();
        let system = &build.train_envs[0];
        let mut rng = Rng::seed_from_u64(2);
        let mut k = Mat::zeros(LQR_STATE_DIM, LQR_STATE_DIM);
        for v in k.data.iter_mut() {
            *v = 0.05 * rng.normal();
        }
        let horizon = 30;
        let (cost, grad) = cost_and_gain_gradient(system, &k, horizon).unwrap();
        assert!((cost - expected_cost(system, &k, horizon)).abs() <= 1e-9);
        let mut f = |params: &[f64]| -> crate::error::Result<f64> {
            let probe = Mat {
                rows: k.rows,
                cols: k.cols,
                data: params.to_vec(),
            };
            Ok(expected_cost(system, &probe, horizon))
        };
        let report =
            crate::embed::gradient_check(&mut f, &k.data, &grad.data, 1e-5).unwrap();
        assert!(report.max_rel_error <= 1e-6, "rel {}", report.max_rel_error);
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        // Gradients with respect to K1 and K2 through the product chain.
        // h = 1e-4: the layers couple weakly at small scales, so a larger
        // step keeps cancellation noise below the 1e-5 tolerance.
        let build = lqr_build(3, 25, 0).unwrap();
        let system = &build.train_envs[0];
        let horizon = 40;
        let n_obs = system.obs_dim();
        let hidden = 20;
        let mut rng = Rng::seed_from_u64(5);
        let k1 = random_semi_orthogonal(&mut rng, n_obs, hidden)
            .unwrap()
            .transpose()
            .scale(0.02);
        let k2 = random_semi_orthogonal(&mut rng, hidden, system.n_a)
            .unwrap()
            .transpose()
            .scale(0.02);
        let c_mat = system.observation_matrix();
        let k_eff = k2.matmul(&k1).matmul(&c_mat);
        let (_, gain_grad) = cost_and_gain_gradient(system, &k_eff, horizon).unwrap();
        let grad_k1 = k2.transpose().matmul(&gain_grad).matmul(&c_mat.transpose());
        let grad_k2 = gain_grad.matmul(&k1.matmul(&c_mat).transpose());
        let mut analytic = grad_k1.data.clone();
        analytic.extend_from_slice(&grad_k2.data);
        let mut params = k1.data.clone();
        params.extend_from_slice(&k2.data);
        let k1_len = k1.data.len();
        let (r1, c1, r2, c2) = (k1.rows, k1.cols, k2.rows, k2.cols);
        let mut f = |p: &[f64]| -> crate::error::Result<f64> {
            let pk1 = Mat {
                rows: r1,
                cols: c1,
                data: p[..k1_len].to_vec(),
            };
            let pk2 = Mat {
                rows: r2,
                cols: c2,
                data: p[k1_len..].to_vec(),
            };
            Ok(expected_cost(system, &pk2.matmul(&pk1).matmul(&c_mat), horizon))
        };
        let report = crate::embed::gradient_check(&mut f, &params, &analytic, 1e-4).unwrap();
        assert!(report.max_rel_error <= 1e-5, "rel {}", report.max_rel_error);
    }

    #[test]
    fn training_is_seeded() {
        let build = lqr_build(10, 25, 0).unwrap();
        let config = LqrTrainConfig {
            iters: 5,
            ..LqrTrainConfig::default()
        };
        let a = train_lqr_policy(LqrMethod::Overparam, &build.train_envs, &config).unwrap();
        let b = train_lqr_policy(LqrMethod::Overparam, &build.train_envs, &config).unwrap();
        assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn penalty_arms_run_and_report_their_terms() {
        let build = lqr_build(12, 25, 0).unwrap();
        let config = LqrTrainConfig {
            iters: 8,
            ..LqrTrainConfig::default()
        };
        let l1 = train_lqr_policy(LqrMethod::L1Sparse, &build.train_envs, &config).unwrap();
        assert!(l1.logs.iter().any(|l| l.penalty > 0.0));
        assert!(l1.final_train_cost.is_finite());
        let psm =
            train_lqr_policy(LqrMethod::PsmAggregation, &build.train_envs, &config).unwrap();
        assert!(psm.final_train_cost.is_finite());
    }

}
