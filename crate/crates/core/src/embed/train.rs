//! Joint imitation + auxiliary-embedding training on the jumping-task grid:
//! every step samples a pair of training tasks, embeds both optimal
//! trajectories, and minimizes imitation cross-entropy plus a metric
//! embedding loss (contrastive or squared) weighted by `alpha`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embed::loss::{
    cme_pair_loss_with_grad, imitation_loss, imitation_loss_grad, l2_metric_loss_with_grad,
    select_positive_pairs, PositivePair,
};
use crate::embed::model::{EmbeddingModel, ForwardTrace, ModelArch, ModelGrads};
use crate::envs::{
    jumping_optimal_trajectory, GridSplit, JumpingEnv, JumpingInstance, ObstacleColor, TaskCoord,
};
use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp, Trajectory};
use crate::metrics::{pi_bisimulation, psm_trajectory_dp, DistKind, PairwiseMetricTable};
use crate::rng::Rng;

/// Which auxiliary objective accompanies imitation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMethod {
    ImitationOnly,
    /// Contrastive embeddings of the policy similarity metric.
    Pse,
    /// Squared embedding-distance matching against the PSM.
    L2Psm,
    /// Contrastive embeddings of the pi-bisimulation metric.
    CmePiBisim,
    /// Squared matching against pi-bisimulation.
    L2PiBisim,
}

impl std::str::FromStr for TrainMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imitation_only" => Ok(TrainMethod::ImitationOnly),
            "pse" => Ok(TrainMethod::Pse),
            "l2_psm" => Ok(TrainMethod::L2Psm),
            "cme_pi_bisim" => Ok(TrainMethod::CmePiBisim),
            "l2_pi_bisim" => Ok(TrainMethod::L2PiBisim),
            other => Err(Error::InvalidArgument(format!("unknown method {other}"))),
        }
    }
}

impl TrainMethod {
    pub fn needs_metric_tables(&self) -> bool {
        !matches!(self, TrainMethod::ImitationOnly)
    }

    fn is_contrastive(&self) -> bool {
        matches!(self, TrainMethod::Pse | TrainMethod::CmePiBisim)
    }

    fn uses_psm(&self) -> bool {
        matches!(self, TrainMethod::Pse | TrainMethod::L2Psm)
    }
}

/// Hyperparameters of the training run. Defaults are the shipped tuned
/// values for the jumping task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmeConfig {
    /// Inverse temperature of the contrastive softmax.
    pub lambda: f64,
    /// Scale of the Gaussian similarity kernel.
    pub beta: f64,
    /// Weight of the auxiliary loss.
    pub alpha: f64,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay per epoch.
    pub lr_decay: f64,
    pub epochs: usize,
    /// Task-pair draws per epoch.
    pub steps_per_epoch: usize,
    /// Discount used inside the metric dynamic programs.
    pub metric_gamma: f64,
    /// Optional policy perturbation applied to the stored action
    /// distributions before computing metric tables (the suboptimality
    /// study); 0 leaves the optimal policies untouched.
    pub metric_epsilon: f64,
    /// Mean-pool factor applied to observations before flattening.
    pub downsample: usize,
    pub encoder_widths: Vec<usize>,
    pub embed_dim: usize,
    /// Evaluate the test grid every this many epochs (0 = only at the end).
    pub eval_interval: usize,
    pub seed: u64,
}

impl Default for CmeConfig {
    fn default() -> Self {
        CmeConfig {
            lambda: 1.0,
            beta: 0.01,
            alpha: 5.0,
            learning_rate: 0.05,
            lr_decay: 0.999,
            epochs: 60,
            steps_per_epoch: 18,
            metric_gamma: 0.99,
            metric_epsilon: 0.0,
            downsample: 2,
            encoder_widths: vec![128, 128],
            embed_dim: 64,
            eval_interval: 0,
            seed: 0,
        }
    }
}

impl CmeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("learning_rate", self.learning_rate),
            ("lr_decay", self.lr_decay),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidArgument("alpha must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.metric_gamma) {
            return Err(Error::InvalidArgument("metric_gamma must be in [0,1)".into()));
        }
        if !(0.0..=1.0).contains(&self.metric_epsilon) {
            return Err(Error::InvalidArgument("metric_epsilon must be in [0,1]".into()));
        }
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.downsample == 0 {
            return Err(Error::InvalidArgument(
                "epochs, steps_per_epoch, downsample must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One training task with everything the loop needs precomputed.
#[derive(Debug, Clone)]
pub struct PreparedTask {
    pub coord: TaskCoord,
    pub env: JumpingEnv,
    pub trajectory: Trajectory,
    /// Flattened (downsampled) observation per trajectory state.
    pub observations: Vec<Vec<f64>>,
    /// Imitation targets: the optimal action at each trajectory state.
    pub optimal_actions: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PreparedTasks {
    pub tasks: Vec<PreparedTask>,
    pub input_dim: usize,
}

pub fn prepare_tasks(split: &GridSplit, config: &CmeConfig) -> Result<PreparedTasks> {
    config.validate()?;
    let mut tasks = Vec::with_capacity(split.training_tasks.len());
    let mut input_dim = None;
    for coord in &split.training_tasks {
        let instance =
            JumpingInstance::new(coord.obstacle_position, coord.floor_height, ObstacleColor::White)?;
        let env = JumpingEnv::new(instance)?;
        let (trajectory, _) = jumping_optimal_trajectory(&env)?;
        let observations: Vec<Vec<f64>> = trajectory
            .states
            .iter()
            .map(|&s| env.render(s).flatten_downsampled(config.downsample))
            .collect();
        let dim = observations[0].len();
        if *input_dim.get_or_insert(dim) != dim {
            return Err(Error::DimensionMismatch("observation sizes differ".into()));
        }
        let optimal_actions = trajectory
            .action_dists
            .iter()
            .map(|d| argmax(d))
            .collect();
        tasks.push(PreparedTask {
            coord: *coord,
            env,
            trajectory,
            observations,
            optimal_actions,
        });
    }
    Ok(PreparedTasks {
        tasks,
        input_dim: input_dim.expect("at least one training task"),
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Metric tables for every ordered task pair (rows = first task's states,
/// cols = second task's). PSM tables come from the trajectory dynamic
/// program; pi-bisimulation tables from the exact recursion on the
/// trajectory chain MDPs, restricted back to trajectory states.
#[derive(Debug, Clone, Default)]
pub struct MetricTables {
    tables: BTreeMap<(usize, usize), PairwiseMetricTable>,
}

impl MetricTables {
    pub fn get(&self, x: usize, y: usize) -> Option<&PairwiseMetricTable> {
        self.tables.get(&(x, y))
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}

fn perturb_dists(traj: &Trajectory, eps: f64) -> Trajectory {
    if eps == 0.0 {
        return traj.clone();
    }
    let mut out = traj.clone();
    for dist in out.action_dists.iter_mut() {
        let n = dist.len();
        let best = argmax(dist);
        let spread = eps / (n - 1) as f64;
        for (a, p) in dist.iter_mut().enumerate() {
            *p = if a == best { 1.0 - eps } else { spread };
        }
    }
    out
}

/// Deterministic chain MDP following one trajectory, carrying the rewards
/// the optimal policy collected; the grounding policy replays the stored
/// action distributions.
fn trajectory_chain_mdp(
    task: &PreparedTask,
    gamma: f64,
) -> Result<(TabularMdp, Policy)> {
    let traj = &task.trajectory;
    let n = traj.len() + 1; // chain states plus one absorbing terminal
    let n_actions = task.env.mdp.n_actions;
    let mut reward = vec![0.0; n * n_actions];
    let mut transition = vec![0.0; n * n_actions * n];
    let mut terminal = vec![false; n];
    terminal[n - 1] = true;
    for i in 0..traj.len() {
        let state = traj.states[i];
        let action = task.optimal_actions[i];
        let r = task.env.mdp.reward_at(state, action);
        let next = i + 1;
        for a in 0..n_actions {
            reward[i * n_actions + a] = r;
            transition[(i * n_actions + a) * n + next] = 1.0;
        }
    }
    for a in 0..n_actions {
        transition[((n - 1) * n_actions + a) * n + (n - 1)] = 1.0;
    }
    let mdp = TabularMdp::new(n, n_actions, reward, transition, gamma, terminal, vec![0])?;
    let mut probs: Vec<f64> = traj.action_dists.iter().flatten().copied().collect();
    probs.extend(vec![1.0 / n_actions as f64; n_actions]);
    let policy = Policy::new(n, n_actions, probs)?;
    Ok((mdp, policy))
}

fn restrict_table(
    table: PairwiseMetricTable,
    n_rows: usize,
    n_cols: usize,
) -> PairwiseMetricTable {
    let values = (0..n_rows)
        .flat_map(|i| (0..n_cols).map(move |j| (i, j)))
        .map(|(i, j)| table.at(i, j))
        .collect();
    PairwiseMetricTable {
        rows: table.rows[..n_rows].to_vec(),
        cols: table.cols[..n_cols].to_vec(),
        values,
        ..table
    }
}

fn transpose_table(table: &PairwiseMetricTable) -> PairwiseMetricTable {
    let values = (0..table.n_cols())
        .flat_map(|j| (0..table.n_rows()).map(move |i| table.at(i, j)))
        .collect();
    PairwiseMetricTable {
        rows: table.cols.clone(),
        cols: table.rows.clone(),
        values,
        metric_kind: table.metric_kind,
        gamma: table.gamma,
        dist_kind: table.dist_kind,
        tol: table.tol,
        iterations: table.iterations,
    }
}

pub fn compute_metric_tables(
    prepared: &PreparedTasks,
    method: TrainMethod,
    config: &CmeConfig,
) -> Result<MetricTables> {
    let mut tables = BTreeMap::new();
    if !method.needs_metric_tables() {
        return Ok(MetricTables { tables });
    }
    let n = prepared.tasks.len();
    for i in 0..n {
        for j in i + 1..n {
            let table = if method.uses_psm() {
                let tx = perturb_dists(&prepared.tasks[i].trajectory, config.metric_epsilon);
                let ty = perturb_dists(&prepared.tasks[j].trajectory, config.metric_epsilon);
                psm_trajectory_dp(&tx, &ty, DistKind::Tv, config.metric_gamma)?
            } else {
                let (mx, px) = trajectory_chain_mdp(&prepared.tasks[i], config.metric_gamma)?;
                let (my, py) = trajectory_chain_mdp(&prepared.tasks[j], config.metric_gamma)?;
                let full = pi_bisimulation(&mx, &px, &my, &py, 1e-9)?;
                restrict_table(
                    full,
                    prepared.tasks[i].trajectory.len(),
                    prepared.tasks[j].trajectory.len(),
                )
            };
            tables.insert((j, i), transpose_table(&table));
            tables.insert((i, j), table);
        }
    }
    Ok(MetricTables { tables })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub aux_loss: f64,
    pub test_solve_pct: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub model: EmbeddingModel,
    pub logs: Vec<EpochLog>,
    pub final_test_solve_pct: f64,
    /// Solved flag per test task, ordered as in the split.
    pub test_solved: Vec<bool>,
}

/// CSV lines for the metrics log: epoch, train loss, aux loss, and the test
/// solve percentage on epochs where it was measured.
pub fn metrics_log_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,aux_loss,test_solve_pct\n");
    for l in logs {
        let solve = l
            .test_solve_pct
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            l.epoch, l.train_loss, l.aux_loss, solve
        ));
    }
    out
}

/// Loss pieces and parameter gradients of one task-pair step.
pub struct PairObjective {
    pub imitation: f64,
    pub aux: f64,
    pub grads: ModelGrads,
}

impl PairObjective {
    pub fn total(&self, alpha: f64) -> f64 {
        self.imitation + alpha * self.aux
    }
}

/// The full joint objective (imitation cross-entropy plus the method's
/// auxiliary loss) for one ordered task pair, with analytic gradients.
pub fn pair_objective(
    model: &EmbeddingModel,
    prepared: &PreparedTasks,
    tables: &MetricTables,
    positives: &BTreeMap<(usize, usize), Vec<PositivePair>>,
    method: TrainMethod,
    config: &CmeConfig,
    pair: (usize, usize),
) -> Result<PairObjective> {
    let (xi, yi) = pair;
    let task_x = &prepared.tasks[xi];
    let task_y = &prepared.tasks[yi];
    let traces_x: Vec<ForwardTrace> = task_x
        .observations
        .iter()
        .map(|o| model.forward(o))
        .collect::<Result<_>>()?;
    let traces_y: Vec<ForwardTrace> = task_y
        .observations
        .iter()
        .map(|o| model.forward(o))
        .collect::<Result<_>>()?;
    let n_states = traces_x.len() + traces_y.len();
    let il_scale = 1.0 / n_states as f64;

    let mut grads = ModelGrads::zeros_like(model);
    let mut il_total = 0.0;

    // Per-state gradient pieces, filled in by the auxiliary branch.
    let mut d_emb_x: Vec<Vec<f64>> = vec![Vec::new(); traces_x.len()];
    let mut d_emb_y: Vec<Vec<f64>> = vec![Vec::new(); traces_y.len()];
    let mut d_rep_x: Vec<Vec<f64>> = vec![Vec::new(); traces_x.len()];
    let mut d_rep_y: Vec<Vec<f64>> = vec![Vec::new(); traces_y.len()];

    let mut aux_total = 0.0;
    if method.needs_metric_tables() && config.alpha > 0.0 {
        let table = tables.get(xi, yi).ok_or_else(|| {
            Error::InvalidArgument(format!("missing metric table for pair {xi},{yi}"))
        })?;
        if method.is_contrastive() {
            let pairs = &positives[&(xi, yi)];
            let cand_refs: Vec<&[f64]> = traces_x
                .iter()
                .map(|t| t.embedding.as_slice())
                .collect();
            let scale = config.alpha / traces_y.len() as f64;
            for p in pairs {
                let anchor = traces_y[p.anchor].embedding.as_slice();
                let (loss, d_anchor, d_cands) = cme_pair_loss_with_grad(
                    anchor,
                    &cand_refs,
                    &p.gamma_row,
                    p.positive,
                    config.lambda,
                )?;
                aux_total += loss;
                accumulate(&mut d_emb_y[p.anchor], &d_anchor, scale);
                for (i, d) in d_cands.iter().enumerate() {
                    if !d.is_empty() {
                        accumulate(&mut d_emb_x[i], d, scale);
                    }
                }
            }
            aux_total /= traces_y.len() as f64;
        } else {
            let feats_x: Vec<Vec<f64>> = traces_x
                .iter()
                .map(|t| t.representation().to_vec())
                .collect();
            let feats_y: Vec<Vec<f64>> = traces_y
                .iter()
                .map(|t| t.representation().to_vec())
                .collect();
            let (loss, gx, gy) = l2_metric_loss_with_grad(&feats_x, &feats_y, table)?;
            aux_total = loss;
            for (i, g) in gx.iter().enumerate() {
                accumulate(&mut d_rep_x[i], g, config.alpha);
            }
            for (j, g) in gy.iter().enumerate() {
                accumulate(&mut d_rep_y[j], g, config.alpha);
            }
        }
    }

    let mut backward_states = |traces: &[ForwardTrace],
                               task: &PreparedTask,
                               d_embs: &[Vec<f64>],
                               d_reps: &[Vec<f64>],
                               il_total: &mut f64|
     -> Result<()> {
        for (s, trace) in traces.iter().enumerate() {
            let target = task.optimal_actions[s];
            *il_total += imitation_loss(&trace.logits, target)?;
            let mut dlogits = imitation_loss_grad(&trace.logits, target);
            for g in dlogits.iter_mut() {
                *g *= il_scale;
            }
            model.backward(
                trace,
                non_empty(&d_embs[s]),
                Some(&dlogits),
                non_empty(&d_reps[s]),
                &mut grads,
            );
        }
        Ok(())
    };
    backward_states(&traces_x, task_x, &d_emb_x, &d_rep_x, &mut il_total)?;
    backward_states(&traces_y, task_y, &d_emb_y, &d_rep_y, &mut il_total)?;

    Ok(PairObjective {
        imitation: il_total / n_states as f64,
        aux: aux_total,
        grads,
    })
}

fn accumulate(dst: &mut Vec<f64>, src: &[f64], scale: f64) {
    if dst.is_empty() {
        *dst = vec![0.0; src.len()];
    }
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

fn non_empty(v: &[f64]) -> Option<&[f64]> {
    if v.is_empty() {
        None
    } else {
        Some(v)
    }
}

/// Full training run on a prepared task set. Deterministic for a fixed
/// (config, seed): identical logs byte for byte.
pub fn train_jumping_prepared(
    prepared: &PreparedTasks,
    tables: &MetricTables,
    split: &GridSplit,
    config: &CmeConfig,
    method: TrainMethod,
) -> Result<TrainRun> {
    config.validate()?;
    if method.needs_metric_tables() && config.alpha > 0.0 && tables.is_empty() {
        return Err(Error::InvalidArgument(
            "metric tables missing for a metric-based method".into(),
        ));
    }
    let arch = ModelArch {
        input_dim: prepared.input_dim,
        encoder_widths: config.encoder_widths.clone(),
        embed_dim: config.embed_dim,
        n_actions: 2,
        downsample: config.downsample,
    };
    let mut model = EmbeddingModel::new(arch, config.seed)?;
    let mut rng = Rng::seed_from_u64(config.seed ^ 0x7261_696e);

    // Positive pairs depend only on the tables; select them once.
    let mut positives = BTreeMap::new();
    if method.is_contrastive() && config.alpha > 0.0 {
        let n = prepared.tasks.len();
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                if let Some(t) = tables.get(x, y) {
                    positives.insert((x, y), select_positive_pairs(t, config.beta)?);
                }
            }
        }
    }

    let mut logs = Vec::with_capacity(config.epochs);
    let mut step_index = 0usize;
    for epoch in 0..config.epochs {
        let lr = config.learning_rate * config.lr_decay.powi(epoch as i32);
        let mut il_sum = 0.0;
        let mut aux_sum = 0.0;
        for _ in 0..config.steps_per_epoch {
            let xi = rng.range_usize(prepared.tasks.len());
            let mut yi = rng.range_usize(prepared.tasks.len() - 1);
            if yi >= xi {
                yi += 1;
            }
            let outcome = pair_objective(
                &model,
                prepared,
                tables,
                &positives,
                method,
                config,
                (xi, yi),
            )?;
            if !outcome.imitation.is_finite() || !outcome.aux.is_finite() {
                return Err(Error::Diverged {
                    step: step_index,
                    detail: format!(
                        "imitation {} aux {}",
                        outcome.imitation, outcome.aux
                    ),
                });
            }
            model.apply_gradients(&outcome.grads, lr);
            il_sum += outcome.imitation;
            aux_sum += outcome.aux;
            step_index += 1;
        }
        let evaluate_now = config.eval_interval > 0 && (epoch + 1) % config.eval_interval == 0;
        let test_solve_pct = if evaluate_now {
            Some(evaluate_solve_rate(&model, &split.test_tasks, config)?.0)
        } else {
            None
        };
        logs.push(EpochLog {
            epoch,
            train_loss: il_sum / config.steps_per_epoch as f64,
            aux_loss: aux_sum / config.steps_per_epoch as f64,
            test_solve_pct,
        });
    }
    let (final_pct, test_solved) = evaluate_solve_rate(&model, &split.test_tasks, config)?;
    if let Some(last) = logs.last_mut() {
        if last.test_solve_pct.is_none() {
            last.test_solve_pct = Some(final_pct);
        }
    }
    Ok(TrainRun {
        model,
        logs,
        final_test_solve_pct: final_pct,
        test_solved,
    })
}

/// Convenience wrapper: prepare tasks, compute tables, train.
pub fn train_jumping(
    split: &GridSplit,
    config: &CmeConfig,
    method: TrainMethod,
) -> Result<TrainRun> {
    let prepared = prepare_tasks(split, config)?;
    let tables = compute_metric_tables(&prepared, method, config)?;
    train_jumping_prepared(&prepared, &tables, split, config, method)
}

/// Greedy-rollout evaluation: a task counts as solved when the model's
/// argmax policy reaches the rewarded terminal.
pub fn evaluate_solve_rate(
    model: &EmbeddingModel,
    tasks: &[TaskCoord],
    config: &CmeConfig,
) -> Result<(f64, Vec<bool>)> {
    let mut solved_flags = Vec::with_capacity(tasks.len());
    let mut solved = 0usize;
    for coord in tasks {
        let ok = greedy_rollout_solves(model, coord, config)?;
        solved_flags.push(ok);
        if ok {
            solved += 1;
        }
    }
    let pct = 100.0 * solved as f64 / tasks.len().max(1) as f64;
    Ok((pct, solved_flags))
}

pub fn greedy_rollout_solves(
    model: &EmbeddingModel,
    coord: &TaskCoord,
    config: &CmeConfig,
) -> Result<bool> {
    let instance =
        JumpingInstance::new(coord.obstacle_position, coord.floor_height, ObstacleColor::White)?;
    let env = JumpingEnv::new(instance)?;
    let bound = env.instance.geometry.frame_width + 2 * env.instance.geometry.jump_height;
    let mut state = env.start_state();
    for _ in 0..bound {
        if env.mdp.terminal[state] {
            break;
        }
        let obs = env.render(state).flatten_downsampled(config.downsample);
        let trace = model.forward(&obs)?;
        let action = argmax(&trace.logits);
        let row = env.mdp.transition_row(state, action);
        state = row
            .iter()
            .position(|&p| p > 0.5)
            .expect("deterministic transition");
    }
    Ok(env.is_solved_terminal(state))
}

/// Embedding dump: one CSV row per trajectory state of each task.
pub fn embedding_dump_csv(
    model: &EmbeddingModel,
    prepared: &PreparedTasks,
) -> Result<String> {
    let mut out = String::from("task,step,state");
    for k in 0..model.arch.embed_dim {
        out.push_str(&format!(",z{k}"));
    }
    out.push('\n');
    for task in &prepared.tasks {
        for (step, obs) in task.observations.iter().enumerate() {
            let trace = model.forward(obs)?;
            out.push_str(&format!(
                "{},{},{}",
                task.trajectory.source_mdp, step, task.trajectory.states[step]
            ));
            for v in &trace.embedding {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    Ok(out)
}
