//! Acceptance suite: every release criterion as an executable check, one
//! pass/fail line per criterion. Run with
//! `cargo test -p behavsim-cli --release --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use behavsim_core::embed::{
    compute_metric_tables, gradient_check, pair_objective, prepare_tasks, select_positive_pairs,
    train_jumping_prepared, CmeConfig, EmbeddingModel, MetricTables, ModelArch, TrainMethod,
};
use behavsim_core::envs::{
    cake_mdp, grid_split, jumping_build, jumping_optimal_trajectory, lqr_build, JumpingInstance,
    ObstacleColor, SplitKind, LQR_STATE_DIM,
};
use behavsim_core::lqr_gen::{
    dare_solve, evaluate_generalization, expected_cost, generalizing_policy, init_batch,
    oracle_controller, train_lqr_policy, LqrController, LqrMethod, LqrTrainConfig,
};
use behavsim_core::mdp::{value_iteration, Policy};
use behavsim_core::metrics::{
    bisimulation, pi_bisimulation, psm_exact, psm_exact_diag, psm_trajectory_dp, wasserstein1,
    DistKind,
};
use behavsim_core::rng::Rng;
use behavsim_core::transfer::{
    fuzz_psm_approx_bound, fuzz_transfer_bound, random_mdp, FuzzCorpusConfig,
};

/// Criteria carry their own runtime budgets, so their bodies never share
/// the machine: every test runs under one lock.
static EXCLUSIVE: std::sync::Mutex<()> = std::sync::Mutex::new(());

fn exclusive() -> std::sync::MutexGuard<'static, ()> {
    EXCLUSIVE.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(criterion: &str, pass: bool, detail: &str) -> bool {
    println!(
        "ACCEPTANCE {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

// Criterion 1: cake-MDP counterexample, exact values within 1e-9, under 1s.
#[test]
fn criterion_1_cake_counterexample() {
    let _guard = exclusive();
    let t0 = Instant::now();
    let mx = cake_mdp(1.0, 0.9).unwrap();
    let my = cake_mdp(3.0, 0.9).unwrap();
    let (_, px) = value_iteration(&mx, 1e-12).unwrap();
    let (_, py) = value_iteration(&my, 1e-12).unwrap();
    let pi_bisim = pi_bisimulation(&mx, &px, &my, &py, 1e-12).unwrap();
    let bisim = bisimulation(&mx, &my, 1e-12).unwrap();
    let psm = psm_exact(&mx, &px, &my, &py, DistKind::Tv, 1e-12).unwrap();
    let elapsed = t0.elapsed();

    let checks = [
        ((pi_bisim.at(0, 0) - 3.8).abs() <= 1e-9, "pi-bisim aligned 3.8"),
        ((pi_bisim.at(0, 1) - 2.9).abs() <= 1e-9, "pi-bisim crossed 2.9"),
        ((bisim.at(0, 1) - 3.0).abs() <= 1e-9, "bisim crossed 3.0"),
        (psm.at(0, 0).abs() <= 1e-9, "psm aligned 0"),
        (elapsed.as_secs_f64() < 1.0, "runtime < 1s"),
    ];
    let pass = checks.iter().all(|(ok, _)| *ok);
    let detail = format!(
        "pi-bisim ({:.10}, {:.10}), bisim crossed {:.10}, psm {:.2e}, {:.2?}",
        pi_bisim.at(0, 0),
        pi_bisim.at(0, 1),
        bisim.at(0, 1),
        psm.at(0, 0),
        elapsed
    );
    assert!(report("1 (cake counterexample)", pass, &detail), "{detail}");
}

// Criterion 2: 200 random MDP pairs, zero transfer-bound violations, < 60s.
#[test]
fn criterion_2_transfer_bound_fuzz() {
    let _guard = exclusive();
    let t0 = Instant::now();
    let summary = fuzz_transfer_bound(&FuzzCorpusConfig::default()).unwrap();
    let elapsed = t0.elapsed();
    let pass = summary.holds() && summary.pairs_checked == 200 && elapsed.as_secs_f64() < 60.0;
    let detail = format!(
        "{} pairs, {} states, max violation {:e}, {:.1?}",
        summary.pairs_checked, summary.total_states_checked, summary.max_violation, elapsed
    );
    assert!(report("2 (transfer bound fuzz)", pass, &detail), "{detail}");
}

// Criterion 3: approximation bound over 100 pairs x eps grid, gaps
// non-increasing as eps decreases, < 120s.
#[test]
fn criterion_3_approx_bound_fuzz() {
    let _guard = exclusive();
    let t0 = Instant::now();
    let config = FuzzCorpusConfig {
        pairs: 100,
        ..FuzzCorpusConfig::default()
    };
    let summaries = fuzz_psm_approx_bound(&config, &[0.4, 0.2, 0.1, 0.05]).unwrap();
    let elapsed = t0.elapsed();
    let no_violations = summaries.iter().all(|s| s.n_violations == 0);
    let monotone = summaries
        .windows(2)
        .all(|w| w[1].mean_gap <= w[0].mean_gap + 1e-12);
    let pass = no_violations && monotone && elapsed.as_secs_f64() < 120.0;
    let gaps: Vec<String> = summaries
        .iter()
        .map(|s| {
            format!(
                "eps {} gap {:.5} violations {} (max {:.2e})",
                s.eps, s.mean_gap, s.n_violations, s.max_violation
            )
        })
        .collect();
    let detail = format!("{}; {:.1?}", gaps.join(", "), elapsed);
    assert!(report("3 (approximation bound fuzz)", pass, &detail), "{detail}");
}

// Criterion 4: contraction ratios, initialization independence, and 1000
// transport certificates plus the 1-D CDF oracle.
#[test]
fn criterion_4_metric_solver_properties() {
    let _guard = exclusive();
    let corpus = FuzzCorpusConfig::default();
    let mut rng = Rng::seed_from_u64(404);
    let mut max_ratio_excess = f64::NEG_INFINITY;
    let mut max_init_diff = 0.0f64;
    for i in 0..20u64 {
        let gamma = [0.5, 0.9, 0.99][i as usize % 3];
        let n_actions = 2 + rng.range_usize(2);
        let mx = random_mdp(&mut rng, &corpus, n_actions, gamma);
        let my = random_mdp(&mut rng, &corpus, n_actions, gamma);
        let (_, px) = value_iteration(&mx, 1e-12).unwrap();
        let (_, py) = value_iteration(&my, 1e-12).unwrap();
        let (cold, diag) =
            psm_exact_diag(&mx, &px, &my, &py, DistKind::Tv, 1e-10, None).unwrap();
        max_ratio_excess = max_ratio_excess.max(diag.max_contraction_ratio() - gamma);
        let init: Vec<f64> = (0..mx.n_states * my.n_states)
            .map(|_| rng.f64() * 3.0)
            .collect();
        let (warm, _) =
            psm_exact_diag(&mx, &px, &my, &py, DistKind::Tv, 1e-10, Some(init)).unwrap();
        for (a, b) in cold.values.iter().zip(&warm.values) {
            max_init_diff = max_init_diff.max((a - b).abs());
        }
    }

    let mut max_gap = 0.0f64;
    let mut max_cert_violation = 0.0f64;
    for _ in 0..1000 {
        let n = 1 + rng.range_usize(8);
        let m = 1 + rng.range_usize(8);
        let cost: Vec<f64> = (0..n * m).map(|_| rng.f64() * 5.0).collect();
        let mut p: Vec<f64> = (0..n).map(|_| rng.f64() + 1e-3).collect();
        let mut q: Vec<f64> = (0..m).map(|_| rng.f64() + 1e-3).collect();
        let sp: f64 = p.iter().sum();
        let sq: f64 = q.iter().sum();
        p.iter_mut().for_each(|v| *v /= sp);
        q.iter_mut().for_each(|v| *v /= sq);
        let cert = wasserstein1(&cost, &p, &q).unwrap();
        max_gap = max_gap.max((cert.value - cert.dual_value(&p, &q)).abs());
        max_cert_violation = max_cert_violation.max(cert.max_violation(&cost, &p, &q));
    }

    // Sorted 1-D supports against the CDF-difference oracle.
    let mut max_oracle_diff = 0.0f64;
    for _ in 0..200 {
        let n = 2 + rng.range_usize(6);
        let m = 2 + rng.range_usize(6);
        let mut xs: Vec<f64> = (0..n).map(|_| rng.f64() * 8.0).collect();
        let mut ys: Vec<f64> = (0..m).map(|_| rng.f64() * 8.0).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut p: Vec<f64> = (0..n).map(|_| rng.f64() + 1e-2).collect();
        let mut q: Vec<f64> = (0..m).map(|_| rng.f64() + 1e-2).collect();
        let sp: f64 = p.iter().sum();
        let sq: f64 = q.iter().sum();
        p.iter_mut().for_each(|v| *v /= sp);
        q.iter_mut().for_each(|v| *v /= sq);
        let cost: Vec<f64> = xs
            .iter()
            .flat_map(|&a| ys.iter().map(move |&b| (a - b).abs()))
            .collect();
        let cert = wasserstein1(&cost, &p, &q).unwrap();
        // CDF oracle.
        let mut events: Vec<(f64, f64, f64)> = xs
            .iter()
            .zip(&p)
            .map(|(&x, &mass)| (x, mass, 0.0))
            .chain(ys.iter().zip(&q).map(|(&x, &mass)| (x, 0.0, mass)))
            .collect();
        events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (mut total, mut fp, mut fq, mut last) = (0.0, 0.0, 0.0, events[0].0);
        for (x, mp, mq) in events {
            total += (fp - fq as f64).abs() * (x - last);
            fp += mp;
            fq += mq;
            last = x;
        }
        max_oracle_diff = max_oracle_diff.max((cert.value - total).abs());
    }

    let pass = max_ratio_excess <= 1e-9
        && max_init_diff <= 1e-7
        && max_gap <= 1e-9
        && max_cert_violation <= 1e-9
        && max_oracle_diff <= 1e-9;
    let detail = format!(
        "ratio excess {max_ratio_excess:.2e}, init diff {max_init_diff:.2e}, duality gap {max_gap:.2e}, cert violation {max_cert_violation:.2e}, 1-D oracle diff {max_oracle_diff:.2e}"
    );
    assert!(report("4 (metric solver properties)", pass, &detail), "{detail}");
}

// Criterion 5: trajectory-DP PSM zero band for obstacle positions 25/45 and
// kernel-positive alignment of equal-distance states.
#[test]
fn criterion_5_jumping_psm_structure() {
    let _guard = exclusive();
    let env_x = jumping_build(JumpingInstance::new(25, 10, ObstacleColor::White).unwrap()).unwrap();
    let env_y = jumping_build(JumpingInstance::new(45, 10, ObstacleColor::White).unwrap()).unwrap();
    let (tx, _) = jumping_optimal_trajectory(&env_x).unwrap();
    let (ty, _) = jumping_optimal_trajectory(&env_y).unwrap();
    let table = psm_trajectory_dp(&tx, &ty, DistKind::Tv, 0.99).unwrap();
    let (cx, cy) = (25isize, 45isize);
    let mut max_band = 0.0f64;
    let mut band = 0usize;
    for i in 0..table.n_rows() {
        for j in 0..table.n_cols() {
            if cx - (i as isize) == cy - (j as isize) {
                max_band = max_band.max(table.at(i, j).abs());
                band += 1;
            }
        }
    }
    let pairs = select_positive_pairs(&table, 0.01).unwrap();
    let mut aligned = true;
    let mut checked = 0;
    for p in &pairs {
        let dist_y = cy - p.anchor as isize;
        if dist_y > 20 && dist_y <= cx {
            aligned &= cx - p.positive as isize == dist_y;
            checked += 1;
        }
    }
    let pass = max_band <= 1e-9 && band > 20 && aligned && checked == 5;
    let detail = format!(
        "max |d| on the equal-distance band = {max_band:.2e} over {band} pairs; {checked} pre-jump anchors aligned: {aligned}"
    );
    assert!(report("5 (jumping PSM structure)", pass, &detail), "{detail}");
}

// Criterion 6: gradient checks, full joint embedding objective at 1e-4 and
// LQR truncated cost at 1e-5 (central differences, h = 1e-5).
#[test]
fn criterion_6_gradient_checks() {
    let _guard = exclusive();
    // Full PSE objective on a small-but-real pair of jumping tasks.
    let mut split = grid_split(SplitKind::Wide, 0).unwrap();
    split.training_tasks = split.training_tasks[1..3].to_vec();
    let config = CmeConfig {
        downsample: 4,
        encoder_widths: vec![12],
        embed_dim: 8,
        alpha: 5.0,
        seed: 7,
        ..CmeConfig::default()
    };
    let prepared = prepare_tasks(&split, &config).unwrap();
    let tables = compute_metric_tables(&prepared, TrainMethod::Pse, &config).unwrap();
    let mut positives = BTreeMap::new();
    for (x, y) in [(0usize, 1usize), (1, 0)] {
        positives.insert(
            (x, y),
            select_positive_pairs(tables.get(x, y).unwrap(), config.beta).unwrap(),
        );
    }
    let arch = ModelArch {
        input_dim: prepared.input_dim,
        encoder_widths: config.encoder_widths.clone(),
        embed_dim: config.embed_dim,
        n_actions: 2,
        downsample: config.downsample,
    };
    let model = EmbeddingModel::new(arch, config.seed).unwrap();
    let objective = pair_objective(
        &model,
        &prepared,
        &tables,
        &positives,
        TrainMethod::Pse,
        &config,
        (0, 1),
    )
    .unwrap();
    let analytic = objective.grads.to_vec(&model);
    // The imitation grads are per-state means; the aux grads carry alpha
    // already. Loss closure must mirror pair_objective's total.
    let params = model.params_to_vec();
    let mut probe_model = model.clone();
    let mut f = |p: &[f64]| -> behavsim_core::Result<f64> {
        probe_model.set_params_from_vec(p)?;
        let o = pair_objective(
            &probe_model,
            &prepared,
            &tables,
            &positives,
            TrainMethod::Pse,
            &config,
            (0, 1),
        )?;
        Ok(o.total(config.alpha))
    };
    let pse_report = gradient_check(&mut f, &params, &analytic, 1e-5).unwrap();

    // LQR truncated-cost gradient with respect to the gain, where every
    // parameter's gradient sits far above the h = 1e-5 finite-difference
    // noise floor. (The layer-level chain rule is exact linear algebra on
    // top of this and is unit-tested separately.)
    let build = lqr_build(3, 25, 0).unwrap();
    let system = &build.train_envs[0];
    let horizon = 40;
    let mut rng = Rng::seed_from_u64(5);
    let mut k = behavsim_core::linalg::Mat::zeros(LQR_STATE_DIM, LQR_STATE_DIM);
    for v in k.data.iter_mut() {
        *v = 0.01 * rng.normal();
    }
    let (_, grad) = behavsim_core::lqr_gen::cost_and_gain_gradient(system, &k, horizon).unwrap();
    let params_lqr = k.data.clone();
    let analytic_lqr = grad.data.clone();
    let shape = (k.rows, k.cols);
    let mut g = |p: &[f64]| -> behavsim_core::Result<f64> {
        let probe = behavsim_core::linalg::Mat {
            rows: shape.0,
            cols: shape.1,
            data: p.to_vec(),
        };
        Ok(expected_cost(system, &probe, horizon))
    };
    let lqr_report = gradient_check(&mut g, &params_lqr, &analytic_lqr, 1e-5).unwrap();

    let pass = pse_report.max_rel_error <= 1e-4 && lqr_report.max_rel_error <= 1e-5;
    let detail = format!(
        "PSE objective max rel err {:.2e} ({} params), LQR cost max rel err {:.2e} ({} params)",
        pse_report.max_rel_error,
        params.len(),
        lqr_report.max_rel_error,
        params_lqr.len()
    );
    assert!(report("6 (gradient correctness)", pass, &detail), "{detail}");
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Two-worker seed map with deterministic (seed-ordered) reduction.
fn run_seeds<T: Send>(seeds: &[u64], f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let mut out: Vec<Option<T>> = seeds.iter().map(|_| None).collect();
    let mid = seeds.len() / 2;
    let (left, right) = out.split_at_mut(mid);
    std::thread::scope(|scope| {
        let f = &f;
        scope.spawn(|| {
            for (slot, &seed) in left.iter_mut().zip(&seeds[..mid]) {
                *slot = Some(f(seed));
            }
        });
        scope.spawn(|| {
            for (slot, &seed) in right.iter_mut().zip(&seeds[mid..]) {
                *slot = Some(f(seed));
            }
        });
    });
    out.into_iter().map(|s| s.unwrap()).collect()
}

// Criterion 7: jumping generalization orderings on the wide split over 10
// seeds: PSE beats imitation-only by >= 5 points and beats the
// pi-bisimulation contrastive arm. <= 15 minutes per arm.
#[test]
fn criterion_7_jumping_generalization() {
    let _guard = exclusive();
    let split = grid_split(SplitKind::Wide, 0).unwrap();
    let config = CmeConfig::default();
    let prepared = prepare_tasks(&split, &config).unwrap();
    let seeds: Vec<u64> = (0..10).collect();
    let mut means = BTreeMap::new();
    let mut timings = BTreeMap::new();
    for method in [
        TrainMethod::Pse,
        TrainMethod::ImitationOnly,
        TrainMethod::CmePiBisim,
    ] {
        let tables = compute_metric_tables(&prepared, method, &config).unwrap();
        let t0 = Instant::now();
        let rates = run_seeds(&seeds, |seed| {
            let mut c = config.clone();
            c.seed = seed;
            train_jumping_prepared(&prepared, &tables, &split, &c, method)
                .map(|r| r.final_test_solve_pct)
                .unwrap_or(f64::NAN)
        });
        timings.insert(format!("{method:?}"), t0.elapsed());
        means.insert(format!("{method:?}"), mean(&rates));
    }
    let pse = means["Pse"];
    let imitation = means["ImitationOnly"];
    let pi_bisim = means["CmePiBisim"];
    let within_budget = timings.values().all(|t| t.as_secs_f64() <= 15.0 * 60.0);
    let pass = pse >= imitation + 5.0 && pse > pi_bisim && within_budget;
    let detail = format!(
        "mean test solve: pse {pse:.2}%, imitation {imitation:.2}%, pi-bisim CME {pi_bisim:.2}%; timings {timings:?}"
    );
    assert!(report("7 (jumping generalization)", pass, &detail), "{detail}");
}

// Criterion 8: LQR generalization at n_d = 500 over 20 seeds. The overparam
// baseline must fail (mean error > 10) and the analytic policy must match
// the oracle (<= 1e-6). The psm_aggregation arm is asserted at < 1.0 as
// specified; see the project notes for why the stated construction cannot
// reach it (the shared-state pairs only constrain the difference span of
// the distractor maps).
#[test]
fn criterion_8_lqr_generalization() {
    let _guard = exclusive();
    let t0 = Instant::now();
    let horizon = LqrTrainConfig::default().horizon;
    let eval_batch = init_batch(0xe7a1, 100, LQR_STATE_DIM);
    let seeds: Vec<u64> = (0..20).collect();
    let outcomes = run_seeds(&seeds, |seed| {
        let build = lqr_build(seed, 500, 3).unwrap();
        let system = &build.train_envs[0];
        let p_star = dare_solve(system).unwrap();
        let oracle = oracle_controller(system, &p_star).unwrap();
        let mut errs = Vec::new();
        for method in [LqrMethod::PsmAggregation, LqrMethod::Overparam] {
            let config = LqrTrainConfig {
                seed,
                ..LqrTrainConfig::default()
            };
            let run = train_lqr_policy(method, &build.train_envs, &config).unwrap();
            if method == LqrMethod::PsmAggregation {
                // Stated consequence of the aggregation penalty: the first
                // layer annihilates the distractor-difference span.
                let delta = build.train_envs[0].w_d.sub(&build.train_envs[1].w_d);
                let k1 = &run.policy.k1;
                let n_s = system.n_s;
                let mut k1_dist =
                    behavsim_core::linalg::Mat::zeros(k1.rows, system.n_d);
                for i in 0..k1.rows {
                    for j in 0..system.n_d {
                        k1_dist[(i, j)] = k1[(i, n_s + j)];
                    }
                }
                let annihilation = k1_dist.matmul(&delta).frob_norm();
                assert!(
                    annihilation <= 1e-3,
                    "seed {seed}: |K1_d (W_dx - W_dy)| = {annihilation:e}"
                );
            }
            let controller = LqrController::Observation(run.policy.effective());
            errs.push(
                evaluate_generalization(&controller, &build.test_envs, &oracle, horizon, &eval_batch)
                    .unwrap(),
            );
        }
        let k_star = LqrController::Observation(generalizing_policy(system, &p_star).unwrap());
        errs.push(
            evaluate_generalization(&k_star, &build.test_envs, &oracle, horizon, &eval_batch)
                .unwrap(),
        );
        errs
    });
    let psm = mean(&outcomes.iter().map(|o| o[0]).collect::<Vec<_>>());
    let overparam = mean(&outcomes.iter().map(|o| o[1]).collect::<Vec<_>>());
    let kstar = outcomes.iter().map(|o| o[2]).fold(0.0f64, f64::max);
    let elapsed = t0.elapsed();
    let within_budget = elapsed.as_secs_f64() <= 10.0 * 60.0;
    let pass = psm < 1.0 && overparam > 10.0 && kstar <= 1e-6 && within_budget;
    let detail = format!(
        "mean |cost - oracle|: psm_aggregation {psm:.3}, overparam {overparam:.3}, analytic K* worst {kstar:.2e}; {elapsed:.0?}"
    );
    assert!(report("8 (LQR generalization)", pass, &detail), "{detail}");
}

// Criterion 9: every CLI subcommand, run twice with identical arguments,
// produces byte-identical outputs.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn criterion_9_cli_determinism() {
    let _guard = exclusive();
    let binary = env!("CARGO_BIN_EXE_behavsim");
    let base = std::env::temp_dir().join(format!("behavsim_accept_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base).unwrap();

    // Input fixtures.
    let cake_x = base.join("cake_x.json");
    let cake_y = base.join("cake_y.json");
    let mx = cake_mdp(1.0, 0.9).unwrap();
    let my = cake_mdp(3.0, 0.9).unwrap();
    std::fs::write(&cake_x, serde_json::to_string_pretty(&mx.to_json()).unwrap()).unwrap();
    std::fs::write(&cake_y, serde_json::to_string_pretty(&my.to_json()).unwrap()).unwrap();

    let train_dir = base.join("train");
    let commands: Vec<(&str, Vec<String>)> = vec![
        (
            "metric",
            vec![
                "metric".into(),
                "--kind".into(),
                "psm".into(),
                "--x".into(),
                cake_x.display().to_string(),
                "--y".into(),
                cake_y.display().to_string(),
                "--out-dir".into(),
                base.join("metric").display().to_string(),
            ],
        ),
        (
            "verify",
            vec![
                "verify".into(),
                "--check".into(),
                "theorem1".into(),
                "--pairs".into(),
                "10".into(),
                "--out-dir".into(),
                base.join("verify").display().to_string(),
            ],
        ),
        (
            "render",
            vec![
                "render".into(),
                "--position".into(),
                "30".into(),
                "--height".into(),
                "12".into(),
                "--color".into(),
                "red".into(),
                "--trajectory".into(),
                "--out-dir".into(),
                base.join("render").display().to_string(),
            ],
        ),
        (
            "train-jumping",
            vec![
                "train-jumping".into(),
                "--method".into(),
                "pse".into(),
                "--epochs".into(),
                "2".into(),
                "--seeds".into(),
                "1".into(),
                "--out-dir".into(),
                train_dir.display().to_string(),
            ],
        ),
        (
            "eval-grid",
            vec![
                "eval-grid".into(),
                "--model".into(),
                train_dir.join("model_seed0.json").display().to_string(),
                "--out-dir".into(),
                base.join("eval").display().to_string(),
            ],
        ),
        (
            "embed-dump",
            vec![
                "embed-dump".into(),
                "--model".into(),
                train_dir.join("model_seed0.json").display().to_string(),
                "--out-dir".into(),
                base.join("embed").display().to_string(),
            ],
        ),
        (
            "lqr",
            vec![
                "lqr".into(),
                "--methods".into(),
                "overparam,kstar".into(),
                "--nd".into(),
                "25".into(),
                "--seeds".into(),
                "1".into(),
                "--iters".into(),
                "5".into(),
                "--out-dir".into(),
                base.join("lqr").display().to_string(),
            ],
        ),
    ];

    let mut all_ok = true;
    let mut details = Vec::new();
    for (name, args) in &commands {
        let out_dir = PathBuf::from(args.last().unwrap());
        let run = |label: &str| {
            let output = Command::new(binary)
                .args(args)
                .output()
                .unwrap_or_else(|e| panic!("spawning {name} ({label}): {e}"));
            assert!(
                output.status.success(),
                "{name} ({label}) failed: {}",
                String::from_utf8_lossy(&output.stderr)
            );
        };
        run("first");
        let first = snapshot(&out_dir);
        run("second");
        let second = snapshot(&out_dir);
        let identical = first == second;
        all_ok &= identical;
        details.push(format!("{name}: {}", if identical { "ok" } else { "DIFFERS" }));
        assert!(
            !first.is_empty(),
            "{name} wrote no outputs into {}",
            out_dir.display()
        );
    }
    let detail = details.join(", ");
    assert!(report("9 (CLI determinism)", all_ok, &detail), "{detail}");
    let _ = std::fs::remove_dir_all(&base);
}
