//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured quantities (run with `--nocapture` to see them).

use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;

use drmdp::env::{mc_policy_value, Environment, RngStream};
use drmdp::instances::{default_instance, small_instance, synthetic, tiny_instance, SynthDims};
use drmdp::learn::{learn, LearnerConfig, StepSizeSchedule};
use drmdp::metrics::{
    baseline_policy, check_structural_claims, delta_b_bruteforce, dr_potential,
    gamma_star_bound, policy_value,
};
use drmdp::model::Action;
use drmdp::solve::{greedy, policy_iteration, value_iteration};
use drmdp::sweep::{run_sweep, SweepConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Criterion 1: the default instance has exactly 96 states, and the
/// cardinality formula matches direct enumeration on random dimensions.
#[test]
fn acceptance_1_state_space_cardinality() {
    let m = default_instance();
    assert_eq!(m.state_space_size(), 96);
    assert_eq!(m.enumerate_states().len(), 96);

    let mut rng = ChaCha8Rng::seed_from_u64(20_240_001);
    for case in 0..20 {
        let dims = SynthDims {
            n_prices: rng.random_range(1..=5),
            w: rng.random_range(0..=4),
            w_hat: rng.random_range(0..=5),
            g_max: rng.random_range(1..=3),
        };
        let model = synthetic(dims, rng.random());
        let formula = dims.n_prices
            * ((2 * dims.w + 1) as usize * dims.g_max as usize + (dims.w_hat + 1) as usize);
        let states = model.enumerate_states();
        assert_eq!(model.state_space_size(), formula, "case {case}: {dims:?}");
        assert_eq!(states.len(), formula, "case {case}: {dims:?}");
        for (k, x) in states.iter().enumerate() {
            assert_eq!(model.state_index(x), Some(k));
        }
    }
    println!("ACCEPTANCE 1 PASS: |S| = 96 on the default instance; formula matches enumeration on 20 random dimension tuples");
}

/// Criterion 2: value iteration reaches residual < 1e-8 and policy
/// iteration agrees with it on min_a Q within 1e-6 at every state.
#[test]
fn acceptance_2_bellman_correctness() {
    let m = default_instance();
    let vi = value_iteration(&m, 1e-10, 500_000).unwrap();
    assert!(vi.converged, "VI residual {}", vi.residual);
    assert!(vi.residual < 1e-8, "VI residual {}", vi.residual);

    let pi = policy_iteration(&m, 1e-10, 100).unwrap();
    let mut worst = 0.0f64;
    for x in 0..m.state_space_size() {
        worst = worst.max((vi.q.min_value(x) - pi.q.min_value(x)).abs());
    }
    assert!(worst < 1e-6, "VI vs PI disagreement {worst:.3e}");
    println!(
        "ACCEPTANCE 2 PASS: VI residual {:.3e} (< 1e-8), VI-vs-PI max gap {worst:.3e} (< 1e-6), {} VI sweeps / {} PI rounds",
        vi.residual, vi.iterations, pi.iterations
    );
}

/// Criterion 3: the four structural claims hold over gamma = 0, 0.25,
/// ..., 10 on the default instance, with the exact above-threshold check
/// on the brute-forceable tiny instance.
#[test]
fn acceptance_3_structural_claims_suite() {
    let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
    let report = check_structural_claims(&default_instance(), &grid, 1e-9).unwrap();
    for claim in &report.claims {
        assert!(claim.passed, "default instance, claim {}: {}", claim.name, claim.detail);
    }

    // Exact part on the tiny instance: DRP = 0 within 1e-8 at
    // 1.01x the sufficient threshold derived from brute-forced delta_b.
    let tiny = tiny_instance();
    let delta_b = delta_b_bruteforce(&tiny, 16).unwrap().expect("positive delta_b");
    let bound = gamma_star_bound(&tiny, delta_b).unwrap();
    let probe = dr_potential(&tiny.with_gamma(1.01 * bound).unwrap(), 1e-10).unwrap();
    assert!(
        probe.drp.abs() <= 1e-8,
        "DRP({:.4}) = {:.3e}",
        1.01 * bound,
        probe.drp
    );
    let tiny_report = check_structural_claims(&tiny, &grid, 1e-10).unwrap();
    assert!(tiny_report.all_passed());

    println!(
        "ACCEPTANCE 3 PASS: 4/4 claims on the default instance over 41 gamma points; tiny instance delta_b = {delta_b:.6}, DRP(1.01 x {bound:.4}) = {:.3e} (<= 1e-8)",
        probe.drp
    );
}

/// Criterion 4: Monte-Carlo discounted returns of the baseline and of
/// greedy(Q*) match the analytic values within 3 standard errors.
#[test]
fn acceptance_4_simulator_vs_dp_oracle() {
    let m = default_instance();
    let env = Environment::new(Arc::new(m.clone())).unwrap();
    // Truncation at 40k steps biases the return by at most
    // alpha^40000 * max_cost / (1 - alpha) ~ 3e-4, far below one SE.
    let horizon = 40_000;
    let runs = 2_000;

    let mu_base = baseline_policy(&m);
    let v_base = policy_value(&m, &mu_base, 1e-9).unwrap();
    let est_base = mc_policy_value(&env, &mu_base, runs, horizon, 40_001);
    let z_base = (est_base.mean - v_base) / est_base.se;
    assert!(
        z_base.abs() <= 3.0,
        "baseline: MC {} +- {} vs DP {v_base} (z = {z_base:.2})",
        est_base.mean,
        est_base.se
    );

    let vi = value_iteration(&m, 1e-9, 500_000).unwrap();
    assert!(vi.converged);
    let mu_star = greedy(&vi.q);
    let v_star = policy_value(&m, &mu_star, 1e-9).unwrap();
    let est_star = mc_policy_value(&env, &mu_star, runs, horizon, 40_002);
    let z_star = (est_star.mean - v_star) / est_star.se;
    assert!(
        z_star.abs() <= 3.0,
        "optimal: MC {} +- {} vs DP {v_star} (z = {z_star:.2})",
        est_star.mean,
        est_star.se
    );

    println!(
        "ACCEPTANCE 4 PASS: baseline MC {:.2} +- {:.2} vs DP {:.2} (z = {z_base:+.2}); greedy MC {:.2} +- {:.2} vs DP {:.2} (z = {z_star:+.2}); {runs} runs each",
        est_base.mean, est_base.se, v_base, est_star.mean, est_star.se, v_star
    );
}

/// Criterion 5: Q-learning with Robbins-Monro step sizes and epsilon =
/// 0.1 converges in sup norm to 5% of Q* on the 16-state instance, with
/// every state visited at least 100 times.
#[test]
fn acceptance_5_q_learning_convergence() {
    let m = small_instance();
    assert!(m.state_space_size() <= 20);
    assert_eq!(m.params().alpha, 0.95);

    let vi = value_iteration(&m, 1e-10, 200_000).unwrap();
    assert!(vi.converged);
    let allowed = 0.05 * vi.q.sup_norm().max(1.0);

    // A hot softmin keeps dominated actions sampled, and the sub-linear
    // step decay leaves rarely visited pairs enough total step mass to
    // forget their initialization. The schedule is Robbins-Monro:
    // sum beta = inf, sum beta^2 < inf.
    let cfg = LearnerConfig {
        epsilon: 0.1,
        eta: 50.0,
        schedule: StepSizeSchedule::Power {
            numerator: 5.0,
            offset: 20.0,
            exponent: 0.6,
        },
        q_init: 0.0,
        episodes: 50_000,
    };
    let mut env = Environment::new(Arc::new(m.clone())).unwrap();
    let mut rng = RngStream::seeded(5);
    let out = learn(&mut env, &cfg, &mut rng).unwrap();

    let dist = out.q.sup_dist(&vi.q);
    assert!(dist <= allowed, "|Q - Q*| = {dist:.4} > {allowed:.4}");
    let min_visits = *out.state_visits.iter().min().unwrap();
    assert!(min_visits >= 100, "least-visited state seen {min_visits} times");

    println!(
        "ACCEPTANCE 5 PASS: |Q - Q*| = {dist:.4} (allowed {allowed:.4}) after {} episodes / {} steps; min state visits {min_visits}",
        cfg.episodes, out.total_steps
    );
}

/// Criterion 6: the sweep on the default instance reproduces the
/// qualitative tradeoff curves: RDRP non-increasing from 1, RI
/// decreasing, bounded by RDRP, and eventually negative.
#[test]
fn acceptance_6_tradeoff_sweep_shape() {
    let grid: Vec<f64> = (0..=25).map(|k| k as f64 * 0.2).collect();
    let cfg = SweepConfig {
        gamma_grid: grid,
        learner: LearnerConfig::default(), // 4000 episodes
        runs: 50,
        base_seed: 60_001,
        tol: 1e-9,
    };
    let mut csv = Vec::new();
    let outcome = run_sweep(&default_instance(), &cfg, 8, &mut csv).unwrap();
    assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
    let rows = &outcome.reports;

    // (a) RDRP starts at 1 and never increases.
    let rdrp0 = rows[0].rdrp.unwrap();
    assert!((rdrp0 - 1.0).abs() <= 1e-8, "RDRP(0) = {rdrp0}");
    for pair in rows.windows(2) {
        let a = pair[0].rdrp.unwrap();
        let b = pair[1].rdrp.unwrap();
        assert!(b <= a + 1e-8, "RDRP increased: {a} -> {b}");
    }

    // (b) RI decreasing and below RDRP within sampling noise.
    for pair in rows.windows(2) {
        let a = pair[0].ri.unwrap();
        let b = pair[1].ri.unwrap();
        assert!(
            b < a,
            "RI not decreasing at gamma {}: {a} -> {b}",
            pair[1].gamma
        );
    }
    for row in rows {
        let ri = row.ri.unwrap();
        let rdrp = row.rdrp.unwrap();
        let slack = 3.0 * row.v_tilde.se / row.v_base;
        assert!(
            ri <= rdrp + slack,
            "gamma {}: RI {ri} > RDRP {rdrp} + {slack}",
            row.gamma
        );
    }

    // (c) RI goes negative within the grid.
    let crossing = rows.iter().find(|r| r.ri.unwrap() < 0.0);
    let crossing = crossing.expect("RI never became negative").gamma;

    println!(
        "ACCEPTANCE 6 PASS: RDRP(0) = {rdrp0:.9}, RDRP non-increasing, RI decreasing from {:.4} to {:.4}, RI < 0 from gamma = {crossing}; 26 gamma points x 50 runs",
        rows[0].ri.unwrap(),
        rows.last().unwrap().ri.unwrap()
    );
}

/// Criterion 7: the sweep command produces byte-identical CSV across
/// repeated runs and across worker counts 1 and 8.
#[test]
fn acceptance_7_sweep_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let render = |name: &str, workers: &str| -> Vec<u8> {
        let path = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_drmdp"))
            .args([
                "sweep",
                "--config",
                configs().join("default.toml").to_str().unwrap(),
                "--sweep",
                configs().join("experiment_smoke.toml").to_str().unwrap(),
                "--seed",
                "7",
                "--workers",
                workers,
                "--out",
                path.to_str().unwrap(),
            ])
            .output()
            .expect("binary runs");
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(&path).unwrap()
    };
    let first = render("a.csv", "1");
    let second = render("b.csv", "1");
    let wide = render("c.csv", "8");
    assert_eq!(first, second, "repeat run differs");
    assert_eq!(first, wide, "worker count changed the output");
    assert_eq!(first.split(|&b| b == b'\n').count(), 5); // header + 3 rows + trailing
    println!(
        "ACCEPTANCE 7 PASS: byte-identical CSV ({} bytes) across two runs and worker counts {{1, 8}}",
        first.len()
    );
}

/// Criterion 8: empirical transition frequencies from the simulator
/// match the exact kernel within 4 standard errors per outcome.
#[test]
fn acceptance_8_kernel_statistics() {
    let m = default_instance();
    let mut env = Environment::new(Arc::new(m.clone())).unwrap();
    let mut pick = ChaCha8Rng::seed_from_u64(80_001);
    let n = m.state_space_size();
    let samples_per_pair = 100_000usize;
    let mut rng = RngStream::seeded(80_002);

    let mut checked_outcomes = 0usize;
    for pair in 0..10 {
        let state = m.state_at(pick.random_range(0..n));
        let action = if pick.random_range(0..2) == 0 { Action::Off } else { Action::On };

        // Expected distribution over next states (branches that share a
        // next state are aggregated).
        let mut expected = std::collections::HashMap::new();
        for o in m.transitions(&state, action).unwrap() {
            *expected.entry(m.state_index(&o.next).unwrap()).or_insert(0.0) += o.prob;
        }

        let mut counts: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        for _ in 0..samples_per_pair {
            env.set_state(state).unwrap();
            let step = env.step(action, &mut rng).unwrap();
            *counts.entry(m.state_index(&step.next).unwrap()).or_insert(0) += 1;
        }

        for (next, p) in &expected {
            let freq = *counts.get(next).unwrap_or(&0) as f64 / samples_per_pair as f64;
            let se = (p * (1.0 - p) / samples_per_pair as f64).sqrt();
            assert!(
                (freq - p).abs() <= 4.0 * se,
                "pair {pair} ({state} {action}) -> state {next}: freq {freq:.6} vs prob {p:.6} (se {se:.2e})"
            );
            checked_outcomes += 1;
        }
        // No mass outside the kernel's support.
        for next in counts.keys() {
            assert!(expected.contains_key(next), "off-support transition to {next}");
        }
    }
    println!(
        "ACCEPTANCE 8 PASS: {checked_outcomes} outcome frequencies over 10 state-action pairs x {samples_per_pair} samples, all within 4 SE"
    );
}
