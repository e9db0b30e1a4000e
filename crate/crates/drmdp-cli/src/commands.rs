use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use drmdp::config::{load_experiment, load_instance, ExperimentConfig};
use drmdp::env::{Environment, RngStream, TrajectoryRecord};
use drmdp::learn::{learn, write_episode_log, LearnerConfig};
use drmdp::metrics::{
    baseline_policy, check_structural_claims, decompose_value, policy_value,
};
use drmdp::model::DeviceModel;
use drmdp::solve::{
    greedy, stationary_distribution, value_iteration, write_policy, write_qtable,
    DEFAULT_MAX_ITER,
};
use drmdp::sweep::run_sweep;

/// Exact solvers, Q-learning and tradeoff sweeps for the device
/// demand-response MDP.
#[derive(Debug, Parser)]
#[command(name = "drmdp", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the instance exactly; write the optimal Q-table and policy.
    Solve {
        /// Instance TOML file.
        #[arg(long)]
        config: PathBuf,
        /// Sup-norm Bellman residual target.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Output path for the optimal Q-table.
        #[arg(long, default_value = "q_star.tsv")]
        out: PathBuf,
        /// Output path for the greedy policy.
        #[arg(long, default_value = "mu_star.tsv")]
        policy_out: PathBuf,
    },
    /// Evaluate the no-rescheduling baseline policy.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Dump a simulated baseline trajectory to this CSV path.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Steps to simulate for the trajectory dump.
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one Q-learning lifetime on the instance.
    Learn {
        #[arg(long)]
        config: PathBuf,
        /// Experiment TOML supplying the learner section; defaults apply
        /// without it.
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the learned Q-table here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the per-episode log here.
        #[arg(long)]
        episode_log: Option<PathBuf>,
    },
    /// Sweep gamma over a grid; write one CSV row per grid point.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Experiment TOML with a [sweep] section.
        #[arg(long)]
        sweep: PathBuf,
        /// Overrides the sweep file's base_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        workers: Option<usize>,
        /// CSV destination; overrides the sweep file's `output`, falls
        /// back to sweep.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify the structural tradeoff claims on a compliant instance.
    CheckTheorem1 {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated gamma grid; default 0,0.25,...,10.
        #[arg(long)]
        gammas: Option<String>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Print the stationary distribution of the price chain.
    Stationary {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve {
            config,
            tol,
            out,
            policy_out,
        } => cmd_solve(&config, tol, &out, &policy_out),
        Command::Baseline {
            config,
            tol,
            trajectory,
            steps,
            seed,
        } => cmd_baseline(&config, tol, trajectory.as_deref(), steps, seed),
        Command::Learn {
            config,
            sweep,
            seed,
            out,
            episode_log,
        } => cmd_learn(&config, sweep.as_deref(), seed, out.as_deref(), episode_log.as_deref()),
        Command::Sweep {
            config,
            sweep,
            seed,
            workers,
            out,
        } => cmd_sweep(&config, &sweep, seed, workers, out.as_deref()),
        Command::CheckTheorem1 { config, gammas, tol } => {
            cmd_check_theorem1(&config, gammas.as_deref(), tol)
        }
        Command::Stationary { config, tol } => cmd_stationary(&config, tol),
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !tol.is_finite() || tol <= 0.0 {
        bail!("--tol must be > 0, got {tol}");
    }
    Ok(())
}

fn load(config: &std::path::Path) -> Result<DeviceModel> {
    load_instance(config).with_context(|| format!("loading instance {}", config.display()))
}

fn create(path: &std::path::Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("creating output file {}", path.display())
    })?))
}

fn cmd_solve(
    config: &std::path::Path,
    tol: f64,
    out: &std::path::Path,
    policy_out: &std::path::Path,
) -> Result<()> {
    check_tol(tol)?;
    let model = load(config)?;
    let vi = value_iteration(&model, tol, DEFAULT_MAX_ITER)?;
    if !vi.converged {
        bail!(
            "value iteration did not converge: residual {:.3e} after {} iterations",
            vi.residual,
            vi.iterations
        );
    }
    let mu_star = greedy(&vi.q);
    let v_star = policy_value(&model, &mu_star, tol)?;

    let mut q_file = create(out)?;
    write_qtable(&vi.q, &mut q_file)?;
    q_file.flush()?;
    let mut p_file = create(policy_out)?;
    write_policy(&mu_star, &mut p_file)?;
    p_file.flush()?;

    println!("states: {}", model.state_space_size());
    println!("iterations: {}", vi.iterations);
    println!("residual: {:.6e}", vi.residual);
    println!("v_star: {:.10e}", v_star);
    println!("q_table: {}", out.display());
    println!("policy: {}", policy_out.display());
    Ok(())
}

fn cmd_baseline(
    config: &std::path::Path,
    tol: f64,
    trajectory: Option<&std::path::Path>,
    steps: usize,
    seed: u64,
) -> Result<()> {
    check_tol(tol)?;
    let model = load(config)?;
    let mu = baseline_policy(&model);
    let v_base = policy_value(&model, &mu, tol)?;
    let d = decompose_value(&model, &mu, tol)?;
    println!("gamma: {}", model.params().gamma);
    println!("v_base: {:.10e}", v_base);
    println!("bill_component: {:.10e}", d.a_mu);
    println!("dissatisfaction_component: {:.10e}", d.b_mu);

    if let Some(path) = trajectory {
        let mut env = Environment::new(Arc::new(model.clone()))?;
        let mut rng = RngStream::seeded(seed);
        let mut state = env.reset(&mut rng);
        let mut records = Vec::with_capacity(steps);
        for t in 0..steps {
            let idx = model.state_index(&state).expect("valid state");
            let action = mu.sample(idx, rng.uniform());
            let step = env.step(action, &mut rng)?;
            records.push(TrajectoryRecord {
                t,
                state,
                action,
                cost: step.cost,
                episode_ended: step.episode_ended,
            });
            state = step.next;
        }
        let mut file = create(path)?;
        drmdp::env::write_trajectory(&records, &mut file)?;
        file.flush()?;
        println!("trajectory: {}", path.display());
    }
    Ok(())
}

fn learner_from(sweep: Option<&std::path::Path>, alpha: f64) -> Result<LearnerConfig> {
    match sweep {
        None => Ok(LearnerConfig {
            episodes: drmdp::learn::episode_budget(alpha),
            ..LearnerConfig::default()
        }),
        Some(path) => {
            let exp: ExperimentConfig = load_experiment(path, alpha)
                .with_context(|| format!("loading experiment {}", path.display()))?;
            Ok(exp.learner)
        }
    }
}

fn cmd_learn(
    config: &std::path::Path,
    sweep: Option<&std::path::Path>,
    seed: u64,
    out: Option<&std::path::Path>,
    episode_log: Option<&std::path::Path>,
) -> Result<()> {
    let model = load(config)?;
    let cfg = learner_from(sweep, model.params().alpha)?;
    let mut env = Environment::new(Arc::new(model.clone()))?;
    let mut rng = RngStream::seeded(seed);
    let outcome = learn(&mut env, &cfg, &mut rng)?;

    println!("episodes: {}", cfg.episodes);
    println!("steps: {}", outcome.total_steps);
    println!("lifetime_discounted_cost: {:.10e}", outcome.lifetime_discounted_cost);
    println!("truncation_bias_bound: {:.3e}", outcome.tail_bias_bound);
    if let Ok(v_base) = policy_value(&model, &baseline_policy(&model), 1e-9) {
        if v_base > 0.0 {
            let ri = (v_base - outcome.lifetime_discounted_cost) / v_base;
            println!("sample_ri: {:.6}", ri);
        }
    }

    if let Some(path) = out {
        let mut file = create(path)?;
        write_qtable(&outcome.q, &mut file)?;
        file.flush()?;
        println!("q_table: {}", path.display());
    }
    if let Some(path) = episode_log {
        let mut file = create(path)?;
        write_episode_log(&outcome.episodes, &mut file)?;
        file.flush()?;
        println!("episode_log: {}", path.display());
    }
    Ok(())
}

/// Write adapter that reports each completed CSV row to stderr.
struct RowProgress<W: Write> {
    inner: W,
    rows_seen: usize,
    total: usize,
}

impl<W: Write> Write for RowProgress<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let newlines = buf.iter().filter(|&&b| b == b'\n').count();
        if newlines > 0 {
            // First newline is the header.
            for _ in 0..newlines {
                if self.rows_seen > 0 {
                    eprintln!("sweep: row {}/{} written", self.rows_seen, self.total);
                }
                self.rows_seen += 1;
            }
        }
        self.inner.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn cmd_sweep(
    config: &std::path::Path,
    sweep_path: &std::path::Path,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<&std::path::Path>,
) -> Result<()> {
    let model = load(config)?;
    let exp = load_experiment(sweep_path, model.params().alpha)
        .with_context(|| format!("loading experiment {}", sweep_path.display()))?;
    let mut cfg = exp.sweep.ok_or_else(|| {
        anyhow::anyhow!(
            "experiment file {} has no [sweep] section",
            sweep_path.display()
        )
    })?;
    if let Some(seed) = seed {
        cfg.base_seed = seed;
    }
    let default_out = PathBuf::from("sweep.csv");
    let out = out
        .map(Path::to_path_buf)
        .or(exp.sweep_output)
        .unwrap_or(default_out);
    let out = out.as_path();
    let workers = workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));

    eprintln!(
        "sweep: {} gamma points, {} runs x {} episodes each, {workers} workers",
        cfg.gamma_grid.len(),
        cfg.runs,
        cfg.learner.episodes
    );
    let mut writer = RowProgress {
        inner: create(out)?,
        rows_seen: 0,
        total: cfg.gamma_grid.len(),
    };
    let outcome = run_sweep(&model, &cfg, workers, &mut writer)?;
    writer.flush()?;
    eprintln!("sweep: wrote {}", out.display());

    if !outcome.failures.is_empty() {
        for (gamma, err) in &outcome.failures {
            eprintln!("sweep: gamma {gamma} failed: {err}");
        }
        bail!(
            "{} of {} grid points failed; completed rows were retained",
            outcome.failures.len(),
            cfg.gamma_grid.len()
        );
    }
    Ok(())
}

fn parse_gamma_grid(text: &str) -> Result<Vec<f64>> {
    let grid: Result<Vec<f64>, _> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse::<f64>)
        .collect();
    let grid = grid.context("parsing --gammas")?;
    if grid.is_empty() {
        bail!("--gammas must list at least one value");
    }
    Ok(grid)
}

fn default_gamma_grid() -> Vec<f64> {
    (0..=40).map(|k| k as f64 * 0.25).collect()
}

fn cmd_check_theorem1(
    config: &std::path::Path,
    gammas: Option<&str>,
    tol: f64,
) -> Result<()> {
    check_tol(tol)?;
    let model = load(config)?;
    let grid = match gammas {
        Some(text) => parse_gamma_grid(text)?,
        None => default_gamma_grid(),
    };
    let report = check_structural_claims(&model, &grid, tol)?;
    for (gamma, pot) in &report.rows {
        eprintln!(
            "gamma {gamma}: v_base {:.6e}, v_star {:.6e}, drp {:.6e}, rdrp {}",
            pot.v_base,
            pot.v_star,
            pot.drp,
            pot.rdrp.map_or("undefined".to_string(), |r| format!("{r:.6}")),
        );
    }
    for claim in &report.claims {
        println!(
            "{} claim {} ({})",
            if claim.passed { "PASS" } else { "FAIL" },
            claim.name,
            claim.detail
        );
    }
    if !report.all_passed() {
        bail!("one or more structural claims failed");
    }
    Ok(())
}

fn cmd_stationary(config: &std::path::Path, tol: f64) -> Result<()> {
    check_tol(tol)?;
    let model = load(config)?;
    let pi = stationary_distribution(model.price_chain(), tol)?;
    for (i, p) in pi.iter().enumerate() {
        println!("{}\t{}\t{}", i, model.price_chain().price(i), p);
    }
    Ok(())
}
