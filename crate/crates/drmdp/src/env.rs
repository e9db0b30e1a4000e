//! Sampling environment over the exact kernel.
//!
//! The learner sees states, costs and episode boundaries but not the
//! model tables. All randomness flows through [`RngStream`], a seeded
//! ChaCha8 generator, so a (seed, action sequence) pair maps to exactly
//! one trajectory on every platform.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Action, DeviceModel, ModelError, State};
use crate::solve::{stationary_distribution, Policy, SolveError};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called before reset")]
    NotReset,
}

/// splitmix64 finalizer, used to derive independent stream seeds from a
/// base seed and small indices.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Seed for run `idx` of a batch rooted at `base`.
pub fn mix_seed(base: u64, idx: u64) -> u64 {
    splitmix64(base ^ splitmix64(idx))
}

/// Deterministic pseudo-random stream. Identical seeds reproduce
/// identical trajectories bit for bit.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn seeded(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(rand_distr::StandardNormal)
    }
}

/// Optional zero-mean noise added to the user's evaluation of a
/// completed or canceled job. Disabled by default.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EvalNoise {
    #[default]
    None,
    /// Uniform on [-half_width, half_width].
    Uniform { half_width: f64 },
    /// Normal with the given standard deviation.
    Gaussian { std_dev: f64 },
}

impl EvalNoise {
    fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            EvalNoise::None => 0.0,
            EvalNoise::Uniform { half_width } => (2.0 * rng.uniform() - 1.0) * half_width,
            EvalNoise::Gaussian { std_dev } => rng.normal() * std_dev,
        }
    }

    fn is_none(&self) -> bool {
        matches!(self, EvalNoise::None)
    }
}

/// One observed interaction step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    /// Observed instantaneous cost: bill plus gamma times the user's
    /// evaluation (the dissatisfaction entry, plus noise if enabled).
    pub cost: f64,
    pub next: State,
    /// True exactly when the device portion was regenerated.
    pub episode_ended: bool,
}

#[derive(Debug)]
struct SampleOutcome {
    next: u32,
    /// Cumulative probability within the (state, action) outcome list.
    cum: f64,
    cost: f64,
    episode_end: bool,
}

#[derive(Debug)]
struct SampleTable {
    entries: Vec<SampleOutcome>,
    offsets: Vec<usize>,
    /// Cumulative stationary price distribution for resets.
    price_cum: Vec<f64>,
    /// Cumulative regeneration distribution for resets.
    regen_cum: Vec<(i32, u32, f64)>,
}

/// The agent-facing simulator. Instances share the immutable model;
/// cloning is cheap and yields an independent environment.
#[derive(Debug, Clone)]
pub struct Environment {
    model: Arc<DeviceModel>,
    table: Arc<SampleTable>,
    noise: EvalNoise,
    state: Option<usize>,
}

impl Environment {
    pub fn new(model: Arc<DeviceModel>) -> Result<Self, SolveError> {
        let pi_p = stationary_distribution(model.price_chain(), 1e-13)?;
        let mut price_cum = Vec::with_capacity(pi_p.len());
        let mut acc = 0.0;
        for p in &pi_p {
            acc += p;
            price_cum.push(acc);
        }
        *price_cum.last_mut().expect("non-empty chain") = 1.0;

        let mut regen_cum = Vec::new();
        let mut acc = 0.0;
        for (dp, p) in model.requests().regen() {
            acc += p;
            regen_cum.push((dp.s, dp.g, acc));
        }
        regen_cum.last_mut().expect("non-empty regen").2 = 1.0;

        let n = model.state_space_size();
        let mut entries = Vec::new();
        let mut offsets = Vec::with_capacity(2 * n + 1);
        offsets.push(0);
        for idx in 0..n {
            let state = model.state_at(idx);
            for action in Action::ALL {
                let outs = model.transitions(&state, action).expect("enumerated state");
                let mut acc = 0.0;
                for o in &outs {
                    acc += o.prob;
                    entries.push(SampleOutcome {
                        next: model.state_index(&o.next).expect("kernel closure") as u32,
                        cum: acc,
                        cost: o.cost,
                        episode_end: o.episode_end,
                    });
                }
                entries.last_mut().expect("non-empty outcome list").cum = 1.0;
                offsets.push(entries.len());
            }
        }

        Ok(Self {
            model,
            table: Arc::new(SampleTable {
                entries,
                offsets,
                price_cum,
                regen_cum,
            }),
            noise: EvalNoise::None,
            state: None,
        })
    }

    pub fn with_noise(mut self, noise: EvalNoise) -> Self {
        self.noise = noise;
        self
    }

    pub fn model(&self) -> &DeviceModel {
        &self.model
    }

    pub fn current_state(&self) -> Option<State> {
        self.state.map(|i| self.model.state_at(i))
    }

    /// Draws an initial state with the price from the chain's stationary
    /// distribution and the device portion from the regeneration
    /// distribution, independently (price first).
    pub fn reset(&mut self, rng: &mut RngStream) -> State {
        let u_price = rng.uniform();
        let price_idx = self
            .table
            .price_cum
            .iter()
            .position(|c| u_price < *c)
            .unwrap_or(self.table.price_cum.len() - 1);
        let u_regen = rng.uniform();
        let (s, g) = self
            .table
            .regen_cum
            .iter()
            .find(|(_, _, c)| u_regen < *c)
            .map(|(s, g, _)| (*s, *g))
            .unwrap_or_else(|| {
                let last = self.table.regen_cum.last().expect("non-empty regen");
                (last.0, last.1)
            });
        let state = State::new(price_idx, s, g);
        self.state = Some(self.model.state_index(&state).expect("regen state is valid"));
        state
    }

    /// Forces the current state; diagnostic entry point for kernel
    /// statistics tests.
    pub fn set_state(&mut self, state: State) -> Result<(), ModelError> {
        match self.model.state_index(&state) {
            Some(idx) => {
                self.state = Some(idx);
                Ok(())
            }
            None => Err(ModelError::new(
                "state",
                format!("{state} is not a valid state for this model"),
            )),
        }
    }

    /// Samples one kernel branch for the given action.
    pub fn step(&mut self, action: Action, rng: &mut RngStream) -> Result<EnvStep, EnvError> {
        let current = self.state.ok_or(EnvError::NotReset)?;
        let k = 2 * current + action.index();
        let branch_range = self.table.offsets[k]..self.table.offsets[k + 1];
        let u = rng.uniform();
        let branches = &self.table.entries[branch_range];
        let outcome = branches
            .iter()
            .find(|o| u < o.cum)
            .unwrap_or_else(|| branches.last().expect("non-empty outcome list"));

        let mut cost = outcome.cost;
        if outcome.episode_end && !self.noise.is_none() {
            // The evaluation equals the dissatisfaction plus behavioral
            // noise; only completed/canceled jobs are evaluated.
            cost += self.model.params().gamma * self.noise.sample(rng);
        }
        self.state = Some(outcome.next as usize);
        Ok(EnvStep {
            cost,
            next: self.model.state_at(outcome.next as usize),
            episode_ended: outcome.episode_end,
        })
    }
}

/// Monte-Carlo estimate of a policy's discounted value from the
/// stationary-price x regeneration initial distribution.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub runs: u32,
}

/// Simulates `runs` independent truncated discounted returns of a fixed
/// policy. Run `r` uses the derived seed `mix_seed(base_seed, r)`;
/// results are reduced in run order, so the estimate is deterministic
/// and independent of thread scheduling.
pub fn mc_policy_value(
    env_template: &Environment,
    policy: &Policy,
    runs: u32,
    horizon: usize,
    base_seed: u64,
) -> McEstimate {
    let totals: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut env = env_template.clone();
            let mut rng = RngStream::seeded(mix_seed(base_seed, r as u64));
            let start = env.reset(&mut rng);
            let mut idx = env.model().state_index(&start).expect("valid reset state");
            let alpha = env.model().params().alpha;
            let mut discount = 1.0;
            let mut total = 0.0;
            for _ in 0..horizon {
                let action = policy.sample(idx, rng.uniform());
                let step = env.step(action, &mut rng).expect("environment was reset");
                total += discount * step.cost;
                discount *= alpha;
                idx = env.model().state_index(&step.next).expect("valid next state");
            }
            total
        })
        .collect();

    let mean = totals.iter().sum::<f64>() / runs as f64;
    let se = if runs > 1 {
        let var =
            totals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (runs as f64 - 1.0);
        (var / runs as f64).sqrt()
    } else {
        0.0
    };
    McEstimate { mean, se, runs }
}

/// One row of a trajectory dump.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub state: State,
    pub action: Action,
    pub cost: f64,
    pub episode_ended: bool,
}

/// Writes trajectory records as CSV with a header row.
pub fn write_trajectory(
    records: &[TrajectoryRecord],
    out: &mut impl Write,
) -> std::io::Result<()> {
    writeln!(out, "t,price_idx,s,g,action,cost,episode_ended")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.t, r.state.price_idx, r.state.s, r.state.g, r.action, r.cost, r.episode_ended
        )?;
    }
    Ok(())
}
