//! Tabular Q-learning with an epsilon/softmin behavioral policy.
//!
//! With probability epsilon the agent samples from a Boltzmann (softmin)
//! distribution over the current Q row; otherwise it takes the greedy
//! action (ties toward Off). The step size is constant within an episode
//! and decays across episodes according to a schedule.

use std::io::Write;

use thiserror::Error;

use crate::env::{EnvError, Environment, RngStream};
use crate::model::Action;
use crate::solve::QTable;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid learner config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Per-episode step-size schedule; `beta(j)` is the constant step size
/// used throughout episode `j` (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSizeSchedule {
    Constant(f64),
    /// numerator / (offset + j); satisfies the Robbins-Monro conditions.
    Harmonic { numerator: f64, offset: f64 },
    /// numerator / (offset + j)^exponent; Robbins-Monro for exponents in
    /// (1/2, 1]. Slower decay than harmonic, which helps rarely visited
    /// state-action pairs forget their initialization.
    Power {
        numerator: f64,
        offset: f64,
        exponent: f64,
    },
}

impl StepSizeSchedule {
    pub fn beta(&self, episode: usize) -> f64 {
        match self {
            StepSizeSchedule::Constant(b) => *b,
            StepSizeSchedule::Harmonic { numerator, offset } => {
                numerator / (offset + episode as f64)
            }
            StepSizeSchedule::Power {
                numerator,
                offset,
                exponent,
            } => numerator / (offset + episode as f64).powf(*exponent),
        }
    }

    fn validate(&self) -> Result<(), LearnError> {
        let ok = match self {
            StepSizeSchedule::Constant(b) => b.is_finite() && *b > 0.0,
            StepSizeSchedule::Harmonic { numerator, offset } => {
                numerator.is_finite() && *numerator > 0.0 && offset.is_finite() && *offset >= 0.0
            }
            StepSizeSchedule::Power {
                numerator,
                offset,
                exponent,
            } => {
                numerator.is_finite()
                    && *numerator > 0.0
                    && offset.is_finite()
                    && *offset >= 0.0
                    && exponent.is_finite()
                    && *exponent > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(LearnError::InvalidConfig(format!(
                "step sizes must be positive, got {self:?}"
            )))
        }
    }
}

/// Exploration and update parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    /// Probability of taking the softmin exploration branch.
    pub epsilon: f64,
    /// Softmin temperature.
    pub eta: f64,
    pub schedule: StepSizeSchedule,
    /// Initial fill value of the Q-table.
    pub q_init: f64,
    pub episodes: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            eta: 0.1,
            schedule: StepSizeSchedule::Harmonic {
                numerator: 10.0,
                offset: 20.0,
            },
            q_init: 0.0,
            episodes: 4_000,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(LearnError::InvalidConfig(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(LearnError::InvalidConfig(format!(
                "eta must be > 0, got {}",
                self.eta
            )));
        }
        if !self.q_init.is_finite() {
            return Err(LearnError::InvalidConfig("q_init must be finite".into()));
        }
        if self.episodes == 0 {
            return Err(LearnError::InvalidConfig("episodes must be >= 1".into()));
        }
        self.schedule.validate()
    }
}

/// Episode budget 2 / (1 - alpha), rounded up. Values within 1e-6 of an
/// integer are snapped first so float noise cannot inflate the ceiling.
pub fn episode_budget(alpha: f64) -> usize {
    let raw = 2.0 / (1.0 - alpha);
    let nearest = raw.round();
    if (raw - nearest).abs() < 1e-6 {
        nearest as usize
    } else {
        raw.ceil() as usize
    }
}

/// Softmin probabilities proportional to exp(-q / eta), computed with
/// the row minimum subtracted so the distribution is invariant to
/// shifting both entries by a constant.
pub fn boltzmann_probs(q_off: f64, q_on: f64, eta: f64) -> [f64; 2] {
    let m = q_off.min(q_on);
    let w_off = (-(q_off - m) / eta).exp();
    let w_on = (-(q_on - m) / eta).exp();
    let z = w_off + w_on;
    [w_off / z, w_on / z]
}

/// Behavioral policy: softmin branch with probability epsilon, greedy
/// otherwise.
pub fn behavioral_action(
    q: &QTable,
    state: usize,
    cfg: &LearnerConfig,
    rng: &mut RngStream,
) -> Action {
    if cfg.epsilon > 0.0 && rng.uniform() < cfg.epsilon {
        let p = boltzmann_probs(q.get(state, Action::Off), q.get(state, Action::On), cfg.eta);
        if rng.uniform() < p[0] {
            Action::Off
        } else {
            Action::On
        }
    } else {
        q.greedy_action(state)
    }
}

/// One temporal-difference update on the visited entry; every other
/// entry is untouched. Returns the TD error.
pub fn td_update(
    q: &mut QTable,
    state: usize,
    action: Action,
    cost: f64,
    next_state: usize,
    beta: f64,
    alpha: f64,
) -> f64 {
    let delta = cost + alpha * q.min_value(next_state) - q.get(state, action);
    let updated = q.get(state, action) + beta * delta;
    q.set(state, action, updated);
    delta
}

/// Per-episode log record.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub length: usize,
    /// Contribution of the episode to the lifetime discounted cost,
    /// discounted with the global step counter.
    pub discounted_cost: f64,
    pub beta: f64,
}

/// Result of one learning lifetime.
#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub q: QTable,
    /// Realized discounted lifetime cost: one Monte-Carlo sample of the
    /// learner's expected performance, truncated at the episode budget.
    pub lifetime_discounted_cost: f64,
    pub episodes: Vec<EpisodeRecord>,
    /// Upper bound on the truncation bias: alpha^T max|cost| / (1-alpha).
    pub tail_bias_bound: f64,
    pub total_steps: usize,
    pub state_visits: Vec<u64>,
}

/// Runs the configured number of episodes. The trajectory is continuous
/// across episode boundaries (the regenerated state is the next state of
/// the terminal transition); discounting uses the global step counter.
pub fn learn(
    env: &mut Environment,
    cfg: &LearnerConfig,
    rng: &mut RngStream,
) -> Result<LearnOutcome, LearnError> {
    cfg.validate()?;
    let model = env.model().clone();
    let alpha = model.params().alpha;
    let n = model.state_space_size();

    let mut q = QTable::filled(n, cfg.q_init);
    let mut visits = vec![0u64; n];
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut lifetime = 0.0;
    let mut discount = 1.0;
    let mut total_steps = 0usize;

    let start = env.reset(rng);
    let mut state_idx = model.state_index(&start).expect("valid reset state");

    for episode in 1..=cfg.episodes {
        let beta = cfg.schedule.beta(episode);
        let mut length = 0usize;
        let mut episode_cost = 0.0;
        loop {
            visits[state_idx] += 1;
            let action = behavioral_action(&q, state_idx, cfg, rng);
            let step = env.step(action, rng)?;
            let next_idx = model.state_index(&step.next).expect("valid next state");
            td_update(&mut q, state_idx, action, step.cost, next_idx, beta, alpha);
            lifetime += discount * step.cost;
            episode_cost += discount * step.cost;
            discount *= alpha;
            total_steps += 1;
            length += 1;
            state_idx = next_idx;
            if step.episode_ended {
                break;
            }
        }
        episodes.push(EpisodeRecord {
            episode,
            length,
            discounted_cost: episode_cost,
            beta,
        });
    }

    let tail_bias_bound = discount * model.max_abs_cost() / (1.0 - alpha);
    Ok(LearnOutcome {
        q,
        lifetime_discounted_cost: lifetime,
        episodes,
        tail_bias_bound,
        total_steps,
        state_visits: visits,
    })
}

/// Writes per-episode records as CSV with a header row.
pub fn write_episode_log(records: &[EpisodeRecord], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "episode,length,discounted_cost,beta")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{}",
            r.episode, r.length, r.discounted_cost, r.beta
        )?;
    }
    Ok(())
}
