//! Tradeoff-sweep experiment harness.
//!
//! For each gamma on a grid the harness computes the exact baseline and
//! optimal values by dynamic programming, estimates the learner's
//! lifetime cost by repeated Q-learning runs, and appends one CSV row.
//! Monte-Carlo cells are seeded from (base seed, grid index, run index)
//! only and reduced in run order, so output is byte-identical across
//! repeats and worker counts.

use std::io::Write;

use thiserror::Error;

use crate::env::splitmix64;
use crate::learn::LearnerConfig;
use crate::metrics::{
    dr_potential, estimate_v_tilde, relative_improvement, MetricsError, MetricsReport,
};
use crate::model::DeviceModel;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error("failed to build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sweep parameters. `gamma_grid` must be non-empty, non-negative and
/// strictly increasing.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub gamma_grid: Vec<f64>,
    pub learner: LearnerConfig,
    pub runs: u32,
    pub base_seed: u64,
    /// Sup-norm tolerance for the DP computations.
    pub tol: f64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.gamma_grid.is_empty() {
            return Err(SweepError::InvalidConfig("gamma_grid must be non-empty".into()));
        }
        for pair in self.gamma_grid.windows(2) {
            if pair[1] <= pair[0] {
                return Err(SweepError::InvalidConfig(format!(
                    "gamma_grid must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if self.gamma_grid[0] < 0.0 {
            return Err(SweepError::InvalidConfig(format!(
                "gamma values must be >= 0, got {}",
                self.gamma_grid[0]
            )));
        }
        if self.runs < 1 {
            return Err(SweepError::InvalidConfig("runs must be >= 1".into()));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(SweepError::InvalidConfig(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        self.learner
            .validate()
            .map_err(|e| SweepError::InvalidConfig(e.to_string()))
    }
}

/// Seed of Monte-Carlo cell (grid index `gamma_idx`, run `run`): the
/// base seed XORed with splitmix64 of the packed cell coordinates.
/// Extending the grid leaves existing cells' streams untouched.
pub fn derive_seed(base: u64, gamma_idx: usize, run: u32) -> u64 {
    base ^ splitmix64(((gamma_idx as u64) << 32) | run as u64)
}

/// Outcome of a sweep: one report per grid point, plus any per-point
/// failures (whose rows carry NaNs).
#[derive(Debug)]
pub struct SweepOutcome {
    pub reports: Vec<MetricsReport>,
    pub failures: Vec<(f64, String)>,
}

/// Runs the sweep with a bounded worker pool, writing the header and one
/// row per gamma to `out` incrementally (flushed after each row).
/// A failed grid point is written as a NaN row and recorded; the sweep
/// continues.
pub fn run_sweep(
    template: &DeviceModel,
    cfg: &SweepConfig,
    workers: usize,
    out: &mut impl Write,
) -> Result<SweepOutcome, SweepError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;

    writeln!(out, "{}", MetricsReport::CSV_HEADER)?;
    out.flush()?;

    let mut reports = Vec::with_capacity(cfg.gamma_grid.len());
    let mut failures = Vec::new();
    for (gamma_idx, &gamma) in cfg.gamma_grid.iter().enumerate() {
        let report = pool.install(|| evaluate_gamma(template, cfg, gamma_idx, gamma));
        let report = match report {
            Ok(r) => r,
            Err(e) => {
                failures.push((gamma, e.to_string()));
                MetricsReport::failed(gamma, cfg.runs)
            }
        };
        writeln!(out, "{}", report.csv_row())?;
        out.flush()?;
        reports.push(report);
    }
    Ok(SweepOutcome { reports, failures })
}

fn evaluate_gamma(
    template: &DeviceModel,
    cfg: &SweepConfig,
    gamma_idx: usize,
    gamma: f64,
) -> Result<MetricsReport, MetricsError> {
    let model = template
        .with_gamma(gamma)
        .map_err(crate::solve::SolveError::Model)?;
    let pot = dr_potential(&model, cfg.tol)?;
    let seeds = |run: u32| derive_seed(cfg.base_seed, gamma_idx, run);
    let v_tilde = estimate_v_tilde(&model, &cfg.learner, cfg.runs, &seeds)?;
    let ri = if pot.v_base > 0.0 {
        Some(relative_improvement(pot.v_base, v_tilde.mean)?)
    } else {
        None
    };
    Ok(MetricsReport {
        gamma,
        v_base: pot.v_base,
        v_star: pot.v_star,
        drp: pot.drp,
        rdrp: pot.rdrp,
        v_tilde,
        ri,
    })
}
