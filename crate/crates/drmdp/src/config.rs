//! TOML loaders for problem instances and experiment settings.
//!
//! An instance file describes one [`DeviceModel`]; an experiment file
//! holds the learner parameters and, optionally, a `[sweep]` section.
//! Validation reports the first violation with a path into the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::learn::{episode_budget, LearnerConfig, StepSizeSchedule};
use crate::model::{
    DeviceModel, DeviceParams, DevicePortion, DissatisfactionTables, ModelError, PriceChain,
    RequestModel,
};
use crate::sweep::SweepConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    #[serde(default)]
    theorem1_compliant: bool,
    price_chain: PriceChainFile,
    params: ParamsFile,
    dissatisfaction: DissatisfactionFile,
    requests: RequestsFile,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriceChainFile {
    prices: Vec<f64>,
    transition: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    w: i32,
    w_hat: i32,
    g_max: u32,
    c: f64,
    alpha: f64,
    gamma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DissatisfactionFile {
    u_r: Vec<Vec<f64>>,
    u_c: Vec<Vec<f64>>,
    u_e: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestsFile {
    arrival: Vec<Vec<Vec<f64>>>,
    continuation: Vec<Vec<f64>>,
    regen: Vec<RegenEntryFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegenEntryFile {
    s: i32,
    g: u32,
    prob: f64,
}

/// Loads and fully validates a problem instance.
pub fn load_instance(path: impl AsRef<Path>) -> Result<DeviceModel, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_instance(&text).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses an instance from TOML text.
pub fn parse_instance(text: &str) -> Result<DeviceModel, ConfigError> {
    let file: InstanceFile = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: PathBuf::from("<instance>"),
        message: e.to_string(),
    })?;

    let chain = PriceChain::new(file.price_chain.prices, file.price_chain.transition)?;
    let params = DeviceParams {
        w: file.params.w,
        w_hat: file.params.w_hat,
        g_max: file.params.g_max,
        c: file.params.c,
        alpha: file.params.alpha,
        gamma: file.params.gamma,
    };
    params.validate()?;
    let tables = DissatisfactionTables::new(
        params.w,
        params.w_hat,
        params.g_max,
        file.dissatisfaction.u_r,
        file.dissatisfaction.u_c,
        file.dissatisfaction.u_e,
    )?;
    let requests = RequestModel::new(
        params.w,
        params.w_hat,
        params.g_max,
        file.requests.arrival,
        file.requests.continuation,
        file.requests
            .regen
            .into_iter()
            .map(|r| (DevicePortion { s: r.s, g: r.g }, r.prob))
            .collect(),
    )?;
    let model = DeviceModel::new(chain, params, tables, requests)?;

    if file.theorem1_compliant {
        if let Some(first) = model.theorem1_violations().into_iter().next() {
            return Err(ConfigError::Invalid(format!(
                "instance declares theorem1_compliant but violates {first}"
            )));
        }
    }
    Ok(model)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    #[serde(default)]
    learner: LearnerFile,
    sweep: Option<SweepFile>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct LearnerFile {
    epsilon: Option<f64>,
    eta: Option<f64>,
    q_init: Option<f64>,
    /// Defaults to ceil(2 / (1 - alpha)) for the instance's alpha.
    episodes: Option<usize>,
    step_size: Option<StepSizeFile>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum StepSizeFile {
    Constant { value: f64 },
    Harmonic { numerator: f64, offset: f64 },
    Power { numerator: f64, offset: f64, exponent: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    gamma_grid: Vec<f64>,
    runs: u32,
    #[serde(default)]
    base_seed: u64,
    tol: Option<f64>,
    /// Default CSV destination; the CLI's --out flag overrides it.
    output: Option<PathBuf>,
}

/// Experiment settings resolved against an instance's discount factor.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub learner: LearnerConfig,
    pub sweep: Option<SweepConfig>,
    pub sweep_output: Option<PathBuf>,
}

/// Loads an experiment file; `alpha` supplies the episode-budget default.
pub fn load_experiment(path: impl AsRef<Path>, alpha: f64) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_experiment(&text, alpha).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses experiment TOML text; `alpha` supplies the episode-budget
/// default.
pub fn parse_experiment(text: &str, alpha: f64) -> Result<ExperimentConfig, ConfigError> {
    let file: ExperimentFile = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: PathBuf::from("<experiment>"),
        message: e.to_string(),
    })?;

    let defaults = LearnerConfig::default();
    let schedule = match file.learner.step_size {
        None => defaults.schedule,
        Some(StepSizeFile::Constant { value }) => StepSizeSchedule::Constant(value),
        Some(StepSizeFile::Harmonic { numerator, offset }) => {
            StepSizeSchedule::Harmonic { numerator, offset }
        }
        Some(StepSizeFile::Power {
            numerator,
            offset,
            exponent,
        }) => StepSizeSchedule::Power {
            numerator,
            offset,
            exponent,
        },
    };
    let learner = LearnerConfig {
        epsilon: file.learner.epsilon.unwrap_or(defaults.epsilon),
        eta: file.learner.eta.unwrap_or(defaults.eta),
        q_init: file.learner.q_init.unwrap_or(defaults.q_init),
        episodes: file.learner.episodes.unwrap_or_else(|| episode_budget(alpha)),
        schedule,
    };
    learner
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;

    let mut sweep_output = None;
    let sweep = match file.sweep {
        None => None,
        Some(s) => {
            let cfg = SweepConfig {
                gamma_grid: s.gamma_grid,
                learner,
                runs: s.runs,
                base_seed: s.base_seed,
                tol: s.tol.unwrap_or(1e-9),
            };
            cfg.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            sweep_output = s.output;
            Some(cfg)
        }
    };
    Ok(ExperimentConfig {
        learner,
        sweep,
        sweep_output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
theorem1_compliant = true

[price_chain]
prices = [1.0, 1.2]
transition = [[0.7, 0.3], [0.3, 0.7]]

[params]
w = 1
w_hat = 1
g_max = 1
c = 1.0
alpha = 0.9
gamma = 1.0

[dissatisfaction]
u_r = [[0.5], [0.0], [0.5]]
u_c = [[0.0], [0.4], [0.8]]
u_e = [0.6, 0.5]

[requests]
arrival = [[[0.20], [0.20]], [[0.30], [0.30]]]
continuation = [[0.9], [0.7], [0.0]]
regen = [{ s = 0, g = 0, prob = 1.0 }]
"#;

    #[test]
    fn parses_tiny_instance() {
        let m = parse_instance(TINY).unwrap();
        assert_eq!(m, crate::instances::tiny_instance());
    }

    #[test]
    fn reports_bad_transition_row_with_path() {
        let bad = TINY.replace("[[0.7, 0.3], [0.3, 0.7]]", "[[0.7, 0.2], [0.3, 0.7]]");
        let err = parse_instance(&bad).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("price_chain.transition[0]"), "{text}");
        assert!(text.contains("row sums to"), "{text}");
    }

    #[test]
    fn reports_declared_compliance_violation() {
        let bad = TINY.replace("u_r = [[0.5], [0.0], [0.5]]", "u_r = [[0.5], [0.3], [0.5]]");
        let err = parse_instance(&bad).unwrap_err();
        assert!(err.to_string().contains("condition (c)"), "{err}");
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = format!("{TINY}\n[extra]\nx = 1\n");
        assert!(parse_instance(&bad).is_err());
    }

    #[test]
    fn experiment_defaults_resolve_episode_budget() {
        let cfg = parse_experiment("", 0.9995).unwrap();
        assert_eq!(cfg.learner.episodes, 4000);
        assert_eq!(cfg.learner.epsilon, 0.05);
        assert!(cfg.sweep.is_none());
    }

    #[test]
    fn experiment_with_sweep_section() {
        let text = r#"
[learner]
epsilon = 0.1
episodes = 500

[learner.step_size]
kind = "harmonic"
numerator = 10.0
offset = 20.0

[sweep]
gamma_grid = [0.0, 0.5, 1.0]
runs = 8
base_seed = 3
"#;
        let cfg = parse_experiment(text, 0.95).unwrap();
        let sweep = cfg.sweep.unwrap();
        assert_eq!(sweep.gamma_grid, vec![0.0, 0.5, 1.0]);
        assert_eq!(sweep.runs, 8);
        assert_eq!(sweep.base_seed, 3);
        assert_eq!(sweep.learner.episodes, 500);
        assert_eq!(sweep.learner.epsilon, 0.1);
    }

    #[test]
    fn experiment_rejects_bad_grid() {
        let text = "[sweep]\ngamma_grid = [1.0, 0.5]\nruns = 2\n";
        assert!(parse_experiment(text, 0.9).is_err());
    }
}
