//! Demand-response scheduling for a single smart device, posed as a
//! discounted-cost MDP over (energy price, elapsed time, request
//! priority) states.
//!
//! The crate provides:
//!
//! - [`model`]: the validated problem-instance data model and the exact
//!   transition/cost kernel;
//! - [`solve`]: Bellman backups, value iteration, policy evaluation and
//!   iteration, and the price-chain stationary distribution;
//! - [`env`]: a seeded sampling environment over the same kernel;
//! - [`learn`]: a tabular Q-learning agent with an epsilon/softmin
//!   behavioral policy;
//! - [`metrics`]: the baseline policy, policy values, the cost-reduction
//!   potential (DRP/RDRP), the bill/dissatisfaction decomposition, and
//!   the learner's relative improvement (RI);
//! - [`sweep`]: a deterministic parallel gamma-sweep harness with CSV
//!   output;
//! - [`instances`] and [`config`]: bundled example instances and the
//!   TOML loader.

pub mod config;
pub mod env;
pub mod instances;
pub mod learn;
pub mod metrics;
pub mod model;
pub mod solve;
pub mod sweep;

pub use model::{Action, DeviceModel, ModelError, State, TransitionOutcome};
pub use solve::{Policy, QTable};
