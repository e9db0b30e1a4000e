//! Bundled problem instances.
//!
//! The tables here are documented synthetic defaults. They satisfy the
//! structural constraints the model requires (monotone arrival and
//! cancellation probabilities, zero dissatisfaction for on-target
//! completion and pre-target cancellation, non-negative entries) and are
//! chosen so the cost-reduction potential decays to zero over a tradeoff
//! sweep on gamma in [0, 10]. The same instances ship as TOML files under
//! `configs/`.

use crate::model::{
    DeviceModel, DeviceParams, DevicePortion, DissatisfactionTables, PriceChain, RequestModel,
};

/// Default 96-state instance: 4 prices, W = 4, w_hat = 5, two priorities.
///
/// - prices {10, 12, 15, 20} with a persistent ergodic transition matrix;
/// - alpha = 0.9995, C = 1, gamma = 1 (sweeps override gamma);
/// - the 10 request types (target offset -4..=0, priority 1..=2) are
///   equally likely, with total arrival probability increasing in the
///   idle time s;
/// - the cancellation probability increases in s and is forced to 1 at
///   s = W; it does not depend on the priority;
/// - u_r(s, g) = weight(g) * s^2, u_c(s, g) = weight(g) * (1 + s) for
///   s >= 0 and 0 before the target, u_e(s) = 3 - 0.3 s, with
///   weight(1) = 2 and weight(2) = 4;
/// - regeneration always restarts from [s = 0, g = 0].
pub fn default_instance() -> DeviceModel {
    let chain = PriceChain::new(
        vec![10.0, 12.0, 15.0, 20.0],
        vec![
            vec![0.60, 0.20, 0.15, 0.05],
            vec![0.20, 0.50, 0.20, 0.10],
            vec![0.10, 0.20, 0.50, 0.20],
            vec![0.05, 0.15, 0.20, 0.60],
        ],
    )
    .expect("default price chain is valid");

    let w = 4;
    let w_hat = 5;
    let g_max = 2;
    let params = DeviceParams {
        w,
        w_hat,
        g_max,
        c: 1.0,
        alpha: 0.9995,
        gamma: 1.0,
    };

    // u_r(s, g) = 2g s^2 over s = -4..=4.
    let u_r: Vec<Vec<f64>> = [32.0, 18.0, 8.0, 2.0, 0.0, 2.0, 8.0, 18.0, 32.0]
        .iter()
        .map(|v| vec![*v, 2.0 * v])
        .collect();
    // u_c(s, g) = 0 before the target, 2g (1 + s) from it on.
    let u_c: Vec<Vec<f64>> = [0.0, 0.0, 0.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0]
        .iter()
        .map(|v| vec![*v, 2.0 * v])
        .collect();
    let u_e = vec![3.0, 2.7, 2.4, 2.1, 1.8, 1.5];
    let tables = DissatisfactionTables::new(w, w_hat, g_max, u_r, u_c, u_e)
        .expect("default dissatisfaction tables are valid");

    // Total arrival probability 0.10..0.75 by idle time s = 0..=5, split
    // equally over the (W+1) * g_max = 10 request types.
    let per_type = [0.01, 0.02, 0.03, 0.045, 0.06, 0.075];
    let arrival: Vec<Vec<Vec<f64>>> = (0..=w_hat)
        .map(|s| {
            let q = per_type[s as usize];
            (-w..=0).map(|_| vec![q; g_max as usize]).collect()
        })
        .collect();

    // Survival probability 1 - p_hat(s) with cancellation probability
    // p_hat increasing over s = -4..=4 and forced to 1 at s = W.
    let survive = [0.98, 0.96, 0.94, 0.92, 0.90, 0.85, 0.75, 0.60, 0.0];
    let continuation: Vec<Vec<f64>> = survive
        .iter()
        .map(|v| vec![*v; g_max as usize])
        .collect();

    let requests = RequestModel::new(
        w,
        w_hat,
        g_max,
        arrival,
        continuation,
        vec![(DevicePortion { s: 0, g: 0 }, 1.0)],
    )
    .expect("default request model is valid");

    DeviceModel::new(chain, params, tables, requests).expect("default instance is valid")
}

/// Tiny 10-state instance (2 prices, W = 1, w_hat = 1, one priority) with
/// a moderate discount, small enough to brute-force all deterministic
/// policies over.
pub fn tiny_instance() -> DeviceModel {
    let chain = PriceChain::new(
        vec![1.0, 1.2],
        vec![vec![0.7, 0.3], vec![0.3, 0.7]],
    )
    .expect("tiny price chain is valid");

    let w = 1;
    let w_hat = 1;
    let g_max = 1;
    let params = DeviceParams {
        w,
        w_hat,
        g_max,
        c: 1.0,
        alpha: 0.9,
        gamma: 1.0,
    };

    // s = -1, 0, 1
    let u_r = vec![vec![0.5], vec![0.0], vec![0.5]];
    let u_c = vec![vec![0.0], vec![0.4], vec![0.8]];
    let u_e = vec![0.6, 0.5];
    let tables = DissatisfactionTables::new(w, w_hat, g_max, u_r, u_c, u_e)
        .expect("tiny dissatisfaction tables are valid");

    // Arrival: d = -1, 0 equally likely; total probability 0.4 / 0.6.
    let arrival = vec![
        vec![vec![0.20], vec![0.20]],
        vec![vec![0.30], vec![0.30]],
    ];
    // Survival: 0.9 before the target, 0.7 at it, 0 at s = W.
    let continuation = vec![vec![0.9], vec![0.7], vec![0.0]];
    let requests = RequestModel::new(
        w,
        w_hat,
        g_max,
        arrival,
        continuation,
        vec![(DevicePortion { s: 0, g: 0 }, 1.0)],
    )
    .expect("tiny request model is valid");

    DeviceModel::new(chain, params, tables, requests).expect("tiny instance is valid")
}

/// Small 16-state instance (2 prices, W = 1, w_hat = 1, two priorities)
/// with alpha = 0.95; every state is reachable, which makes it suitable
/// for learning-convergence checks.
pub fn small_instance() -> DeviceModel {
    let chain = PriceChain::new(
        vec![1.0, 2.0],
        vec![vec![0.7, 0.3], vec![0.3, 0.7]],
    )
    .expect("small price chain is valid");

    let w = 1;
    let w_hat = 1;
    let g_max = 2;
    let params = DeviceParams {
        w,
        w_hat,
        g_max,
        c: 1.0,
        alpha: 0.95,
        gamma: 1.0,
    };

    let u_r = vec![vec![0.5, 1.0], vec![0.0, 0.0], vec![0.5, 1.0]];
    let u_c = vec![vec![0.0, 0.0], vec![0.4, 0.8], vec![0.8, 1.6]];
    let u_e = vec![0.7, 0.5];
    let tables = DissatisfactionTables::new(w, w_hat, g_max, u_r, u_c, u_e)
        .expect("small dissatisfaction tables are valid");

    // Four request types (d = -1, 0; g = 1, 2), equally likely; total
    // arrival probability 0.5 / 0.7 by idle time.
    let arrival = vec![
        vec![vec![0.125, 0.125], vec![0.125, 0.125]],
        vec![vec![0.175, 0.175], vec![0.175, 0.175]],
    ];
    let continuation = vec![vec![0.9, 0.9], vec![0.7, 0.7], vec![0.0, 0.0]];
    let requests = RequestModel::new(
        w,
        w_hat,
        g_max,
        arrival,
        continuation,
        vec![(DevicePortion { s: 0, g: 0 }, 1.0)],
    )
    .expect("small request model is valid");

    DeviceModel::new(chain, params, tables, requests).expect("small instance is valid")
}

/// Dimensions for [`synthetic`] instance generation.
#[derive(Debug, Clone, Copy)]
pub struct SynthDims {
    pub n_prices: usize,
    pub w: i32,
    pub w_hat: i32,
    pub g_max: u32,
}

/// Builds a structurally valid instance of the given dimensions with
/// smooth pseudo-random tables derived from `seed`. Useful for
/// randomized structural tests; the economics of such instances are not
/// meaningful.
pub fn synthetic(dims: SynthDims, seed: u64) -> DeviceModel {
    let mut z = seed.wrapping_add(0x9E3779B97F4A7C15);
    let mut next_unit = move || {
        // splitmix64
        z = z.wrapping_add(0x9E3779B97F4A7C15);
        let mut x = z;
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
        x ^= x >> 31;
        (x >> 11) as f64 / (1u64 << 53) as f64
    };

    let n = dims.n_prices.max(1);
    let prices: Vec<f64> = (0..n).map(|_| 1.0 + 9.0 * next_unit()).collect();
    // Strictly positive rows are trivially ergodic.
    let transition: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| 0.05 + next_unit()).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|v| v / total).collect()
        })
        .collect();
    let chain = PriceChain::new(prices, transition).expect("synthetic chain is valid");

    let (w, w_hat, g_max) = (dims.w, dims.w_hat, dims.g_max);
    let params = DeviceParams {
        w,
        w_hat,
        g_max,
        c: 1.0,
        alpha: 0.9,
        gamma: 1.0,
    };

    let u_r: Vec<Vec<f64>> = (-w..=w)
        .map(|s| {
            (1..=g_max)
                .map(|g| if s == 0 { 0.0 } else { next_unit() * g as f64 })
                .collect()
        })
        .collect();
    let u_c: Vec<Vec<f64>> = (-w..=w)
        .map(|s| {
            (1..=g_max)
                .map(|g| if s < 0 { 0.0 } else { next_unit() * g as f64 })
                .collect()
        })
        .collect();
    let u_e: Vec<f64> = (0..=w_hat).map(|_| next_unit()).collect();
    let tables = DissatisfactionTables::new(w, w_hat, g_max, u_r, u_c, u_e)
        .expect("synthetic dissatisfaction tables are valid");

    let types = ((w + 1) as u32 * g_max) as usize;
    let arrival: Vec<Vec<Vec<f64>>> = (0..=w_hat)
        .map(|_| {
            // Keep total mass strictly below 1 so the residual branch exists.
            let budget = 0.2 + 0.6 * next_unit();
            let raw: Vec<f64> = (0..types).map(|_| 0.01 + next_unit()).collect();
            let total: f64 = raw.iter().sum();
            let scaled: Vec<f64> = raw.iter().map(|v| budget * v / total).collect();
            (0..=w as usize)
                .map(|d| {
                    (0..g_max as usize)
                        .map(|g| scaled[d * g_max as usize + g])
                        .collect()
                })
                .collect()
        })
        .collect();
    let continuation: Vec<Vec<f64>> = (-w..=w)
        .map(|s| {
            (1..=g_max)
                .map(|_| if s == w { 0.0 } else { 0.3 + 0.65 * next_unit() })
                .collect()
        })
        .collect();
    let requests = RequestModel::new(
        w,
        w_hat,
        g_max,
        arrival,
        continuation,
        vec![(DevicePortion { s: 0, g: 0 }, 1.0)],
    )
    .expect("synthetic request model is valid");

    DeviceModel::new(chain, params, tables, requests).expect("synthetic instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_has_96_states() {
        assert_eq!(default_instance().state_space_size(), 96);
    }

    #[test]
    fn default_instance_is_theorem1_compliant() {
        assert!(default_instance().theorem1_violations().is_empty());
    }

    #[test]
    fn default_arrival_mass_is_nondecreasing() {
        let m = default_instance();
        let mut prev = 0.0;
        for s in 0..=m.params().w_hat {
            let mass = m.requests().arrival_mass(s);
            assert!(mass >= prev, "arrival mass decreased at s={s}");
            assert!(mass <= 1.0 + 1e-12);
            prev = mass;
        }
    }

    #[test]
    fn tiny_instance_has_10_states() {
        assert_eq!(tiny_instance().state_space_size(), 10);
        assert!(tiny_instance().theorem1_violations().is_empty());
    }

    #[test]
    fn small_instance_has_16_states() {
        assert_eq!(small_instance().state_space_size(), 16);
        assert!(small_instance().theorem1_violations().is_empty());
    }

    #[test]
    fn synthetic_instances_are_valid() {
        for seed in 0..5 {
            let dims = SynthDims {
                n_prices: 3,
                w: 2,
                w_hat: 2,
                g_max: 2,
            };
            let m = synthetic(dims, seed);
            assert_eq!(m.state_space_size(), 3 * (5 * 2 + 3));
        }
    }
}
