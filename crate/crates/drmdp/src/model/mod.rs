//! Data model and exact transition kernel of the device-based
//! demand-response MDP.
//!
//! A [`DeviceModel`] bundles the exogenous price chain, the device
//! parameters, the dissatisfaction tables and the request/cancellation
//! model into one immutable, validated problem instance. All operations
//! are pure functions of their inputs, so a model can be shared freely
//! across threads.

mod device;
mod error;
mod kernel;
mod price;
mod state;

pub use device::{DeviceParams, DevicePortion, DissatisfactionTables, RequestModel};
pub use error::ModelError;
pub use kernel::TransitionOutcome;
pub use price::{PriceChain, PROB_SUM_TOL};
pub use state::{Action, State};

/// A complete, validated problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel {
    price_chain: PriceChain,
    params: DeviceParams,
    dissatisfaction: DissatisfactionTables,
    requests: RequestModel,
}

impl DeviceModel {
    pub fn new(
        price_chain: PriceChain,
        params: DeviceParams,
        dissatisfaction: DissatisfactionTables,
        requests: RequestModel,
    ) -> Result<Self, ModelError> {
        params.validate()?;
        // Table domains are fixed at table construction; rebuild-checks
        // here catch mismatched (w, w_hat, g_max) between components.
        let model = Self {
            price_chain,
            params,
            dissatisfaction,
            requests,
        };
        model.check_domains()?;
        Ok(model)
    }

    fn check_domains(&self) -> Result<(), ModelError> {
        let p = &self.params;
        let expected = (p.w, p.w_hat, p.g_max);
        if self.dissatisfaction.dims() != expected {
            return Err(ModelError::new(
                "dissatisfaction",
                format!(
                    "table domain {:?} does not match params (w, w_hat, g_max) = {expected:?}",
                    self.dissatisfaction.dims()
                ),
            ));
        }
        if self.requests.dims() != expected {
            return Err(ModelError::new(
                "requests",
                format!(
                    "table domain {:?} does not match params (w, w_hat, g_max) = {expected:?}",
                    self.requests.dims()
                ),
            ));
        }
        Ok(())
    }

    pub fn price_chain(&self) -> &PriceChain {
        &self.price_chain
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn dissatisfaction(&self) -> &DissatisfactionTables {
        &self.dissatisfaction
    }

    pub fn requests(&self) -> &RequestModel {
        &self.requests
    }

    /// Same instance with a different tradeoff weight.
    pub fn with_gamma(&self, gamma: f64) -> Result<DeviceModel, ModelError> {
        let mut params = self.params;
        params.gamma = gamma;
        DeviceModel::new(
            self.price_chain.clone(),
            params,
            self.dissatisfaction.clone(),
            self.requests.clone(),
        )
    }

    /// Number of device-portion states: (2w+1) g_max + w_hat + 1.
    pub fn device_portion_count(&self) -> usize {
        let p = &self.params;
        (2 * p.w + 1) as usize * p.g_max as usize + (p.w_hat + 1) as usize
    }

    /// |S| = |P| [(2w+1) g_max + w_hat + 1].
    pub fn state_space_size(&self) -> usize {
        self.price_chain.len() * self.device_portion_count()
    }

    pub fn is_valid_state(&self, x: &State) -> bool {
        let p = &self.params;
        if x.price_idx >= self.price_chain.len() {
            return false;
        }
        if x.g == 0 {
            x.s >= 0 && x.s <= p.w_hat
        } else {
            x.g <= p.g_max && x.s >= -p.w && x.s <= p.w
        }
    }

    /// Stable device-portion index: no-request states s = 0..=w_hat first,
    /// then request states in (s, g)-lexicographic order.
    fn device_portion_index(&self, s: i32, g: u32) -> usize {
        let p = &self.params;
        if g == 0 {
            s as usize
        } else {
            (p.w_hat + 1) as usize
                + ((s + p.w) as usize) * p.g_max as usize
                + (g - 1) as usize
        }
    }

    /// Stable state index: price-major over the device-portion order.
    pub fn state_index(&self, x: &State) -> Option<usize> {
        if !self.is_valid_state(x) {
            return None;
        }
        Some(x.price_idx * self.device_portion_count() + self.device_portion_index(x.s, x.g))
    }

    /// Inverse of [`state_index`](Self::state_index).
    pub fn state_at(&self, idx: usize) -> State {
        let dp_count = self.device_portion_count();
        assert!(idx < self.state_space_size(), "state index {idx} out of range");
        let price_idx = idx / dp_count;
        let mut dp = idx % dp_count;
        let p = &self.params;
        let no_request = (p.w_hat + 1) as usize;
        if dp < no_request {
            State::new(price_idx, dp as i32, 0)
        } else {
            dp -= no_request;
            let s = (dp / p.g_max as usize) as i32 - p.w;
            let g = (dp % p.g_max as usize) as u32 + 1;
            State::new(price_idx, s, g)
        }
    }

    /// Deterministic enumeration of all valid states in index order.
    pub fn enumerate_states(&self) -> Vec<State> {
        (0..self.state_space_size()).map(|i| self.state_at(i)).collect()
    }

    /// Checks the three conditions under which the baseline-vs-optimal
    /// structure results hold: (a) strictly positive prices, (b)
    /// non-negative dissatisfaction, (c) zero dissatisfaction for an
    /// on-target completion and for a cancellation before the target.
    ///
    /// (a) and (b) are construction invariants and can only be reported
    /// here for completeness; (c) is optional at load time.
    pub fn theorem1_violations(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let p = &self.params;
        if self.price_chain.p_min() <= 0.0 {
            violations.push("condition (a): some price is not strictly positive".to_string());
        }
        for g in 1..=p.g_max {
            for s in -p.w..=p.w {
                if self.dissatisfaction.u_r(s, g) < 0.0 || self.dissatisfaction.u_c(s, g) < 0.0 {
                    violations.push(format!(
                        "condition (b): negative dissatisfaction at (s={s}, g={g})"
                    ));
                }
            }
        }
        for g in 1..=p.g_max {
            let v = self.dissatisfaction.u_r(0, g);
            if v != 0.0 {
                violations.push(format!(
                    "condition (c): u_r(0, {g}) = {v}, expected 0 (on-target completion)"
                ));
            }
            for s in -p.w..0 {
                let v = self.dissatisfaction.u_c(s, g);
                if v != 0.0 {
                    violations.push(format!(
                        "condition (c): u_c({s}, {g}) = {v}, expected 0 (cancellation before target)"
                    ));
                }
            }
        }
        violations
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal 2-state instance: one price, W = 0, w_hat = 0, g_max = 1.
    pub(crate) fn minimal_model() -> DeviceModel {
        let chain = PriceChain::new(vec![2.0], vec![vec![1.0]]).unwrap();
        let params = DeviceParams {
            w: 0,
            w_hat: 0,
            g_max: 1,
            c: 1.0,
            alpha: 0.9,
            gamma: 0.5,
        };
        let tables = DissatisfactionTables::new(
            0,
            0,
            1,
            vec![vec![0.0]],
            vec![vec![1.0]],
            vec![1.0],
        )
        .unwrap();
        let requests = RequestModel::new(
            0,
            0,
            1,
            vec![vec![vec![1.0]]],
            vec![vec![0.0]],
            vec![(DevicePortion { s: 0, g: 0 }, 1.0)],
        )
        .unwrap();
        DeviceModel::new(chain, params, tables, requests).unwrap()
    }

    #[test]
    fn state_space_size_formula() {
        // (|P|=1, W=0, g_max=1, w_hat=0) -> 2
        assert_eq!(minimal_model().state_space_size(), 2);
    }

    #[test]
    fn minimal_enumeration() {
        let m = minimal_model();
        let states = m.enumerate_states();
        assert_eq!(
            states,
            vec![State::new(0, 0, 0), State::new(0, 0, 1)]
        );
    }

    #[test]
    fn enumeration_is_bijective() {
        let m = minimal_model();
        for (k, x) in m.enumerate_states().iter().enumerate() {
            assert_eq!(m.state_index(x), Some(k));
        }
        assert_eq!(m.state_index(&State::new(0, 1, 0)), None);
        assert_eq!(m.state_index(&State::new(1, 0, 0)), None);
    }

    #[test]
    fn transitions_sum_to_one() {
        let m = minimal_model();
        for x in m.enumerate_states() {
            for a in Action::ALL {
                let outs = m.transitions(&x, a).unwrap();
                let total: f64 = outs.iter().map(|o| o.prob).sum();
                assert!((total - 1.0).abs() < 1e-12, "{x} {a}: {total}");
            }
        }
    }

    #[test]
    fn request_on_cost_and_regeneration() {
        let m = minimal_model();
        // (g=1, s=0, On): cost P*C + gamma*u_r(0,1); regenerates to [0,0].
        let outs = m.transitions(&State::new(0, 0, 1), Action::On).unwrap();
        assert_eq!(outs.len(), 1);
        assert_eq!(outs[0].next, State::new(0, 0, 0));
        assert_eq!(outs[0].cost, 2.0 * 1.0 + 0.5 * 0.0);
        assert!(outs[0].episode_end);
    }

    #[test]
    fn forced_cancellation_at_window_edge() {
        let m = minimal_model();
        // s = W has survival probability 0: cancellation with probability 1.
        let outs = m.transitions(&State::new(0, 0, 1), Action::Off).unwrap();
        assert_eq!(outs.len(), 1);
        let o = &outs[0];
        assert_eq!(o.next, State::new(0, 0, 0));
        assert!((o.prob - 1.0).abs() < 1e-15);
        assert_eq!(o.cost, 0.5 * m.dissatisfaction().u_c(0, 1));
        assert!(o.episode_end);
    }

    #[test]
    fn invalid_state_is_rejected() {
        let m = minimal_model();
        let err = m.transitions(&State::new(0, 1, 0), Action::Off).unwrap_err();
        assert_eq!(err.path, "state");
    }

    #[test]
    fn zero_arrival_residual_branch() {
        // g=0 with no arrivals: single successor per price branch at
        // (s+1 saturated, 0), probability 1, cost 0.
        let chain = PriceChain::new(vec![1.0], vec![vec![1.0]]).unwrap();
        let params = DeviceParams {
            w: 0,
            w_hat: 5,
            g_max: 1,
            c: 1.0,
            alpha: 0.9,
            gamma: 1.0,
        };
        let tables =
            DissatisfactionTables::new(0, 5, 1, vec![vec![0.0]], vec![vec![0.0]], vec![0.0; 6])
                .unwrap();
        let requests = RequestModel::new(
            0,
            5,
            1,
            vec![vec![vec![0.0]]; 6],
            vec![vec![0.0]],
            vec![(DevicePortion { s: 0, g: 0 }, 1.0)],
        )
        .unwrap();
        let m = DeviceModel::new(chain, params, tables, requests).unwrap();

        let outs = m.transitions(&State::new(0, 3, 0), Action::Off).unwrap();
        assert_eq!(outs.len(), 1);
        assert_eq!(outs[0].next, State::new(0, 4, 0));
        assert_eq!(outs[0].prob, 1.0);
        assert_eq!(outs[0].cost, 0.0);
        // Saturation: from s = w_hat the device stays put.
        let outs = m.transitions(&State::new(0, 5, 0), Action::Off).unwrap();
        assert_eq!(outs[0].next, State::new(0, 5, 0));
    }

    #[test]
    fn with_gamma_changes_costs_only() {
        let m = minimal_model();
        let m2 = m.with_gamma(2.0).unwrap();
        assert_eq!(m2.params().gamma, 2.0);
        assert_eq!(m2.state_space_size(), m.state_space_size());
    }

    #[test]
    fn theorem1_violation_reporting() {
        let m = minimal_model();
        assert!(m.theorem1_violations().is_empty());

        // u_r(0, 1) != 0 violates condition (c).
        let chain = PriceChain::new(vec![2.0], vec![vec![1.0]]).unwrap();
        let params = DeviceParams {
            w: 0,
            w_hat: 0,
            g_max: 1,
            c: 1.0,
            alpha: 0.9,
            gamma: 0.5,
        };
        let tables = DissatisfactionTables::new(
            0,
            0,
            1,
            vec![vec![3.0]],
            vec![vec![0.0]],
            vec![0.0],
        )
        .unwrap();
        let requests = RequestModel::new(
            0,
            0,
            1,
            vec![vec![vec![0.5]]],
            vec![vec![0.0]],
            vec![(DevicePortion { s: 0, g: 0 }, 1.0)],
        )
        .unwrap();
        let bad = DeviceModel::new(chain, params, tables, requests).unwrap();
        let violations = bad.theorem1_violations();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("condition (c)"));
        assert!(violations[0].contains("u_r(0, 1)"));
    }
}
