use super::error::ModelError;
use super::state::{Action, State};
use super::DeviceModel;

/// One branch of the transition kernel from a state-action pair.
///
/// `cost` is the full instantaneous cost `bill + gamma * dissatisfaction`.
/// The bill and dissatisfaction components are kept separately so a
/// policy can be evaluated under the bill-only or dissatisfaction-only
/// kernel. `episode_end` marks branches where the device portion was
/// regenerated (job completed or request canceled).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionOutcome {
    pub next: State,
    pub prob: f64,
    pub cost: f64,
    pub bill: f64,
    pub dissatisfaction: f64,
    pub episode_end: bool,
}

impl DeviceModel {
    /// Enumerates the outcome branches of taking `action` in `state`.
    ///
    /// Probabilities over the returned branches sum to 1; only branches
    /// with strictly positive probability are listed. Two branches may
    /// share a next state while carrying different costs (continuation
    /// vs. cancellation), so branches are not merged.
    pub fn transitions(
        &self,
        state: &State,
        action: Action,
    ) -> Result<Vec<TransitionOutcome>, ModelError> {
        if !self.is_valid_state(state) {
            return Err(ModelError::new(
                "state",
                format!("{state} is not a valid state for this model"),
            ));
        }
        let params = self.params();
        let gamma = params.gamma;
        let price_row = self.price_chain().row(state.price_idx);
        let mut out = Vec::new();

        if state.g == 0 {
            match action {
                Action::Off => {
                    // Request arrivals, then the residual no-arrival branch.
                    let mass = self.requests().arrival_mass(state.s);
                    let residual = (1.0 - mass).max(0.0);
                    let s_next = (state.s + 1).min(params.w_hat);
                    for (p_next, &p_prob) in price_row.iter().enumerate() {
                        if p_prob == 0.0 {
                            continue;
                        }
                        for d in -params.w..=0 {
                            for g in 1..=params.g_max {
                                let q = self.requests().arrival(state.s, d, g);
                                if q > 0.0 {
                                    out.push(TransitionOutcome {
                                        next: State::new(p_next, d, g),
                                        prob: p_prob * q,
                                        cost: 0.0,
                                        bill: 0.0,
                                        dissatisfaction: 0.0,
                                        episode_end: false,
                                    });
                                }
                            }
                        }
                        if residual > 0.0 {
                            out.push(TransitionOutcome {
                                next: State::new(p_next, s_next, 0),
                                prob: p_prob * residual,
                                cost: 0.0,
                                bill: 0.0,
                                dissatisfaction: 0.0,
                                episode_end: false,
                            });
                        }
                    }
                }
                Action::On => {
                    // Self-initiated job: pay the bill plus weighted
                    // dissatisfaction, then regenerate.
                    let bill = self.price_chain().price(state.price_idx) * params.c;
                    let dis = self.dissatisfaction().u_e(state.s);
                    self.push_regen_branches(&mut out, price_row, bill, dis, gamma);
                }
            }
        } else {
            match action {
                Action::Off => {
                    let survive = self.requests().continuation(state.s, state.g);
                    let cancel = 1.0 - survive;
                    if survive > 0.0 {
                        for (p_next, &p_prob) in price_row.iter().enumerate() {
                            if p_prob == 0.0 {
                                continue;
                            }
                            out.push(TransitionOutcome {
                                next: State::new(p_next, state.s + 1, state.g),
                                prob: p_prob * survive,
                                cost: 0.0,
                                bill: 0.0,
                                dissatisfaction: 0.0,
                                episode_end: false,
                            });
                        }
                    }
                    if cancel > 0.0 {
                        let dis = self.dissatisfaction().u_c(state.s, state.g);
                        for (p_next, &p_prob) in price_row.iter().enumerate() {
                            if p_prob == 0.0 {
                                continue;
                            }
                            for (dp, regen_prob) in self.requests().regen() {
                                if *regen_prob == 0.0 {
                                    continue;
                                }
                                out.push(TransitionOutcome {
                                    next: State::new(p_next, dp.s, dp.g),
                                    prob: p_prob * cancel * regen_prob,
                                    cost: gamma * dis,
                                    bill: 0.0,
                                    dissatisfaction: dis,
                                    episode_end: true,
                                });
                            }
                        }
                    }
                }
                Action::On => {
                    let bill = self.price_chain().price(state.price_idx) * params.c;
                    let dis = self.dissatisfaction().u_r(state.s, state.g);
                    self.push_regen_branches(&mut out, price_row, bill, dis, gamma);
                }
            }
        }
        Ok(out)
    }

    fn push_regen_branches(
        &self,
        out: &mut Vec<TransitionOutcome>,
        price_row: &[f64],
        bill: f64,
        dis: f64,
        gamma: f64,
    ) {
        let cost = bill + gamma * dis;
        for (p_next, &p_prob) in price_row.iter().enumerate() {
            if p_prob == 0.0 {
                continue;
            }
            for (dp, regen_prob) in self.requests().regen() {
                if *regen_prob == 0.0 {
                    continue;
                }
                out.push(TransitionOutcome {
                    next: State::new(p_next, dp.s, dp.g),
                    prob: p_prob * regen_prob,
                    cost,
                    bill,
                    dissatisfaction: dis,
                    episode_end: true,
                });
            }
        }
    }

    /// Largest absolute instantaneous cost over all kernel branches.
    pub fn max_abs_cost(&self) -> f64 {
        let mut max = 0.0f64;
        for state in self.enumerate_states() {
            for action in Action::ALL {
                for o in self.transitions(&state, action).expect("enumerated state") {
                    max = max.max(o.cost.abs());
                }
            }
        }
        max
    }
}
