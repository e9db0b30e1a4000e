//! Exact dynamic-programming solvers for the device MDP.
//!
//! Backups are Jacobi sweeps: each sweep reads the previous table
//! immutably, so results are deterministic and independent of sweep
//! order. Tolerances are sup-norm fixed-point residuals, which bound the
//! true error by `residual / (1 - alpha)`.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::model::{Action, DeviceModel, ModelError, PriceChain};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("dimension mismatch: expected {expected} states, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("tolerance must be > 0 and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Generous default iteration cap; value iteration at alpha = 0.9995
/// needs on the order of 1e5 sweeps per digit bundle.
pub const DEFAULT_MAX_ITER: usize = 500_000;

/// Dense state-action value table over `n_states x 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize) -> Self {
        Self::filled(n_states, 0.0)
    }

    pub fn filled(n_states: usize, value: f64) -> Self {
        Self {
            n_states,
            values: vec![value; 2 * n_states],
        }
    }

    pub fn from_values(n_states: usize, values: Vec<f64>) -> Result<Self, SolveError> {
        if values.len() != 2 * n_states {
            return Err(SolveError::Dimension {
                expected: n_states,
                got: values.len() / 2,
            });
        }
        Ok(Self { n_states, values })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn get(&self, state: usize, action: Action) -> f64 {
        self.values[2 * state + action.index()]
    }

    pub fn set(&mut self, state: usize, action: Action, value: f64) {
        self.values[2 * state + action.index()] = value;
    }

    /// min over actions.
    pub fn min_value(&self, state: usize) -> f64 {
        let off = self.values[2 * state];
        let on = self.values[2 * state + 1];
        off.min(on)
    }

    /// argmin over actions, ties broken toward Off.
    pub fn greedy_action(&self, state: usize) -> Action {
        if self.values[2 * state + 1] < self.values[2 * state] {
            Action::On
        } else {
            Action::Off
        }
    }

    pub fn sup_dist(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A (possibly randomized) stationary policy: one probability row per
/// state over the two actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn deterministic(actions: &[Action]) -> Self {
        let mut probs = vec![0.0; 2 * actions.len()];
        for (i, a) in actions.iter().enumerate() {
            probs[2 * i + a.index()] = 1.0;
        }
        Self {
            n_states: actions.len(),
            probs,
        }
    }

    pub fn from_probs(n_states: usize, probs: Vec<f64>) -> Result<Self, SolveError> {
        if probs.len() != 2 * n_states {
            return Err(SolveError::Dimension {
                expected: n_states,
                got: probs.len() / 2,
            });
        }
        for x in 0..n_states {
            let off = probs[2 * x];
            let on = probs[2 * x + 1];
            if !(0.0..=1.0).contains(&off) || !(0.0..=1.0).contains(&on) {
                return Err(SolveError::InvalidPolicy(format!(
                    "probabilities at state {x} lie outside [0, 1]"
                )));
            }
            if (off + on - 1.0).abs() > 1e-12 {
                return Err(SolveError::InvalidPolicy(format!(
                    "probabilities at state {x} sum to {}",
                    off + on
                )));
            }
        }
        Ok(Self { n_states, probs })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn prob(&self, state: usize, action: Action) -> f64 {
        self.probs[2 * state + action.index()]
    }

    pub fn is_deterministic(&self) -> bool {
        self.probs.iter().all(|p| *p == 0.0 || *p == 1.0)
    }

    /// The chosen action at `state` if the row is deterministic.
    pub fn action_at(&self, state: usize) -> Option<Action> {
        if self.probs[2 * state] == 1.0 {
            Some(Action::Off)
        } else if self.probs[2 * state + 1] == 1.0 {
            Some(Action::On)
        } else {
            None
        }
    }

    /// Samples an action from the row using a uniform draw in [0, 1).
    pub fn sample(&self, state: usize, u: f64) -> Action {
        if u < self.probs[2 * state] {
            Action::Off
        } else {
            Action::On
        }
    }
}

/// Which cost component a backup accumulates. `BillOnly` and
/// `DissatisfactionOnly` drive the value decomposition V = A + gamma B.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    Total,
    BillOnly,
    DissatisfactionOnly,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct KernelEntry {
    pub(crate) next: u32,
    pub(crate) prob: f64,
    pub(crate) cost: f64,
}

/// The full transition kernel flattened into index form, computed once
/// and reused across sweeps.
#[derive(Debug, Clone)]
pub struct CompiledKernel {
    n_states: usize,
    entries: Vec<KernelEntry>,
    offsets: Vec<usize>,
}

impl CompiledKernel {
    pub fn new(model: &DeviceModel, kind: CostKind) -> Self {
        let n = model.state_space_size();
        let mut entries = Vec::new();
        let mut offsets = Vec::with_capacity(2 * n + 1);
        offsets.push(0);
        for idx in 0..n {
            let state = model.state_at(idx);
            for action in Action::ALL {
                let outs = model.transitions(&state, action).expect("enumerated state");
                for o in outs {
                    let cost = match kind {
                        CostKind::Total => o.cost,
                        CostKind::BillOnly => o.bill,
                        CostKind::DissatisfactionOnly => o.dissatisfaction,
                    };
                    entries.push(KernelEntry {
                        next: model.state_index(&o.next).expect("kernel closure") as u32,
                        prob: o.prob,
                        cost,
                    });
                }
                offsets.push(entries.len());
            }
        }
        Self {
            n_states: n,
            entries,
            offsets,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub(crate) fn branches(&self, state: usize, action: Action) -> &[KernelEntry] {
        let k = 2 * state + action.index();
        &self.entries[self.offsets[k]..self.offsets[k + 1]]
    }

    /// Expected immediate cost of (state, action).
    fn expected_cost(&self, state: usize, action: Action) -> f64 {
        self.branches(state, action)
            .iter()
            .map(|e| e.prob * e.cost)
            .sum()
    }
}

fn check_dims(model: &DeviceModel, n: usize) -> Result<(), SolveError> {
    let expected = model.state_space_size();
    if n != expected {
        return Err(SolveError::Dimension { expected, got: n });
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<(), SolveError> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(SolveError::InvalidTolerance(tol));
    }
    Ok(())
}

fn backup_into(kernel: &CompiledKernel, alpha: f64, q: &QTable, out: &mut QTable) {
    for x in 0..kernel.n_states {
        for a in Action::ALL {
            let mut v = 0.0;
            for e in kernel.branches(x, a) {
                v += e.prob * (e.cost + alpha * q.min_value(e.next as usize));
            }
            out.set(x, a, v);
        }
    }
}

/// One application of the Bellman optimality operator:
/// `T(q)(x, a) = sum_k p_k [cost_k + alpha min_a' q(x_k', a')]`.
pub fn bellman_backup(model: &DeviceModel, q: &QTable) -> Result<QTable, SolveError> {
    check_dims(model, q.n_states())?;
    let kernel = CompiledKernel::new(model, CostKind::Total);
    let mut out = QTable::zeros(q.n_states());
    backup_into(&kernel, model.params().alpha, q, &mut out);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ValueIterationOutcome {
    pub q: QTable,
    /// Sup-norm Bellman residual at the returned table's predecessor;
    /// the returned table itself has residual <= alpha * this.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Value iteration on the Q-table from the all-zero initializer.
pub fn value_iteration(
    model: &DeviceModel,
    tol: f64,
    max_iter: usize,
) -> Result<ValueIterationOutcome, SolveError> {
    value_iteration_from(model, QTable::zeros(model.state_space_size()), tol, max_iter)
}

/// Value iteration from a caller-supplied initial table.
pub fn value_iteration_from(
    model: &DeviceModel,
    init: QTable,
    tol: f64,
    max_iter: usize,
) -> Result<ValueIterationOutcome, SolveError> {
    check_dims(model, init.n_states())?;
    check_tol(tol)?;
    let kernel = CompiledKernel::new(model, CostKind::Total);
    let alpha = model.params().alpha;
    let mut q = init;
    let mut next = QTable::zeros(q.n_states());
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        backup_into(&kernel, alpha, &q, &mut next);
        residual = q.sup_dist(&next);
        std::mem::swap(&mut q, &mut next);
        if residual <= tol {
            return Ok(ValueIterationOutcome {
                q,
                residual,
                iterations: iteration,
                converged: true,
            });
        }
    }
    Ok(ValueIterationOutcome {
        q,
        residual,
        iterations: max_iter,
        converged: false,
    })
}

/// Q-function of a fixed policy, solved by iterative evaluation on the
/// state-value function. The returned table satisfies the policy Bellman
/// equation with sup-norm residual at most `tol`.
pub fn policy_q(model: &DeviceModel, policy: &Policy, tol: f64) -> Result<QTable, SolveError> {
    policy_q_with(model, policy, tol, CostKind::Total)
}

/// [`policy_q`] under a selected cost component.
pub fn policy_q_with(
    model: &DeviceModel,
    policy: &Policy,
    tol: f64,
    kind: CostKind,
) -> Result<QTable, SolveError> {
    check_dims(model, policy.n_states())?;
    check_tol(tol)?;
    let kernel = CompiledKernel::new(model, kind);
    let alpha = model.params().alpha;
    let n = kernel.n_states;

    // Expected one-step cost of following the policy from each state.
    let step_cost: Vec<f64> = (0..n)
        .map(|x| {
            Action::ALL
                .iter()
                .map(|&a| policy.prob(x, a) * kernel.expected_cost(x, a))
                .sum()
        })
        .collect();

    // V-space Jacobi iteration; the Q residual is bounded by alpha times
    // the final V change, so stopping at `tol` meets the contract.
    let mut v = vec![0.0f64; n];
    let mut v_next = vec![0.0f64; n];
    let max_iter = contraction_iteration_cap(alpha, tol);
    let mut change = f64::INFINITY;
    let mut converged = false;
    for _ in 0..max_iter {
        for x in 0..n {
            let mut total = step_cost[x];
            for a in Action::ALL {
                let weight = policy.prob(x, a);
                if weight == 0.0 {
                    continue;
                }
                let mut cont = 0.0;
                for e in kernel.branches(x, a) {
                    cont += e.prob * v[e.next as usize];
                }
                total += weight * alpha * cont;
            }
            v_next[x] = total;
        }
        change = v
            .iter()
            .zip(&v_next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut v_next);
        if change <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SolveError::NoConvergence {
            iterations: max_iter,
            residual: change,
        });
    }

    let mut q = QTable::zeros(n);
    for x in 0..n {
        for a in Action::ALL {
            let mut value = kernel.expected_cost(x, a);
            for e in kernel.branches(x, a) {
                value += alpha * e.prob * v[e.next as usize];
            }
            q.set(x, a, value);
        }
    }
    Ok(q)
}

/// Iterations sufficient for a contraction with modulus `alpha` to push
/// an O(1e6)-scale residual below `tol`, with headroom.
fn contraction_iteration_cap(alpha: f64, tol: f64) -> usize {
    let per_digit = -1.0 / alpha.ln();
    let digits = (1e7 / tol.min(1.0)).ln();
    ((per_digit * digits * 2.0) as usize).max(10_000)
}

/// Deterministic greedy policy of a Q-table; ties go to Off.
pub fn greedy(q: &QTable) -> Policy {
    let actions: Vec<Action> = (0..q.n_states()).map(|x| q.greedy_action(x)).collect();
    Policy::deterministic(&actions)
}

#[derive(Debug, Clone)]
pub struct PolicyIterationOutcome {
    pub q: QTable,
    pub policy: Policy,
    pub iterations: usize,
}

/// Policy iteration as a greedy/evaluate loop, starting from all-Off.
pub fn policy_iteration(
    model: &DeviceModel,
    tol: f64,
    max_iter: usize,
) -> Result<PolicyIterationOutcome, SolveError> {
    check_tol(tol)?;
    let n = model.state_space_size();
    let mut policy = Policy::deterministic(&vec![Action::Off; n]);
    let mut q = policy_q(model, &policy, tol)?;
    for iteration in 1..=max_iter {
        let improved = greedy(&q);
        if improved == policy {
            return Ok(PolicyIterationOutcome {
                q,
                policy,
                iterations: iteration,
            });
        }
        policy = improved;
        q = policy_q(model, &policy, tol)?;
    }
    Err(SolveError::NoConvergence {
        iterations: max_iter,
        residual: f64::NAN,
    })
}

/// Stationary distribution of an ergodic price chain by power iteration,
/// to `sup |pi P - pi| <= tol`.
pub fn stationary_distribution(chain: &PriceChain, tol: f64) -> Result<Vec<f64>, SolveError> {
    check_tol(tol)?;
    let n = chain.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0f64; n];
    const MAX_ITER: usize = 5_000_000;
    for _ in 0..MAX_ITER {
        for v in next.iter_mut() {
            *v = 0.0;
        }
        for (i, &w) in pi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (j, p) in chain.row(i).iter().enumerate() {
                next[j] += w * p;
            }
        }
        let total: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= total;
        }
        let change = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if change <= tol {
            return Ok(pi);
        }
    }
    Err(SolveError::NoConvergence {
        iterations: MAX_ITER,
        residual: f64::NAN,
    })
}

/// Writes a Q-table as tab-separated `state action value` lines.
pub fn write_qtable(q: &QTable, out: &mut impl Write) -> std::io::Result<()> {
    for x in 0..q.n_states() {
        for a in Action::ALL {
            writeln!(out, "{x}\t{a}\t{}", q.get(x, a))?;
        }
    }
    Ok(())
}

/// Reads a Q-table written by [`write_qtable`].
pub fn read_qtable(input: &mut impl BufRead) -> Result<QTable, SolveError> {
    let mut cells: Vec<(usize, Action, f64)> = Vec::new();
    let mut n = 0usize;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t').map(str::trim);
        let missing =
            |what: &str| SolveError::Parse(format!("line {}: missing {what}", lineno + 1));
        let idx: usize = parts
            .next()
            .ok_or_else(|| missing("state index"))?
            .parse()
            .map_err(|e| SolveError::Parse(format!("line {}: {e}", lineno + 1)))?;
        let action = parts
            .next()
            .ok_or_else(|| missing("action"))
            .map(Action::parse)?
            .ok_or_else(|| {
                SolveError::Parse(format!("line {}: action must be off or on", lineno + 1))
            })?;
        let value: f64 = parts
            .next()
            .ok_or_else(|| missing("value"))?
            .parse()
            .map_err(|e| SolveError::Parse(format!("line {}: {e}", lineno + 1)))?;
        n = n.max(idx + 1);
        cells.push((idx, action, value));
    }
    let mut q = QTable::zeros(n);
    for (idx, action, value) in cells {
        q.set(idx, action, value);
    }
    Ok(q)
}

/// Writes a policy as tab-separated `state action probability` lines.
pub fn write_policy(policy: &Policy, out: &mut impl Write) -> std::io::Result<()> {
    for x in 0..policy.n_states() {
        for a in Action::ALL {
            writeln!(out, "{x}\t{a}\t{}", policy.prob(x, a))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{small_instance, tiny_instance};
    use crate::model::State;

    #[test]
    fn greedy_prefers_off_on_ties() {
        let mut q = QTable::zeros(2);
        q.set(0, Action::Off, 1.0);
        q.set(0, Action::On, 2.0);
        // state 1 is an exact tie
        q.set(1, Action::Off, 3.0);
        q.set(1, Action::On, 3.0);
        let policy = greedy(&q);
        assert_eq!(policy.action_at(0), Some(Action::Off));
        assert_eq!(policy.action_at(1), Some(Action::Off));
    }

    #[test]
    fn backup_of_zero_table_matches_immediate_costs() {
        let m = tiny_instance();
        let q = QTable::zeros(m.state_space_size());
        let t = bellman_backup(&m, &q).unwrap();
        // (g >= 1, On): backup value is the immediate cost P*C + gamma*u_r.
        let x = State::new(1, -1, 1);
        let idx = m.state_index(&x).unwrap();
        let expected = m.price_chain().price(1) * m.params().c
            + m.params().gamma * m.dissatisfaction().u_r(-1, 1);
        assert!((t.get(idx, Action::On) - expected).abs() < 1e-15);
        // (g = 0, Off) has zero cost on every branch.
        let idle = m.state_index(&State::new(0, 0, 0)).unwrap();
        assert_eq!(t.get(idle, Action::Off), 0.0);
    }

    #[test]
    fn value_iteration_reaches_fixed_point() {
        let m = tiny_instance();
        let out = value_iteration(&m, 1e-10, 100_000).unwrap();
        assert!(out.converged);
        let backed = bellman_backup(&m, &out.q).unwrap();
        assert!(out.q.sup_dist(&backed) <= 1e-10);
    }

    #[test]
    fn value_iteration_unique_fixed_point() {
        let m = tiny_instance();
        let tol = 1e-9;
        let a = value_iteration(&m, tol, 100_000).unwrap();
        let b = value_iteration_from(
            &m,
            QTable::filled(m.state_space_size(), 50.0),
            tol,
            100_000,
        )
        .unwrap();
        let alpha = m.params().alpha;
        assert!(a.q.sup_dist(&b.q) <= 2.0 * tol / (1.0 - alpha));
    }

    #[test]
    fn value_iteration_reports_non_convergence() {
        let m = tiny_instance();
        let out = value_iteration(&m, 1e-12, 3).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
    }

    #[test]
    fn rejects_bad_tolerance_and_dims() {
        let m = tiny_instance();
        assert!(matches!(
            value_iteration(&m, 0.0, 10),
            Err(SolveError::InvalidTolerance(_))
        ));
        let q = QTable::zeros(3);
        assert!(matches!(
            bellman_backup(&m, &q),
            Err(SolveError::Dimension { .. })
        ));
    }

    #[test]
    fn policy_q_matches_geometric_series() {
        // Always-On in a 1-price model with regeneration to [0,0]:
        // v = (P*C + gamma*u_e(0)) + alpha*v at the regeneration state.
        let m = crate::instances::synthetic(
            crate::instances::SynthDims {
                n_prices: 1,
                w: 0,
                w_hat: 0,
                g_max: 1,
            },
            7,
        );
        let n = m.state_space_size();
        let policy = Policy::deterministic(&vec![Action::On; n]);
        let q = policy_q(&m, &policy, 1e-12).unwrap();
        let idx = m.state_index(&State::new(0, 0, 0)).unwrap();
        let alpha = m.params().alpha;
        let cost = m.price_chain().price(0) * m.params().c
            + m.params().gamma * m.dissatisfaction().u_e(0);
        let expected = cost / (1.0 - alpha);
        assert!(
            (q.get(idx, Action::On) - expected).abs() < 1e-9,
            "{} vs {expected}",
            q.get(idx, Action::On)
        );
    }

    #[test]
    fn policy_q_of_greedy_reproduces_q_star() {
        let m = small_instance();
        let vi = value_iteration(&m, 1e-10, 200_000).unwrap();
        assert!(vi.converged);
        let q = policy_q(&m, &greedy(&vi.q), 1e-10).unwrap();
        assert!(q.sup_dist(&vi.q) < 1e-6, "dist {}", q.sup_dist(&vi.q));
    }

    #[test]
    fn policy_iteration_agrees_with_value_iteration() {
        let m = small_instance();
        let vi = value_iteration(&m, 1e-10, 200_000).unwrap();
        let pi = policy_iteration(&m, 1e-10, 100).unwrap();
        for x in 0..m.state_space_size() {
            assert!(
                (vi.q.min_value(x) - pi.q.min_value(x)).abs() < 1e-6,
                "state {x}"
            );
        }
    }

    #[test]
    fn stationary_two_state_symmetric() {
        let chain = PriceChain::new(vec![1.0, 2.0], vec![vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        let pi = stationary_distribution(&chain, 1e-13).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-10);
        assert!((pi[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn stationary_flip_probabilities() {
        // Flip probs (0.2, 0.3): balance gives (0.6, 0.4).
        let chain = PriceChain::new(vec![1.0, 2.0], vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let pi = stationary_distribution(&chain, 1e-13).unwrap();
        assert!((pi[0] - 0.6).abs() < 1e-10, "{pi:?}");
        assert!((pi[1] - 0.4).abs() < 1e-10, "{pi:?}");
    }

    #[test]
    fn stationary_sums_to_one() {
        let m = crate::instances::default_instance();
        let pi = stationary_distribution(m.price_chain(), 1e-13).unwrap();
        let total: f64 = pi.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(pi.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn qtable_roundtrip() {
        let mut q = QTable::zeros(3);
        q.set(0, Action::On, -1.25);
        q.set(2, Action::Off, 17.0 / 3.0);
        let mut buf = Vec::new();
        write_qtable(&q, &mut buf).unwrap();
        let back = read_qtable(&mut buf.as_slice()).unwrap();
        assert_eq!(q, back);
    }

    #[test]
    fn policy_rows_validate() {
        assert!(Policy::from_probs(1, vec![0.5, 0.5]).is_ok());
        assert!(Policy::from_probs(1, vec![0.6, 0.5]).is_err());
        assert!(Policy::from_probs(1, vec![-0.1, 1.1]).is_err());
    }
}
