//! Baseline policy, policy performance, cost-reduction potential and
//! learner metrics.
//!
//! Policy values are computed on the closed set of states reachable from
//! the initial distribution under the policy, with a direct linear solve
//! plus one iterative-refinement pass. On that set the baseline policy
//! never touches a dissatisfaction cost, so its value is exactly
//! independent of gamma rather than merely within solver tolerance.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::env::{Environment, RngStream};
use crate::learn::{learn, LearnError, LearnerConfig};
use crate::model::{Action, DeviceModel};
use crate::solve::{
    greedy, stationary_distribution, value_iteration, CompiledKernel, CostKind, Policy,
    SolveError, DEFAULT_MAX_ITER,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("v_base must be > 0, got {0}")]
    NonPositiveBase(f64),
    #[error("delta_b must be > 0, got {0}")]
    NonPositiveDeltaB(f64),
    #[error("state space too large for brute force: {states} states exceeds cap {cap}")]
    CapExceeded { states: usize, cap: usize },
    #[error("policy evaluation residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("value iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
    #[error("instance is not Theorem-1 compliant:\n  {}", violations.join("\n  "))]
    NotCompliant { violations: Vec<String> },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

/// Deterministic baseline: never self-initiate, complete every request
/// exactly at its target time.
pub fn baseline_policy(model: &DeviceModel) -> Policy {
    let actions: Vec<Action> = (0..model.state_space_size())
        .map(|idx| {
            let x = model.state_at(idx);
            if x.g >= 1 && x.s == 0 {
                Action::On
            } else {
                Action::Off
            }
        })
        .collect();
    Policy::deterministic(&actions)
}

/// Sparse initial distribution: stationary price marginal times the
/// device-portion regeneration distribution.
pub fn start_distribution(
    model: &DeviceModel,
    tol: f64,
) -> Result<Vec<(usize, f64)>, SolveError> {
    let pi_p = stationary_distribution(model.price_chain(), tol.min(1e-13))?;
    let mut dist = Vec::new();
    for (price_idx, pp) in pi_p.iter().enumerate() {
        for (dp, dq) in model.requests().regen() {
            let prob = pp * dq;
            if prob > 0.0 {
                let state = crate::model::State::new(price_idx, dp.s, dp.g);
                dist.push((model.state_index(&state).expect("valid regen state"), prob));
            }
        }
    }
    Ok(dist)
}

/// States reachable from `roots` when following actions the policy
/// plays with positive probability.
fn reachable_closure(model: &DeviceModel, policy: &Policy, roots: &[usize]) -> Vec<usize> {
    let n = model.state_space_size();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    for &r in roots {
        if !seen[r] {
            seen[r] = true;
            stack.push(r);
        }
    }
    while let Some(x) = stack.pop() {
        let state = model.state_at(x);
        for a in Action::ALL {
            if policy.prob(x, a) == 0.0 {
                continue;
            }
            for o in model.transitions(&state, a).expect("enumerated state") {
                let j = model.state_index(&o.next).expect("kernel closure");
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    (0..n).filter(|&i| seen[i]).collect()
}

/// Direct policy evaluation of the state-value function restricted to a
/// closed state set. Returns values aligned with `states`.
fn eval_values_restricted(
    model: &DeviceModel,
    policy: &Policy,
    kind: CostKind,
    states: &[usize],
    tol: f64,
) -> Result<Vec<f64>, MetricsError> {
    let alpha = model.params().alpha;
    let m = states.len();
    let mut local = vec![usize::MAX; model.state_space_size()];
    for (i, &x) in states.iter().enumerate() {
        local[x] = i;
    }

    // system = I - alpha * P_mu restricted to the closed set.
    let mut system = DMatrix::<f64>::identity(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (i, &x) in states.iter().enumerate() {
        let state = model.state_at(x);
        for a in Action::ALL {
            let weight = policy.prob(x, a);
            if weight == 0.0 {
                continue;
            }
            for o in model.transitions(&state, a).expect("enumerated state") {
                let j = local[model.state_index(&o.next).expect("kernel closure")];
                debug_assert!(j != usize::MAX, "reachable set is not closed");
                let cost = match kind {
                    CostKind::Total => o.cost,
                    CostKind::BillOnly => o.bill,
                    CostKind::DissatisfactionOnly => o.dissatisfaction,
                };
                system[(i, j)] -= weight * alpha * o.prob;
                rhs[i] += weight * o.prob * cost;
            }
        }
    }

    let lu = system.clone().lu();
    let mut v = lu
        .solve(&rhs)
        .ok_or(MetricsError::ResidualTooLarge {
            residual: f64::INFINITY,
            tol,
        })?;
    // One refinement pass, then verify the residual.
    let residual_vec = &rhs - &system * &v;
    if let Some(correction) = lu.solve(&residual_vec) {
        v += correction;
    }
    let residual = (&rhs - &system * &v).amax();
    if residual > tol {
        return Err(MetricsError::ResidualTooLarge { residual, tol });
    }
    Ok(v.iter().cloned().collect())
}

fn expected_start_value(
    model: &DeviceModel,
    policy: &Policy,
    kind: CostKind,
    tol: f64,
) -> Result<f64, MetricsError> {
    let init = start_distribution(model, tol)?;
    let roots: Vec<usize> = init.iter().map(|(i, _)| *i).collect();
    let states = reachable_closure(model, policy, &roots);
    let values = eval_values_restricted(model, policy, kind, &states, tol)?;
    let mut local = vec![usize::MAX; model.state_space_size()];
    for (i, &x) in states.iter().enumerate() {
        local[x] = i;
    }
    Ok(init.iter().map(|&(x, p)| p * values[local[x]]).sum())
}

/// Policy performance: the expected Q-value of the policy at a state
/// drawn from the stationary-price x regeneration distribution.
pub fn policy_value(model: &DeviceModel, policy: &Policy, tol: f64) -> Result<f64, MetricsError> {
    expected_start_value(model, policy, CostKind::Total, tol)
}

/// Split of a policy's value into expected discounted bill and expected
/// discounted dissatisfaction: V = a_mu + gamma * b_mu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueDecomposition {
    pub a_mu: f64,
    pub b_mu: f64,
}

pub fn decompose_value(
    model: &DeviceModel,
    policy: &Policy,
    tol: f64,
) -> Result<ValueDecomposition, MetricsError> {
    Ok(ValueDecomposition {
        a_mu: expected_start_value(model, policy, CostKind::BillOnly, tol)?,
        b_mu: expected_start_value(model, policy, CostKind::DissatisfactionOnly, tol)?,
    })
}

/// Cost-reduction potential of the instance at its gamma.
#[derive(Debug, Clone, Copy)]
pub struct DrPotential {
    pub v_base: f64,
    pub v_star: f64,
    pub drp: f64,
    /// None when v_base is 0 (the ratio is undefined).
    pub rdrp: Option<f64>,
}

/// DRP = V_base - V_star, with the optimal policy extracted greedily
/// from value iteration and then evaluated exactly.
pub fn dr_potential(model: &DeviceModel, tol: f64) -> Result<DrPotential, MetricsError> {
    let v_base = policy_value(model, &baseline_policy(model), tol)?;
    let vi = value_iteration(model, tol, DEFAULT_MAX_ITER)?;
    if !vi.converged {
        return Err(MetricsError::NotConverged {
            residual: vi.residual,
            iterations: vi.iterations,
        });
    }
    let mu_star = greedy(&vi.q);
    let v_star = policy_value(model, &mu_star, tol)?;
    let drp = v_base - v_star;
    let rdrp = if v_base > 0.0 { Some(drp / v_base) } else { None };
    Ok(DrPotential {
        v_base,
        v_star,
        drp,
        rdrp,
    })
}

/// Sufficient tradeoff threshold above which the baseline is optimal:
/// (P_max - P_min) C / ((1 - alpha) delta_b). Not tight.
pub fn gamma_star_bound(model: &DeviceModel, delta_b: f64) -> Result<f64, MetricsError> {
    if !delta_b.is_finite() || delta_b <= 0.0 {
        return Err(MetricsError::NonPositiveDeltaB(delta_b));
    }
    let spread = model.price_chain().p_max() - model.price_chain().p_min();
    Ok(spread * model.params().c / ((1.0 - model.params().alpha) * delta_b))
}

/// Default state-count cap for [`delta_b_bruteforce`].
pub const DEFAULT_BRUTEFORCE_CAP: usize = 16;

/// Values of expected discounted dissatisfaction below this are treated
/// as exact zeros when searching for the smallest positive B.
const POSITIVE_B_TOL: f64 = 1e-9;

/// Smallest strictly positive expected discounted dissatisfaction over
/// all deterministic policies, by exhaustive enumeration. Returns
/// `Ok(None)` when every deterministic policy has zero dissatisfaction.
///
/// Diagnostic only: the search is exponential in the state count and
/// refuses instances larger than `cap`.
pub fn delta_b_bruteforce(
    model: &DeviceModel,
    cap: usize,
) -> Result<Option<f64>, MetricsError> {
    let n = model.state_space_size();
    if n > cap {
        return Err(MetricsError::CapExceeded { states: n, cap });
    }
    let alpha = model.params().alpha;
    let init = start_distribution(model, 1e-13)?;
    let kernel = CompiledKernel::new(model, CostKind::DissatisfactionOnly);

    let mut best: Option<f64> = None;
    for mask in 0u64..(1u64 << n) {
        // Dissatisfaction-only policy evaluation by direct solve.
        let mut system = DMatrix::<f64>::identity(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for x in 0..n {
            let action = if mask >> x & 1 == 1 { Action::On } else { Action::Off };
            for e in kernel.branches(x, action) {
                system[(x, e.next as usize)] -= alpha * e.prob;
                rhs[x] += e.prob * e.cost;
            }
        }
        let v = match system.lu().solve(&rhs) {
            Some(v) => v,
            None => continue,
        };
        let b: f64 = init.iter().map(|&(x, p)| p * v[x]).sum();
        if b > POSITIVE_B_TOL {
            best = Some(match best {
                Some(current) => current.min(b),
                None => b,
            });
        }
    }
    Ok(best)
}

/// RI = (v_base - v_tilde) / v_base; may be negative.
pub fn relative_improvement(v_base: f64, v_tilde: f64) -> Result<f64, MetricsError> {
    if !v_base.is_finite() || v_base <= 0.0 {
        return Err(MetricsError::NonPositiveBase(v_base));
    }
    Ok((v_base - v_tilde) / v_base)
}

/// Sample-mean estimate of the learner's expected discounted lifetime
/// cost, with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct VTilde {
    pub mean: f64,
    pub se: f64,
    pub runs: u32,
}

/// Default repetition count for the estimation protocol; sweeps may
/// configure fewer for speed.
pub const DEFAULT_VTILDE_RUNS: u32 = 200;

/// Averages `runs` independent learning lifetimes. Run `r` is seeded by
/// `seed_for_run(r)`; runs execute in parallel and are reduced in run
/// order, so the estimate is deterministic.
pub fn estimate_v_tilde(
    model: &DeviceModel,
    learner: &LearnerConfig,
    runs: u32,
    seed_for_run: &(impl Fn(u32) -> u64 + Sync),
) -> Result<VTilde, MetricsError> {
    learner.validate()?;
    let template = Environment::new(Arc::new(model.clone()))?;
    let samples: Vec<Result<f64, LearnError>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut env = template.clone();
            let mut rng = RngStream::seeded(seed_for_run(r));
            learn(&mut env, learner, &mut rng).map(|out| out.lifetime_discounted_cost)
        })
        .collect();
    let mut totals = Vec::with_capacity(runs as usize);
    for s in samples {
        totals.push(s?);
    }
    let mean = totals.iter().sum::<f64>() / runs as f64;
    let se = if runs > 1 {
        let var =
            totals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (runs as f64 - 1.0);
        (var / runs as f64).sqrt()
    } else {
        0.0
    };
    Ok(VTilde { mean, se, runs })
}

/// One evaluated point of a tradeoff sweep.
#[derive(Debug, Clone, Copy)]
pub struct MetricsReport {
    pub gamma: f64,
    pub v_base: f64,
    pub v_star: f64,
    pub drp: f64,
    pub rdrp: Option<f64>,
    pub v_tilde: VTilde,
    pub ri: Option<f64>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "gamma,v_base,v_star,drp,rdrp,v_tilde_mean,v_tilde_se,runs,ri";

    /// Row with every numeric column at 10 significant digits.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            sig10(self.gamma),
            sig10(self.v_base),
            sig10(self.v_star),
            sig10(self.drp),
            sig10(self.rdrp.unwrap_or(f64::NAN)),
            sig10(self.v_tilde.mean),
            sig10(self.v_tilde.se),
            self.v_tilde.runs,
            sig10(self.ri.unwrap_or(f64::NAN)),
        )
    }

    /// Placeholder row for a grid point whose computation failed.
    pub fn failed(gamma: f64, runs: u32) -> Self {
        Self {
            gamma,
            v_base: f64::NAN,
            v_star: f64::NAN,
            drp: f64::NAN,
            rdrp: None,
            v_tilde: VTilde {
                mean: f64::NAN,
                se: f64::NAN,
                runs,
            },
            ri: None,
        }
    }
}

fn sig10(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.9e}")
    }
}

/// Numerical check of one structural claim about the
/// baseline-vs-optimal tradeoff.
#[derive(Debug, Clone)]
pub struct StructuralClaim {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Result of evaluating all four structural claims over a gamma grid.
#[derive(Debug, Clone)]
pub struct StructuralReport {
    pub claims: Vec<StructuralClaim>,
    /// (gamma, potential) per grid point, in grid order.
    pub rows: Vec<(f64, DrPotential)>,
}

impl StructuralReport {
    pub fn all_passed(&self) -> bool {
        self.claims.iter().all(|c| c.passed)
    }
}

/// Tolerance for the equality-style structural claims.
pub const STRUCTURAL_TOL: f64 = 1e-8;

/// Relative potential below which the "vanishes for large gamma" claim
/// is accepted on instances too large for the exact threshold check.
pub const VANISH_FRACTION: f64 = 0.01;

/// Evaluates the four structural claims on a compliant instance over a
/// gamma grid:
///
/// 1. the baseline value does not depend on gamma;
/// 2. the potential vanishes for large gamma -- exactly above the
///    sufficient threshold when the instance is small enough to
///    brute-force the dissatisfaction gap, and as
///    `RDRP(gamma_max) <= 1%` otherwise;
/// 3. DRP and RDRP are non-increasing in gamma;
/// 4. RDRP = 1 at gamma = 0.
///
/// Refuses instances that fail the compliance conditions.
pub fn check_structural_claims(
    model: &DeviceModel,
    gammas: &[f64],
    tol: f64,
) -> Result<StructuralReport, MetricsError> {
    let violations = model.theorem1_violations();
    if !violations.is_empty() {
        return Err(MetricsError::NotCompliant { violations });
    }

    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let mg = model.with_gamma(gamma).map_err(SolveError::Model)?;
        rows.push((gamma, dr_potential(&mg, tol)?));
    }

    let mut claims = Vec::new();

    // Claim 1: V_base constant in gamma.
    let v0 = rows[0].1.v_base;
    let max_dev = rows
        .iter()
        .map(|(_, p)| (p.v_base - v0).abs())
        .fold(0.0, f64::max);
    claims.push(StructuralClaim {
        name: "1: baseline value independent of gamma",
        passed: max_dev <= STRUCTURAL_TOL,
        detail: format!("max |V_base(gamma) - V_base({})| = {max_dev:.3e}", rows[0].0),
    });

    // Claim 2: potential vanishes for large gamma.
    let last = rows.last().expect("non-empty grid");
    let mut passed;
    let mut detail;
    match delta_b_bruteforce(model, DEFAULT_BRUTEFORCE_CAP) {
        Ok(Some(delta_b)) => {
            let bound = gamma_star_bound(model, delta_b)?;
            let probe_gamma = if bound > 0.0 { 1.01 * bound } else { 1.0 };
            let probe = dr_potential(
                &model.with_gamma(probe_gamma).map_err(SolveError::Model)?,
                tol,
            )?;
            passed = probe.drp.abs() <= STRUCTURAL_TOL;
            detail = format!(
                "delta_b = {delta_b:.6e}, threshold = {bound:.6e}, DRP({probe_gamma:.6e}) = {:.3e}",
                probe.drp
            );
        }
        Ok(None) => {
            // No deterministic policy incurs dissatisfaction: the
            // baseline is never strictly separated, DRP must be ~0
            // everywhere.
            passed = last.1.drp.abs() <= STRUCTURAL_TOL;
            detail = format!("all B are zero; DRP(gamma_max) = {:.3e}", last.1.drp);
        }
        Err(MetricsError::CapExceeded { .. }) => {
            let rel = last.1.rdrp.unwrap_or(0.0);
            passed = rel <= VANISH_FRACTION;
            detail = format!(
                "instance too large for the exact check; RDRP({}) = {rel:.3e}",
                last.0
            );
        }
        Err(e) => return Err(e),
    }
    if gammas.len() < 2 {
        passed = false;
        detail.push_str(" (grid too short)");
    }
    claims.push(StructuralClaim {
        name: "2: potential vanishes for large gamma",
        passed,
        detail,
    });

    // Claim 3: DRP and RDRP non-increasing.
    let mut worst_increase = 0.0f64;
    for pair in rows.windows(2) {
        worst_increase = worst_increase.max(pair[1].1.drp - pair[0].1.drp);
        if let (Some(a), Some(b)) = (pair[0].1.rdrp, pair[1].1.rdrp) {
            worst_increase = worst_increase.max(b - a);
        }
    }
    claims.push(StructuralClaim {
        name: "3: DRP and RDRP non-increasing in gamma",
        passed: worst_increase <= STRUCTURAL_TOL,
        detail: format!("largest increase between adjacent grid points = {worst_increase:.3e}"),
    });

    // Claim 4: RDRP(0) = 1.
    let at_zero = rows.iter().find(|(g, _)| *g == 0.0);
    match at_zero {
        Some((_, p)) => {
            let rdrp = p.rdrp.unwrap_or(f64::NAN);
            claims.push(StructuralClaim {
                name: "4: RDRP(0) = 1",
                passed: (rdrp - 1.0).abs() <= STRUCTURAL_TOL,
                detail: format!("RDRP(0) = {rdrp:.12}"),
            });
        }
        None => claims.push(StructuralClaim {
            name: "4: RDRP(0) = 1",
            passed: false,
            detail: "grid does not include gamma = 0".to_string(),
        }),
    }

    Ok(StructuralReport { claims, rows })
}
