//! Entropy-regularized MDP baseline.
//!
//! The baseline maximizes `V_tau = V + tau * H_pi`, where `H_pi` is the
//! discounted policy entropy `-(1/(1-gamma)) E_{s ~ d_pi} sum_a pi log pi`.
//! It ignores the observer entirely, which is the point of the comparison.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hmm::ObservationModel;
use crate::linalg;
use crate::math::{axpy, ln, LN_2};
use crate::mdp::{evaluate_value, evaluate_with_reward, policy_entropy_nats, policy_table};
use crate::mdp::{Horizon, InducedChain, Mdp, PolicyParams};
use crate::objective::{EntropyMethod, Objective};

/// Discounted state occupancy `(1 - gamma) sum_t gamma^t P(S_t = .)`.
pub fn occupancy_measure(chain: &InducedChain, mu0: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::UnsupportedDiscount(gamma));
    }
    let n = chain.n_states();
    if mu0.len() != n {
        return Err(Error::InvalidConfig("initial distribution length != state count".into()));
    }
    let mut d = linalg::solve_resolvent_transposed(chain.kernel_matrix(), gamma, mu0, n)?;
    d.iter_mut().for_each(|x| *x *= 1.0 - gamma);
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub tau: f64,
    pub step: f64,
    pub iterations: usize,
    /// Unused by the deterministic ascent; kept so sweeps record their seed.
    pub seed: u64,
    pub horizon: Horizon,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { tau: 0.0, step: 1.0, iterations: 3000, seed: 0, horizon: Horizon::Infinite }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig("tau must be finite and >= 0".into()));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidConfig("baseline step must be > 0".into()));
        }
        Ok(())
    }
}

/// `V_tau` from `mu0` and its gradient.
///
/// Folding `-tau ln pi(a|s)` into the reward gives a policy evaluation whose
/// score-function gradient is exact: the extra term `-tau E[grad ln pi]`
/// vanishes in expectation.
pub fn regularized_objective(mdp: &Mdp, theta: &PolicyParams, tau: f64, horizon: Horizon) -> Result<(f64, Vec<f64>)> {
    let policy = policy_table(theta);
    let reward: Vec<f64> = mdp
        .rewards()
        .iter()
        .zip(&policy)
        .map(|(r, &p)| if p > 0.0 { r - tau * ln(p) } else { *r })
        .collect();
    let report = evaluate_with_reward(mdp, &policy, &reward, horizon, mdp.initial())?;
    Ok((report.value, report.grad))
}

/// `H_pi` straight from its definition: `-(1/(1-gamma)) E_{s ~ d_pi} sum_a pi(a|s) ln pi(a|s)`.
pub fn discounted_policy_entropy(mdp: &Mdp, theta: &PolicyParams) -> Result<f64> {
    let chain = InducedChain::new(mdp, theta)?;
    let gamma = mdp.discount();
    let d = occupancy_measure(&chain, mdp.initial(), gamma)?;
    let per_state = policy_entropy_nats(chain.policy(), mdp.n_actions());
    Ok(d.iter().zip(&per_state).map(|(w, h)| w * h).sum::<f64>() / (1.0 - gamma))
}

/// Sufficient-increase constant for the backtracking line search.
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Gradient ascent on `V_tau` from the uniform policy.
///
/// Each step starts from `config.step` and is halved until `V_tau` rises
/// by at least `1e-4 * t * |grad|^2`. A fixed step diverges once `tau` makes
/// the objective sharply curved; backtracking keeps it monotone for any `tau`.
pub fn entropy_regularized_solve(mdp: &Mdp, config: &BaselineConfig) -> Result<PolicyParams> {
    config.validate()?;
    let mut theta = PolicyParams::zeros(mdp.n_states(), mdp.n_actions());
    let (mut current, mut grad) = regularized_objective(mdp, &theta, config.tau, config.horizon)?;
    for iteration in 0..config.iterations {
        if grad.iter().any(|g| !g.is_finite()) || !current.is_finite() {
            return Err(Error::NonFinite { what: "baseline gradient", iteration });
        }
        let sq: f64 = grad.iter().map(|g| g * g).sum();
        if sq == 0.0 {
            break;
        }
        let mut t = config.step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut next = theta.clone();
            axpy(t, &grad, next.as_mut_slice());
            let (value, g) = regularized_objective(mdp, &next, config.tau, config.horizon)?;
            if value >= current + ARMIJO * t * sq {
                accepted = Some((next, value, g));
                break;
            }
            t *= 0.5;
        }
        // no acceptable step: stationary to working precision
        let Some((next, value, g)) = accepted else { break };
        theta = next;
        current = value;
        grad = g;
    }
    Ok(theta)
}

/// One row of the baseline comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub tau: f64,
    /// Occupancy-weighted mean per-state policy entropy, in bits.
    pub policy_entropy: f64,
    pub opacity_entropy: f64,
    pub opacity_std_err: f64,
    /// Return under the evaluation horizon used by the constraint.
    pub value: f64,
    pub theta: PolicyParams,
}

/// Occupancy-weighted mean of the per-state policy entropy, in bits.
pub fn mean_policy_entropy_bits(mdp: &Mdp, theta: &PolicyParams) -> Result<f64> {
    let chain = InducedChain::new(mdp, theta)?;
    let d = occupancy_measure(&chain, mdp.initial(), mdp.discount())?;
    let per_state = policy_entropy_nats(chain.policy(), mdp.n_actions());
    Ok(d.iter().zip(&per_state).map(|(w, h)| w * h).sum::<f64>() / LN_2)
}

/// Solves the baseline for each `tau`, then scores each policy on opacity
/// and on the constrained return.
pub fn baseline_sweep(
    mdp: &Mdp,
    obs: &ObservationModel,
    taus: &[f64],
    horizon: usize,
    objective: &Objective,
    base: &BaselineConfig,
    method: EntropyMethod,
) -> Result<Vec<BaselineRow>> {
    if taus.is_empty() {
        return Err(Error::InvalidConfig("baseline sweep needs at least one tau".into()));
    }
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let config = BaselineConfig { tau, ..base.clone() };
        let theta = entropy_regularized_solve(mdp, &config)?;
        let chain = InducedChain::new(mdp, &theta)?;
        let est = crate::objective::evaluate_entropy(mdp, obs, &chain, objective, horizon, method)?;
        let value = evaluate_value(mdp, &theta, Horizon::Finite(horizon), mdp.initial())?.value;
        rows.push(BaselineRow {
            tau,
            policy_entropy: mean_policy_entropy_bits(mdp, &theta)?,
            opacity_entropy: est.value,
            opacity_std_err: est.std_err,
            value,
            theta,
        });
    }
    Ok(rows)
}

/// Per-state policy entropy in bits.
pub fn policy_entropy_bits(theta: &PolicyParams) -> Vec<f64> {
    let policy = policy_table(theta);
    policy_entropy_nats(&policy, theta.n_actions()).into_iter().map(|h| h / LN_2).collect()
}
