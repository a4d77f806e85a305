//! Finite MDPs, tabular softmax policies and exact policy evaluation.
//!
//! Policy parameters are a table `theta[s][a]`, flattened row-major so that
//! coordinate `s * K + a` of every gradient vector belongs to the pair
//! `(s, a)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_index, Error, Result};
use crate::linalg;
use crate::math::{exp, ln, powi, sqrt};
use crate::rng::sample_categorical;

const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite MDP `(S, A, P, mu0, R, gamma)` with dense tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    /// `P(j | i, a)` at `(i * K + a) * N + j`.
    transition: Vec<f64>,
    initial: Vec<f64>,
    /// `R(i, a)` at `i * K + a`.
    reward: Vec<f64>,
    discount: f64,
}

impl Mdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        initial: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidModel("need at least one state and one action".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::InvalidModel(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if initial.len() != n_states {
            return Err(Error::InvalidModel("initial distribution length != state count".into()));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::InvalidModel("reward table length != states * actions".into()));
        }
        if !(0.0..=1.0).contains(&discount) {
            return Err(Error::InvalidModel(format!("discount {discount} outside [0, 1]")));
        }
        for (row, chunk) in transition.chunks(n_states).enumerate() {
            check_distribution(chunk).map_err(|msg| {
                Error::InvalidModel(format!(
                    "transition row (state {}, action {}): {msg}",
                    row / n_actions,
                    row % n_actions
                ))
            })?;
        }
        check_distribution(&initial)
            .map_err(|msg| Error::InvalidModel(format!("initial distribution: {msg}")))?;
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidModel("non-finite reward".into()));
        }
        Ok(Self { n_states, n_actions, transition, initial, reward, discount })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Length `N * K` of policy-gradient vectors.
    pub fn dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn transition(&self, i: usize, a: usize, j: usize) -> f64 {
        self.transition[(i * self.n_actions + a) * self.n_states + j]
    }

    /// `P(. | i, a)`
    pub fn transition_row(&self, i: usize, a: usize) -> &[f64] {
        let start = (i * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn reward(&self, i: usize, a: usize) -> f64 {
        self.reward[i * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Same dynamics and rewards, different initial distribution.
    pub fn with_initial(&self, initial: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            initial,
            self.reward.clone(),
            self.discount,
        )
    }
}

fn check_distribution(p: &[f64]) -> core::result::Result<(), alloc::string::String> {
    if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(format!("entry {x} is not a probability"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(format!("sums to {total}"));
    }
    Ok(())
}

/// Tabular softmax policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    n_states: usize,
    n_actions: usize,
    theta: Vec<f64>,
}

impl PolicyParams {
    /// All-zero parameters, i.e. the uniform policy.
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, theta: vec![0.0; n_states * n_actions] }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != n_states * n_actions {
            return Err(Error::InvalidConfig(format!(
                "policy table has {} entries, expected {}",
                theta.len(),
                n_states * n_actions
            )));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("policy parameters must be finite".into()));
        }
        Ok(Self { n_states, n_actions, theta })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.theta[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.theta[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.theta
    }

    fn check_shape(&self, mdp: &Mdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(Error::InvalidConfig(format!(
                "policy shape {}x{} does not match model {}x{}",
                self.n_states, self.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(())
    }
}

/// Max-shifted softmax of one parameter row.
pub fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = exp(x - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// `pi_theta(. | state)`
pub fn softmax_policy(theta: &PolicyParams, state: usize) -> Result<Vec<f64>> {
    check_index("state", state, theta.n_states)?;
    let mut out = vec![0.0; theta.n_actions];
    softmax_row(theta.row(state), &mut out);
    Ok(out)
}

/// The whole policy as an `N x K` row-major table.
pub fn policy_table(theta: &PolicyParams) -> Vec<f64> {
    let k = theta.n_actions;
    let mut out = vec![0.0; theta.dim()];
    for s in 0..theta.n_states {
        softmax_row(theta.row(s), &mut out[s * k..(s + 1) * k]);
    }
    out
}

/// `grad_theta log pi_theta(action | state)`, dense of length `N * K`.
pub fn log_policy_gradient(theta: &PolicyParams, state: usize, action: usize) -> Result<Vec<f64>> {
    check_index("action", action, theta.n_actions)?;
    let pi = softmax_policy(theta, state)?;
    let k = theta.n_actions;
    let mut grad = vec![0.0; theta.dim()];
    for (b, p) in pi.iter().enumerate() {
        grad[state * k + b] = if b == action { 1.0 - p } else { -p };
    }
    Ok(grad)
}

/// The state-to-state chain induced by a policy, with its kernel gradient.
///
/// `grad_theta P_theta(i, j)` is zero outside the `K` coordinates of row `i`,
/// so only those are stored.
#[derive(Debug, Clone)]
pub struct InducedChain {
    n_states: usize,
    n_actions: usize,
    policy: Vec<f64>,
    kernel: Vec<f64>,
    /// `d P_theta(i, j) / d theta[i][a]` at `(i * N + j) * K + a`.
    grad_local: Vec<f64>,
    /// Structural successors: `j` with `P(j|i,a) > 0` for some `a`.
    succ: Vec<Vec<usize>>,
    /// Structural predecessors, the transpose of `succ`.
    pred: Vec<Vec<usize>>,
}

impl InducedChain {
    pub fn new(mdp: &Mdp, theta: &PolicyParams) -> Result<Self> {
        theta.check_shape(mdp)?;
        let (n, k) = (mdp.n_states, mdp.n_actions);
        let policy = policy_table(theta);
        let mut kernel = vec![0.0; n * n];
        for i in 0..n {
            for a in 0..k {
                let pa = policy[i * k + a];
                for (kij, &p) in kernel[i * n..(i + 1) * n].iter_mut().zip(mdp.transition_row(i, a)) {
                    *kij += p * pa;
                }
            }
        }
        // sum_a P(j|i,a) pi(a|i) grad log pi(a|i), written out per coordinate
        let mut grad_local = vec![0.0; n * n * k];
        for i in 0..n {
            for a in 0..k {
                let pa = policy[i * k + a];
                let row = mdp.transition_row(i, a);
                for j in 0..n {
                    grad_local[(i * n + j) * k + a] = pa * (row[j] - kernel[i * n + j]);
                }
            }
        }
        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if (0..k).any(|a| mdp.transition(i, a, j) > 0.0) {
                    succ[i].push(j);
                    pred[j].push(i);
                }
            }
        }
        Ok(Self { n_states: n, n_actions: k, policy, kernel, grad_local, succ, pred })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn policy(&self) -> &[f64] {
        &self.policy
    }

    pub fn kernel(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.n_states + j]
    }

    pub fn kernel_matrix(&self) -> &[f64] {
        &self.kernel
    }

    pub fn kernel_row(&self, i: usize) -> &[f64] {
        &self.kernel[i * self.n_states..(i + 1) * self.n_states]
    }

    /// States reachable from `i` in one step under some action.
    pub fn successors(&self, i: usize) -> &[usize] {
        &self.succ[i]
    }

    /// States that reach `j` in one step under some action.
    pub fn predecessors(&self, j: usize) -> &[usize] {
        &self.pred[j]
    }

    /// Nonzero block of `grad_theta P_theta(i, j)`: the derivatives w.r.t.
    /// `theta[i][0..K]`.
    pub fn kernel_grad_local(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.n_states + j) * self.n_actions;
        &self.grad_local[start..start + self.n_actions]
    }

    /// `grad_theta P_theta(i, j)` as a dense vector of length `N * K`.
    pub fn kernel_grad(&self, i: usize, j: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        let k = self.n_actions;
        g[i * k..(i + 1) * k].copy_from_slice(self.kernel_grad_local(i, j));
        g
    }

    /// Chain rule through the kernel: given `sens[i][j] = dF / dP_theta(i, j)`
    /// returns `grad_theta F`.
    pub fn contract(&self, sens: &[f64]) -> Vec<f64> {
        let (n, k) = (self.n_states, self.n_actions);
        debug_assert_eq!(sens.len(), n * n);
        let mut grad = vec![0.0; n * k];
        for i in 0..n {
            let out = &mut grad[i * k..(i + 1) * k];
            for &j in &self.succ[i] {
                let s = sens[i * n + j];
                if s == 0.0 {
                    continue;
                }
                for (o, g) in out.iter_mut().zip(self.kernel_grad_local(i, j)) {
                    *o += s * g;
                }
            }
        }
        grad
    }
}

/// `induced_kernel(mdp, theta)`
pub fn induced_kernel(mdp: &Mdp, theta: &PolicyParams) -> Result<InducedChain> {
    InducedChain::new(mdp, theta)
}

/// Evaluation horizon for returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// Rewards at steps `t = 0..=T`.
    Finite(usize),
    /// Discounted sum over all steps; requires `gamma < 1`.
    Infinite,
}

/// A policy value and its exact gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueReport {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Value from each start state.
    pub per_state: Vec<f64>,
}

/// `E[sum_{t=0}^{T} gamma^t R(S_t, A_t)]` from `mu0`, with gradient.
pub fn finite_horizon_value(mdp: &Mdp, theta: &PolicyParams, horizon: usize) -> Result<ValueReport> {
    evaluate_value(mdp, theta, Horizon::Finite(horizon), mdp.initial())
}

/// Exact policy gradient of [`finite_horizon_value`].
pub fn value_gradient(mdp: &Mdp, theta: &PolicyParams, horizon: usize) -> Result<Vec<f64>> {
    Ok(finite_horizon_value(mdp, theta, horizon)?.grad)
}

/// Value from an arbitrary start distribution under either horizon.
pub fn evaluate_value(
    mdp: &Mdp,
    theta: &PolicyParams,
    horizon: Horizon,
    start: &[f64],
) -> Result<ValueReport> {
    theta.check_shape(mdp)?;
    let policy = policy_table(theta);
    evaluate_with_reward(mdp, &policy, mdp.rewards(), horizon, start)
}

/// Dynamic-programming evaluation of `policy` against an arbitrary reward
/// table. The gradient treats `reward` as constant.
pub(crate) fn evaluate_with_reward(
    mdp: &Mdp,
    policy: &[f64],
    reward: &[f64],
    horizon: Horizon,
    start: &[f64],
) -> Result<ValueReport> {
    if start.len() != mdp.n_states {
        return Err(Error::InvalidConfig("start distribution length != state count".into()));
    }
    match horizon {
        Horizon::Finite(t) => Ok(finite_dp(mdp, policy, reward, t, start)),
        Horizon::Infinite => infinite_eval(mdp, policy, reward, start),
    }
}

fn q_values(mdp: &Mdp, reward: &[f64], next: &[f64], s: usize, out: &mut [f64]) {
    let gamma = mdp.discount;
    for (a, q) in out.iter_mut().enumerate() {
        let cont: f64 = mdp.transition_row(s, a).iter().zip(next).map(|(p, w)| p * w).sum();
        *q = reward[s * mdp.n_actions + a] + gamma * cont;
    }
}

fn finite_dp(mdp: &Mdp, policy: &[f64], reward: &[f64], horizon: usize, start: &[f64]) -> ValueReport {
    let (n, k) = (mdp.n_states, mdp.n_actions);
    // tails[t] = discounted return from step t onward, re-based at t
    let mut tails = vec![vec![0.0; n]; horizon + 2];
    let mut q = vec![0.0; k];
    for t in (0..=horizon).rev() {
        let (head, rest) = tails.split_at_mut(t + 1);
        let next = &rest[0];
        for s in 0..n {
            q_values(mdp, reward, next, s, &mut q);
            head[t][s] = q.iter().zip(&policy[s * k..(s + 1) * k]).map(|(q, p)| q * p).sum();
        }
    }

    let mut grad = vec![0.0; n * k];
    let mut occ = start.to_vec();
    let mut next_occ = vec![0.0; n];
    let mut discount = 1.0;
    for t in 0..=horizon {
        for s in 0..n {
            if occ[s] == 0.0 {
                continue;
            }
            q_values(mdp, reward, &tails[t + 1], s, &mut q);
            let w = discount * occ[s];
            for a in 0..k {
                grad[s * k + a] += w * policy[s * k + a] * (q[a] - tails[t][s]);
            }
        }
        if t < horizon {
            next_occ.iter_mut().for_each(|x| *x = 0.0);
            for s in 0..n {
                if occ[s] == 0.0 {
                    continue;
                }
                for a in 0..k {
                    let w = occ[s] * policy[s * k + a];
                    for (nj, p) in next_occ.iter_mut().zip(mdp.transition_row(s, a)) {
                        *nj += w * p;
                    }
                }
            }
            core::mem::swap(&mut occ, &mut next_occ);
        }
        discount *= mdp.discount;
    }

    let per_state = tails.swap_remove(0);
    let value = per_state.iter().zip(start).map(|(v, m)| v * m).sum();
    ValueReport { value, grad, per_state }
}

fn induced_from_policy(mdp: &Mdp, policy: &[f64]) -> Vec<f64> {
    let (n, k) = (mdp.n_states, mdp.n_actions);
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for a in 0..k {
            let pa = policy[i * k + a];
            for (kij, p) in kernel[i * n..(i + 1) * n].iter_mut().zip(mdp.transition_row(i, a)) {
                *kij += p * pa;
            }
        }
    }
    kernel
}

fn infinite_eval(mdp: &Mdp, policy: &[f64], reward: &[f64], start: &[f64]) -> Result<ValueReport> {
    let (n, k) = (mdp.n_states, mdp.n_actions);
    let gamma = mdp.discount;
    if gamma >= 1.0 {
        return Err(Error::UnsupportedDiscount(gamma));
    }
    let kernel = induced_from_policy(mdp, policy);
    let r_pi: Vec<f64> = (0..n)
        .map(|s| (0..k).map(|a| policy[s * k + a] * reward[s * k + a]).sum())
        .collect();
    let per_state = linalg::solve_resolvent(&kernel, gamma, &r_pi, n)?;
    let visits = linalg::solve_resolvent_transposed(&kernel, gamma, start, n)?;
    let mut grad = vec![0.0; n * k];
    let mut q = vec![0.0; k];
    for s in 0..n {
        q_values(mdp, reward, &per_state, s, &mut q);
        for a in 0..k {
            grad[s * k + a] = visits[s] * policy[s * k + a] * (q[a] - per_state[s]);
        }
    }
    let value = per_state.iter().zip(start).map(|(v, m)| v * m).sum();
    Ok(ValueReport { value, grad, per_state })
}

/// Monte Carlo value and REINFORCE gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledValue {
    pub value: f64,
    pub std_err: f64,
    pub grad: Vec<f64>,
}

/// Unbiased REINFORCE estimate of the finite-horizon value gradient:
/// `mean over runs of sum_t grad log pi(A_t|S_t) * sum_{t' >= t} gamma^t' R_t'`.
pub fn reinforce_value<R: rand::Rng + ?Sized>(
    mdp: &Mdp,
    theta: &PolicyParams,
    horizon: usize,
    start: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<SampledValue> {
    theta.check_shape(mdp)?;
    if samples == 0 {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    }
    let (n, k) = (mdp.n_states, mdp.n_actions);
    let policy = policy_table(theta);
    let mut grad = vec![0.0; n * k];
    let mut returns = Vec::with_capacity(samples);
    let mut states = vec![0usize; horizon + 1];
    let mut actions = vec![0usize; horizon + 1];
    let mut discounted = vec![0.0; horizon + 1];
    for _ in 0..samples {
        let mut s = sample_categorical(rng, start);
        for t in 0..=horizon {
            let a = sample_categorical(rng, &policy[s * k..(s + 1) * k]);
            states[t] = s;
            actions[t] = a;
            discounted[t] = powi(mdp.discount, t as i32) * mdp.reward(s, a);
            if t < horizon {
                s = sample_categorical(rng, mdp.transition_row(s, a));
            }
        }
        let mut tail = 0.0;
        for t in (0..=horizon).rev() {
            tail += discounted[t];
            let (s, a) = (states[t], actions[t]);
            for b in 0..k {
                let score = if b == a { 1.0 } else { 0.0 } - policy[s * k + b];
                grad[s * k + b] += score * tail;
            }
        }
        returns.push(tail);
    }
    let m = samples as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    let (value, std_err) = mean_and_stderr(&returns);
    Ok(SampledValue { value, std_err, grad })
}

pub(crate) fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = crate::math::pairwise_sum(xs) / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, sqrt(var / m))
}

/// Per-state policy entropy in nats.
pub fn policy_entropy_nats(policy: &[f64], n_actions: usize) -> Vec<f64> {
    policy
        .chunks(n_actions)
        .map(|row| row.iter().filter(|&&p| p > 0.0).map(|&p| -p * ln(p)).sum())
        .collect()
}
