//! The observer's view of the controlled process as a hidden Markov model.
//!
//! Under a fixed policy the state sequence is a Markov chain with kernel
//! `P_theta` and each state emits an observation from `b_i`. Actions are not
//! observed. Messages are kept in scaled form (each time slice divided by a
//! running normalizer) and their gradients share the same scaling; accessors
//! return unscaled probabilities.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_index, Error, Result};
use crate::math::{exp, ln};
use crate::mdp::{policy_table, InducedChain, Mdp, PolicyParams};
use crate::rng::{sample_categorical, Rng};

/// Emission distributions `b_i(o)` over a finite symbol alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    n_states: usize,
    symbols: Vec<String>,
    /// `b_i(o)` at `i * |O| + o`.
    emission: Vec<f64>,
}

impl ObservationModel {
    pub fn new(n_states: usize, symbols: Vec<String>, emission: Vec<f64>) -> Result<Self> {
        let m = symbols.len();
        if m == 0 {
            return Err(Error::InvalidModel("observation alphabet is empty".into()));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::InvalidModel(format!("duplicate observation symbol {s:?}")));
            }
        }
        if emission.len() != n_states * m {
            return Err(Error::InvalidModel("emission table size != states * symbols".into()));
        }
        for (i, row) in emission.chunks(m).enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidModel(format!("emission row {i} has a negative entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidModel(format!("emission row {i} sums to {total}")));
            }
        }
        Ok(Self { n_states, symbols, emission })
    }

    /// Symbols named `"0"`, `"1"`, ... for generated models.
    pub fn with_numbered_symbols(n_states: usize, n_symbols: usize, emission: Vec<f64>) -> Result<Self> {
        let symbols = (0..n_symbols).map(|o| format!("{o}")).collect();
        Self::new(n_states, symbols, emission)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol_index(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    #[inline]
    pub fn emission(&self, state: usize, obs: usize) -> f64 {
        self.emission[state * self.symbols.len() + obs]
    }

    pub fn emission_row(&self, state: usize) -> &[f64] {
        let m = self.symbols.len();
        &self.emission[state * m..(state + 1) * m]
    }
}

/// An observation sequence `o_0, ..., o_T` (one symbol per state `S_0..S_T`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObsSeq(Vec<usize>);

impl ObsSeq {
    pub fn new(symbols: Vec<usize>, obs: &ObservationModel) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidConfig("observation sequence must be non-empty".into()));
        }
        for &o in &symbols {
            check_index("observation", o, obs.n_symbols())?;
        }
        Ok(Self(symbols))
    }

    /// `T`, one less than the number of symbols.
    pub fn horizon(&self) -> usize {
        self.0.len() - 1
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_sequence(y: &ObsSeq, obs: &ObservationModel, chain: &InducedChain) -> Result<()> {
    for &o in y.symbols() {
        check_index("observation", o, obs.n_symbols())?;
    }
    if obs.n_states() != chain.n_states() {
        return Err(Error::InvalidModel("observation model and chain disagree on state count".into()));
    }
    Ok(())
}

/// One sampled run of the controlled process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub observations: ObsSeq,
}

/// Samples `S_0..S_T`, `A_0..A_T` and `O_0..O_T` from the given start
/// distribution. Deterministic for a given generator state.
pub fn sample_run_with<R: rand::Rng + ?Sized>(
    mdp: &Mdp,
    obs: &ObservationModel,
    policy: &[f64],
    start: &[f64],
    horizon: usize,
    rng: &mut R,
) -> Run {
    let k = mdp.n_actions();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon + 1);
    let mut symbols = Vec::with_capacity(horizon + 1);
    let mut s = sample_categorical(rng, start);
    for t in 0..=horizon {
        states.push(s);
        symbols.push(sample_categorical(rng, obs.emission_row(s)));
        let a = sample_categorical(rng, &policy[s * k..(s + 1) * k]);
        actions.push(a);
        if t < horizon {
            s = sample_categorical(rng, mdp.transition_row(s, a));
        }
    }
    Run { states, actions, observations: ObsSeq(symbols) }
}

/// `sample_run(mdp, obs, theta, T, seed)`: same seed, same run.
pub fn sample_run(
    mdp: &Mdp,
    obs: &ObservationModel,
    theta: &PolicyParams,
    horizon: usize,
    seed: u64,
) -> Run {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    let policy = policy_table(theta);
    sample_run_with(mdp, obs, &policy, mdp.initial(), horizon, &mut rng)
}

/// Forward messages `alpha_t(j) = P(o_0..o_t, S_t = j)` and their gradients.
#[derive(Debug, Clone)]
pub struct ForwardTable {
    n_states: usize,
    dim: usize,
    /// Scaled messages; each row sums to one unless the prefix is impossible.
    alpha_hat: Vec<f64>,
    grad_hat: Vec<f64>,
    /// `ln` of the cumulative normalizer up to each step.
    log_scale: Vec<f64>,
    degenerate: bool,
}

/// `forward_messages(chain, obs, mu0, y)`
pub fn forward_messages(
    chain: &InducedChain,
    obs: &ObservationModel,
    mu0: &[f64],
    y: &ObsSeq,
) -> Result<ForwardTable> {
    check_sequence(y, obs, chain)?;
    if mu0.len() != chain.n_states() {
        return Err(Error::InvalidModel("initial distribution length != state count".into()));
    }
    let n = chain.n_states();
    let k = chain.n_actions();
    let d = chain.dim();
    let steps = y.len();
    let mut alpha_hat = vec![0.0; steps * n];
    let mut grad_hat = vec![0.0; steps * n * d];
    let mut log_scale = vec![0.0; steps];
    let mut degenerate = false;

    let o0 = y.symbols()[0];
    for j in 0..n {
        alpha_hat[j] = mu0[j] * obs.emission(j, o0);
    }
    let c0: f64 = alpha_hat[..n].iter().sum();
    if c0 > 0.0 {
        alpha_hat[..n].iter_mut().for_each(|a| *a /= c0);
        log_scale[0] = ln(c0);
    } else {
        degenerate = true;
        log_scale[0] = f64::NEG_INFINITY;
    }

    for t in 1..steps {
        if degenerate {
            log_scale[t] = f64::NEG_INFINITY;
            continue;
        }
        let ot = y.symbols()[t];
        let (prev_a, cur_a) = alpha_hat.split_at_mut(t * n);
        let prev_a = &prev_a[(t - 1) * n..];
        let cur_a = &mut cur_a[..n];
        let (prev_g, cur_g) = grad_hat.split_at_mut(t * n * d);
        let prev_g = &prev_g[(t - 1) * n * d..];
        let cur_g = &mut cur_g[..n * d];
        for j in 0..n {
            let bj = obs.emission(j, ot);
            if bj == 0.0 {
                continue;
            }
            let gj = &mut cur_g[j * d..(j + 1) * d];
            let mut aj = 0.0;
            for i in 0..n {
                let pij = chain.kernel(i, j);
                let ai = prev_a[i];
                aj += ai * pij;
                // P(i,j) b_j grad alpha_{t-1}(i)
                if pij != 0.0 {
                    let w = pij * bj;
                    for (g, pg) in gj.iter_mut().zip(&prev_g[i * d..(i + 1) * d]) {
                        *g += w * pg;
                    }
                }
                // alpha_{t-1}(i) b_j grad P(i,j), nonzero only in row i
                if ai != 0.0 {
                    let w = ai * bj;
                    for (g, kg) in gj[i * k..(i + 1) * k].iter_mut().zip(chain.kernel_grad_local(i, j)) {
                        *g += w * kg;
                    }
                }
            }
            cur_a[j] = aj * bj;
        }
        let ct: f64 = cur_a.iter().sum();
        if ct > 0.0 {
            cur_a.iter_mut().for_each(|a| *a /= ct);
            cur_g.iter_mut().for_each(|g| *g /= ct);
            log_scale[t] = log_scale[t - 1] + ln(ct);
        } else {
            degenerate = true;
            cur_g.iter_mut().for_each(|g| *g = 0.0);
            log_scale[t] = f64::NEG_INFINITY;
        }
    }
    Ok(ForwardTable { n_states: n, dim: d, alpha_hat, grad_hat, log_scale, degenerate })
}

impl ForwardTable {
    pub fn horizon(&self) -> usize {
        self.log_scale.len() - 1
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether `P_theta(y) = 0`.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    fn scale(&self, t: usize) -> f64 {
        if self.degenerate && self.log_scale[t] == f64::NEG_INFINITY {
            0.0
        } else {
            exp(self.log_scale[t])
        }
    }

    /// Unscaled `alpha_t(j)`.
    pub fn alpha(&self, t: usize, j: usize) -> f64 {
        self.alpha_hat[t * self.n_states + j] * self.scale(t)
    }

    /// Unscaled `grad alpha_t(j)`.
    pub fn alpha_grad(&self, t: usize, j: usize) -> Vec<f64> {
        let c = self.scale(t);
        let start = (t * self.n_states + j) * self.dim;
        self.grad_hat[start..start + self.dim].iter().map(|g| g * c).collect()
    }

    /// `alpha_t(.) / P(o_0..o_t)`, the filtering distribution at `t`.
    pub fn filtered(&self, t: usize) -> &[f64] {
        &self.alpha_hat[t * self.n_states..(t + 1) * self.n_states]
    }

    /// `grad alpha_t(j) / P(o_0..o_t)`.
    pub fn scaled_alpha_grad(&self, t: usize, j: usize) -> &[f64] {
        let start = (t * self.n_states + j) * self.dim;
        &self.grad_hat[start..start + self.dim]
    }

    /// `P_theta(y)`
    pub fn seq_prob(&self) -> f64 {
        self.scale(self.horizon())
    }

    /// `ln P_theta(y)`, `-inf` when degenerate.
    pub fn log_seq_prob(&self) -> f64 {
        self.log_scale[self.horizon()]
    }

    /// `grad P_theta(y) = sum_j grad alpha_T(j)`
    pub fn seq_prob_grad(&self) -> Vec<f64> {
        let c = self.seq_prob();
        self.grad_log_seq_prob().into_iter().map(|g| g * c).collect()
    }

    /// `grad ln P_theta(y)`, zero when degenerate.
    pub fn grad_log_seq_prob(&self) -> Vec<f64> {
        let t = self.horizon();
        let mut g = vec![0.0; self.dim];
        if self.degenerate {
            return g;
        }
        for j in 0..self.n_states {
            crate::math::axpy(1.0, self.scaled_alpha_grad(t, j), &mut g);
        }
        g
    }
}

/// Backward messages `beta_t(i) = P(o_{t+1}..o_T | S_t = i)`, `beta_T = 1`.
#[derive(Debug, Clone)]
pub struct BackwardTable {
    n_states: usize,
    dim: usize,
    beta_hat: Vec<f64>,
    grad_hat: Vec<f64>,
    /// `ln` of the product of normalizers from `t` to `T`.
    log_scale: Vec<f64>,
}

/// `backward_messages(chain, obs, y)`
pub fn backward_messages(chain: &InducedChain, obs: &ObservationModel, y: &ObsSeq) -> Result<BackwardTable> {
    check_sequence(y, obs, chain)?;
    let n = chain.n_states();
    let k = chain.n_actions();
    let d = chain.dim();
    let steps = y.len();
    let last = steps - 1;
    let mut beta_hat = vec![0.0; steps * n];
    let mut grad_hat = vec![0.0; steps * n * d];
    let mut log_scale = vec![0.0; steps];
    beta_hat[last * n..].iter_mut().for_each(|b| *b = 1.0);

    for t in (0..last).rev() {
        let next_o = y.symbols()[t + 1];
        let (cur_b, next_b) = beta_hat.split_at_mut((t + 1) * n);
        let cur_b = &mut cur_b[t * n..];
        let next_b = &next_b[..n];
        let (cur_g, next_g) = grad_hat.split_at_mut((t + 1) * n * d);
        let cur_g = &mut cur_g[t * n * d..];
        let next_g = &next_g[..n * d];
        if log_scale[t + 1] == f64::NEG_INFINITY {
            log_scale[t] = f64::NEG_INFINITY;
            continue;
        }
        for i in 0..n {
            let gi = &mut cur_g[i * d..(i + 1) * d];
            let mut bi = 0.0;
            for j in 0..n {
                let bj = obs.emission(j, next_o);
                if bj == 0.0 {
                    continue;
                }
                let pij = chain.kernel(i, j);
                bi += pij * bj * next_b[j];
                if pij != 0.0 {
                    let w = pij * bj;
                    for (g, ng) in gi.iter_mut().zip(&next_g[j * d..(j + 1) * d]) {
                        *g += w * ng;
                    }
                }
                let w = bj * next_b[j];
                if w != 0.0 {
                    for (g, kg) in gi[i * k..(i + 1) * k].iter_mut().zip(chain.kernel_grad_local(i, j)) {
                        *g += w * kg;
                    }
                }
            }
            cur_b[i] = bi;
        }
        let dt: f64 = cur_b.iter().sum();
        if dt > 0.0 {
            cur_b.iter_mut().for_each(|b| *b /= dt);
            cur_g.iter_mut().for_each(|g| *g /= dt);
            log_scale[t] = log_scale[t + 1] + ln(dt);
        } else {
            cur_g.iter_mut().for_each(|g| *g = 0.0);
            log_scale[t] = f64::NEG_INFINITY;
        }
    }
    Ok(BackwardTable { n_states: n, dim: d, beta_hat, grad_hat, log_scale })
}

impl BackwardTable {
    pub fn horizon(&self) -> usize {
        self.log_scale.len() - 1
    }

    fn scale(&self, t: usize) -> f64 {
        if self.log_scale[t] == f64::NEG_INFINITY {
            0.0
        } else {
            exp(self.log_scale[t])
        }
    }

    /// Unscaled `beta_t(i)`.
    pub fn beta(&self, t: usize, i: usize) -> f64 {
        self.beta_hat[t * self.n_states + i] * self.scale(t)
    }

    /// Unscaled `grad beta_t(i)`.
    pub fn beta_grad(&self, t: usize, i: usize) -> Vec<f64> {
        let c = self.scale(t);
        let start = (t * self.n_states + i) * self.dim;
        self.grad_hat[start..start + self.dim].iter().map(|g| g * c).collect()
    }
}

/// `P_theta(y | S_0 = i) = b_i(o_0) beta_0(i)` and its gradient.
pub fn likelihood_given_start(
    table: &BackwardTable,
    obs: &ObservationModel,
    y: &ObsSeq,
    i: usize,
) -> Result<(f64, Vec<f64>)> {
    check_index("state", i, table.n_states)?;
    let b = obs.emission(i, y.symbols()[0]);
    let mut grad = table.beta_grad(0, i);
    grad.iter_mut().for_each(|g| *g *= b);
    Ok((b * table.beta(0, i), grad))
}

/// Reverse-mode route to the same gradients.
///
/// For a functional `F = u . alpha_T` of a forward pass started from
/// `alpha_0 = v`, `dF / dP_theta(i, j) = sum_t alpha_{t-1}(i) b_j(o_t)
/// beta^u_t(j)`, where `beta^u` is the backward pass started from `u`.
/// Everything here is expressed relative to `P_theta(y)` using the
/// normalizers of the reference forward pass from `mu0`.
pub struct Adjoint<'a> {
    chain: &'a InducedChain,
    obs: &'a ObservationModel,
    y: &'a ObsSeq,
    /// Per-step forward normalizers `c_t`.
    scales: Vec<f64>,
    /// Scaled reference forward messages.
    filtered: Vec<f64>,
    log_prob: f64,
}

impl<'a> Adjoint<'a> {
    /// Runs the reference forward pass. Fails on impossible evidence.
    pub fn new(chain: &'a InducedChain, obs: &'a ObservationModel, mu0: &[f64], y: &'a ObsSeq) -> Result<Self> {
        check_sequence(y, obs, chain)?;
        let n = chain.n_states();
        let steps = y.len();
        let mut filtered = vec![0.0; steps * n];
        let mut scales = vec![0.0; steps];
        let mut log_prob = 0.0;
        for t in 0..steps {
            let ot = y.symbols()[t];
            for j in 0..n {
                let pred = if t == 0 {
                    mu0[j]
                } else {
                    let prev = &filtered[(t - 1) * n..t * n];
                    chain.predecessors(j).iter().map(|&i| prev[i] * chain.kernel(i, j)).sum()
                };
                filtered[t * n + j] = pred * obs.emission(j, ot);
            }
            let c: f64 = filtered[t * n..(t + 1) * n].iter().sum();
            if !(c > 0.0) {
                return Err(Error::DegenerateEvidence);
            }
            filtered[t * n..(t + 1) * n].iter_mut().for_each(|a| *a /= c);
            scales[t] = c;
            log_prob += ln(c);
        }
        Ok(Self { chain, obs, y, scales, filtered, log_prob })
    }

    pub fn log_prob(&self) -> f64 {
        self.log_prob
    }

    /// `alpha_T / P_theta(y)`
    pub fn final_filtered(&self) -> &[f64] {
        let n = self.chain.n_states();
        let t = self.y.horizon();
        &self.filtered[t * n..(t + 1) * n]
    }

    /// `alpha_0(j) / c_0`, i.e. `mu0(j) b_j(o_0)` normalized.
    pub fn initial_filtered(&self) -> &[f64] {
        &self.filtered[..self.chain.n_states()]
    }

    /// Returns `(F / P(y), dF/dP_theta / P(y))` for `F = terminal . alpha_T`
    /// where the forward pass starts from `c_0 * init` (`init` is given in
    /// the scaled units of [`Adjoint::initial_filtered`]). Sensitivities are
    /// only filled where some action moves `i` to `j`; elsewhere the kernel
    /// gradient vanishes anyway.
    pub fn sensitivity(&self, init: &[f64], terminal: &[f64]) -> (f64, Vec<f64>) {
        let n = self.chain.n_states();
        let steps = self.y.len();
        // forward from `init` using the reference normalizers
        let mut fwd = vec![0.0; steps * n];
        fwd[..n].copy_from_slice(init);
        for t in 1..steps {
            let ot = self.y.symbols()[t];
            let c = self.scales[t];
            for j in 0..n {
                let bj = self.obs.emission(j, ot);
                if bj == 0.0 {
                    continue;
                }
                let prev = &fwd[(t - 1) * n..t * n];
                let pred: f64 = self.chain.predecessors(j).iter().map(|&i| prev[i] * self.chain.kernel(i, j)).sum();
                fwd[t * n + j] = pred * bj / c;
            }
        }
        let last = steps - 1;
        let value: f64 = fwd[last * n..].iter().zip(terminal).map(|(a, u)| a * u).sum();

        let mut sens = vec![0.0; n * n];
        let mut back = terminal.to_vec();
        let mut weighted = vec![0.0; n];
        for t in (1..steps).rev() {
            let ot = self.y.symbols()[t];
            let c = self.scales[t];
            for j in 0..n {
                weighted[j] = self.obs.emission(j, ot) * back[j] / c;
            }
            let prev = &fwd[(t - 1) * n..t * n];
            for i in 0..n {
                let ai = prev[i];
                if ai == 0.0 {
                    continue;
                }
                // entries off the structural support never reach the gradient
                for &j in self.chain.successors(i) {
                    sens[i * n + j] += ai * weighted[j];
                }
            }
            for i in 0..n {
                back[i] = self.chain.successors(i).iter().map(|&j| self.chain.kernel(i, j) * weighted[j]).sum();
            }
        }
        (value, sens)
    }
}
