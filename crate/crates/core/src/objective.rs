//! Opacity objectives: conditional entropy of a secret given the observer's
//! observation sequence, with policy gradients.
//!
//! Two secrets are supported. For last-state opacity the secret is the bit
//! `Z_T = 1[S_T in E]`; for initial-state opacity it is `S_0` itself. Both
//! entropies are in bits and both gradients follow the same per-sequence
//! expansion
//!
//! ```text
//! grad H = -sum_y P(y) sum_z [ log2 P(z|y) grad P(z|y)
//!                              + P(z|y) log2 P(z|y) grad ln P(y)
//!                              + grad P(z|y) / ln 2 ]
//! ```
//!
//! evaluated either over every observation sequence (exact) or over sequences
//! sampled from the current policy (sampled).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_index, Error, Result};
use crate::hmm::{backward_messages, forward_messages, likelihood_given_start, sample_run_with, Adjoint};
use crate::hmm::{BackwardTable, ForwardTable, ObsSeq, ObservationModel};
use crate::math::{axpy, log2, pairwise_sum, LN_2};
use crate::mdp::{mean_and_stderr, InducedChain, Mdp, PolicyParams};
use crate::rng;

/// Default cap on `|O|^(T+1)` for exact enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Slack allowed when checking entropy bounds before clamping.
const BOUND_SLACK: f64 = 1e-9;

/// The secret set `E` for last-state opacity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretSpec {
    member: Vec<bool>,
}

impl SecretSpec {
    pub fn new(n_states: usize, secret_states: &[usize]) -> Result<Self> {
        let mut member = vec![false; n_states];
        for &s in secret_states {
            check_index("secret state", s, n_states)?;
            member[s] = true;
        }
        Ok(Self { member })
    }

    pub fn contains(&self, s: usize) -> bool {
        self.member.get(s).copied().unwrap_or(false)
    }

    pub fn states(&self) -> Vec<usize> {
        (0..self.member.len()).filter(|&s| self.member[s]).collect()
    }

    pub fn n_states(&self) -> usize {
        self.member.len()
    }

    fn indicator(&self) -> Vec<f64> {
        self.member.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
    }
}

/// Which secret the observer is trying to infer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Objective {
    /// `H(Z_T | Y)` with `Z_T = 1[S_T in E]`.
    LastState(SecretSpec),
    /// `H(S_0 | Y)`.
    InitialState,
}

impl Objective {
    /// Largest possible entropy in bits.
    pub fn upper_bound(&self, mu0: &[f64]) -> f64 {
        match self {
            Objective::LastState(_) => 1.0,
            Objective::InitialState => {
                let support = mu0.iter().filter(|&&p| p > 0.0).count();
                log2(support.max(1) as f64)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Objective::LastState(_) => "last-state",
            Objective::InitialState => "initial-state",
        }
    }
}

/// How an estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    ExactEnumeration,
    Sampled { samples: usize },
}

/// Gradient route for per-sequence posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientEngine {
    /// Forward-mode message recursions carrying full gradient vectors.
    ForwardMode,
    /// Reverse-mode sweep through the same messages; `O(T N^2)` per sequence.
    #[default]
    Adjoint,
}

/// How to evaluate an entropy: full enumeration or sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMethod {
    Exact { cap: u64 },
    Sampled { samples: usize, seed: u64 },
}

/// Dispatches to [`exact_entropy_with`] (forward-mode messages) or
/// [`sampled_entropy_with`] (adjoint messages).
pub fn evaluate_entropy(
    mdp: &Mdp,
    obs: &ObservationModel,
    chain: &InducedChain,
    objective: &Objective,
    horizon: usize,
    method: EntropyMethod,
) -> Result<EntropyEstimate> {
    match method {
        EntropyMethod::Exact { cap } => {
            exact_entropy_with(chain, obs, mdp.initial(), objective, horizon, cap, GradientEngine::ForwardMode)
        }
        EntropyMethod::Sampled { samples, seed } => {
            sampled_entropy_with(mdp, obs, chain, objective, horizon, samples, seed, GradientEngine::Adjoint)
        }
    }
}

/// A conditional-entropy value (bits) with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyEstimate {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Standard error of `value`; zero for exact enumeration.
    pub std_err: f64,
    pub mode: EstimateMode,
}

/// `P_theta(Z_T = 1 | y)` and its gradient from forward messages.
pub fn last_state_posterior(ft: &ForwardTable, secret: &SecretSpec) -> Result<(f64, Vec<f64>)> {
    if ft.is_degenerate() {
        return Err(Error::DegenerateEvidence);
    }
    let t = ft.horizon();
    let filtered = ft.filtered(t);
    let grad_log_p = ft.grad_log_seq_prob();
    let mut p1 = 0.0;
    let mut grad = vec![0.0; ft.dim()];
    for k in (0..ft.n_states()).filter(|&k| secret.contains(k)) {
        // alpha_T(k) / P(y) and grad alpha_T(k) / P(y)
        p1 += filtered[k];
        axpy(1.0, ft.scaled_alpha_grad(t, k), &mut grad);
    }
    // quotient rule: grad alpha / P - alpha grad P / P^2
    axpy(-p1, &grad_log_p, &mut grad);
    Ok((p1, grad))
}

/// `P_theta(s_0 | y)` for every state, with gradients, via Bayes' rule on
/// `P_theta(y | s_0)` from backward messages.
pub fn initial_state_posterior(
    bt: &BackwardTable,
    obs: &ObservationModel,
    mu0: &[f64],
    y: &ObsSeq,
    seq_prob: f64,
    seq_prob_grad: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if !(seq_prob > 0.0) {
        return Err(Error::DegenerateEvidence);
    }
    let n = mu0.len();
    let d = seq_prob_grad.len();
    let mut post = vec![0.0; n];
    let mut grads = vec![vec![0.0; d]; n];
    for s in 0..n {
        if mu0[s] == 0.0 {
            continue;
        }
        let (lik, lik_grad) = likelihood_given_start(bt, obs, y, s)?;
        post[s] = lik * mu0[s] / seq_prob;
        let g = &mut grads[s];
        axpy(mu0[s] / seq_prob, &lik_grad, g);
        axpy(-mu0[s] * lik / (seq_prob * seq_prob), seq_prob_grad, g);
    }
    Ok((post, grads))
}

/// Everything the entropy expansion needs from one observation sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEvidence {
    pub log_prob: f64,
    pub grad_log_prob: Vec<f64>,
    /// `P(z | y)` over the secret's values (`[Z=0, Z=1]` or states).
    pub posterior: Vec<f64>,
    pub posterior_grad: Vec<Vec<f64>>,
}

/// Per-sequence posterior evidence through the chosen gradient route.
pub fn sequence_evidence(
    chain: &InducedChain,
    obs: &ObservationModel,
    mu0: &[f64],
    objective: &Objective,
    y: &ObsSeq,
    engine: GradientEngine,
) -> Result<SequenceEvidence> {
    match engine {
        GradientEngine::ForwardMode => evidence_forward_mode(chain, obs, mu0, objective, y),
        GradientEngine::Adjoint => evidence_adjoint(chain, obs, mu0, objective, y),
    }
}

fn evidence_forward_mode(
    chain: &InducedChain,
    obs: &ObservationModel,
    mu0: &[f64],
    objective: &Objective,
    y: &ObsSeq,
) -> Result<SequenceEvidence> {
    let ft = forward_messages(chain, obs, mu0, y)?;
    if ft.is_degenerate() {
        return Err(Error::DegenerateEvidence);
    }
    let grad_log_prob = ft.grad_log_seq_prob();
    let (posterior, posterior_grad) = match objective {
        Objective::LastState(secret) => {
            let (p1, g1) = last_state_posterior(&ft, secret)?;
            let g0 = g1.iter().map(|g| -g).collect();
            (vec![1.0 - p1, p1], vec![g0, g1])
        }
        Objective::InitialState => {
            let bt = backward_messages(chain, obs, y)?;
            initial_state_posterior(&bt, obs, mu0, y, ft.seq_prob(), &ft.seq_prob_grad())?
        }
    };
    Ok(SequenceEvidence { log_prob: ft.log_seq_prob(), grad_log_prob, posterior, posterior_grad })
}

fn evidence_adjoint(
    chain: &InducedChain,
    obs: &ObservationModel,
    mu0: &[f64],
    objective: &Objective,
    y: &ObsSeq,
) -> Result<SequenceEvidence> {
    let n = chain.n_states();
    let adj = Adjoint::new(chain, obs, mu0, y)?;
    let init = adj.initial_filtered().to_vec();
    let ones = vec![1.0; n];
    let (_, sens) = adj.sensitivity(&init, &ones);
    let grad_log_prob = chain.contract(&sens);
    let (posterior, posterior_grad) = match objective {
        Objective::LastState(secret) => {
            let (p1, sens1) = adj.sensitivity(&init, &secret.indicator());
            let mut g1 = chain.contract(&sens1);
            axpy(-p1, &grad_log_prob, &mut g1);
            let g0 = g1.iter().map(|g| -g).collect();
            (vec![1.0 - p1, p1], vec![g0, g1])
        }
        Objective::InitialState => {
            let mut post = vec![0.0; n];
            let mut grads = vec![vec![0.0; chain.dim()]; n];
            let mut start = vec![0.0; n];
            for s in (0..n).filter(|&s| mu0[s] > 0.0) {
                start.iter_mut().for_each(|x| *x = 0.0);
                start[s] = init[s];
                let (p, sens_s) = adj.sensitivity(&start, &ones);
                let mut g = chain.contract(&sens_s);
                axpy(-p, &grad_log_prob, &mut g);
                post[s] = p;
                grads[s] = g;
            }
            (post, grads)
        }
    };
    Ok(SequenceEvidence { log_prob: adj.log_prob(), grad_log_prob, posterior, posterior_grad })
}

/// Posterior entropy `-sum_z P(z|y) log2 P(z|y)` of one sequence and its
/// three-term gradient contribution.
pub fn sequence_entropy_terms(ev: &SequenceEvidence) -> (f64, Vec<f64>) {
    let d = ev.grad_log_prob.len();
    let mut grad = vec![0.0; d];
    let mut h = 0.0;
    for (p, gp) in ev.posterior.iter().zip(&ev.posterior_grad) {
        if *p > 0.0 {
            let l = log2(*p);
            h -= p * l;
            axpy(-l, gp, &mut grad);
            axpy(-p * l, &ev.grad_log_prob, &mut grad);
        }
        axpy(-1.0 / LN_2, gp, &mut grad);
    }
    (h, grad)
}

fn check_bounds(value: f64, upper: f64) -> Result<f64> {
    if !(value >= -BOUND_SLACK && value <= upper + BOUND_SLACK) {
        return Err(Error::BoundViolation { value, upper });
    }
    Ok(value.clamp(0.0, upper))
}

/// Number of observation sequences of length `T + 1`.
pub fn sequence_count(n_symbols: usize, horizon: usize) -> u128 {
    let mut count: u128 = 1;
    for _ in 0..=horizon {
        count = count.saturating_mul(n_symbols as u128);
    }
    count
}

/// Visits every observation sequence of length `T + 1` in lexicographic
/// order.
pub fn for_each_sequence<F>(obs: &ObservationModel, horizon: usize, cap: u64, mut f: F) -> Result<()>
where
    F: FnMut(&ObsSeq) -> Result<()>,
{
    let m = obs.n_symbols();
    let count = sequence_count(m, horizon);
    if count > cap as u128 {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut digits = vec![0usize; horizon + 1];
    let mut y = ObsSeq::new(digits.clone(), obs)?;
    loop {
        f(&y)?;
        let mut pos = horizon + 1;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < m {
                break;
            }
            digits[pos] = 0;
        }
        y = ObsSeq::new(digits.clone(), obs)?;
    }
}

/// Exact entropy and gradient by summing over all `|O|^(T+1)` sequences.
pub fn exact_entropy(
    chain: &InducedChain,
    obs: &ObservationModel,
    mu0: &[f64],
    objective: &Objective,
    horizon: usize,
) -> Result<EntropyEstimate> {
    exact_entropy_with(chain, obs, mu0, objective, horizon, DEFAULT_ENUMERATION_CAP, GradientEngine::ForwardMode)
}

pub fn exact_entropy_with(
    chain: &InducedChain,
    obs: &ObservationModel,
    mu0: &[f64],
    objective: &Objective,
    horizon: usize,
    cap: u64,
    engine: GradientEngine,
) -> Result<EntropyEstimate> {
    validate_objective(objective, chain.n_states())?;
    let mut value = 0.0;
    let mut grad = vec![0.0; chain.dim()];
    for_each_sequence(obs, horizon, cap, |y| {
        let ev = match sequence_evidence(chain, obs, mu0, objective, y, engine) {
            Ok(ev) => ev,
            // impossible sequences carry zero weight
            Err(Error::DegenerateEvidence) => return Ok(()),
            Err(e) => return Err(e),
        };
        let weight = crate::math::exp(ev.log_prob);
        let (h, g) = sequence_entropy_terms(&ev);
        value += weight * h;
        axpy(weight, &g, &mut grad);
        Ok(())
    })?;
    let value = check_bounds(value, objective.upper_bound(mu0))?;
    Ok(EntropyEstimate { value, grad, std_err: 0.0, mode: EstimateMode::ExactEnumeration })
}

fn validate_objective(objective: &Objective, n_states: usize) -> Result<()> {
    if let Objective::LastState(secret) = objective {
        if secret.n_states() != n_states {
            return Err(Error::InvalidConfig("secret set sized for a different model".into()));
        }
    }
    Ok(())
}

const CHUNK: usize = 64;

/// Sampled estimate from `samples` sequences drawn under `theta` from the
/// model's initial distribution. Sequence `k` uses its own seeded stream, so
/// the result depends only on `(theta, samples, seed)`.
pub fn sampled_entropy(
    mdp: &Mdp,
    obs: &ObservationModel,
    theta: &PolicyParams,
    objective: &Objective,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<EntropyEstimate> {
    let chain = InducedChain::new(mdp, theta)?;
    sampled_entropy_with(mdp, obs, &chain, objective, horizon, samples, seed, GradientEngine::Adjoint)
}

#[allow(clippy::too_many_arguments)]
pub fn sampled_entropy_with(
    mdp: &Mdp,
    obs: &ObservationModel,
    chain: &InducedChain,
    objective: &Objective,
    horizon: usize,
    samples: usize,
    seed: u64,
    engine: GradientEngine,
) -> Result<EntropyEstimate> {
    if samples == 0 {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    }
    validate_objective(objective, mdp.n_states())?;
    let d = chain.dim();
    let n_chunks = samples.div_ceil(CHUNK);
    let run_chunk = |c: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(samples);
        let mut hs = Vec::with_capacity(hi - lo);
        let mut gsum = vec![0.0; d];
        for k in lo..hi {
            let mut rng = rng::stream(seed, "observation-sequence", k as u64);
            let run = sample_run_with(mdp, obs, chain.policy(), mdp.initial(), horizon, &mut rng);
            let ev = sequence_evidence(chain, obs, mdp.initial(), objective, &run.observations, engine)?;
            let (h, g) = sequence_entropy_terms(&ev);
            hs.push(h);
            axpy(1.0, &g, &mut gsum);
        }
        Ok((hs, gsum))
    };

    #[cfg(feature = "parallel")]
    let chunks: Vec<Result<(Vec<f64>, Vec<f64>)>> = {
        use rayon::prelude::*;
        (0..n_chunks).into_par_iter().map(run_chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let chunks: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n_chunks).map(run_chunk).collect();

    let mut hs = Vec::with_capacity(samples);
    let mut grad = vec![0.0; d];
    for chunk in chunks {
        let (h, g) = chunk?;
        hs.extend(h);
        axpy(1.0, &g, &mut grad);
    }
    let m = samples as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    let (mean, std_err) = mean_and_stderr(&hs);
    debug_assert!((mean - pairwise_sum(&hs) / m).abs() < 1e-12);
    let value = check_bounds(mean, objective.upper_bound(mdp.initial()))?;
    Ok(EntropyEstimate { value, grad, std_err, mode: EstimateMode::Sampled { samples } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::binary_entropy;

    fn uninformative(n: usize) -> ObservationModel {
        ObservationModel::with_numbered_symbols(n, 2, [0.3, 0.7].repeat(n)).unwrap()
    }

    fn three_state() -> Mdp {
        #[rustfmt::skip]
        let t = vec![
            0.2, 0.5, 0.3,  0.6, 0.1, 0.3,
            0.0, 0.4, 0.6,  0.3, 0.3, 0.4,
            0.5, 0.0, 0.5,  0.1, 0.8, 0.1,
        ];
        Mdp::new(3, 2, t, vec![0.5, 0.3, 0.2], vec![0.0; 6], 0.9).unwrap()
    }

    #[test]
    fn empty_and_full_secret() {
        let mdp = three_state();
        let obs = ObservationModel::with_numbered_symbols(3, 2, vec![0.9, 0.1, 0.5, 0.5, 0.2, 0.8]).unwrap();
        let theta = PolicyParams::from_vec(3, 2, vec![0.1, -0.4, 0.3, 0.2, 0.0, 1.0]).unwrap();
        let chain = InducedChain::new(&mdp, &theta).unwrap();
        let y = ObsSeq::new(vec![0, 1, 1], &obs).unwrap();
        let ft = forward_messages(&chain, &obs, mdp.initial(), &y).unwrap();
        let (p, g) = last_state_posterior(&ft, &SecretSpec::new(3, &[]).unwrap()).unwrap();
        assert_eq!(p, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
        let (p, g) = last_state_posterior(&ft, &SecretSpec::new(3, &[0, 1, 2]).unwrap()).unwrap();
        assert!((p - 1.0).abs() < 1e-14);
        assert!(g.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn uninformative_emissions_give_prior_entropy() {
        let mdp = three_state();
        let obs = uninformative(3);
        let theta = PolicyParams::from_vec(3, 2, vec![0.5, -0.2, 0.1, 0.9, -1.0, 0.3]).unwrap();
        let chain = InducedChain::new(&mdp, &theta).unwrap();
        let secret = SecretSpec::new(3, &[2]).unwrap();
        let est = exact_entropy(&chain, &obs, mdp.initial(), &Objective::LastState(secret), 3).unwrap();
        // marginal P(S_3 = 2)
        let mut d = mdp.initial().to_vec();
        for _ in 0..3 {
            d = (0..3).map(|j| (0..3).map(|i| d[i] * chain.kernel(i, j)).sum()).collect();
        }
        assert!((est.value - binary_entropy(d[2])).abs() < 1e-12);

        let init = exact_entropy(&chain, &obs, mdp.initial(), &Objective::InitialState, 3).unwrap();
        assert!((init.value - crate::math::entropy_bits(mdp.initial())).abs() < 1e-12);
        assert!(init.grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn uninformative_initial_posterior_is_prior() {
        let mdp = three_state();
        let obs = uninformative(3);
        let chain = InducedChain::new(&mdp, &PolicyParams::zeros(3, 2)).unwrap();
        let y = ObsSeq::new(vec![1, 0, 0, 1], &obs).unwrap();
        let ft = forward_messages(&chain, &obs, mdp.initial(), &y).unwrap();
        let bt = backward_messages(&chain, &obs, &y).unwrap();
        let (post, _) =
            initial_state_posterior(&bt, &obs, mdp.initial(), &y, ft.seq_prob(), &ft.seq_prob_grad()).unwrap();
        for (p, m) in post.iter().zip(mdp.initial()) {
            assert!((p - m).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_evidence_is_an_error() {
        let mdp = Mdp::new(1, 1, vec![1.0], vec![1.0], vec![0.0], 0.9).unwrap();
        let obs = ObservationModel::with_numbered_symbols(1, 2, vec![1.0, 0.0]).unwrap();
        let chain = InducedChain::new(&mdp, &PolicyParams::zeros(1, 1)).unwrap();
        let y = ObsSeq::new(vec![1, 0], &obs).unwrap();
        let ft = forward_messages(&chain, &obs, &[1.0], &y).unwrap();
        let secret = SecretSpec::new(1, &[0]).unwrap();
        assert_eq!(last_state_posterior(&ft, &secret), Err(Error::DegenerateEvidence));
        let bt = backward_messages(&chain, &obs, &y).unwrap();
        assert_eq!(
            initial_state_posterior(&bt, &obs, &[1.0], &y, 0.0, &[0.0]),
            Err(Error::DegenerateEvidence)
        );
    }

    #[test]
    fn enumeration_cap() {
        let mdp = three_state();
        let obs = uninformative(3);
        let chain = InducedChain::new(&mdp, &PolicyParams::zeros(3, 2)).unwrap();
        let err = exact_entropy_with(
            &chain,
            &obs,
            mdp.initial(),
            &Objective::InitialState,
            9,
            1000,
            GradientEngine::ForwardMode,
        )
        .unwrap_err();
        assert_eq!(err, Error::EnumerationCap { count: 1024, cap: 1000 });
    }

    #[test]
    fn single_atom_sampled_is_exact() {
        // deterministic cycle 0 -> 1 -> 0 with a shared symbol: one possible y
        let t = vec![0.0, 1.0, 1.0, 0.0];
        let mdp = Mdp::new(2, 1, t, vec![1.0, 0.0], vec![0.0; 2], 0.9).unwrap();
        let obs = ObservationModel::with_numbered_symbols(2, 1, vec![1.0, 1.0]).unwrap();
        let theta = PolicyParams::zeros(2, 1);
        let obj = Objective::LastState(SecretSpec::new(2, &[1]).unwrap());
        let est = sampled_entropy(&mdp, &obs, &theta, &obj, 3, 50, 11).unwrap();
        assert_eq!(est.std_err, 0.0);
        let chain = InducedChain::new(&mdp, &theta).unwrap();
        let exact = exact_entropy(&chain, &obs, mdp.initial(), &obj, 3).unwrap();
        assert!((est.value - exact.value).abs() < 1e-15);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn posterior_gradients_sum_to_zero() {
        let mdp = three_state();
        let obs = ObservationModel::with_numbered_symbols(3, 2, vec![0.9, 0.1, 0.5, 0.5, 0.2, 0.8]).unwrap();
        let theta = PolicyParams::from_vec(3, 2, vec![0.1, -0.4, 0.3, 0.2, 0.0, 1.0]).unwrap();
        let chain = InducedChain::new(&mdp, &theta).unwrap();
        let y = ObsSeq::new(vec![1, 0, 1, 1], &obs).unwrap();
        for engine in [GradientEngine::ForwardMode, GradientEngine::Adjoint] {
            let ev = sequence_evidence(&chain, &obs, mdp.initial(), &Objective::InitialState, &y, engine).unwrap();
            assert!((ev.posterior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for c in 0..chain.dim() {
                let s: f64 = ev.posterior_grad.iter().map(|g| g[c]).sum();
                assert!(s.abs() < 1e-12);
            }
        }
    }
}
