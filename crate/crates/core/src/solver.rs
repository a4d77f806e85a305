//! Primal-dual gradient method on the Lagrangian
//! `L(theta, lambda) = H(theta) + lambda (V(theta) - delta)`.
//!
//! Each iteration takes one ascent step on `theta` along `grad H + lambda grad V`
//! and one projected descent step on `lambda`, both from the same evaluation.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hmm::ObservationModel;
use crate::math::{axpy, norm2};
use crate::mdp::{evaluate_value, reinforce_value, Horizon, InducedChain, Mdp, PolicyParams};
use crate::objective::{evaluate_entropy, EntropyEstimate, EntropyMethod, Objective, DEFAULT_ENUMERATION_CAP};
use crate::rng;

/// Feasibility is reported against `delta` with this slack.
pub const FEASIBILITY_SLACK: f64 = 1e-6;

/// Maximum number of step halvings the ascent guard will try per iteration.
const MAX_HALVINGS: usize = 60;

/// What the solver optimizes: the model, the secret, and the start
/// distribution used for the return constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct OpacityProblem {
    pub mdp: Mdp,
    pub obs: ObservationModel,
    pub objective: Objective,
    /// Start distribution for `V(mu, theta)`; defaults to the MDP's `mu0`.
    pub value_start: Vec<f64>,
}

impl OpacityProblem {
    pub fn new(mdp: Mdp, obs: ObservationModel, objective: Objective) -> Result<Self> {
        if obs.n_states() != mdp.n_states() {
            return Err(Error::InvalidModel("observation model and MDP disagree on state count".into()));
        }
        if let Objective::LastState(secret) = &objective {
            if secret.n_states() != mdp.n_states() {
                return Err(Error::InvalidModel("secret set and MDP disagree on state count".into()));
            }
        }
        let value_start = mdp.initial().to_vec();
        Ok(Self { mdp, obs, objective, value_start })
    }

    pub fn with_value_start(mut self, start: Vec<f64>) -> Result<Self> {
        if start.len() != self.mdp.n_states() {
            return Err(Error::InvalidConfig("value start length != state count".into()));
        }
        self.value_start = start;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueMode {
    /// Dynamic programming over the horizon.
    Exact,
    /// REINFORCE over `samples` sampled runs.
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub eta: f64,
    pub kappa: f64,
    /// Return threshold; `f64::NEG_INFINITY` disables the constraint.
    pub delta: f64,
    pub horizon: usize,
    pub samples: usize,
    /// Samples for the final evaluation in sampled mode.
    pub eval_samples: usize,
    pub iterations: usize,
    pub seed: u64,
    pub entropy_mode: EntropyMode,
    pub value_mode: ValueMode,
    pub lambda0: f64,
    /// Starting parameters; `None` means all zeros.
    pub theta0: Option<Vec<f64>>,
    pub grad_tol: f64,
    pub slack_tol: f64,
    pub window: usize,
    pub enumeration_cap: u64,
    /// Evaluate the return over an infinite horizon instead of `horizon`.
    pub infinite_value: bool,
    /// Exact mode only: halve `eta` whenever a step would lower `H` by more
    /// than `1e-9`. Meant for unconstrained monotonicity checks.
    pub ascent_guard: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            kappa: 0.05,
            delta: 0.3,
            horizon: 10,
            samples: 2000,
            eval_samples: 20_000,
            iterations: 2000,
            seed: 0,
            entropy_mode: EntropyMode::Exact,
            value_mode: ValueMode::Exact,
            lambda0: 1.0,
            theta0: None,
            grad_tol: 1e-4,
            slack_tol: 1e-3,
            window: 50,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            infinite_value: false,
            ascent_guard: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be finite and > 0");
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad("kappa must be finite and > 0");
        }
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return bad("lambda0 must be finite and >= 0");
        }
        if self.delta.is_nan() || self.delta == f64::INFINITY {
            return bad("delta must be a number below +inf");
        }
        if self.samples == 0 || self.eval_samples == 0 {
            return bad("samples must be >= 1");
        }
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if !(self.grad_tol >= 0.0 && self.slack_tol >= 0.0) {
            return bad("tolerances must be >= 0");
        }
        Ok(())
    }

    fn value_horizon(&self) -> Horizon {
        if self.infinite_value {
            Horizon::Infinite
        } else {
            Horizon::Finite(self.horizon)
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub entropy: f64,
    pub entropy_std_err: f64,
    pub value: f64,
    /// Multiplier used for this iteration's primal step.
    pub lambda: f64,
    pub grad_norm: f64,
    /// Filled by the caller's [`Monitor`]; zero when no clock is attached.
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Converged,
    IterationLimit,
    /// A non-finite quantity appeared; `last_valid` is the last iteration
    /// whose record is finite, if any.
    Aborted { iteration: usize, last_valid: Option<usize>, reason: String },
}

/// Entropy and return of the final policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalEvaluation {
    pub entropy: f64,
    pub entropy_std_err: f64,
    pub value: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub config: SolverConfig,
    pub records: Vec<IterationRecord>,
    pub final_theta: PolicyParams,
    pub final_lambda: f64,
    pub status: RunStatus,
    /// Missing only when the run aborted.
    pub final_eval: Option<FinalEvaluation>,
}

impl TrainLog {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    pub fn feasible(&self) -> bool {
        self.final_eval.as_ref().is_some_and(|e| e.feasible)
    }
}

/// Hooks for wall-clock timing and streaming output.
pub trait Monitor {
    fn elapsed_ms(&self) -> f64 {
        0.0
    }
    fn on_record(&mut self, _record: &IterationRecord) {}
}

/// No clock, no output.
#[derive(Debug, Default, Clone, Copy)]
pub struct Silent;

impl Monitor for Silent {}

/// `H`, `V` and the Lagrangian gradient at one `(theta, lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianEval {
    pub entropy: EntropyEstimate,
    pub value: f64,
    pub value_grad: Vec<f64>,
    pub grad: Vec<f64>,
}

fn entropy_method(config: &SolverConfig, label: &str, iteration: u64, samples: usize) -> EntropyMethod {
    match config.entropy_mode {
        EntropyMode::Exact => EntropyMethod::Exact { cap: config.enumeration_cap },
        EntropyMode::Sampled => EntropyMethod::Sampled { samples, seed: rng::derive_seed(config.seed, label, iteration) },
    }
}

fn value_and_grad(
    problem: &OpacityProblem,
    theta: &PolicyParams,
    config: &SolverConfig,
    iteration: u64,
    samples: usize,
) -> Result<(f64, Vec<f64>)> {
    let horizon = config.value_horizon();
    match config.value_mode {
        ValueMode::Exact => {
            let r = evaluate_value(&problem.mdp, theta, horizon, &problem.value_start)?;
            Ok((r.value, r.grad))
        }
        ValueMode::Sampled => {
            let Horizon::Finite(t) = horizon else {
                return Err(Error::InvalidConfig("sampled value needs a finite horizon".into()));
            };
            let mut g = rng::stream(config.seed, "value-samples", iteration);
            let r = reinforce_value(&problem.mdp, theta, t, &problem.value_start, samples, &mut g)?;
            Ok((r.value, r.grad))
        }
    }
}

/// Evaluates `grad H + lambda grad V` with the estimators `config` selects.
/// `iteration` picks the sampling streams, so the same call is reproducible.
pub fn lagrangian_gradient(
    problem: &OpacityProblem,
    theta: &PolicyParams,
    lambda: f64,
    config: &SolverConfig,
    iteration: usize,
) -> Result<LagrangianEval> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig("lambda must be >= 0".into()));
    }
    let k = iteration as u64;
    let chain = InducedChain::new(&problem.mdp, theta)?;
    let method = entropy_method(config, "entropy-samples", k, config.samples);
    let entropy = evaluate_entropy(&problem.mdp, &problem.obs, &chain, &problem.objective, config.horizon, method)?;
    let (value, value_grad) = value_and_grad(problem, theta, config, k, config.samples)?;
    let mut grad = entropy.grad.clone();
    if lambda != 0.0 {
        axpy(lambda, &value_grad, &mut grad);
    }
    Ok(LagrangianEval { entropy, value, value_grad, grad })
}

fn initial_theta(problem: &OpacityProblem, config: &SolverConfig) -> Result<PolicyParams> {
    let (n, k) = (problem.mdp.n_states(), problem.mdp.n_actions());
    match &config.theta0 {
        Some(t) => PolicyParams::from_vec(n, k, t.clone()),
        None => Ok(PolicyParams::zeros(n, k)),
    }
}

fn window_satisfied(records: &[IterationRecord], config: &SolverConfig) -> bool {
    if records.len() < config.window {
        return false;
    }
    records[records.len() - config.window..].iter().all(|r| {
        let slack = (r.value - config.delta).min(0.0).abs();
        r.grad_norm < config.grad_tol && slack < config.slack_tol
    })
}

fn exact_entropy_at(problem: &OpacityProblem, theta: &PolicyParams, config: &SolverConfig) -> Result<f64> {
    let chain = InducedChain::new(&problem.mdp, theta)?;
    let method = EntropyMethod::Exact { cap: config.enumeration_cap };
    Ok(evaluate_entropy(&problem.mdp, &problem.obs, &chain, &problem.objective, config.horizon, method)?.value)
}

/// Runs the primal-dual loop with no clock and no streaming output.
pub fn solve(problem: &OpacityProblem, config: &SolverConfig) -> Result<TrainLog> {
    solve_with(problem, config, &mut Silent)
}

/// Runs the primal-dual loop, reporting each record to `monitor` as it is
/// produced.
///
/// Model and configuration errors are returned as `Err`. A non-finite
/// gradient or estimate ends the run with [`RunStatus::Aborted`] instead, so
/// the records gathered so far survive.
pub fn solve_with<M: Monitor + ?Sized>(problem: &OpacityProblem, config: &SolverConfig, monitor: &mut M) -> Result<TrainLog> {
    config.validate()?;
    if config.ascent_guard && config.entropy_mode != EntropyMode::Exact {
        return Err(Error::InvalidConfig("ascent guard needs exact entropy".into()));
    }
    let mut theta = initial_theta(problem, config)?;
    let mut lambda = config.lambda0;
    let mut eta = config.eta;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut status = RunStatus::IterationLimit;

    for k in 0..config.iterations {
        let eval = lagrangian_gradient(problem, &theta, lambda, config, k);
        let eval = match eval {
            Ok(e) => e,
            Err(Error::NonFinite { what, .. }) => {
                status = aborted(k, &records, what);
                break;
            }
            Err(e) => return Err(e),
        };
        let grad_norm = norm2(&eval.grad);
        let record = IterationRecord {
            iteration: k,
            entropy: eval.entropy.value,
            entropy_std_err: eval.entropy.std_err,
            value: eval.value,
            lambda,
            grad_norm,
            elapsed_ms: monitor.elapsed_ms(),
        };
        let finite = grad_norm.is_finite() && record.entropy.is_finite() && record.value.is_finite();
        monitor.on_record(&record);
        records.push(record);
        if !finite {
            status = aborted(k, &records[..records.len() - 1], "Lagrangian gradient");
            break;
        }
        if window_satisfied(&records, config) {
            status = RunStatus::Converged;
            break;
        }

        let mut next = theta.clone();
        axpy(eta, &eval.grad, next.as_mut_slice());
        if config.ascent_guard {
            let mut halvings = 0;
            while exact_entropy_at(problem, &next, config)? < eval.entropy.value - 1e-9 && halvings < MAX_HALVINGS {
                eta *= 0.5;
                halvings += 1;
                next = theta.clone();
                axpy(eta, &eval.grad, next.as_mut_slice());
            }
        }
        if next.as_slice().iter().any(|x| !x.is_finite()) {
            status = aborted(k, &records, "policy parameters");
            break;
        }
        theta = next;
        lambda = (lambda - config.kappa * (eval.value - config.delta)).max(0.0);
    }

    let final_eval = match status {
        RunStatus::Aborted { .. } => None,
        _ => Some(final_evaluation(problem, &theta, config)?),
    };
    Ok(TrainLog { config: config.clone(), records, final_theta: theta, final_lambda: lambda, status, final_eval })
}

fn aborted(iteration: usize, valid: &[IterationRecord], what: &str) -> RunStatus {
    RunStatus::Aborted {
        iteration,
        last_valid: valid.last().map(|r| r.iteration),
        reason: alloc::format!("non-finite {what} at iteration {iteration}"),
    }
}

/// Scores the final policy with fresh sampling streams (and the larger
/// `eval_samples` budget in sampled mode).
pub fn final_evaluation(problem: &OpacityProblem, theta: &PolicyParams, config: &SolverConfig) -> Result<FinalEvaluation> {
    let chain = InducedChain::new(&problem.mdp, theta)?;
    let method = entropy_method(config, "final-entropy", 0, config.eval_samples);
    let est = evaluate_entropy(&problem.mdp, &problem.obs, &chain, &problem.objective, config.horizon, method)?;
    let (value, _) = match config.value_mode {
        ValueMode::Exact => value_and_grad(problem, theta, config, 0, config.eval_samples)?,
        ValueMode::Sampled => {
            let cfg = SolverConfig { seed: rng::derive_seed(config.seed, "final-value", 0), ..config.clone() };
            value_and_grad(problem, theta, &cfg, 0, config.eval_samples)?
        }
    };
    Ok(FinalEvaluation {
        entropy: est.value,
        entropy_std_err: est.std_err,
        value,
        feasible: value >= config.delta - FEASIBILITY_SLACK,
    })
}
