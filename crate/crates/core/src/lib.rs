//! Opacity-enforcing planning for finite Markov decision processes.
//!
//! A planning agent controls an MDP under a tabular softmax policy while an
//! observer watches a noisy, state-dependent observation stream. This crate
//! computes policies that keep a secret (membership of the last state in a
//! secret set, or the identity of the initial state) maximally uncertain to
//! the observer, measured as conditional Shannon entropy, subject to a lower
//! bound on the agent's total return.
//!
//! The pieces:
//!
//! - [`mdp`]: the model, softmax policy, the policy-induced chain and its
//!   kernel gradient, and exact finite/infinite-horizon value evaluation.
//! - [`hmm`]: the observer's hidden Markov model view, run sampling, and
//!   forward/backward messages carrying gradients w.r.t. policy parameters.
//! - [`objective`]: posteriors, exact (enumerated) and sampled conditional
//!   entropies with gradients.
//! - [`solver`]: the primal-dual gradient loop on the Lagrangian.
//! - [`grid`] and [`baseline`]: the stochastic grid world with noisy sensors
//!   and the entropy-regularized MDP baseline.
//!
//! The crate is `no_std` (it needs `alloc`). The `parallel` feature pulls in
//! `std` and evaluates sampled observation sequences on a rayon pool; results
//! are reduced in a fixed order so seeded runs stay bit-identical.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod baseline;
pub mod error;
pub mod grid;
pub mod hmm;
mod linalg;
pub mod math;
pub mod mdp;
pub mod objective;
pub mod random;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use hmm::{BackwardTable, ForwardTable, ObsSeq, ObservationModel};
pub use mdp::{Horizon, InducedChain, Mdp, PolicyParams, ValueReport};
pub use objective::{EntropyEstimate, EstimateMode, Objective, SecretSpec};
pub use solver::{IterationRecord, OpacityProblem, RunStatus, SolverConfig, TrainLog};
