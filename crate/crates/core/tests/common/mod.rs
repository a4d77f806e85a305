//! Test-side oracles, built from the model definition alone.
#![allow(dead_code)]

use opacity_core::hmm::ObservationModel;
use opacity_core::mdp::{Mdp, PolicyParams};
use opacity_core::random::{random_instance, random_theta};
use opacity_core::rng;

/// Softmax computed the textbook way (no max shift).
pub fn naive_policy(theta: &PolicyParams) -> Vec<f64> {
    let k = theta.n_actions();
    let mut out = Vec::with_capacity(theta.dim());
    for s in 0..theta.n_states() {
        let e: Vec<f64> = theta.row(s).iter().map(|x| x.exp()).collect();
        let z: f64 = e.iter().sum();
        out.extend(e.iter().map(|x| x / z));
    }
    assert_eq!(out.len(), theta.n_states() * k);
    out
}

pub fn naive_kernel(mdp: &Mdp, theta: &PolicyParams) -> Vec<f64> {
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    let pi = naive_policy(theta);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (0..k).map(|a| mdp.transition(i, a, j) * pi[i * k + a]).sum();
        }
    }
    p
}

/// Joint weights `P(S_0 = s0, S_T = sT, Y = y)` for every observation
/// sequence, by brute-force enumeration of state paths.
pub struct PathOracle {
    pub n_states: usize,
    pub n_symbols: usize,
    pub horizon: usize,
    /// `joint[y][s0 * N + sT]`, with `y` indexed lexicographically.
    pub joint: Vec<Vec<f64>>,
}

fn for_each_tuple(base: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut digits = vec![0usize; len];
    loop {
        f(&digits);
        let mut pos = len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < base {
                break;
            }
            digits[pos] = 0;
        }
    }
}

pub fn sequence_index(y: &[usize], n_symbols: usize) -> usize {
    y.iter().fold(0, |acc, &o| acc * n_symbols + o)
}

impl PathOracle {
    pub fn new(mdp: &Mdp, obs: &ObservationModel, theta: &PolicyParams, horizon: usize) -> Self {
        Self::with_initial(mdp, obs, theta, horizon, mdp.initial())
    }

    pub fn with_initial(mdp: &Mdp, obs: &ObservationModel, theta: &PolicyParams, horizon: usize, mu0: &[f64]) -> Self {
        let n = mdp.n_states();
        let m = obs.n_symbols();
        let kernel = naive_kernel(mdp, theta);
        let steps = horizon + 1;
        let n_seq = m.pow(steps as u32);
        let mut joint = vec![vec![0.0; n * n]; n_seq];
        for_each_tuple(n, steps, |path| {
            let mut w = mu0[path[0]];
            for t in 1..steps {
                w *= kernel[path[t - 1] * n + path[t]];
            }
            if w == 0.0 {
                return;
            }
            let cell = path[0] * n + path[steps - 1];
            for_each_tuple(m, steps, |y| {
                let mut e = w;
                for t in 0..steps {
                    e *= obs.emission(path[t], y[t]);
                }
                joint[sequence_index(y, m)][cell] += e;
            });
        });
        Self { n_states: n, n_symbols: m, horizon, joint }
    }

    pub fn seq_prob(&self, y: &[usize]) -> f64 {
        self.joint[sequence_index(y, self.n_symbols)].iter().sum()
    }

    pub fn total_prob(&self) -> f64 {
        self.joint.iter().flatten().sum()
    }

    /// `H(Z_T | Y)` in bits.
    pub fn last_state_entropy(&self, secret: &[usize]) -> f64 {
        let n = self.n_states;
        let mut h = 0.0;
        for cells in &self.joint {
            let py: f64 = cells.iter().sum();
            if py == 0.0 {
                continue;
            }
            let p1: f64 = (0..n * n).filter(|c| secret.contains(&(c % n))).map(|c| cells[c]).sum::<f64>() / py;
            h += py * binary(p1);
        }
        h
    }

    /// `H(S_0 | Y)` in bits.
    pub fn initial_state_entropy(&self) -> f64 {
        let n = self.n_states;
        let mut h = 0.0;
        for cells in &self.joint {
            let py: f64 = cells.iter().sum();
            if py == 0.0 {
                continue;
            }
            for s0 in 0..n {
                let p: f64 = cells[s0 * n..(s0 + 1) * n].iter().sum::<f64>() / py;
                if p > 0.0 {
                    h -= py * p * p.log2();
                }
            }
        }
        h
    }
}

pub fn binary(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Central differences of `f` over every coordinate of `theta`.
pub fn central_difference(theta: &PolicyParams, step: f64, mut f: impl FnMut(&PolicyParams) -> f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(theta.dim());
    for c in 0..theta.dim() {
        let mut plus = theta.clone();
        plus.as_mut_slice()[c] += step;
        let mut minus = theta.clone();
        minus.as_mut_slice()[c] -= step;
        grad.push((f(&plus) - f(&minus)) / (2.0 * step));
    }
    grad
}

/// Floor under the relative-error denominator; below it the comparison is
/// effectively absolute.
pub const REL_FLOOR: f64 = 1e-6;

/// `max_c |a_c - b_c| / max(|a_c|, |b_c|, REL_FLOOR)`.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A seeded random model with a random (non-uniform) policy.
pub fn instance(seed: u64, n: usize, k: usize, m: usize) -> (Mdp, ObservationModel, PolicyParams) {
    let mut g = rng::stream(seed, "test-instance", 0);
    let (mdp, obs) = random_instance(&mut g, n, k, m, 0.9).unwrap();
    let theta = random_theta(&mut g, n, k, 1.0);
    (mdp, obs, theta)
}
