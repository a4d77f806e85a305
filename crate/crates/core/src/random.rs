//! Random model instances for property tests and the self-check commands.

use alloc::vec::Vec;

use crate::error::Result;
use crate::hmm::ObservationModel;
use crate::math::ln;
use crate::mdp::{Mdp, PolicyParams};

/// A flat Dirichlet(1) draw.
fn simplex<R: rand::Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| -ln(1.0 - rng.gen::<f64>())).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    // push rounding error into the largest entry so rows sum to one
    let drift = 1.0 - v.iter().sum::<f64>();
    if let Some(m) = (0..len).max_by(|&a, &b| v[a].total_cmp(&v[b])) {
        v[m] += drift;
    }
    v
}

/// Random dense MDP and observation model with uniform rewards in `[0, 1)`.
pub fn random_instance<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    n_symbols: usize,
    discount: f64,
) -> Result<(Mdp, ObservationModel)> {
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(simplex(rng, n_states));
    }
    let initial = simplex(rng, n_states);
    let reward = (0..n_states * n_actions).map(|_| rng.gen::<f64>()).collect();
    let mdp = Mdp::new(n_states, n_actions, transition, initial, reward, discount)?;
    let mut emission = Vec::with_capacity(n_states * n_symbols);
    for _ in 0..n_states {
        emission.extend(simplex(rng, n_symbols));
    }
    let obs = ObservationModel::with_numbered_symbols(n_states, n_symbols, emission)?;
    Ok((mdp, obs))
}

/// Parameters uniform in `[-scale, scale]`.
pub fn random_theta<R: rand::Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize, scale: f64) -> PolicyParams {
    let theta = (0..n_states * n_actions).map(|_| scale * (2.0 * rng.gen::<f64>() - 1.0)).collect();
    PolicyParams::from_vec(n_states, n_actions, theta).expect("finite by construction")
}
