mod common;

use common::{central_difference, instance, max_abs_diff, max_rel_error, naive_kernel, naive_policy};
use opacity_core::mdp::{evaluate_value, policy_table, reinforce_value, Horizon, InducedChain, Mdp, PolicyParams};
use opacity_core::rng;
use proptest::prelude::*;

/// Expected discounted return by enumerating every (state, action) path.
fn enumerated_value(mdp: &Mdp, theta: &PolicyParams, horizon: usize) -> f64 {
    let pi = naive_policy(theta);
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    fn go(mdp: &Mdp, pi: &[f64], s: usize, t: usize, horizon: usize, weight: f64, disc: f64) -> f64 {
        let (n, k) = (mdp.n_states(), mdp.n_actions());
        let mut total = 0.0;
        for a in 0..k {
            let w = weight * pi[s * k + a];
            total += w * disc * mdp.reward(s, a);
            if t < horizon {
                for j in 0..n {
                    let p = mdp.transition(s, a, j);
                    if p > 0.0 {
                        total += go(mdp, pi, j, t + 1, horizon, w * p, disc * mdp.discount());
                    }
                }
            }
        }
        total
    }
    let _ = k;
    (0..n).map(|s| go(mdp, &pi, s, 0, horizon, mdp.initial()[s], 1.0)).sum()
}

#[test]
fn dynamic_programming_matches_path_enumeration() {
    for seed in 0..5 {
        let (mdp, _, theta) = instance(seed, 3, 2, 1);
        for t in 0..4 {
            let v = evaluate_value(&mdp, &theta, Horizon::Finite(t), mdp.initial()).unwrap().value;
            assert!((v - enumerated_value(&mdp, &theta, t)).abs() < 1e-12);
        }
    }
}

#[test]
fn value_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let (mdp, _, theta) = instance(seed, 4, 3, 1);
        for horizon in [Horizon::Finite(6), Horizon::Infinite] {
            let g = evaluate_value(&mdp, &theta, horizon, mdp.initial()).unwrap().grad;
            let fd = central_difference(&theta, 1e-5, |t| evaluate_value(&mdp, t, horizon, mdp.initial()).unwrap().value);
            assert!(max_rel_error(&g, &fd) <= 1e-5, "seed {seed} {horizon:?}: {}", max_rel_error(&g, &fd));
        }
    }
}

#[test]
fn value_gradient_from_a_custom_start() {
    let (mdp, _, theta) = instance(77, 3, 2, 1);
    let start = [0.0, 0.0, 1.0];
    let g = evaluate_value(&mdp, &theta, Horizon::Finite(5), &start).unwrap().grad;
    let fd = central_difference(&theta, 1e-5, |t| evaluate_value(&mdp, t, Horizon::Finite(5), &start).unwrap().value);
    assert!(max_rel_error(&g, &fd) <= 1e-5);
}

#[test]
fn reinforce_agrees_with_exact_gradient() {
    let (mdp, _, theta) = instance(4, 3, 2, 1);
    let exact = evaluate_value(&mdp, &theta, Horizon::Finite(3), mdp.initial()).unwrap();
    let mut g = rng::stream(5, "reinforce", 0);
    let est = reinforce_value(&mdp, &theta, 3, mdp.initial(), 200_000, &mut g).unwrap();
    assert!((est.value - exact.value).abs() < 4.0 * est.std_err);
    assert!(max_abs_diff(&est.grad, &exact.grad) < 0.02);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_rows_are_stochastic(seed in 0u64..100_000, n in 1usize..=5, k in 1usize..=4) {
        let (mdp, _, theta) = instance(seed, n, k, 1);
        let chain = InducedChain::new(&mdp, &theta).unwrap();
        for i in 0..n {
            prop_assert!((chain.kernel_row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(chain.kernel_row(i).iter().all(|&p| p >= 0.0));
        }
        prop_assert!(max_abs_diff(chain.kernel_matrix(), &naive_kernel(&mdp, &theta)) < 1e-14);
    }

    #[test]
    fn kernel_gradient_matches_finite_differences(seed in 0u64..100_000, n in 1usize..=4, k in 1usize..=3) {
        let (mdp, _, theta) = instance(seed, n, k, 1);
        let chain = InducedChain::new(&mdp, &theta).unwrap();
        for i in 0..n {
            for j in 0..n {
                let fd = central_difference(&theta, 1e-5, |t| naive_kernel(&mdp, t)[i * n + j]);
                prop_assert!(max_abs_diff(&chain.kernel_grad(i, j), &fd) < 1e-9);
            }
        }
    }

    #[test]
    fn softmax_is_shift_invariant(seed in 0u64..100_000, shift in -500.0f64..500.0) {
        let (_, _, theta) = instance(seed, 3, 4, 1);
        let shifted = PolicyParams::from_vec(3, 4, theta.as_slice().iter().map(|x| x + shift).collect()).unwrap();
        // adding `shift` rounds each parameter by up to half an ulp of |shift|
        let rounding = 4.0 * f64::EPSILON * (1.0 + shift.abs());
        prop_assert!(max_abs_diff(&policy_table(&theta), &policy_table(&shifted)) < rounding);
    }

    #[test]
    fn policy_rows_sum_to_one(raw in proptest::collection::vec(-700.0f64..700.0, 6)) {
        let theta = PolicyParams::from_vec(2, 3, raw).unwrap();
        let pi = policy_table(&theta);
        for s in 0..2 {
            prop_assert!((pi[s * 3..s * 3 + 3].iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn long_finite_horizon_approaches_infinite(seed in 0u64..100_000) {
        let (mdp, _, theta) = instance(seed, 3, 2, 1);
        let inf = evaluate_value(&mdp, &theta, Horizon::Infinite, mdp.initial()).unwrap();
        let fin = evaluate_value(&mdp, &theta, Horizon::Finite(400), mdp.initial()).unwrap();
        prop_assert!((inf.value - fin.value).abs() < 1e-9);
        prop_assert!(max_abs_diff(&inf.grad, &fin.grad) < 1e-9);
    }
}
