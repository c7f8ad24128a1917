mod common;

use apes::attnloss::{
    attention_gradients, attention_loss, bce_loss, central_difference, entity_attention_forward, hybrid_loss,
    random_instance, AttentionParams, GradcheckInstance, DEFAULT_FD_STEP,
};
use common::elementwise_attention;
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

#[test]
fn forward_matches_elementwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let inst = random_instance(&mut rng);
        let out = entity_attention_forward(inst.states.view(), &inst.params).unwrap();
        let p = &inst.params;
        let oracle = elementwise_attention(&rows(&inst.states), &rows(&p.u), &p.b.to_vec(), &p.v.to_vec());
        for (j, (e, a)) in oracle.iter().enumerate() {
            assert!((out.scores[j] - e).abs() < 1e-12);
            assert!((out.activations[j] - a).abs() < 1e-12);
            assert!(0.0 < out.activations[j] && out.activations[j] < 1.0);
        }
        let loss = bce_loss(out.activations.view(), inst.targets.view()).unwrap();
        assert!(loss >= 0.0);
        assert!((loss - attention_loss(inst.states.view(), p, inst.targets.view()).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn forward_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let inst = random_instance(&mut rng);
        let mut order: Vec<usize> = (0..inst.states.nrows()).collect();
        order.shuffle(&mut rng);
        let permuted = inst.states.select(Axis(0), &order);
        let base = entity_attention_forward(inst.states.view(), &inst.params).unwrap();
        let moved = entity_attention_forward(permuted.view(), &inst.params).unwrap();
        for (k, &src) in order.iter().enumerate() {
            assert!((moved.scores[k] - base.scores[src]).abs() < 1e-12);
        }
    }
}

#[test]
fn default_seed_passes_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..50 {
        let err = random_instance(&mut rng).check(DEFAULT_FD_STEP).unwrap();
        assert!(err < 1e-5, "{err:e}");
    }
}

/// Every gradient scalar in the order U, b, v, H.
fn flat_gradient(inst: &GradcheckInstance) -> Vec<f64> {
    let g = attention_gradients(inst.states.view(), &inst.params, inst.targets.view()).unwrap();
    g.u.iter().chain(&g.b).chain(&g.v).chain(&g.states).copied().collect()
}

fn flat_point(inst: &GradcheckInstance) -> Vec<f64> {
    let p = &inst.params;
    p.u.iter().chain(&p.b).chain(&p.v).chain(&inst.states).copied().collect()
}

fn loss_at(inst: &GradcheckInstance, x: &[f64]) -> f64 {
    let (hidden, dim, rows) = (inst.params.hidden(), inst.params.input_dim(), inst.states.nrows());
    let (u, rest) = x.split_at(hidden * dim);
    let (b, rest) = rest.split_at(hidden);
    let (v, h) = rest.split_at(hidden);
    let params = AttentionParams {
        u: Array2::from_shape_vec((hidden, dim), u.to_vec()).unwrap(),
        b: Array1::from(b.to_vec()),
        v: Array1::from(v.to_vec()),
    };
    let states = Array2::from_shape_vec((rows, dim), h.to_vec()).unwrap();
    attention_loss(states.view(), &params, inst.targets.view()).unwrap()
}

// Pure relative error is at the mercy of loss roundoff for near-zero
// components; an absolute slack of 1e-10 covers that and nothing more.
#[test]
fn gradients_agree_across_seeds_with_roundoff_slack() {
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let inst = random_instance(&mut rng);
            let analytic = flat_gradient(&inst);
            let numeric = central_difference(|x| loss_at(&inst, x), &flat_point(&inst), DEFAULT_FD_STEP);
            for (a, n) in analytic.iter().zip(&numeric) {
                assert!((a - n).abs() <= 1e-5 * a.abs().max(n.abs()) + 1e-10, "seed {seed}: {a:e} vs {n:e}");
            }
        }
    }
}

#[test]
fn coarse_step_is_visibly_worse() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inst = random_instance(&mut rng);
    assert!(inst.check(1e-1).unwrap() > inst.check(DEFAULT_FD_STEP).unwrap());
}

proptest! {
    #[test]
    fn hybrid_is_linear_in_weight(l_e in 0.0f64..10.0, nll in 0.0f64..10.0, d1 in 0.0f64..=1.0, d2 in 0.0f64..=1.0, t in 0.0f64..=1.0) {
        let mix = t * d1 + (1.0 - t) * d2;
        let lhs = hybrid_loss(l_e, nll, mix).unwrap();
        let rhs = t * hybrid_loss(l_e, nll, d1).unwrap() + (1.0 - t) * hybrid_loss(l_e, nll, d2).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9);
        prop_assert_eq!(hybrid_loss(l_e, nll, 1.0).unwrap(), l_e);
        prop_assert_eq!(hybrid_loss(l_e, nll, 0.0).unwrap(), nll);
    }

    #[test]
    fn activations_stay_in_open_interval(seed in any::<u64>(), scale in 0.1f64..5.0) {
        let mut inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        inst.params.v.mapv_inplace(|x| x * scale);
        let out = entity_attention_forward(inst.states.view(), &inst.params).unwrap();
        prop_assert!(out.activations.iter().all(|&a| a > 0.0 && a < 1.0));
        prop_assert!(attention_loss(inst.states.view(), &inst.params, inst.targets.view()).unwrap() >= 0.0);
    }
}
