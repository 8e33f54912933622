//! Behaviour of the capture and injection hooks.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use emosteer::{InterventionSpec, LayerSelection};
use proptest::prelude::*;

fn unit_direction(seed: u64, d: usize) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn capture_does_not_change_logits(
        tokens in prop::collection::vec(0u32..511, 1..16),
        capture in prop::collection::btree_set(0usize..4, 0..4),
    ) {
        let model = tiny();
        let plain = model.forward(&tokens, &BTreeSet::new(), None).unwrap();
        let captured = model.forward(&tokens, &capture, None).unwrap();
        prop_assert_eq!(plain.logits, captured.logits);
        for &l in &capture {
            prop_assert_eq!(captured.trace.positions(l), Some(tokens.len()));
        }
    }

    #[test]
    fn single_layer_injection_is_exact(
        tokens in prop::collection::vec(0u32..511, 1..12),
        layer in 0usize..4,
        strength in 0.0f32..0.5,
        seed in any::<u64>(),
    ) {
        let model = tiny();
        let capture = BTreeSet::from([layer]);
        let dir = unit_direction(seed, model.model_dim());
        let spec = InterventionSpec::steering(&dir, 1.0, strength, LayerSelection::Only(capture.clone())).unwrap();
        let base = model.forward(&tokens, &capture, None).unwrap();
        let steered = model.forward(&tokens, &capture, Some(&spec)).unwrap();
        for pos in 0..tokens.len() {
            let r = base.trace.get(layer, pos).unwrap();
            let s = steered.trace.get(layer, pos).unwrap();
            let delta = spec.delta_for(r);
            let norm: f32 = r.iter().map(|v| v * v).sum::<f32>().sqrt();
            for i in 0..r.len() {
                prop_assert!((s[i] - r[i] - delta[i]).abs() <= 1e-5 * norm.max(1.0));
            }
            // the injected offset is strength·‖r‖ along the direction
            let along: f64 = (0..r.len()).map(|i| (s[i] - r[i]) as f64 * dir[i]).sum();
            prop_assert!((along - (strength * norm) as f64).abs() <= 1e-4 * (norm as f64).max(1.0));
        }
    }

    #[test]
    fn opposite_directions_give_opposite_deltas(
        tokens in prop::collection::vec(0u32..511, 1..12),
        layer in 0usize..4,
        strength in 0.001f32..0.5,
        seed in any::<u64>(),
    ) {
        let model = tiny();
        let capture = BTreeSet::from([layer]);
        let dir = unit_direction(seed, model.model_dim());
        let only = LayerSelection::Only(capture.clone());
        let plus = InterventionSpec::steering(&dir, 1.0, strength, only.clone()).unwrap();
        let minus = InterventionSpec::steering(&dir, -1.0, strength, only).unwrap();
        let base = model.forward(&tokens, &capture, None).unwrap();
        let p = model.forward(&tokens, &capture, Some(&plus)).unwrap();
        let m = model.forward(&tokens, &capture, Some(&minus)).unwrap();
        for pos in 0..tokens.len() {
            let r = base.trace.get(layer, pos).unwrap();
            let dp = plus.delta_for(r);
            let dm = minus.delta_for(r);
            prop_assert!(dp.iter().zip(&dm).all(|(a, b)| *a == -*b));
            let (pr, mr) = (p.trace.get(layer, pos).unwrap(), m.trace.get(layer, pos).unwrap());
            for i in 0..r.len() {
                prop_assert!(((pr[i] - r[i]) + (mr[i] - r[i])).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn zero_strength_generation_is_identical() {
    let model = tiny();
    let dir = unit_direction(1, model.model_dim());
    let spec = InterventionSpec::steering(&dir, 1.0, 0.0, LayerSelection::All).unwrap();
    let prompt = [3, 17, 200, 45];
    let capture = BTreeSet::from([1, 2]);
    let a = model.generate(&prompt, 16, &capture, None).unwrap();
    let b = model.generate(&prompt, 16, &capture, Some(&spec)).unwrap();
    assert_eq!(a.tokens, b.tokens);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn concurrent_generations_match_sequential() {
    let model = Arc::new(common::tiny_model());
    let dir = unit_direction(9, model.model_dim());
    let jobs: Vec<(Vec<u32>, f32)> = (0..6)
        .map(|i| (vec![i * 40 + 1, i * 7 + 2, 300 - i], 0.05 * i as f32))
        .collect();
    let run = |model: &emosteer::ModelHandle, (prompt, strength): &(Vec<u32>, f32)| {
        let spec = InterventionSpec::steering(&dir, 1.0, *strength, LayerSelection::All).unwrap();
        model
            .generate(prompt, 24, &BTreeSet::from([2]), Some(&spec))
            .map(|g| (g.tokens, g.trace))
            .unwrap()
    };
    let sequential: Vec<_> = jobs.iter().map(|j| run(&model, j)).collect();
    let parallel: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|j| {
                let model = Arc::clone(&model);
                let run = &run;
                s.spawn(move || run(&model, j))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(sequential, parallel);
}

#[test]
fn generation_trace_includes_every_generated_position() {
    let model = tiny();
    let prompt = [10, 20, 30];
    let g = model
        .generate(&prompt, 9, &BTreeSet::from([3]), None)
        .unwrap();
    assert_eq!(g.generated_positions(), 3..3 + g.tokens.len());
    assert_eq!(g.trace.positions(3), Some(3 + g.tokens.len()));
    let all = model
        .forward(
            &[&prompt[..], &g.tokens[..]].concat(),
            &BTreeSet::from([3]),
            None,
        )
        .unwrap();
    for pos in g.generated_positions() {
        let a = g.trace.get(3, pos).unwrap();
        let b = all.trace.get(3, pos).unwrap();
        assert!(common::max_abs_diff(a, b) < 1e-4);
    }
}

fn tiny() -> &'static emosteer::ModelHandle {
    static M: std::sync::OnceLock<emosteer::ModelHandle> = std::sync::OnceLock::new();
    M.get_or_init(common::tiny_model)
}

#[test]
fn repeated_forward_is_bitwise_stable() {
    let model = tiny();
    let tokens: Vec<u32> = (0..40).map(|i| (i * 37 % 511) as u32).collect();
    let first = model.forward(&tokens, &BTreeSet::from([1]), None).unwrap();
    for n in 1..tokens.len() {
        let _noise = vec![0u8; n * 13];
        let again = model.forward(&tokens, &BTreeSet::from([1]), None).unwrap();
        assert_eq!(first.logits, again.logits, "iteration {n}");
        assert_eq!(first.trace, again.trace);
    }
    let threaded = std::thread::scope(|s| {
        s.spawn(|| model.forward(&tokens, &BTreeSet::from([1]), None).unwrap())
            .join()
            .unwrap()
    });
    assert_eq!(first.logits, threaded.logits);
}
