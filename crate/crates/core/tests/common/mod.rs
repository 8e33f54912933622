#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use emosteer::model::safetensors::{Tensor, TensorStore};
use emosteer::{ModelHandle, Tokenizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn tiny_model() -> ModelHandle {
    let dir = fixtures().join("tiny_gpt2");
    ModelHandle::load(&dir.join("model.safetensors"), &dir).expect("tiny fixture loads")
}

#[derive(Deserialize)]
pub struct PromptGolden {
    pub tokens: Vec<u32>,
    pub logits: Vec<f32>,
    pub resid_post: Vec<Vec<f32>>,
    pub perplexity: f64,
    pub greedy: Vec<u32>,
}

#[derive(Deserialize)]
pub struct SteeringGolden {
    pub direction: Vec<f32>,
    pub strength: f32,
    pub logits: Vec<f32>,
    pub resid_post: Vec<Vec<f32>>,
    pub greedy: Vec<u32>,
    pub greedy_negative: Vec<u32>,
}

#[derive(Deserialize)]
pub struct TinyGolden {
    pub prompts: Vec<PromptGolden>,
    pub steering: SteeringGolden,
}

pub fn tiny_golden() -> TinyGolden {
    let text = std::fs::read_to_string(fixtures().join("tiny_golden.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

fn normal(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<f32> {
    (0..n)
        .map(|_| (0..12).map(|_| rng.random::<f32>()).sum::<f32>() - 6.0)
        .map(|v| v * scale)
        .collect()
}

/// A model with zeroed blocks whose final norm emits `wte[eot]` at every
/// position, so greedy decoding always picks end-of-text first.
pub fn eot_model() -> ModelHandle {
    let dir = fixtures().join("tiny_gpt2");
    let tokenizer = Tokenizer::from_dir(&dir).unwrap();
    let eot = tokenizer.end_of_text().unwrap() as usize;
    let (v, d, ctx, layers) = (512, 16, 64, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut wte = normal(&mut rng, v * d, 0.3);
    for x in &mut wte[eot * d..(eot + 1) * d] {
        *x *= 4.0;
    }
    let mut t: HashMap<String, Tensor> = HashMap::new();
    let mut put = |name: String, shape: Vec<usize>, data: Vec<f32>| {
        t.insert(name, Tensor::new(shape, data));
    };
    put(
        "ln_f.bias".into(),
        vec![d],
        wte[eot * d..(eot + 1) * d].to_vec(),
    );
    put("ln_f.weight".into(), vec![d], vec![0.0; d]);
    put("wte.weight".into(), vec![v, d], wte);
    put("wpe.weight".into(), vec![ctx, d], vec![0.0; ctx * d]);
    for i in 0..layers {
        let p = |s: &str| format!("h.{i}.{s}");
        put(p("ln_1.weight"), vec![d], vec![1.0; d]);
        put(p("ln_1.bias"), vec![d], vec![0.0; d]);
        put(p("ln_2.weight"), vec![d], vec![1.0; d]);
        put(p("ln_2.bias"), vec![d], vec![0.0; d]);
        put(
            p("attn.c_attn.weight"),
            vec![d, 3 * d],
            vec![0.0; 3 * d * d],
        );
        put(p("attn.c_attn.bias"), vec![3 * d], vec![0.0; 3 * d]);
        put(p("attn.c_proj.weight"), vec![d, d], vec![0.0; d * d]);
        put(p("attn.c_proj.bias"), vec![d], vec![0.0; d]);
        put(p("mlp.c_fc.weight"), vec![d, 4 * d], vec![0.0; 4 * d * d]);
        put(p("mlp.c_fc.bias"), vec![4 * d], vec![0.0; 4 * d]);
        put(p("mlp.c_proj.weight"), vec![4 * d, d], vec![0.0; 4 * d * d]);
        put(p("mlp.c_proj.bias"), vec![d], vec![0.0; d]);
    }
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("model.safetensors");
    std::fs::write(&path, TensorStore::from_tensors(t).to_bytes()).unwrap();
    ModelHandle::load_with_tokenizer(&path, tokenizer).unwrap()
}

/// `2·U_a` from pairwise comparisons, no ranks involved.
pub fn u2(a: &[f64], b: &[f64]) -> u64 {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| (x, y)))
        .map(|(x, y)| {
            if x > y {
                2
            } else if x == y {
                1
            } else {
                0
            }
        })
        .sum()
}

/// Two-sided p by visiting every assignment of the pooled values to
/// group `a`.
pub fn enumerate_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (n, k) = (pooled.len(), a.len());
    let observed = u2(a, b);
    let (mut total, mut lower, mut upper) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let (ga, gb): (Vec<f64>, Vec<f64>) = {
            let mut ga = Vec::new();
            let mut gb = Vec::new();
            for (i, &v) in pooled.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    ga.push(v)
                } else {
                    gb.push(v)
                }
            }
            (ga, gb)
        };
        let u = u2(&ga, &gb);
        total += 1;
        lower += (u <= observed) as u64;
        upper += (u >= observed) as u64;
    }
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}
