//! GPT-2 parameter layout and shape validation.
//!
//! Tensor names follow the published GPT-2 checkpoints (`wte.weight`,
//! `h.{i}.attn.c_attn.weight`, ...), optionally prefixed with
//! `transformer.`. Projection weights use the Conv1D `[in, out]` layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::safetensors::{Tensor, TensorStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gpt2Config {
    pub layer_count: usize,
    pub model_dim: usize,
    pub head_count: usize,
    pub vocab_size: usize,
    pub max_context: usize,
    pub layer_norm_eps: f32,
}

impl Gpt2Config {
    /// GPT-2 124M.
    pub fn gpt2_small() -> Self {
        Self {
            layer_count: 12,
            model_dim: 768,
            head_count: 12,
            vocab_size: 50257,
            max_context: 1024,
            layer_norm_eps: 1e-5,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.head_count
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::CorruptContainer(msg));
        if self.layer_count < 2 {
            return bad(format!("layer_count {} < 2", self.layer_count));
        }
        if self.model_dim == 0 || self.vocab_size == 0 || self.max_context == 0 {
            return bad("zero-sized dimension".into());
        }
        if self.head_count == 0 || !self.model_dim.is_multiple_of(self.head_count) {
            return bad(format!(
                "model_dim {} not divisible by head_count {}",
                self.model_dim, self.head_count
            ));
        }
        Ok(())
    }
}

/// Subset of a Hugging Face `config.json` that matters for inference.
#[derive(Debug, Deserialize)]
pub(crate) struct HfConfig {
    pub n_layer: Option<usize>,
    pub n_embd: Option<usize>,
    pub n_head: Option<usize>,
    pub n_positions: Option<usize>,
    pub vocab_size: Option<usize>,
    pub layer_norm_epsilon: Option<f32>,
}

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub ln1_gamma: Vec<f32>,
    pub ln1_beta: Vec<f32>,
    pub attn_w: Vec<f32>,
    pub attn_b: Vec<f32>,
    pub attn_proj_w: Vec<f32>,
    pub attn_proj_b: Vec<f32>,
    pub ln2_gamma: Vec<f32>,
    pub ln2_beta: Vec<f32>,
    pub fc_w: Vec<f32>,
    pub fc_b: Vec<f32>,
    pub mlp_proj_w: Vec<f32>,
    pub mlp_proj_b: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct Gpt2Weights {
    pub(crate) token_embedding: Vec<f32>,
    pub(crate) position_embedding: Vec<f32>,
    pub(crate) blocks: Vec<Block>,
    pub(crate) final_gamma: Vec<f32>,
    pub(crate) final_beta: Vec<f32>,
}

struct Picker<'a> {
    store: &'a mut TensorStore,
    prefix: &'static str,
}

impl Picker<'_> {
    fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f32>> {
        let full = format!("{}{name}", self.prefix);
        let tensor: Tensor = self
            .store
            .take(&full)
            .ok_or_else(|| Error::MissingTensor(full.clone()))?;
        if tensor.shape != shape {
            return Err(Error::ShapeMismatch {
                name: full,
                expected: shape.to_vec(),
                found: tensor.shape,
            });
        }
        Ok(tensor.data)
    }
}

fn detect_prefix(store: &TensorStore) -> &'static str {
    if store.get("wte.weight").is_some() {
        ""
    } else {
        "transformer."
    }
}

/// Infers the configuration from tensor shapes, using `hf` for what shapes
/// cannot tell (head count, epsilon). Without `hf` the GPT-2 convention of
/// 64-wide heads is assumed.
pub(crate) fn infer_config(store: &TensorStore, hf: Option<&HfConfig>) -> Result<Gpt2Config> {
    let prefix = detect_prefix(store);
    let wte = store
        .get(&format!("{prefix}wte.weight"))
        .ok_or_else(|| Error::MissingTensor(format!("{prefix}wte.weight")))?;
    let wpe = store
        .get(&format!("{prefix}wpe.weight"))
        .ok_or_else(|| Error::MissingTensor(format!("{prefix}wpe.weight")))?;
    if wte.shape.len() != 2 || wpe.shape.len() != 2 {
        return Err(Error::CorruptContainer("embeddings must be rank 2".into()));
    }
    let mut layer_count = 0;
    while store
        .get(&format!("{prefix}h.{layer_count}.ln_1.weight"))
        .is_some()
    {
        layer_count += 1;
    }
    let model_dim = wte.shape[1];
    let head_count = hf
        .and_then(|c| c.n_head)
        .unwrap_or_else(|| (model_dim / 64).max(1));
    let config = Gpt2Config {
        layer_count,
        model_dim,
        head_count,
        vocab_size: wte.shape[0],
        max_context: wpe.shape[0],
        layer_norm_eps: hf.and_then(|c| c.layer_norm_epsilon).unwrap_or(1e-5),
    };
    if let Some(hf) = hf {
        let checks = [
            ("n_layer", hf.n_layer, config.layer_count),
            ("n_embd", hf.n_embd, config.model_dim),
            ("n_positions", hf.n_positions, config.max_context),
            ("vocab_size", hf.vocab_size, config.vocab_size),
        ];
        for (key, declared, found) in checks {
            if let Some(declared) = declared {
                if declared != found {
                    return Err(Error::CorruptContainer(format!(
                        "config.json declares {key}={declared} but tensors imply {found}"
                    )));
                }
            }
        }
    }
    config.validate()?;
    Ok(config)
}

impl Gpt2Weights {
    pub(crate) fn from_store(mut store: TensorStore, config: &Gpt2Config) -> Result<Self> {
        let d = config.model_dim;
        let prefix = detect_prefix(&store);
        let mut p = Picker {
            store: &mut store,
            prefix,
        };
        let token_embedding = p.take("wte.weight", &[config.vocab_size, d])?;
        let position_embedding = p.take("wpe.weight", &[config.max_context, d])?;
        let mut blocks = Vec::with_capacity(config.layer_count);
        for i in 0..config.layer_count {
            let n = |s: &str| format!("h.{i}.{s}");
            blocks.push(Block {
                ln1_gamma: p.take(&n("ln_1.weight"), &[d])?,
                ln1_beta: p.take(&n("ln_1.bias"), &[d])?,
                attn_w: p.take(&n("attn.c_attn.weight"), &[d, 3 * d])?,
                attn_b: p.take(&n("attn.c_attn.bias"), &[3 * d])?,
                attn_proj_w: p.take(&n("attn.c_proj.weight"), &[d, d])?,
                attn_proj_b: p.take(&n("attn.c_proj.bias"), &[d])?,
                ln2_gamma: p.take(&n("ln_2.weight"), &[d])?,
                ln2_beta: p.take(&n("ln_2.bias"), &[d])?,
                fc_w: p.take(&n("mlp.c_fc.weight"), &[d, 4 * d])?,
                fc_b: p.take(&n("mlp.c_fc.bias"), &[4 * d])?,
                mlp_proj_w: p.take(&n("mlp.c_proj.weight"), &[4 * d, d])?,
                mlp_proj_b: p.take(&n("mlp.c_proj.bias"), &[d])?,
            });
        }
        Ok(Self {
            token_embedding,
            position_embedding,
            blocks,
            final_gamma: p.take("ln_f.weight", &[d])?,
            final_beta: p.take("ln_f.bias", &[d])?,
        })
    }

    /// Randomly initialised weights, for tests and demos. `scale` is the
    /// standard deviation of every non-norm parameter.
    pub fn random(config: &Gpt2Config, seed: u64, scale: f32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.model_dim;
        let mut normal = |len: usize| -> Vec<f32> {
            (0..len)
                .map(|_| {
                    // Irwin-Hall approximation, plenty for test weights.
                    let s: f32 = (0..12).map(|_| rng.random::<f32>()).sum::<f32>() - 6.0;
                    s * scale
                })
                .collect()
        };
        let blocks = (0..config.layer_count)
            .map(|_| Block {
                ln1_gamma: vec![1.0; d],
                ln1_beta: vec![0.0; d],
                attn_w: normal(d * 3 * d),
                attn_b: normal(3 * d),
                attn_proj_w: normal(d * d),
                attn_proj_b: normal(d),
                ln2_gamma: vec![1.0; d],
                ln2_beta: vec![0.0; d],
                fc_w: normal(d * 4 * d),
                fc_b: normal(4 * d),
                mlp_proj_w: normal(4 * d * d),
                mlp_proj_b: normal(d),
            })
            .collect();
        Self {
            token_embedding: normal(config.vocab_size * d),
            position_embedding: normal(config.max_context * d),
            blocks,
            final_gamma: vec![1.0; d],
            final_beta: vec![0.0; d],
        }
    }
}
