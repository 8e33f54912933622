//! Hook-capable GPT-2 inference engine.
//!
//! Every block exposes its post-block residual stream (after the MLP add)
//! to two hooks: capture, which records the vector into an
//! [`ActivationTrace`], and injection, which adds
//! `strength · ‖r‖₂ · direction` to the residual `r` before it flows on.
//! When both are active at a layer the trace holds the injected value.

mod ops;
pub mod safetensors;
mod weights;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;
use safetensors::TensorStore;
pub use weights::{Gpt2Config, Gpt2Weights};

/// Selected hook layers (0-based block indices).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelection {
    #[default]
    All,
    Only(BTreeSet<usize>),
}

impl LayerSelection {
    pub fn contains(&self, layer: usize) -> bool {
        match self {
            LayerSelection::All => true,
            LayerSelection::Only(set) => set.contains(&layer),
        }
    }
}

/// An additive residual-stream intervention.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionSpec {
    direction: Vec<f32>,
    strength: f32,
    layers: LayerSelection,
}

impl InterventionSpec {
    pub fn new(direction: Vec<f32>, strength: f32, layers: LayerSelection) -> Result<Self> {
        let norm = direction
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidIntervention(format!(
                "direction must be unit norm, got {norm}"
            )));
        }
        if !strength.is_finite() || strength < 0.0 {
            return Err(Error::InvalidIntervention(format!(
                "strength must be finite and non-negative, got {strength}"
            )));
        }
        Ok(Self {
            direction,
            strength,
            layers,
        })
    }

    /// Builds a spec from a (possibly `f64`) direction, renormalising after
    /// the cast and flipping it when `sign` is negative.
    pub fn steering(
        direction: &[f64],
        sign: f64,
        strength: f32,
        layers: LayerSelection,
    ) -> Result<Self> {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidIntervention("zero direction".into()));
        }
        let s = sign.signum() / norm;
        let dir = direction.iter().map(|v| (v * s) as f32).collect();
        Self::new(dir, strength, layers)
    }

    pub fn direction(&self) -> &[f32] {
        &self.direction
    }

    pub fn strength(&self) -> f32 {
        self.strength
    }

    pub fn layers(&self) -> &LayerSelection {
        &self.layers
    }

    /// The delta injected into residual `r`.
    pub fn delta_for(&self, residual: &[f32]) -> Vec<f32> {
        let scale = self.strength * ops::l2_norm(residual);
        self.direction.iter().map(|d| scale * d).collect()
    }

    fn apply(&self, residual: &mut [f32]) {
        let scale = self.strength * ops::l2_norm(residual);
        for (r, d) in residual.iter_mut().zip(&self.direction) {
            *r += scale * d;
        }
    }
}

/// Captured post-block residual states keyed by (layer, position).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivationTrace {
    model_dim: usize,
    layers: BTreeMap<usize, Vec<f32>>,
}

impl ActivationTrace {
    pub fn new(model_dim: usize, capture: &BTreeSet<usize>) -> Self {
        Self {
            model_dim,
            layers: capture.iter().map(|&l| (l, Vec::new())).collect(),
        }
    }

    pub fn capture_spec(&self) -> BTreeSet<usize> {
        self.layers.keys().copied().collect()
    }

    pub fn get(&self, layer: usize, position: usize) -> Option<&[f32]> {
        let d = self.model_dim;
        self.layers
            .get(&layer)
            .and_then(|v| v.get(position * d..(position + 1) * d))
    }

    /// Number of positions recorded at `layer`.
    pub fn positions(&self, layer: usize) -> Option<usize> {
        self.layers
            .get(&layer)
            .map(|v| v.len() / self.model_dim.max(1))
    }

    pub fn model_dim(&self) -> usize {
        self.model_dim
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    fn record(&mut self, layer: usize, row: &[f32]) {
        if let Some(buf) = self.layers.get_mut(&layer) {
            buf.extend_from_slice(row);
        }
    }
}

/// Logits for a run of positions, `[rows × vocab]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    vocab: usize,
    data: Vec<f32>,
}

impl Logits {
    pub fn rows(&self) -> usize {
        self.data.len() / self.vocab
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.vocab..(i + 1) * self.vocab]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Logits,
    pub trace: ActivationTrace,
}

/// Result of greedy decoding.
#[derive(Debug, Clone)]
pub struct Generation {
    pub prompt_len: usize,
    /// Generated ids, end-of-text excluded.
    pub tokens: Vec<u32>,
    pub stopped_at_eot: bool,
    /// Covers prompt and generated positions for the captured layers.
    pub trace: ActivationTrace,
}

impl Generation {
    /// Sequence positions of the generated tokens.
    pub fn generated_positions(&self) -> std::ops::Range<usize> {
        self.prompt_len..self.prompt_len + self.tokens.len()
    }
}

/// A loaded model. Immutable after construction; share it across threads
/// behind an `Arc`.
#[derive(Debug, Clone)]
pub struct ModelHandle {
    id: String,
    config: Gpt2Config,
    weights: Gpt2Weights,
    tokenizer: Tokenizer,
}

#[derive(Clone, Copy, PartialEq)]
enum LogitsMode {
    All,
    Last,
    Skip,
}

impl ModelHandle {
    /// Loads a safetensors checkpoint plus a tokenizer directory holding
    /// `vocab.json` and `merges.txt`. A sibling `config.json` (Hugging Face
    /// layout) is consulted for head count and epsilon when present.
    pub fn load(weights_path: &Path, tokenizer_dir: &Path) -> Result<Self> {
        let tokenizer = Tokenizer::from_dir(tokenizer_dir)?;
        Self::load_with_tokenizer(weights_path, tokenizer)
    }

    /// Opens a checkpoint given either a `.safetensors` file or a directory
    /// holding `model.safetensors`. The tokenizer is read from the same
    /// directory when `vocab.json` and `merges.txt` are there, otherwise
    /// the bundled GPT-2 tokenizer is used.
    pub fn open(path: &Path) -> Result<Self> {
        let weights = if path.is_dir() {
            path.join("model.safetensors")
        } else {
            path.to_path_buf()
        };
        let dir = weights.parent().unwrap_or(Path::new("."));
        let tokenizer = if dir.join("vocab.json").exists() && dir.join("merges.txt").exists() {
            Tokenizer::from_dir(dir)?
        } else {
            Tokenizer::gpt2()
        };
        Self::load_with_tokenizer(&weights, tokenizer)
    }

    pub fn load_with_tokenizer(weights_path: &Path, tokenizer: Tokenizer) -> Result<Self> {
        let bytes = std::fs::read(weights_path).map_err(|e| Error::io(weights_path, e))?;
        let store = TensorStore::parse(&bytes)?;
        drop(bytes);
        let hf = match weights_path.parent().map(|p| p.join("config.json")) {
            Some(path) if path.exists() => {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                Some(
                    serde_json::from_str::<weights::HfConfig>(&text)
                        .map_err(|e| Error::CorruptContainer(format!("{}: {e}", path.display())))?,
                )
            }
            _ => None,
        };
        let config = weights::infer_config(&store, hf.as_ref())?;
        let stem = weights_path
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into());
        let id = format!("{stem}@{}", &store.header_digest()[..12]);
        let weights = Gpt2Weights::from_store(store, &config)?;
        Self::from_parts(id, config, weights, tokenizer)
    }

    pub fn from_parts(
        id: impl Into<String>,
        config: Gpt2Config,
        weights: Gpt2Weights,
        tokenizer: Tokenizer,
    ) -> Result<Self> {
        config.validate()?;
        if tokenizer.vocab_size() > config.vocab_size {
            return Err(Error::Tokenizer(format!(
                "tokenizer has {} entries but the model vocabulary is {}",
                tokenizer.vocab_size(),
                config.vocab_size
            )));
        }
        Ok(Self {
            id: id.into(),
            config,
            weights,
            tokenizer,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &Gpt2Config {
        &self.config
    }

    pub fn layer_count(&self) -> usize {
        self.config.layer_count
    }

    pub fn model_dim(&self) -> usize {
        self.config.model_dim
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        self.tokenizer.encode(text)
    }

    pub fn detokenize(&self, ids: &[u32]) -> Result<String> {
        self.tokenizer.decode(ids)
    }

    /// The middle block: `layer_count / 2` in 1-based block numbering
    /// (rounded up for odd counts), returned 0-based.
    pub fn middle_layer(&self) -> usize {
        middle_layer(self.config.layer_count)
    }

    pub fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.config.layer_count {
            return Err(Error::LayerOutOfRange {
                layer,
                layer_count: self.config.layer_count,
            });
        }
        Ok(())
    }

    fn check_hooks(
        &self,
        capture: &BTreeSet<usize>,
        intervention: Option<&InterventionSpec>,
    ) -> Result<()> {
        for &l in capture {
            self.check_layer(l)?;
        }
        if let Some(spec) = intervention {
            if spec.direction.len() != self.config.model_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.config.model_dim,
                    found: spec.direction.len(),
                });
            }
            if let LayerSelection::Only(set) = &spec.layers {
                for &l in set {
                    self.check_layer(l)?;
                }
            }
        }
        Ok(())
    }

    pub fn session(&self) -> Session<'_> {
        Session::new(self)
    }

    /// Single forward pass over `tokens`, returning logits for every
    /// position.
    pub fn forward(
        &self,
        tokens: &[u32],
        capture: &BTreeSet<usize>,
        intervention: Option<&InterventionSpec>,
    ) -> Result<ForwardOutput> {
        self.check_hooks(capture, intervention)?;
        let mut trace = ActivationTrace::new(self.config.model_dim, capture);
        let mut session = self.session();
        let logits = session.feed(tokens, intervention, &mut trace, LogitsMode::All)?;
        Ok(ForwardOutput { logits, trace })
    }

    /// Greedy decoding with a KV cache.
    pub fn generate(
        &self,
        prompt: &[u32],
        max_new_tokens: usize,
        capture: &BTreeSet<usize>,
        intervention: Option<&InterventionSpec>,
    ) -> Result<Generation> {
        self.generate_streaming(prompt, max_new_tokens, capture, intervention, |_| {})
    }

    /// As [`generate`](Self::generate), calling `on_token` with each new id
    /// as soon as it is chosen.
    pub fn generate_streaming(
        &self,
        prompt: &[u32],
        max_new_tokens: usize,
        capture: &BTreeSet<usize>,
        intervention: Option<&InterventionSpec>,
        mut on_token: impl FnMut(u32),
    ) -> Result<Generation> {
        self.check_generation(prompt, max_new_tokens, capture, intervention)?;
        let eot = self.tokenizer.end_of_text();
        let mut trace = ActivationTrace::new(self.config.model_dim, capture);
        let mut session = self.session();
        let mut tokens = Vec::new();
        let mut stopped_at_eot = false;
        if max_new_tokens == 0 {
            session.feed(prompt, intervention, &mut trace, LogitsMode::Skip)?;
            return Ok(Generation {
                prompt_len: prompt.len(),
                tokens,
                stopped_at_eot,
                trace,
            });
        }
        let mut logits = session.feed(prompt, intervention, &mut trace, LogitsMode::Last)?;
        loop {
            let next = ops::argmax(logits.row(0)) as u32;
            if Some(next) == eot {
                stopped_at_eot = true;
                break;
            }
            tokens.push(next);
            on_token(next);
            if tokens.len() == max_new_tokens {
                if !capture.is_empty() {
                    session.feed(&[next], intervention, &mut trace, LogitsMode::Skip)?;
                }
                break;
            }
            logits = session.feed(&[next], intervention, &mut trace, LogitsMode::Last)?;
        }
        Ok(Generation {
            prompt_len: prompt.len(),
            tokens,
            stopped_at_eot,
            trace,
        })
    }

    /// Greedy decoding that recomputes the whole sequence at every step.
    /// Reference path for checking that the KV cache is behaviourally
    /// invisible; it is quadratic and not meant for real work.
    pub fn generate_uncached(
        &self,
        prompt: &[u32],
        max_new_tokens: usize,
        intervention: Option<&InterventionSpec>,
    ) -> Result<Vec<u32>> {
        self.check_generation(prompt, max_new_tokens, &BTreeSet::new(), intervention)?;
        let eot = self.tokenizer.end_of_text();
        let mut seq = prompt.to_vec();
        let mut out = Vec::new();
        while out.len() < max_new_tokens {
            let mut trace = ActivationTrace::default();
            let logits = self
                .session()
                .feed(&seq, intervention, &mut trace, LogitsMode::Last)?;
            let next = ops::argmax(logits.row(0)) as u32;
            if Some(next) == eot {
                break;
            }
            out.push(next);
            seq.push(next);
        }
        Ok(out)
    }

    fn check_generation(
        &self,
        prompt: &[u32],
        max_new_tokens: usize,
        capture: &BTreeSet<usize>,
        intervention: Option<&InterventionSpec>,
    ) -> Result<()> {
        if prompt.is_empty() {
            return Err(Error::EmptyPrompt);
        }
        let len = prompt.len() + max_new_tokens;
        if len > self.config.max_context {
            return Err(Error::ContextOverflow {
                len,
                max: self.config.max_context,
            });
        }
        self.check_hooks(capture, intervention)
    }

    /// exp of the mean negative log-likelihood (natural log) of tokens
    /// 2..n of `text`.
    pub fn perplexity(&self, text: &str) -> Result<f64> {
        let ids = self.tokenize(text);
        self.perplexity_of_ids(&ids)
    }

    pub fn perplexity_of_ids(&self, ids: &[u32]) -> Result<f64> {
        if ids.len() < 2 {
            return Err(Error::TextTooShort(format!(
                "perplexity needs at least 2 tokens, got {}",
                ids.len()
            )));
        }
        let out = self.forward(ids, &BTreeSet::new(), None)?;
        Ok(perplexity_from_logits(&out.logits, ids))
    }
}

/// Perplexity of `ids` given per-position logits (row `i` predicts `ids[i+1]`).
pub fn perplexity_from_logits(logits: &Logits, ids: &[u32]) -> f64 {
    continuation_perplexity(logits, ids, 1)
}

/// Perplexity of `ids[first..]` conditioned on everything before it.
/// `first` must be at least 1 and below `ids.len()`.
pub fn continuation_perplexity(logits: &Logits, ids: &[u32], first: usize) -> f64 {
    debug_assert!(first >= 1 && first < ids.len());
    let nll: f64 = (first..ids.len())
        .map(|i| -ops::log_prob(logits.row(i - 1), ids[i] as usize))
        .sum();
    (nll / (ids.len() - first) as f64).exp()
}

pub fn middle_layer(layer_count: usize) -> usize {
    layer_count.div_ceil(2) - 1
}

/// 0-based layer at a fractional depth, where depth 1.0 is the last block.
pub fn layer_at_depth(layer_count: usize, depth: f64) -> usize {
    let one_based = (depth * layer_count as f64).round() as usize;
    one_based.clamp(1, layer_count) - 1
}

/// Private decoding state for one sequence: KV cache plus position.
pub struct Session<'m> {
    model: &'m ModelHandle,
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
    len: usize,
}

impl<'m> Session<'m> {
    fn new(model: &'m ModelHandle) -> Self {
        let n = model.config.layer_count;
        Self {
            model,
            keys: vec![Vec::new(); n],
            values: vec![Vec::new(); n],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn feed(
        &mut self,
        tokens: &[u32],
        intervention: Option<&InterventionSpec>,
        trace: &mut ActivationTrace,
        mode: LogitsMode,
    ) -> Result<Logits> {
        let cfg = &self.model.config;
        let w = &self.model.weights;
        let d = cfg.model_dim;
        let n = tokens.len();
        let total = self.len + n;
        if total > cfg.max_context {
            return Err(Error::ContextOverflow {
                len: total,
                max: cfg.max_context,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::UnknownToken(bad));
        }
        let active = intervention.filter(|spec| spec.strength != 0.0);

        let mut x = vec![0f32; n * d];
        for (i, &tok) in tokens.iter().enumerate() {
            let te = &w.token_embedding[tok as usize * d..(tok as usize + 1) * d];
            let pos = self.len + i;
            let pe = &w.position_embedding[pos * d..(pos + 1) * d];
            for ((dst, a), b) in x[i * d..(i + 1) * d].iter_mut().zip(te).zip(pe) {
                *dst = a + b;
            }
        }

        let mut normed = vec![0f32; n * d];
        let mut qkv = vec![0f32; n * 3 * d];
        let mut attn = vec![0f32; n * d];
        let mut proj = vec![0f32; n * d];
        let mut hidden = vec![0f32; n * 4 * d];
        for (layer, block) in w.blocks.iter().enumerate() {
            ops::layer_norm(
                &x,
                &block.ln1_gamma,
                &block.ln1_beta,
                cfg.layer_norm_eps,
                &mut normed,
            );
            ops::matmul(&normed, &block.attn_w, &mut qkv, n, d, 3 * d);
            ops::add_bias(&mut qkv, &block.attn_b);
            for row in qkv.chunks_exact(3 * d) {
                self.keys[layer].extend_from_slice(&row[d..2 * d]);
                self.values[layer].extend_from_slice(&row[2 * d..]);
            }
            self.attend(layer, &qkv, n, &mut attn);
            ops::matmul(&attn, &block.attn_proj_w, &mut proj, n, d, d);
            ops::add_bias(&mut proj, &block.attn_proj_b);
            for (a, b) in x.iter_mut().zip(&proj) {
                *a += b;
            }

            ops::layer_norm(
                &x,
                &block.ln2_gamma,
                &block.ln2_beta,
                cfg.layer_norm_eps,
                &mut normed,
            );
            ops::matmul(&normed, &block.fc_w, &mut hidden, n, d, 4 * d);
            ops::add_bias(&mut hidden, &block.fc_b);
            ops::gelu(&mut hidden);
            ops::matmul(&hidden, &block.mlp_proj_w, &mut proj, n, 4 * d, d);
            ops::add_bias(&mut proj, &block.mlp_proj_b);
            for (a, b) in x.iter_mut().zip(&proj) {
                *a += b;
            }

            // hook_resid_post
            if let Some(spec) = active {
                if spec.layers.contains(layer) {
                    for row in x.chunks_exact_mut(d) {
                        spec.apply(row);
                    }
                }
            }
            for row in x.chunks_exact(d) {
                trace.record(layer, row);
            }
        }
        self.len = total;

        let rows: &[f32] = match mode {
            LogitsMode::All => &x,
            LogitsMode::Last => &x[(n - 1) * d..],
            LogitsMode::Skip => &[],
        };
        let m = rows.len() / d;
        let mut final_normed = vec![0f32; rows.len()];
        ops::layer_norm(
            rows,
            &w.final_gamma,
            &w.final_beta,
            cfg.layer_norm_eps,
            &mut final_normed,
        );
        let mut logits = vec![0f32; m * cfg.vocab_size];
        ops::matmul_transposed(
            &final_normed,
            &w.token_embedding,
            &mut logits,
            m,
            d,
            cfg.vocab_size,
        );
        Ok(Logits {
            vocab: cfg.vocab_size,
            data: logits,
        })
    }

    /// Causal multi-head attention of the `n` newest queries over the cache.
    fn attend(&self, layer: usize, qkv: &[f32], n: usize, out: &mut [f32]) {
        let cfg = &self.model.config;
        let d = cfg.model_dim;
        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f32).sqrt();
        let keys = &self.keys[layer];
        let values = &self.values[layer];
        let mut scores = vec![0f32; self.len + n];
        for i in 0..n {
            let pos = self.len + i;
            let q_row = &qkv[i * 3 * d..i * 3 * d + d];
            let out_row = &mut out[i * d..(i + 1) * d];
            out_row.fill(0.0);
            for h in 0..cfg.head_count {
                let q = &q_row[h * hd..(h + 1) * hd];
                let mut max = f32::NEG_INFINITY;
                for (s, score) in scores[..=pos].iter_mut().enumerate() {
                    let k = &keys[s * d + h * hd..s * d + (h + 1) * hd];
                    let dot: f32 = q.iter().zip(k).map(|(a, b)| a * b).sum();
                    *score = dot * scale;
                    max = max.max(*score);
                }
                let mut denom = 0f32;
                for score in &mut scores[..=pos] {
                    *score = (*score - max).exp();
                    denom += *score;
                }
                let o = &mut out_row[h * hd..(h + 1) * hd];
                for (s, &p) in scores[..=pos].iter().enumerate() {
                    let v = &values[s * d + h * hd..s * d + (h + 1) * hd];
                    let p = p / denom;
                    for (dst, &vv) in o.iter_mut().zip(v) {
                        *dst += p * vv;
                    }
                }
            }
        }
    }
}
