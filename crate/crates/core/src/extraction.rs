//! Emotion-vector extraction.
//!
//! Two pipelines produce per-stimulus activations at one or more layers:
//!
//! * generation: the model writes a story from an emotion prompt and the
//!   residual state at the midpoint of the generated region is kept;
//! * comprehension: a pre-written passage is read in one forward pass and
//!   the state at its final token is kept.
//!
//! An emotion vector is the unit-normalised difference between the mean
//! emotion activation and the mean activation over method-matched neutral
//! stimuli.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::{Error, Result};
use crate::model::ModelHandle;
use crate::stimuli::StimulusCorpus;

/// Below this norm a mean-difference vector is treated as noise.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Generation,
    Comprehension,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Generation => "generation",
            Method::Comprehension => "comprehension",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generation" => Ok(Method::Generation),
            "comprehension" => Ok(Method::Comprehension),
            other => Err(Error::InvalidArgument(format!(
                "unknown method `{other}` (expected generation or comprehension)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Stories generated per emotion (generation method only).
    pub n_stories: usize,
    /// Token budget per story (generation method only).
    pub max_tokens: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            n_stories: 10,
            max_tokens: 64,
        }
    }
}

impl ExtractionConfig {
    fn validate(&self) -> Result<()> {
        if self.n_stories == 0 || self.max_tokens == 0 {
            return Err(Error::InvalidArgument(
                "n_stories and max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionVector {
    pub emotion: String,
    pub direction: Vec<f64>,
    pub layer: usize,
    pub method: Method,
    pub sample_count: usize,
    /// Mean-subtracted vector before normalisation.
    pub raw_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionVectorSet {
    pub model_id: String,
    pub method: Method,
    pub layer: usize,
    #[serde(default)]
    pub corpus_hash: String,
    pub neutral_mean: Vec<f64>,
    pub vectors: BTreeMap<String, EmotionVector>,
    /// Stories skipped during extraction, one line each.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl EmotionVectorSet {
    pub fn get(&self, emotion: &str) -> Result<&EmotionVector> {
        self.vectors
            .get(emotion)
            .ok_or_else(|| Error::UnknownEmotion(emotion.to_string()))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn model_dim(&self) -> usize {
        self.neutral_mean.len()
    }

    /// Directions in roster (name) order.
    pub fn directions(&self) -> Vec<Vec<f64>> {
        self.vectors.values().map(|v| v.direction.clone()).collect()
    }

    pub fn mean_pairwise_cosine(&self) -> Result<f64> {
        let m = analysis::pairwise_cosine_matrix(&self.directions())?;
        Ok(analysis::mean_pairwise(&m))
    }

    /// Checks the shared-layer, shared-method and shared-dimension
    /// invariants, which a hand-edited file can break.
    pub fn validate(&self) -> Result<()> {
        let d = self.neutral_mean.len();
        for (name, v) in &self.vectors {
            if v.layer != self.layer || v.method != self.method || &v.emotion != name {
                return Err(Error::InvalidArgument(format!(
                    "vector `{name}` disagrees with the set header"
                )));
            }
            for len in [v.direction.len(), v.raw_mean.len()] {
                if len != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: len,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vector set serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Activations from one batch of stimuli, keyed by layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Activations {
    pub by_layer: BTreeMap<usize, Vec<Vec<f64>>>,
    pub skipped: Vec<String>,
}

impl Activations {
    fn new(layers: &BTreeSet<usize>) -> Self {
        Self {
            by_layer: layers.iter().map(|&l| (l, Vec::new())).collect(),
            skipped: Vec::new(),
        }
    }

    pub fn at(&self, layer: usize) -> &[Vec<f64>] {
        self.by_layer.get(&layer).map(Vec::as_slice).unwrap_or(&[])
    }

    fn count(&self) -> usize {
        self.by_layer.values().next().map_or(0, Vec::len)
    }
}

fn state(trace: &crate::model::ActivationTrace, layer: usize, pos: usize) -> Result<Vec<f64>> {
    trace
        .get(layer, pos)
        .map(|s| s.iter().map(|&v| v as f64).collect())
        .ok_or(Error::MissingLayer(layer))
}

fn check_layers(model: &ModelHandle, layers: &BTreeSet<usize>) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("no layers requested".into()));
    }
    layers.iter().try_for_each(|&l| model.check_layer(l))
}

/// Midpoint capture over generated stories, one vector per kept story.
fn generation_activations(
    model: &ModelHandle,
    label: &str,
    prompts: &[String],
    layers: &BTreeSet<usize>,
    max_tokens: usize,
) -> Result<Activations> {
    let mut out = Activations::new(layers);
    for (i, prompt) in prompts.iter().enumerate() {
        let ids = model.tokenize(prompt);
        let g = model.generate(&ids, max_tokens, layers, None)?;
        let generated = g.tokens.len();
        if generated < 2 {
            out.skipped.push(format!(
                "{label}: story {i} skipped, only {generated} generated token(s)"
            ));
            continue;
        }
        let pos = g.prompt_len + generated / 2;
        for &layer in layers {
            let v = state(&g.trace, layer, pos)?;
            out.by_layer.get_mut(&layer).expect("layer present").push(v);
        }
    }
    if out.count() == 0 {
        return Err(Error::ExtractionFailed {
            emotion: label.to_string(),
            reason: format!("all {} stories were skipped", prompts.len()),
        });
    }
    Ok(out)
}

/// Final-token capture over passages.
fn comprehension_activations(
    model: &ModelHandle,
    label: &str,
    passages: &[String],
    layers: &BTreeSet<usize>,
) -> Result<Activations> {
    let mut out = Activations::new(layers);
    for (i, passage) in passages.iter().enumerate() {
        let ids = model.tokenize(passage);
        if ids.is_empty() {
            return Err(Error::ExtractionFailed {
                emotion: label.to_string(),
                reason: format!("passage {i} is empty"),
            });
        }
        let fwd = model.forward(&ids, layers, None)?;
        for &layer in layers {
            let v = state(&fwd.trace, layer, ids.len() - 1)?;
            out.by_layer.get_mut(&layer).expect("layer present").push(v);
        }
    }
    if out.count() == 0 {
        return Err(Error::ExtractionFailed {
            emotion: label.to_string(),
            reason: "no passages".into(),
        });
    }
    Ok(out)
}

/// Generation-based activations for one emotion at one layer.
pub fn extract_generation(
    model: &ModelHandle,
    corpus: &StimulusCorpus,
    emotion: &str,
    layer: usize,
    n_stories: usize,
    max_tokens: usize,
) -> Result<Activations> {
    let layers = BTreeSet::from([layer]);
    check_layers(model, &layers)?;
    ExtractionConfig {
        n_stories,
        max_tokens,
    }
    .validate()?;
    let prompts = corpus.generation_prompts(emotion, n_stories)?;
    generation_activations(model, emotion, &prompts, &layers, max_tokens)
}

/// Comprehension-based activations for one emotion at one layer.
pub fn extract_comprehension(
    model: &ModelHandle,
    corpus: &StimulusCorpus,
    emotion: &str,
    layer: usize,
) -> Result<Vec<Vec<f64>>> {
    let layers = BTreeSet::from([layer]);
    check_layers(model, &layers)?;
    let passages = corpus.passages_for(emotion)?;
    let acts = comprehension_activations(model, emotion, passages, &layers)?;
    Ok(acts.by_layer.into_values().next().unwrap_or_default())
}

pub fn mean_vector(acts: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = acts
        .first()
        .ok_or_else(|| Error::InvalidArgument("no activations".into()))?;
    let d = first.len();
    let mut mean = vec![0.0; d];
    for a in acts {
        if a.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: a.len(),
            });
        }
        for (m, v) in mean.iter_mut().zip(a) {
            *m += v;
        }
    }
    let n = acts.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Normalised `mean(emotion) − mean(neutral)`; `layer` and `method` are
/// recorded on the result but not used.
pub fn compute_emotion_vector(
    emotion: &str,
    emotion_acts: &[Vec<f64>],
    neutral_acts: &[Vec<f64>],
    layer: usize,
    method: Method,
) -> Result<EmotionVector> {
    let neutral_mean = mean_vector(neutral_acts)?;
    vector_from_baseline(emotion, emotion_acts, &neutral_mean, layer, method)
}

fn vector_from_baseline(
    emotion: &str,
    emotion_acts: &[Vec<f64>],
    neutral_mean: &[f64],
    layer: usize,
    method: Method,
) -> Result<EmotionVector> {
    let mean = mean_vector(emotion_acts)?;
    if mean.len() != neutral_mean.len() {
        return Err(Error::DimensionMismatch {
            expected: neutral_mean.len(),
            found: mean.len(),
        });
    }
    let raw_mean: Vec<f64> = mean.iter().zip(neutral_mean).map(|(a, b)| a - b).collect();
    let norm = raw_mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm.is_nan() || norm < DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateVector(emotion.to_string()));
    }
    Ok(EmotionVector {
        emotion: emotion.to_string(),
        direction: raw_mean.iter().map(|v| v / norm).collect(),
        layer,
        method,
        sample_count: emotion_acts.len(),
        raw_mean,
    })
}

/// Raw activations for every roster emotion plus the matching neutral
/// baseline, captured at all `layers` in one pass per stimulus.
#[derive(Debug, Clone)]
pub struct CorpusActivations {
    pub method: Method,
    pub emotions: BTreeMap<String, Activations>,
    pub neutral: Activations,
}

impl CorpusActivations {
    pub fn collect(
        model: &ModelHandle,
        corpus: &StimulusCorpus,
        method: Method,
        layers: &BTreeSet<usize>,
        config: &ExtractionConfig,
    ) -> Result<Self> {
        check_layers(model, layers)?;
        config.validate()?;
        let names: Vec<&str> = corpus.emotion_names().collect();
        if names.is_empty() {
            return Err(Error::InvalidArgument("empty emotion roster".into()));
        }
        let job = |name: &str| -> Result<Activations> {
            match method {
                Method::Generation => {
                    let prompts = corpus.generation_prompts(name, config.n_stories)?;
                    generation_activations(model, name, &prompts, layers, config.max_tokens)
                }
                Method::Comprehension => {
                    comprehension_activations(model, name, corpus.passages_for(name)?, layers)
                }
            }
        };
        let neutral = match method {
            Method::Generation => {
                let prompts = corpus.neutral_generation_prompts(config.n_stories)?;
                generation_activations(model, "neutral", &prompts, layers, config.max_tokens)?
            }
            Method::Comprehension => {
                comprehension_activations(model, "neutral", &corpus.neutral_passages, layers)?
            }
        };

        #[cfg(feature = "parallel")]
        let results: Vec<Result<Activations>> = {
            use rayon::prelude::*;
            names.par_iter().map(|n| job(n)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Result<Activations>> = names.iter().map(|n| job(n)).collect();

        let mut emotions = BTreeMap::new();
        for (name, r) in names.iter().zip(results) {
            emotions.insert(name.to_string(), r?);
        }
        Ok(Self {
            method,
            emotions,
            neutral,
        })
    }

    /// Assembles the vector set for one captured layer.
    pub fn vector_set(
        &self,
        model_id: &str,
        corpus_hash: &str,
        layer: usize,
    ) -> Result<EmotionVectorSet> {
        if !self.neutral.by_layer.contains_key(&layer) {
            return Err(Error::MissingLayer(layer));
        }
        let neutral_mean = mean_vector(self.neutral.at(layer))?;
        let mut vectors = BTreeMap::new();
        let mut diagnostics = self.neutral.skipped.clone();
        for (name, acts) in &self.emotions {
            let v = vector_from_baseline(name, acts.at(layer), &neutral_mean, layer, self.method)?;
            diagnostics.extend(acts.skipped.iter().cloned());
            vectors.insert(name.clone(), v);
        }
        Ok(EmotionVectorSet {
            model_id: model_id.to_string(),
            method: self.method,
            layer,
            corpus_hash: corpus_hash.to_string(),
            neutral_mean,
            vectors,
            diagnostics,
        })
    }
}

pub fn build_vector_set(
    model: &ModelHandle,
    corpus: &StimulusCorpus,
    method: Method,
    layer: usize,
    config: &ExtractionConfig,
) -> Result<EmotionVectorSet> {
    let layers = BTreeSet::from([layer]);
    let acts = CorpusActivations::collect(model, corpus, method, &layers, config)?;
    acts.vector_set(model.id(), &corpus.content_hash(), layer)
}

/// Mean pairwise cosine of the vector set at each requested layer.
/// Duplicate layers are computed once.
pub fn layer_sweep(
    model: &ModelHandle,
    corpus: &StimulusCorpus,
    method: Method,
    layers: &[usize],
    config: &ExtractionConfig,
) -> Result<BTreeMap<usize, f64>> {
    if corpus.emotions.len() < 2 {
        return Err(Error::InvalidArgument(
            "layer sweep needs at least 2 emotions".into(),
        ));
    }
    let set: BTreeSet<usize> = layers.iter().copied().collect();
    let acts = CorpusActivations::collect(model, corpus, method, &set, config)?;
    let hash = corpus.content_hash();
    set.iter()
        .map(|&l| {
            let vs = acts.vector_set(model.id(), &hash, l)?;
            Ok((l, vs.mean_pairwise_cosine()?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let v = compute_emotion_vector(
            "x",
            &[vec![3.0, 4.0]],
            &[vec![0.0, 0.0]],
            0,
            Method::Comprehension,
        )
        .unwrap();
        assert!((v.direction[0] - 0.6).abs() < 1e-12);
        assert!((v.direction[1] - 0.8).abs() < 1e-12);
        assert_eq!(v.raw_mean, vec![3.0, 4.0]);
    }

    #[test]
    fn offset_along_first_axis() {
        let neutral = vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]];
        let emotion = vec![vec![4.0, 2.0, 2.0], vec![4.0, 2.0, 2.0]];
        let v = compute_emotion_vector("x", &emotion, &neutral, 0, Method::Generation).unwrap();
        assert_eq!(v.direction, vec![1.0, 0.0, 0.0]);
        assert_eq!(v.sample_count, 2);
    }

    #[test]
    fn identical_means_are_degenerate() {
        let acts = vec![vec![0.5, -0.5], vec![1.5, 0.5]];
        let err = compute_emotion_vector("calm", &acts, &acts, 0, Method::Generation).unwrap_err();
        assert!(matches!(err, Error::DegenerateVector(ref e) if e == "calm"));
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let err =
            compute_emotion_vector("x", &[vec![1.0]], &[vec![0.0, 0.0]], 0, Method::Generation)
                .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        assert!(compute_emotion_vector("x", &[], &[vec![0.0]], 0, Method::Generation).is_err());
    }

    #[test]
    fn method_parses() {
        assert_eq!("generation".parse::<Method>().unwrap(), Method::Generation);
        assert!("telepathy".parse::<Method>().is_err());
    }
}
