//! Browser demo over the model-free parts of the toolkit.
//!
//! Every operation is a plain function from a JSON request to a JSON reply so
//! it can be tested natively; the `#[wasm_bindgen]` wrappers only convert the
//! error type.

use emosteer::analysis::{self, DEFAULT_EXPLOSIVE_THRESHOLD, DEFAULT_REPETITION_THRESHOLD};
use emosteer::extraction::compute_emotion_vector;
use emosteer::stats;
use emosteer::steering::{self, DEFAULT_PPL_RATIO_CAP, DEFAULT_REPETITION_CAP};
use emosteer::{Method, Scenario, SteeringConfig, SweepPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn parse<'a, T: Deserialize<'a>>(json: &'a str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| format!("bad request: {e}"))
}

fn reply(value: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

// ------------------------------------------------------------------ cone

#[derive(Debug, Deserialize)]
pub struct ConeRequest {
    pub dim: usize,
    pub emotions: usize,
    pub samples: usize,
    /// Weight of the direction every state shares (0 = isotropic).
    pub shared: f64,
    /// Size of each emotion's own offset relative to the noise.
    pub signal: f64,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct ConeReply {
    pub anisotropy_mean: f64,
    pub anisotropy_std: f64,
    /// Mean pairwise cosine of the raw emotion means, before subtracting
    /// the neutral mean.
    pub raw_cosine: f64,
    pub emotion_cosine: f64,
    pub gap: f64,
    pub cosine_matrix: Vec<Vec<f64>>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument away from zero.
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    (-2.0 * (1.0 - u).ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Synthetic states living in a narrow cone (a large shared component plus
/// noise), with a small per-emotion offset. Shows how the raw states look
/// near-parallel while mean-subtracted emotion vectors separate.
pub fn cone_explorer(request: &str) -> Result<String, String> {
    let req: ConeRequest = parse(request)?;
    if req.dim < 2
        || req.emotions < 2
        || req.samples < 2
        || req.dim > 4096
        || req.emotions * req.samples > 20_000
    {
        return Err(
            "need dim in 2..=4096, emotions >= 2, samples >= 2 and emotions*samples <= 20000"
                .into(),
        );
    }
    if !(0.0..=1.0).contains(&req.shared) || !req.signal.is_finite() || req.signal < 0.0 {
        return Err("shared must lie in [0, 1] and signal must be non-negative".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let d = req.dim;
    let axis: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
    let norm = axis.iter().map(|x| x * x).sum::<f64>().sqrt();
    let axis: Vec<f64> = axis.iter().map(|x| x / norm).collect();
    let scale = (d as f64).sqrt();
    let sample = |rng: &mut ChaCha8Rng, offset: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|i| {
                scale * req.shared.sqrt() * axis[i]
                    + (1.0 - req.shared).sqrt() * gaussian(rng)
                    + offset[i]
            })
            .collect()
    };
    let zero = vec![0.0; d];
    let neutral: Vec<Vec<f64>> = (0..req.samples).map(|_| sample(&mut rng, &zero)).collect();
    let baseline = analysis::anisotropy_from_states(&neutral).map_err(|e| e.to_string())?;

    let mut raw_means = Vec::new();
    let mut directions = Vec::new();
    for k in 0..req.emotions {
        let offset: Vec<f64> = (0..d).map(|_| req.signal * gaussian(&mut rng)).collect();
        let acts: Vec<Vec<f64>> = (0..req.samples)
            .map(|_| sample(&mut rng, &offset))
            .collect();
        let v = compute_emotion_vector(&format!("e{k}"), &acts, &neutral, 0, Method::Comprehension)
            .map_err(|e| e.to_string())?;
        raw_means.push(emosteer::extraction::mean_vector(&acts).map_err(|e| e.to_string())?);
        directions.push(v.direction);
    }
    let matrix = analysis::pairwise_cosine_matrix(&directions).map_err(|e| e.to_string())?;
    let emotion_cosine = analysis::mean_pairwise(&matrix);
    let mut raw = Vec::new();
    for i in 0..raw_means.len() {
        for j in i + 1..raw_means.len() {
            raw.push(cosine(&raw_means[i], &raw_means[j]));
        }
    }
    reply(&ConeReply {
        anisotropy_mean: baseline.mean,
        anisotropy_std: baseline.std,
        raw_cosine: raw.iter().sum::<f64>() / raw.len() as f64,
        emotion_cosine,
        gap: baseline.mean - emotion_cosine,
        cosine_matrix: matrix,
    })
}

// ------------------------------------------------------------- annotator

#[derive(Debug, Deserialize)]
pub struct DosePoint {
    pub strength: f64,
    pub target_delta: f64,
    pub ppl: f64,
    #[serde(default)]
    pub repetition: f64,
    #[serde(default)]
    pub target_projection: Option<f64>,
    #[serde(default)]
    pub source_projection: Option<f64>,
}

fn default_sign() -> i8 {
    1
}

#[derive(Debug, Deserialize)]
pub struct DoseRequest {
    pub points: Vec<DosePoint>,
    #[serde(default = "default_sign")]
    pub sign: i8,
    #[serde(default)]
    pub ppl_ratio_cap: Option<f64>,
    #[serde(default)]
    pub repetition_cap: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct DoseReply {
    pub flip_point: Option<f64>,
    pub sweet_spot: Option<f64>,
    pub collapse_point: Option<f64>,
    pub notes: Vec<String>,
    pub ppl_ratio: f64,
    pub regime: String,
}

/// Flip point, sweet spot, collapse point and regime for a dose-response
/// curve typed in by hand. Source projections, when every point has one,
/// switch flip detection to the target-overtakes-source rule.
pub fn annotate_sweep(request: &str) -> Result<String, String> {
    let req: DoseRequest = parse(request)?;
    if req.points.is_empty() {
        return Err("need at least one point".into());
    }
    let strengths: Vec<f64> = req.points.iter().map(|p| p.strength).collect();
    steering::validate_strengths(&strengths).map_err(|e| e.to_string())?;
    let with_source = req
        .points
        .iter()
        .all(|p| p.source_projection.is_some() && p.target_projection.is_some());
    let scenario = Scenario {
        name: "demo".into(),
        prompt: "-".into(),
        source_emotion: with_source.then(|| "source".to_string()),
        target_emotion: "target".into(),
        sign: req.sign,
    };
    scenario.validate().map_err(|e| e.to_string())?;
    let points = req
        .points
        .iter()
        .map(|p| SweepPoint {
            strength: p.strength,
            steered_text: String::new(),
            original_text: String::new(),
            target_delta: p.target_delta,
            source_delta: None,
            target_projection: p.target_projection.unwrap_or(0.0),
            source_projection: p.source_projection.filter(|_| with_source),
            ppl_steered: Some(p.ppl),
            ppl_original: None,
            repetition: p.repetition,
            word_repetition: p.repetition,
            diagnostics: vec![],
        })
        .collect();
    let config = SteeringConfig {
        ppl_ratio_cap: req.ppl_ratio_cap.unwrap_or(DEFAULT_PPL_RATIO_CAP),
        repetition_cap: req.repetition_cap.unwrap_or(DEFAULT_REPETITION_CAP),
        ..Default::default()
    };
    let outcome = steering::annotate(scenario, 0, points, &config);
    let label = analysis::sweep_regime(
        &outcome,
        DEFAULT_EXPLOSIVE_THRESHOLD,
        DEFAULT_REPETITION_THRESHOLD,
    )
    .map_err(|e| e.to_string())?;
    reply(&DoseReply {
        flip_point: outcome.flip_point,
        sweet_spot: outcome.sweet_spot,
        collapse_point: outcome.collapse_point,
        notes: outcome.notes,
        ppl_ratio: label.ppl_ratio,
        regime: label.regime.to_string(),
    })
}

// ----------------------------------------------------------------- stats

fn default_resamples() -> usize {
    10_000
}

fn default_confidence() -> f64 {
    0.95
}

fn default_seed() -> u64 {
    stats::DEFAULT_SEED
}

#[derive(Debug, Deserialize)]
pub struct CompareRequest {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct CompareReply {
    pub u: f64,
    pub p_value: f64,
    pub method: String,
    pub cohens_d: Option<f64>,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Mann-Whitney U, Cohen's d and a bootstrap interval for mean(a) − mean(b).
pub fn compare_groups(request: &str) -> Result<String, String> {
    let req: CompareRequest = parse(request)?;
    if req.resamples > 100_000 {
        return Err("at most 100000 resamples".into());
    }
    let mw = stats::mann_whitney_u(&req.a, &req.b).map_err(|e| e.to_string())?;
    // Undefined (too few points or zero spread) is shown as blank.
    let d = stats::cohens_d(&req.a, &req.b).ok();
    let ci = stats::bootstrap_ci(&req.a, &req.b, req.resamples, req.confidence, req.seed)
        .map_err(|e| e.to_string())?;
    reply(&CompareReply {
        u: mw.statistic,
        p_value: mw.p_value,
        method: format!("{:?}", mw.method).to_lowercase(),
        cohens_d: d,
        ci_lower: ci.lower,
        ci_upper: ci.upper,
    })
}

// ---------------------------------------------------------------- exports

#[wasm_bindgen(js_name = coneExplorer)]
pub fn cone_explorer_js(request: &str) -> Result<String, JsValue> {
    cone_explorer(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = annotateSweep)]
pub fn annotate_sweep_js(request: &str) -> Result<String, JsValue> {
    annotate_sweep(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = compareGroups)]
pub fn compare_groups_js(request: &str) -> Result<String, JsValue> {
    compare_groups(request).map_err(|e| JsValue::from_str(&e))
}
