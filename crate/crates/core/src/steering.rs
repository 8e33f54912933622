//! Steering scenarios, strength sweeps and dose-response annotations.
//!
//! A scenario steers a fixed prompt toward a target emotion (or away from
//! it when `sign` is −1). Each sweep point generates the steered
//! continuation greedily and compares it with the unsteered continuation
//! of the same prompt. Projections are read at the vector set's layer,
//! averaged over generated positions by default.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{self, Reducer};
use crate::error::{Error, Result};
use crate::extraction::{EmotionVector, EmotionVectorSet};
use crate::model::{self, ActivationTrace, InterventionSpec, LayerSelection, ModelHandle};

pub const DEFAULT_STRENGTHS: [f64; 5] = [0.005, 0.01, 0.02, 0.03, 0.05];
pub const DEFAULT_PPL_RATIO_CAP: f64 = 5.0;
pub const DEFAULT_REPETITION_CAP: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_emotion: Option<String>,
    pub target_emotion: String,
    /// +1 steers toward the target, −1 away from it.
    pub sign: i8,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.sign != 1 && self.sign != -1 {
            return Err(Error::InvalidScenario(format!(
                "{}: sign must be 1 or -1, got {}",
                self.name, self.sign
            )));
        }
        if self.prompt.trim().is_empty() {
            return Err(Error::InvalidScenario(format!(
                "{}: empty prompt",
                self.name
            )));
        }
        Ok(())
    }

    /// Validates the scenario and checks its emotions exist in `set`.
    pub fn check_against(&self, set: &EmotionVectorSet) -> Result<()> {
        self.validate()?;
        set.get(&self.target_emotion)?;
        if let Some(src) = &self.source_emotion {
            set.get(src)?;
        }
        Ok(())
    }

    /// True when flip detection compares two distinct emotions.
    pub fn has_distinct_source(&self) -> bool {
        self.source_emotion
            .as_ref()
            .is_some_and(|s| s != &self.target_emotion)
    }
}

/// The five bundled scenarios.
pub fn default_scenarios() -> Vec<Scenario> {
    parse_scenarios(include_str!("../data/scenarios.json")).expect("bundled scenarios are valid")
}

pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    let list: Vec<Scenario> = serde_json::from_str(text)
        .map_err(|e| Error::InvalidScenario(format!("scenario file: {e}")))?;
    let mut names = BTreeSet::new();
    for s in &list {
        s.validate()?;
        if !names.insert(s.name.as_str()) {
            return Err(Error::InvalidScenario(format!(
                "duplicate scenario `{}`",
                s.name
            )));
        }
    }
    Ok(list)
}

pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenarios(&text)
}

/// Where the projection states come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurement {
    /// A clean forward pass over prompt + generated text, so the reading
    /// reflects the text and not the injected offset.
    #[default]
    Rescore,
    /// States captured during steered decoding, injection included.
    InFlight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringConfig {
    pub max_tokens: usize,
    pub layers: LayerSelection,
    pub reducer: Reducer,
    pub measurement: Measurement,
    pub ppl_ratio_cap: f64,
    pub repetition_cap: f64,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        Self {
            max_tokens: 40,
            layers: LayerSelection::All,
            reducer: Reducer::Mean,
            measurement: Measurement::Rescore,
            ppl_ratio_cap: DEFAULT_PPL_RATIO_CAP,
            repetition_cap: DEFAULT_REPETITION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub strength: f64,
    pub steered_text: String,
    pub original_text: String,
    pub target_delta: f64,
    pub source_delta: Option<f64>,
    /// Neutral-centred projection of the steered text onto the target.
    pub target_projection: f64,
    pub source_projection: Option<f64>,
    /// Perplexity of the continuation given the prompt, under the
    /// unsteered model. Absent when nothing was generated.
    pub ppl_steered: Option<f64>,
    pub ppl_original: Option<f64>,
    /// BPE-level repetition of the steered continuation.
    pub repetition: f64,
    pub word_repetition: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub flip_point: Option<f64>,
    pub sweet_spot: Option<f64>,
    pub collapse_point: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub scenario: Scenario,
    pub layer: usize,
    pub points: Vec<SweepPoint>,
    pub flip_point: Option<f64>,
    pub sweet_spot: Option<f64>,
    pub collapse_point: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// One decoded continuation plus the states and scores derived from it.
struct Reading {
    text: String,
    tokens: Vec<u32>,
    trace: ActivationTrace,
    positions: std::ops::Range<usize>,
    ppl: Option<f64>,
}

fn read_continuation(
    model: &ModelHandle,
    prompt: &[u32],
    layer: usize,
    spec: Option<&InterventionSpec>,
    config: &SteeringConfig,
) -> Result<Reading> {
    let capture = BTreeSet::from([layer]);
    let in_flight = config.measurement == Measurement::InFlight;
    let gen_capture = if in_flight {
        capture.clone()
    } else {
        BTreeSet::new()
    };
    let g = model.generate(prompt, config.max_tokens, &gen_capture, spec)?;
    let text = model.detokenize(&g.tokens)?;
    let positions = g.generated_positions();
    let mut full = prompt.to_vec();
    full.extend_from_slice(&g.tokens);
    let rescore = model.forward(&full, &capture, None)?;
    let ppl = (!g.tokens.is_empty())
        .then(|| model::continuation_perplexity(&rescore.logits, &full, prompt.len()));
    let trace = if in_flight { g.trace } else { rescore.trace };
    Ok(Reading {
        text,
        tokens: g.tokens,
        trace,
        positions,
        ppl,
    })
}

fn centred_projection(
    r: &Reading,
    v: &EmotionVector,
    centre: &[f64],
    reducer: Reducer,
) -> Result<f64> {
    let p = analysis::projections(
        &r.trace,
        v.layer,
        r.positions.clone(),
        &v.direction,
        Some(centre),
    )?;
    Ok(analysis::reduce(&p, reducer))
}

/// Unsteered baseline shared by every point of a sweep.
pub struct Baseline {
    prompt_ids: Vec<u32>,
    reading: Reading,
}

impl Baseline {
    pub fn compute(
        model: &ModelHandle,
        set: &EmotionVectorSet,
        scenario: &Scenario,
        config: &SteeringConfig,
    ) -> Result<Self> {
        scenario.check_against(set)?;
        if set.model_dim() != model.model_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.model_dim(),
                found: set.model_dim(),
            });
        }
        model.check_layer(set.layer)?;
        let prompt_ids = model.tokenize(&scenario.prompt);
        let reading = read_continuation(model, &prompt_ids, set.layer, None, config)?;
        Ok(Self {
            prompt_ids,
            reading,
        })
    }

    pub fn text(&self) -> &str {
        &self.reading.text
    }
}

/// Runs one strength against a precomputed baseline.
pub fn run_point(
    model: &ModelHandle,
    set: &EmotionVectorSet,
    scenario: &Scenario,
    baseline: &Baseline,
    strength: f64,
    config: &SteeringConfig,
) -> Result<SweepPoint> {
    if !strength.is_finite() || strength < 0.0 {
        return Err(Error::InvalidSweep(format!(
            "strength {strength} must be non-negative"
        )));
    }
    let target = set.get(&scenario.target_emotion)?;
    let spec = InterventionSpec::steering(
        &target.direction,
        f64::from(scenario.sign),
        strength as f32,
        config.layers.clone(),
    )?;
    let steered = read_continuation(model, &baseline.prompt_ids, set.layer, Some(&spec), config)?;
    let original = &baseline.reading;
    let mut diagnostics = Vec::new();
    if steered.tokens.is_empty() {
        diagnostics.push("steered generation is empty".to_string());
    }
    if original.tokens.is_empty() {
        diagnostics.push("original generation is empty".to_string());
    }

    let delta = |v: &EmotionVector| {
        analysis::projection_delta(
            &steered.trace,
            steered.positions.clone(),
            &original.trace,
            original.positions.clone(),
            v,
            config.reducer,
        )
    };
    let target_delta = delta(target)?;
    let target_projection =
        centred_projection(&steered, target, &set.neutral_mean, config.reducer)?;
    let (source_delta, source_projection) = match &scenario.source_emotion {
        Some(name) => {
            let src = set.get(name)?;
            (
                Some(delta(src)?),
                Some(centred_projection(
                    &steered,
                    src,
                    &set.neutral_mean,
                    config.reducer,
                )?),
            )
        }
        None => (None, None),
    };
    let repetition = analysis::repetition_of(&steered.tokens).unwrap_or(0.0);
    let word_repetition = analysis::repetition_score(&steered.text).unwrap_or(0.0);
    Ok(SweepPoint {
        strength,
        steered_text: steered.text,
        original_text: original.text.clone(),
        target_delta,
        source_delta,
        target_projection,
        source_projection,
        ppl_steered: steered.ppl,
        ppl_original: original.ppl,
        repetition,
        word_repetition,
        diagnostics,
    })
}

pub fn run_scenario(
    model: &ModelHandle,
    set: &EmotionVectorSet,
    scenario: &Scenario,
    strength: f64,
    config: &SteeringConfig,
) -> Result<SweepPoint> {
    let baseline = Baseline::compute(model, set, scenario, config)?;
    run_point(model, set, scenario, &baseline, strength, config)
}

pub fn validate_strengths(strengths: &[f64]) -> Result<()> {
    if strengths.is_empty() {
        return Err(Error::InvalidSweep("no strengths given".into()));
    }
    if let Some(s) = strengths.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::InvalidSweep(format!("strength {s} is not positive")));
    }
    if strengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSweep(
            "strengths must be strictly increasing".into(),
        ));
    }
    Ok(())
}

pub fn strength_sweep(
    model: &ModelHandle,
    set: &EmotionVectorSet,
    scenario: &Scenario,
    strengths: &[f64],
    config: &SteeringConfig,
) -> Result<SweepOutcome> {
    strength_sweep_with(model, set, scenario, strengths, config, |_, _| {})
}

/// As [`strength_sweep`], calling `on_point(index, point)` as each point
/// completes. Points may complete out of order; the outcome is sorted.
pub fn strength_sweep_with(
    model: &ModelHandle,
    set: &EmotionVectorSet,
    scenario: &Scenario,
    strengths: &[f64],
    config: &SteeringConfig,
    on_point: impl Fn(usize, &SweepPoint) + Sync,
) -> Result<SweepOutcome> {
    validate_strengths(strengths)?;
    let baseline = Baseline::compute(model, set, scenario, config)?;
    let job = |(i, &s): (usize, &f64)| -> Result<SweepPoint> {
        let p = run_point(model, set, scenario, &baseline, s, config)?;
        on_point(i, &p);
        Ok(p)
    };

    #[cfg(feature = "parallel")]
    let points: Vec<SweepPoint> = {
        use rayon::prelude::*;
        strengths
            .par_iter()
            .enumerate()
            .map(job)
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let points: Vec<SweepPoint> = strengths
        .iter()
        .enumerate()
        .map(job)
        .collect::<Result<_>>()?;

    Ok(annotate(scenario.clone(), set.layer, points, config))
}

/// Fills the three detectors and enforces flip ≤ collapse.
pub fn annotate(
    scenario: Scenario,
    layer: usize,
    points: Vec<SweepPoint>,
    config: &SteeringConfig,
) -> SweepOutcome {
    let mut outcome = SweepOutcome {
        scenario,
        layer,
        points,
        flip_point: None,
        sweet_spot: None,
        collapse_point: None,
        notes: Vec::new(),
    };
    let a = annotations(&outcome, config);
    outcome.flip_point = a.flip_point;
    outcome.sweet_spot = a.sweet_spot;
    outcome.collapse_point = a.collapse_point;
    outcome.notes = a.notes;
    outcome
}

pub fn annotations(outcome: &SweepOutcome, config: &SteeringConfig) -> Annotations {
    let mut flip_point = find_flip_point(outcome);
    let sweet_spot = find_sweet_spot(outcome, config.ppl_ratio_cap, config.repetition_cap);
    let collapse_point = find_collapse_point(outcome, config.ppl_ratio_cap, config.repetition_cap);
    let mut notes = Vec::new();
    if let (Some(f), Some(c)) = (flip_point, collapse_point) {
        if f > c {
            notes.push(format!("flip at {f} follows collapse at {c}; suppressed"));
            flip_point = None;
        }
    }
    Annotations {
        flip_point,
        sweet_spot,
        collapse_point,
        notes,
    }
}

fn sign_of(outcome: &SweepOutcome) -> f64 {
    f64::from(outcome.scenario.sign)
}

/// Smallest strength where the steered text projects more onto the target
/// than onto the source. Without a distinct source: smallest strength
/// from which the sign-adjusted target delta stays positive.
pub fn find_flip_point(outcome: &SweepOutcome) -> Option<f64> {
    let pts = &outcome.points;
    if pts.len() < 2 {
        return None;
    }
    if outcome.scenario.has_distinct_source() {
        return pts
            .iter()
            .find(|p| p.source_projection.is_some_and(|s| p.target_projection > s))
            .map(|p| p.strength);
    }
    let sign = sign_of(outcome);
    let mut flip = None;
    for p in pts.iter().rev() {
        if sign * p.target_delta > 0.0 {
            flip = Some(p.strength);
        } else {
            break;
        }
    }
    flip
}

fn ppl_ratio_vs_first(outcome: &SweepOutcome, p: &SweepPoint) -> Option<f64> {
    let first = outcome.points.first()?.ppl_steered?;
    Some(p.ppl_steered? / first)
}

/// Strength with the largest sign-adjusted target delta among points that
/// stay within both caps. Ties go to the smaller strength.
pub fn find_sweet_spot(
    outcome: &SweepOutcome,
    ppl_ratio_cap: f64,
    repetition_cap: f64,
) -> Option<f64> {
    let sign = sign_of(outcome);
    let mut best: Option<(f64, f64)> = None;
    for p in &outcome.points {
        let Some(ratio) = ppl_ratio_vs_first(outcome, p) else {
            continue;
        };
        if ratio > ppl_ratio_cap || p.repetition >= repetition_cap {
            continue;
        }
        let score = sign * p.target_delta;
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, p.strength));
        }
    }
    best.map(|(_, s)| s)
}

/// Smallest strength whose perplexity ratio against the first point
/// exceeds the cap or whose repetition reaches the cap.
pub fn find_collapse_point(
    outcome: &SweepOutcome,
    ppl_ratio_cap: f64,
    repetition_cap: f64,
) -> Option<f64> {
    outcome
        .points
        .iter()
        .find(|p| {
            ppl_ratio_vs_first(outcome, p).is_some_and(|r| r > ppl_ratio_cap)
                || p.repetition >= repetition_cap
        })
        .map(|p| p.strength)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepOutcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serialises")
    }

    /// One row per point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "strength,target_delta,source_delta,target_projection,source_projection,\
             ppl_original,ppl_steered,repetition,word_repetition,steered_text\n",
        );
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                p.strength,
                p.target_delta,
                opt(p.source_delta),
                p.target_projection,
                opt(p.source_projection),
                opt(p.ppl_original),
                opt(p.ppl_steered),
                p.repetition,
                p.word_repetition,
                csv_field(&p.steered_text),
            ));
        }
        out
    }

    pub fn max_repetition(&self) -> f64 {
        self.points.iter().map(|p| p.repetition).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(strength: f64, delta: f64, ppl: f64, rep: f64) -> SweepPoint {
        SweepPoint {
            strength,
            steered_text: String::new(),
            original_text: String::new(),
            target_delta: delta,
            source_delta: None,
            target_projection: 0.0,
            source_projection: None,
            ppl_steered: Some(ppl),
            ppl_original: Some(ppl),
            repetition: rep,
            word_repetition: rep,
            diagnostics: vec![],
        }
    }

    fn outcome(points: Vec<SweepPoint>, source: Option<&str>, sign: i8) -> SweepOutcome {
        let scenario = Scenario {
            name: "t".into(),
            prompt: "p".into(),
            source_emotion: source.map(Into::into),
            target_emotion: "calm".into(),
            sign,
        };
        annotate(scenario, 0, points, &SteeringConfig::default())
    }

    #[test]
    fn bundled_scenarios() {
        let s = default_scenarios();
        assert_eq!(s.len(), 5);
        assert_eq!(s[0].source_emotion.as_deref(), Some("angry"));
        assert_eq!(s.iter().filter(|s| s.sign == -1).count(), 1);
    }

    #[test]
    fn strength_validation() {
        assert!(validate_strengths(&DEFAULT_STRENGTHS).is_ok());
        assert!(validate_strengths(&[0.005]).is_ok());
        assert!(validate_strengths(&[]).is_err());
        assert!(validate_strengths(&[0.02, 0.01]).is_err());
        assert!(validate_strengths(&[0.01, 0.01]).is_err());
        assert!(validate_strengths(&[0.0, 0.01]).is_err());
    }

    #[test]
    fn flip_with_source_crossing_at_third() {
        let mut pts: Vec<_> = DEFAULT_STRENGTHS
            .iter()
            .map(|&s| point(s, 0.0, 30.0, 0.1))
            .collect();
        for (i, p) in pts.iter_mut().enumerate() {
            p.target_projection = i as f64;
            p.source_projection = Some(1.5);
        }
        let o = outcome(pts.clone(), Some("angry"), 1);
        assert_eq!(o.flip_point, Some(0.02));
        for p in &mut pts {
            p.source_projection = Some(10.0);
        }
        assert_eq!(outcome(pts, Some("angry"), 1).flip_point, None);
    }

    #[test]
    fn flip_without_source_needs_sustained_sign() {
        let deltas = [0.1, -0.1, 0.2, 0.3, 0.4];
        let pts = DEFAULT_STRENGTHS
            .iter()
            .zip(deltas)
            .map(|(&s, d)| point(s, d, 30.0, 0.1))
            .collect();
        assert_eq!(outcome(pts, None, 1).flip_point, Some(0.02));
        let neg = DEFAULT_STRENGTHS
            .iter()
            .map(|&s| point(s, -1.0, 30.0, 0.1))
            .collect();
        assert_eq!(outcome(neg, None, -1).flip_point, Some(0.005));
        assert_eq!(
            outcome(vec![point(0.01, 1.0, 30.0, 0.1)], None, 1).flip_point,
            None
        );
    }

    #[test]
    fn sweet_spot_respects_caps() {
        let pts = vec![
            point(0.01, 1.0, 20.0, 0.1),
            point(0.02, 5.0, 30.0, 0.1),
            point(0.03, 9.0, 200.0, 0.1),
        ];
        let o = outcome(pts, None, 1);
        assert_eq!(o.sweet_spot, Some(0.02));
        assert_eq!(o.collapse_point, Some(0.03));
        let flat = vec![
            point(0.01, 1.0, 20.0, 0.1),
            point(0.02, 2.0, 20.0, 0.1),
            point(0.03, 3.0, 20.0, 0.1),
        ];
        let o = outcome(flat, None, 1);
        assert_eq!(o.sweet_spot, Some(0.03));
        assert_eq!(o.collapse_point, None);
    }

    #[test]
    fn collapse_on_repetition() {
        let pts = vec![point(0.01, 1.0, 20.0, 0.1), point(0.02, 2.0, 20.0, 0.97)];
        assert_eq!(outcome(pts, None, 1).collapse_point, Some(0.02));
    }

    #[test]
    fn flip_after_collapse_is_suppressed() {
        let pts = vec![
            point(0.01, -1.0, 20.0, 0.1),
            point(0.02, -1.0, 200.0, 0.1),
            point(0.03, 1.0, 200.0, 0.1),
        ];
        let o = outcome(pts, None, 1);
        assert_eq!(o.collapse_point, Some(0.02));
        assert_eq!(o.flip_point, None);
        assert_eq!(o.notes.len(), 1);
    }

    #[test]
    fn csv_quotes_text() {
        let mut p = point(0.01, 1.0, 20.0, 0.1);
        p.steered_text = "a, \"b\"\nc".into();
        let csv = outcome(vec![p], None, 1).to_csv();
        assert!(csv.ends_with("\"a, \"\"b\"\"\nc\"\n"));
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 10);
    }
}
