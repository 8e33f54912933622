//! Separation metrics, anisotropy baselines, projection deltas and
//! steering-regime classification.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::hash::Hash;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{EmotionVector, EmotionVectorSet};
use crate::model::{ActivationTrace, ModelHandle};
use crate::steering::SweepOutcome;
use crate::tokenizer::Tokenizer;

/// Allowed deviation from unit norm for cosine inputs.
pub const UNIT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_EXPLOSIVE_THRESHOLD: f64 = 5.0;
pub const DEFAULT_REPETITION_THRESHOLD: f64 = 0.9;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Symmetric matrix of dot products between unit vectors. The diagonal is
/// set to exactly 1.
pub fn pairwise_cosine_matrix(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if vectors.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 vectors, got {}",
            vectors.len()
        )));
    }
    let d = vectors[0].len();
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: v.len(),
            });
        }
        let n = norm(v);
        if n.is_nan() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NotUnit { index: i, norm: n });
        }
    }
    let k = vectors.len();
    let mut m = vec![vec![0.0; k]; k];
    for i in 0..k {
        m[i][i] = 1.0;
        for j in i + 1..k {
            let c = dot(&vectors[i], &vectors[j]);
            m[i][j] = c;
            m[j][i] = c;
        }
    }
    Ok(m)
}

/// Mean of the strict upper triangle.
pub fn mean_pairwise(matrix: &[Vec<f64>]) -> f64 {
    let upper = upper_triangle(matrix);
    upper.iter().sum::<f64>() / upper.len() as f64
}

fn upper_triangle(matrix: &[Vec<f64>]) -> Vec<f64> {
    let k = matrix.len();
    (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .map(|(i, j)| matrix[i][j])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anisotropy {
    pub mean: f64,
    /// Population standard deviation over sentence pairs.
    pub std: f64,
}

/// Anisotropy over raw hidden states: each state is unit-normalised (no
/// mean subtraction) and the pairwise cosines are summarised.
pub fn anisotropy_from_states(states: &[Vec<f64>]) -> Result<Anisotropy> {
    let unit: Vec<Vec<f64>> = states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let n = norm(s);
            if n == 0.0 || !n.is_finite() {
                return Err(Error::DegenerateVector(format!("state {i}")));
            }
            Ok(s.iter().map(|v| v / n).collect())
        })
        .collect::<Result<_>>()?;
    let m = pairwise_cosine_matrix(&unit)?;
    let (mean, std) = crate::stats::mean_std(&upper_triangle(&m));
    Ok(Anisotropy { mean, std })
}

/// Neutral-sentence baseline: last-token state per sentence at `layer`.
pub fn anisotropy_baseline(
    model: &ModelHandle,
    sentences: &[String],
    layer: usize,
) -> Result<Anisotropy> {
    if sentences.len() < 2 {
        return Err(Error::InvalidArgument(
            "anisotropy baseline needs at least 2 sentences".into(),
        ));
    }
    model.check_layer(layer)?;
    let capture = BTreeSet::from([layer]);
    let states = sentences
        .iter()
        .map(|s| {
            let ids = model.tokenize(s);
            if ids.is_empty() {
                return Err(Error::TextTooShort("empty baseline sentence".into()));
            }
            let out = model.forward(&ids, &capture, None)?;
            let row = out
                .trace
                .get(layer, ids.len() - 1)
                .ok_or(Error::MissingLayer(layer))?;
            Ok(row.iter().map(|&v| v as f64).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    anisotropy_from_states(&states)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    #[default]
    Mean,
    Sum,
}

/// Per-position projections of the captured states onto `direction`,
/// after subtracting `centre` when given.
pub fn projections(
    trace: &ActivationTrace,
    layer: usize,
    positions: Range<usize>,
    direction: &[f64],
    centre: Option<&[f64]>,
) -> Result<Vec<f64>> {
    positions
        .map(|p| {
            let row = trace.get(layer, p).ok_or(Error::MissingLayer(layer))?;
            if row.len() != direction.len() {
                return Err(Error::DimensionMismatch {
                    expected: direction.len(),
                    found: row.len(),
                });
            }
            Ok(match centre {
                Some(c) => row
                    .iter()
                    .zip(c)
                    .zip(direction)
                    .map(|((&s, c), d)| (s as f64 - c) * d)
                    .sum(),
                None => row.iter().zip(direction).map(|(&s, d)| s as f64 * d).sum(),
            })
        })
        .collect()
}

pub fn reduce(values: &[f64], reducer: Reducer) -> f64 {
    let sum: f64 = values.iter().sum();
    match reducer {
        Reducer::Sum => sum,
        Reducer::Mean if values.is_empty() => 0.0,
        Reducer::Mean => sum / values.len() as f64,
    }
}

/// `reduce(steered · dir) − reduce(original · dir)` at the vector's layer.
/// The two traces may cover different position ranges (texts can have
/// different lengths).
pub fn projection_delta(
    steered: &ActivationTrace,
    steered_positions: Range<usize>,
    original: &ActivationTrace,
    original_positions: Range<usize>,
    vector: &EmotionVector,
    reducer: Reducer,
) -> Result<f64> {
    let s = projections(
        steered,
        vector.layer,
        steered_positions,
        &vector.direction,
        None,
    )?;
    let o = projections(
        original,
        vector.layer,
        original_positions,
        &vector.direction,
        None,
    )?;
    Ok(reduce(&s, reducer) - reduce(&o, reducer))
}

/// `1 − distinct / total` over any token sequence.
pub fn repetition_of<T: Eq + Hash>(tokens: &[T]) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::TextTooShort(
            "repetition of an empty sequence".into(),
        ));
    }
    let distinct: HashSet<&T> = tokens.iter().collect();
    Ok(1.0 - distinct.len() as f64 / tokens.len() as f64)
}

/// Word-level repetition: whitespace split, lowercased, surrounding
/// punctuation stripped.
pub fn repetition_score(text: &str) -> Result<f64> {
    let words: Vec<String> = text
        .split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| c.is_ascii_punctuation())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect();
    repetition_of(&words)
}

/// BPE-level repetition, the variant used for regime classification.
pub fn token_repetition_score(tokenizer: &Tokenizer, text: &str) -> Result<f64> {
    repetition_of(&tokenizer.encode(text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Surgical,
    RepetitiveCollapse,
    Explosive,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Surgical => "surgical",
            Regime::RepetitiveCollapse => "repetitive_collapse",
            Regime::Explosive => "explosive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub regime: Regime,
    pub ppl_ratio: f64,
    pub max_repetition: f64,
}

/// Explosive beats repetitive beats surgical. Non-finite or non-positive
/// ratios cannot be classified and are treated as explosive.
pub fn classify_regime(
    ppl_ratio: f64,
    max_repetition: f64,
    explosive_threshold: f64,
    repetition_threshold: f64,
) -> RegimeLabel {
    let regime = if !(ppl_ratio.is_finite() && ppl_ratio > 0.0) || ppl_ratio >= explosive_threshold
    {
        Regime::Explosive
    } else if max_repetition >= repetition_threshold {
        Regime::RepetitiveCollapse
    } else {
        Regime::Surgical
    };
    RegimeLabel {
        regime,
        ppl_ratio,
        max_repetition,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCosine {
    pub a: String,
    pub b: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub emotions: Vec<String>,
    pub cosine_matrix: Vec<Vec<f64>>,
    pub mean_pairwise: f64,
    pub opposite_pairs: Vec<PairCosine>,
    pub anisotropy_mean: f64,
    pub anisotropy_std: f64,
    pub gap: f64,
    pub headroom: f64,
}

/// Opposite-valence pairs reported by default, where present in the set.
pub const DEFAULT_OPPOSITE_PAIRS: [(&str, &str); 5] = [
    ("happy", "sad"),
    ("calm", "angry"),
    ("excited", "bored"),
    ("loving", "hostile"),
    ("content", "desperate"),
];

pub fn separation_report(
    set: &EmotionVectorSet,
    baseline: Anisotropy,
    opposite_pairs: &[(String, String)],
) -> Result<SeparationReport> {
    let emotions: Vec<String> = set.vectors.keys().cloned().collect();
    let cosine_matrix = pairwise_cosine_matrix(&set.directions())?;
    let mean_pairwise = mean_pairwise(&cosine_matrix);
    let index: BTreeMap<&str, usize> = emotions
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    let opposite_pairs = opposite_pairs
        .iter()
        .map(|(a, b)| {
            let ia = *index
                .get(a.as_str())
                .ok_or_else(|| Error::UnknownEmotion(a.clone()))?;
            let ib = *index
                .get(b.as_str())
                .ok_or_else(|| Error::UnknownEmotion(b.clone()))?;
            Ok(PairCosine {
                a: a.clone(),
                b: b.clone(),
                cosine: cosine_matrix[ia][ib],
            })
        })
        .collect::<Result<_>>()?;
    Ok(SeparationReport {
        emotions,
        cosine_matrix,
        mean_pairwise,
        opposite_pairs,
        anisotropy_mean: baseline.mean,
        anisotropy_std: baseline.std,
        gap: baseline.mean - mean_pairwise,
        headroom: 1.0 - baseline.mean,
    })
}

/// Delta rescaled by the headroom left under the anisotropy cone. Reported
/// for comparison only; raw deltas are the primary measure.
pub fn normalized_delta(delta: f64, headroom: f64) -> Result<f64> {
    if headroom <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "headroom {headroom} is not positive"
        )));
    }
    Ok(delta / headroom)
}

impl SeparationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// E×E cosine matrix with a header row of emotion names.
    pub fn matrix_csv(&self) -> String {
        let mut out = String::from("emotion");
        for e in &self.emotions {
            out.push(',');
            out.push_str(e);
        }
        out.push('\n');
        for (e, row) in self.emotions.iter().zip(&self.cosine_matrix) {
            out.push_str(e);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Steered perplexity at the largest strength over that at the smallest.
pub fn perplexity_ratio(outcome: &SweepOutcome) -> Result<f64> {
    let missing =
        |which: &str| Error::InvalidSweep(format!("no steered perplexity at the {which} strength"));
    let lo = outcome
        .points
        .first()
        .and_then(|p| p.ppl_steered)
        .ok_or_else(|| missing("minimum"))?;
    let hi = outcome
        .points
        .last()
        .and_then(|p| p.ppl_steered)
        .ok_or_else(|| missing("maximum"))?;
    Ok(hi / lo)
}

/// Regime of a whole sweep from its perplexity ratio and peak repetition.
pub fn sweep_regime(
    outcome: &SweepOutcome,
    explosive_threshold: f64,
    repetition_threshold: f64,
) -> Result<RegimeLabel> {
    Ok(classify_regime(
        perplexity_ratio(outcome)?,
        outcome.max_repetition(),
        explosive_threshold,
        repetition_threshold,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn orthonormal_pair_has_zero_cosine() {
        let m = pairwise_cosine_matrix(&[e(0, 3), e(1, 3)]).unwrap();
        assert_eq!(m, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let dup = pairwise_cosine_matrix(&[e(2, 3), e(2, 3)]).unwrap();
        assert_eq!(mean_pairwise(&dup), 1.0);
    }

    #[test]
    fn diagonal_mix_mean() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let m = pairwise_cosine_matrix(&[e(0, 2), e(1, 2), vec![h, h]]).unwrap();
        assert!((mean_pairwise(&m) - 0.471_404_520_791_031_7).abs() < 1e-12);
    }

    #[test]
    fn cosine_input_errors() {
        assert!(matches!(
            pairwise_cosine_matrix(&[e(0, 2), e(0, 3)]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            pairwise_cosine_matrix(&[e(0, 2), vec![0.0, 1.001]]),
            Err(Error::NotUnit { index: 1, .. })
        ));
    }

    #[test]
    fn anisotropy_of_identical_and_pair() {
        let same = vec![vec![1.0, 2.0, 3.0]; 20];
        let a = anisotropy_from_states(&same).unwrap();
        assert!((a.mean - 1.0).abs() < 1e-12);
        assert!(a.std < 1e-7);
        let pair = anisotropy_from_states(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!((pair.mean - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(pair.std, 0.0);
    }

    #[test]
    fn repetition_examples() {
        assert_eq!(repetition_score("a b c d").unwrap(), 0.0);
        assert_eq!(repetition_score("a a a a").unwrap(), 0.75);
        let r = repetition_score("contentment contentment contentment").unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
        assert!(repetition_score("   ").is_err());
    }

    #[test]
    fn regimes() {
        let c = |r, p| classify_regime(r, p, 5.0, 0.9).regime;
        assert_eq!(c(1.7, 0.2), Regime::Surgical);
        assert_eq!(c(0.3, 0.95), Regime::RepetitiveCollapse);
        assert_eq!(c(44.0, 0.1), Regime::Explosive);
        assert_eq!(c(44.0, 0.95), Regime::Explosive);
    }

    #[test]
    fn normalized_delta_needs_headroom() {
        assert!((normalized_delta(0.006, 0.012).unwrap() - 0.5).abs() < 1e-12);
        assert!(normalized_delta(1.0, 0.0).is_err());
    }
}
