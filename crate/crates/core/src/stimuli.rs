//! Emotion roster, generation prompt templates, comprehension passages and
//! neutral baselines.
//!
//! The corpus file is one JSON document:
//!
//! ```json
//! {
//!   "emotions": [{"name": "happy", "valence": "positive", "arousal": "high"}],
//!   "templates": {"happy": ["Write a short story about a {emotion} person."]},
//!   "passages": {"happy": ["..."]},
//!   "neutral_passages": ["..."],
//!   "neutral_sentences": ["..."],
//!   "neutral_templates": ["Write a short story about an ordinary day."]
//! }
//! ```
//!
//! `templates` and `neutral_templates` are only needed for generation-based
//! extraction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

pub const EMOTION_PLACEHOLDER: &str = "{emotion}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arousal {
    High,
    Low,
}

/// A valence × arousal cell of the circumplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quadrant {
    pub valence: Valence,
    pub arousal: Arousal,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant {
            valence: Valence::Positive,
            arousal: Arousal::High,
        },
        Quadrant {
            valence: Valence::Positive,
            arousal: Arousal::Low,
        },
        Quadrant {
            valence: Valence::Negative,
            arousal: Arousal::High,
        },
        Quadrant {
            valence: Valence::Negative,
            arousal: Arousal::Low,
        },
    ];
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = match self.valence {
            Valence::Positive => "positive",
            Valence::Negative => "negative",
        };
        let a = match self.arousal {
            Arousal::High => "high",
            Arousal::Low => "low",
        };
        write!(f, "{v}-valence/{a}-arousal")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionSpec {
    pub name: String,
    pub valence: Valence,
    pub arousal: Arousal,
}

impl EmotionSpec {
    pub fn quadrant(&self) -> Quadrant {
        Quadrant {
            valence: self.valence,
            arousal: self.arousal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusCorpus {
    pub emotions: Vec<EmotionSpec>,
    #[serde(default)]
    pub templates: BTreeMap<String, Vec<String>>,
    pub passages: BTreeMap<String, Vec<String>>,
    pub neutral_passages: Vec<String>,
    #[serde(default)]
    pub neutral_sentences: Vec<String>,
    #[serde(default)]
    pub neutral_templates: Vec<String>,
}

impl StimulusCorpus {
    /// The bundled 20-emotion corpus.
    pub fn default_corpus() -> Self {
        Self::from_json(include_str!("../data/default_corpus.json"))
            .expect("bundled corpus is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let corpus: Self =
            serde_json::from_str(text).map_err(|e| Error::CorpusParse(e.to_string()))?;
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus serialises")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Checks structural invariants, collecting every violation.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut names = BTreeSet::new();
        for (i, e) in self.emotions.iter().enumerate() {
            if e.name.trim().is_empty() {
                problems.push(format!("emotions[{i}]: empty name"));
            } else if !names.insert(e.name.as_str()) {
                problems.push(format!("emotions[{i}]: duplicate name `{}`", e.name));
            }
        }
        if self.emotions.is_empty() {
            problems.push("emotions: roster is empty".into());
        }
        let coverage = self.quadrant_coverage();
        for (q, count) in &coverage {
            if *count == 0 {
                problems.push(format!("emotions: no emotion in quadrant {q}"));
            }
        }
        for key in self.templates.keys() {
            if !names.contains(key.as_str()) {
                problems.push(format!("templates.{key}: emotion not in roster"));
            }
        }
        for (key, list) in &self.templates {
            for (i, t) in list.iter().enumerate() {
                if !t.contains(EMOTION_PLACEHOLDER) {
                    problems.push(format!(
                        "templates.{key}[{i}]: missing {EMOTION_PLACEHOLDER} placeholder"
                    ));
                }
            }
        }
        for key in self.passages.keys() {
            if !names.contains(key.as_str()) {
                problems.push(format!("passages.{key}: emotion not in roster"));
            }
        }
        for e in &self.emotions {
            match self.passages.get(&e.name) {
                None => problems.push(format!("passages.{}: emotion has no passages", e.name)),
                Some(list) if list.is_empty() => {
                    problems.push(format!("passages.{}: emotion has no passages", e.name))
                }
                Some(list) => {
                    for (i, p) in list.iter().enumerate() {
                        if p.trim().is_empty() {
                            problems.push(format!("passages.{}[{i}]: empty passage", e.name));
                        }
                    }
                }
            }
        }
        if self.neutral_passages.is_empty() {
            problems.push("neutral_passages: at least one neutral passage is required".into());
        }
        for (i, p) in self.neutral_passages.iter().enumerate() {
            if p.trim().is_empty() {
                problems.push(format!("neutral_passages[{i}]: empty passage"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::CorpusInvalid(problems))
        }
    }

    /// Checks that every passage tokenizes to at least `min_tokens` tokens.
    pub fn validate_lengths(&self, tokenizer: &Tokenizer, min_tokens: usize) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |label: String, text: &str| {
            let n = tokenizer.encode(text).len();
            if n < min_tokens {
                problems.push(format!("{label}: {n} tokens, need at least {min_tokens}"));
            }
        };
        for (emotion, list) in &self.passages {
            for (i, p) in list.iter().enumerate() {
                check(format!("passages.{emotion}[{i}]"), p);
            }
        }
        for (i, p) in self.neutral_passages.iter().enumerate() {
            check(format!("neutral_passages[{i}]"), p);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::CorpusInvalid(problems))
        }
    }

    pub fn emotion(&self, name: &str) -> Result<&EmotionSpec> {
        self.emotions
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::UnknownEmotion(name.to_owned()))
    }

    pub fn emotion_names(&self) -> impl Iterator<Item = &str> {
        self.emotions.iter().map(|e| e.name.as_str())
    }

    pub fn passages_for(&self, emotion: &str) -> Result<&[String]> {
        self.emotion(emotion)?;
        Ok(self.passages.get(emotion).map(Vec::as_slice).unwrap_or(&[]))
    }

    /// `n_stories` prompts, rotating through the emotion's templates in
    /// order: template `i` serves stories `i`, `i + t`, `i + 2t`, ...
    pub fn generation_prompts(&self, emotion: &str, n_stories: usize) -> Result<Vec<String>> {
        let spec = self.emotion(emotion)?;
        let templates = self
            .templates
            .get(emotion)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| Error::ExtractionFailed {
                emotion: emotion.to_owned(),
                reason: "no generation templates".into(),
            })?;
        Ok(rotate(templates, n_stories)
            .map(|t| t.replace(EMOTION_PLACEHOLDER, &spec.name))
            .collect())
    }

    pub fn neutral_generation_prompts(&self, n_stories: usize) -> Result<Vec<String>> {
        if self.neutral_templates.is_empty() {
            return Err(Error::ExtractionFailed {
                emotion: "neutral".into(),
                reason: "no neutral generation templates".into(),
            });
        }
        Ok(rotate(&self.neutral_templates, n_stories)
            .cloned()
            .collect())
    }

    /// Emotion count per quadrant; all four quadrants are always present.
    pub fn quadrant_coverage(&self) -> BTreeMap<Quadrant, usize> {
        let mut counts: BTreeMap<Quadrant, usize> = Quadrant::ALL.iter().map(|&q| (q, 0)).collect();
        for e in &self.emotions {
            *counts.entry(e.quadrant()).or_default() += 1;
        }
        counts
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("corpus serialises");
        Sha256::digest(bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn rotate(items: &[String], n: usize) -> impl Iterator<Item = &String> {
    (0..n).map(move |i| &items[i % items.len()])
}
