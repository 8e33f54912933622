//! Client for an external emotion classifier, plus the rule that decides
//! whether a steered continuation moved the classifier the expected way.
//!
//! Wire format: `POST {"text": ...}` answered by `{"labels": {label: p}}`.
//! [`parse_labels`] also accepts a bare `{label: p}` map and the list shapes
//! returned by Hugging Face text-classification pipelines.

use std::collections::BTreeMap;
use std::time::Duration;

use emosteer::Scenario;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("classifier input text is empty")]
    EmptyText,
    #[error("classifier request failed after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("classifier rejected the request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed classifier response: {0}")]
    Malformed(String),
}

/// Label distribution for one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierVerdict {
    pub labels: BTreeMap<String, f64>,
    pub top_label: String,
}

pub const SUM_TOLERANCE: f64 = 0.01;

impl ClassifierVerdict {
    /// Checks the distribution and picks the argmax (first label in name
    /// order on ties).
    pub fn from_labels(labels: BTreeMap<String, f64>) -> Result<Self, ClassifierError> {
        if labels.is_empty() {
            return Err(ClassifierError::Malformed("no labels".into()));
        }
        for (label, &p) in &labels {
            if !(0.0..=1.0).contains(&p) {
                return Err(ClassifierError::Malformed(format!(
                    "probability {p} for `{label}` outside [0, 1]"
                )));
            }
        }
        let sum: f64 = labels.values().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ClassifierError::Malformed(format!(
                "probabilities sum to {sum}"
            )));
        }
        let mut top: Option<(&String, f64)> = None;
        for (label, &p) in &labels {
            if top.is_none_or(|(_, best)| p > best) {
                top = Some((label, p));
            }
        }
        let top_label = top.expect("non-empty").0.clone();
        Ok(Self { labels, top_label })
    }

    pub fn probability(&self, label: &str) -> Option<f64> {
        self.labels.get(label).copied()
    }
}

/// Normalises the response shapes we know about into a label map.
pub fn parse_labels(body: &Value) -> Result<BTreeMap<String, f64>, ClassifierError> {
    fn from_map(
        m: &serde_json::Map<String, Value>,
    ) -> Result<BTreeMap<String, f64>, ClassifierError> {
        m.iter()
            .map(|(k, v)| {
                v.as_f64().map(|p| (k.clone(), p)).ok_or_else(|| {
                    ClassifierError::Malformed(format!("label `{k}` has a non-numeric score"))
                })
            })
            .collect()
    }
    fn from_list(items: &[Value]) -> Result<BTreeMap<String, f64>, ClassifierError> {
        let mut out = BTreeMap::new();
        for item in items {
            let label = item.get("label").and_then(Value::as_str);
            let score = item.get("score").and_then(Value::as_f64);
            match (label, score) {
                (Some(l), Some(s)) => {
                    out.insert(l.to_string(), s);
                }
                _ => {
                    return Err(ClassifierError::Malformed(
                        "list entries need `label` and `score`".into(),
                    ))
                }
            }
        }
        Ok(out)
    }
    match body {
        Value::Object(m) => match m.get("labels") {
            Some(Value::Object(inner)) => from_map(inner),
            Some(Value::Array(items)) => from_list(items),
            Some(_) => Err(ClassifierError::Malformed(
                "`labels` must be an object or list".into(),
            )),
            None => from_map(m),
        },
        Value::Array(items) => match items.first() {
            Some(Value::Array(inner)) if items.len() == 1 => from_list(inner),
            _ => from_list(items),
        },
        _ => Err(ClassifierError::Malformed(
            "expected a JSON object or list".into(),
        )),
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierClient {
    http: reqwest::Client,
    endpoint: String,
    max_attempts: u32,
    backoff: Duration,
}

impl ClassifierClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .expect("http client");
        Self {
            http,
            endpoint: endpoint.into(),
            max_attempts: 3,
            backoff: Duration::from_millis(200),
        }
    }

    pub fn with_retries(mut self, max_attempts: u32, backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Connection failures, timeouts, 429 and 5xx are retried with
    /// exponential backoff. Anything else fails at once.
    pub async fn classify(&self, text: &str) -> Result<ClassifierVerdict, ClassifierError> {
        if text.trim().is_empty() {
            return Err(ClassifierError::EmptyText);
        }
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            if attempt > 1 {
                tokio::time::sleep(self.backoff * 2u32.pow(attempt - 2)).await;
            }
            let resp = match self
                .http
                .post(&self.endpoint)
                .json(&serde_json::json!({ "text": text }))
                .send()
                .await
            {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
                last = format!("HTTP {status}");
                continue;
            }
            if !status.is_success() {
                let body = resp.text().await.unwrap_or_default();
                return Err(ClassifierError::Rejected {
                    status: status.as_u16(),
                    body,
                });
            }
            let body: Value = resp
                .json()
                .await
                .map_err(|e| ClassifierError::Malformed(e.to_string()))?;
            return ClassifierVerdict::from_labels(parse_labels(&body)?);
        }
        Err(ClassifierError::Unavailable {
            attempts: self.max_attempts,
            message: last,
        })
    }

    /// As [`classify`](Self::classify), but failures become a missing
    /// verdict so a batch run can carry on.
    pub async fn classify_or_missing(&self, text: &str) -> Option<ClassifierVerdict> {
        match self.classify(text).await {
            Ok(v) => Some(v),
            Err(e) => {
                tracing::warn!(error = %e, "classifier verdict missing");
                None
            }
        }
    }
}

/// Seven-class label for each roster emotion, or `None` where the classifier
/// has no reasonable counterpart.
pub const LABEL_MAP: [(&str, Option<&str>); 20] = [
    ("happy", Some("joy")),
    ("excited", Some("joy")),
    ("proud", Some("joy")),
    ("amused", Some("joy")),
    ("inspired", None),
    ("calm", Some("neutral")),
    ("content", Some("joy")),
    ("loving", Some("joy")),
    ("relieved", None),
    ("grateful", Some("joy")),
    ("angry", Some("anger")),
    ("afraid", Some("fear")),
    ("hostile", Some("anger")),
    ("anxious", Some("fear")),
    ("desperate", None),
    ("sad", Some("sadness")),
    ("lonely", Some("sadness")),
    ("bored", None),
    ("guilty", None),
    ("hopeless", Some("sadness")),
];

pub fn classifier_label(emotion: &str) -> Option<&'static str> {
    LABEL_MAP
        .iter()
        .find(|(e, _)| *e == emotion)
        .and_then(|(_, l)| *l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftRule {
    /// Also require the source-mapped label to move against the target.
    pub require_source_drop: bool,
}

impl Default for ShiftRule {
    fn default() -> Self {
        Self {
            require_source_drop: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ShiftVerdict {
    Detected,
    NotDetected { reason: String },
    Undetermined { reason: String },
}

impl ShiftVerdict {
    pub fn is_detected(&self) -> bool {
        matches!(self, ShiftVerdict::Detected)
    }
}

/// The target label must move in the steering direction (up for sign +1,
/// down for −1) and, when the scenario names a mappable source, the source
/// label must move the other way.
pub fn shift_verdict(
    scenario: &Scenario,
    original: Option<&ClassifierVerdict>,
    steered: Option<&ClassifierVerdict>,
    rule: ShiftRule,
) -> ShiftVerdict {
    let undetermined = |reason: String| ShiftVerdict::Undetermined { reason };
    let (Some(original), Some(steered)) = (original, steered) else {
        return undetermined("classifier verdict missing".into());
    };
    let Some(target) = classifier_label(&scenario.target_emotion) else {
        return undetermined(format!(
            "`{}` has no classifier label",
            scenario.target_emotion
        ));
    };
    let source = scenario
        .source_emotion
        .as_deref()
        .and_then(classifier_label);
    if source == Some(target) {
        return undetermined(format!("source and target both map to `{target}`"));
    }
    let change = |label: &str| -> Option<f64> {
        Some(steered.probability(label)? - original.probability(label)?)
    };
    let sign = f64::from(scenario.sign);
    let Some(dt) = change(target) else {
        return undetermined(format!("label `{target}` absent from a verdict"));
    };
    if sign * dt <= 0.0 {
        return ShiftVerdict::NotDetected {
            reason: format!("`{target}` moved {dt:+.3}"),
        };
    }
    if rule.require_source_drop {
        if let Some(source) = source {
            let Some(ds) = change(source) else {
                return undetermined(format!("label `{source}` absent from a verdict"));
            };
            if sign * ds >= 0.0 {
                return ShiftVerdict::NotDetected {
                    reason: format!("`{source}` moved {ds:+.3}"),
                };
            }
        }
    }
    ShiftVerdict::Detected
}
