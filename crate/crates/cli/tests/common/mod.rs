#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use axum::Router;
use emosteer::extraction::{build_vector_set, compute_emotion_vector};
use emosteer::{EmotionVectorSet, ExtractionConfig, Method, ModelHandle, StimulusCorpus};

pub fn tiny_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/tiny_gpt2")
}

pub fn tiny_model() -> ModelHandle {
    ModelHandle::open(&tiny_dir()).expect("tiny fixture loads")
}

/// Comprehension vectors for the full roster on the tiny fixture, built once.
pub fn tiny_set() -> EmotionVectorSet {
    static SET: OnceLock<EmotionVectorSet> = OnceLock::new();
    SET.get_or_init(|| {
        let model = tiny_model();
        build_vector_set(
            &model,
            &StimulusCorpus::default_corpus(),
            Method::Comprehension,
            model.middle_layer(),
            &ExtractionConfig::default(),
        )
        .expect("tiny extraction")
    })
    .clone()
}

/// Three vectors with every pairwise cosine equal to `c`.
pub fn cosine_set(c: f64) -> EmotionVectorSet {
    let d = 4;
    let vectors = (0..3)
        .map(|i| {
            let mut v = vec![0.0; d];
            v[0] = c.sqrt();
            v[i + 1] = (1.0 - c).sqrt();
            let name = format!("e{i}");
            let ev = compute_emotion_vector(&name, &[v], &[vec![0.0; d]], 0, Method::Comprehension)
                .unwrap();
            (name, ev)
        })
        .collect();
    EmotionVectorSet {
        model_id: "fixture".into(),
        method: Method::Comprehension,
        layer: 0,
        corpus_hash: "fixture".into(),
        neutral_mean: vec![0.0; d],
        vectors,
        diagnostics: vec![],
    }
}

/// Serves `router` on an ephemeral local port and returns its base URL.
pub async fn spawn(router: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router).await.unwrap();
    });
    format!("http://{addr}")
}

#[derive(Debug, Clone)]
pub struct SseEvent {
    pub event: String,
    pub data: serde_json::Value,
}

pub fn parse_sse(body: &str) -> Vec<SseEvent> {
    body.split("\n\n")
        .filter_map(|block| {
            let mut event = None;
            let mut data = String::new();
            for line in block.lines() {
                if let Some(e) = line.strip_prefix("event:") {
                    event = Some(e.trim().to_string());
                } else if let Some(d) = line.strip_prefix("data:") {
                    data.push_str(d.strip_prefix(' ').unwrap_or(d));
                }
            }
            Some(SseEvent {
                event: event?,
                data: serde_json::from_str(&data).ok()?,
            })
        })
        .collect()
}
