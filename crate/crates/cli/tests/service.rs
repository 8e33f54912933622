mod common;

use std::sync::Arc;

use axum::routing::post;
use axum::{Json, Router};
use emosteer::{SteeringConfig, StimulusCorpus};
use emosteer_cli::classifier::ClassifierClient;
use emosteer_cli::service::{router, NamedVectorSet, ServiceState, SteerResponse};
use serde_json::{json, Value};

fn state(classifier: Option<ClassifierClient>) -> Arc<ServiceState> {
    let config = SteeringConfig {
        max_tokens: 8,
        ..Default::default()
    };
    Arc::new(
        ServiceState::new(
            Arc::new(common::tiny_model()),
            StimulusCorpus::default_corpus(),
            vec![NamedVectorSet {
                id: "tiny-comprehension".into(),
                set: common::tiny_set(),
            }],
            classifier,
            config,
        )
        .unwrap(),
    )
}

async fn serve(classifier: Option<ClassifierClient>) -> String {
    common::spawn(router(state(classifier))).await
}

async fn post_json(url: &str, body: Value) -> reqwest::Response {
    reqwest::Client::new()
        .post(url)
        .json(&body)
        .send()
        .await
        .unwrap()
}

fn steer_body(strength: f64) -> Value {
    json!({"prompt": "I have called six times and", "emotion": "calm", "source_emotion": "angry", "strength": strength})
}

#[tokio::test(flavor = "multi_thread")]
async fn catalog_endpoints() {
    let base = serve(None).await;
    let emotions: Vec<Value> = reqwest::get(format!("{base}/v1/emotions"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(emotions.len(), 20);
    let calm = emotions.iter().find(|e| e["name"] == "calm").unwrap();
    assert_eq!(calm["valence"], "positive");
    assert_eq!(calm["arousal"], "low");
    assert_eq!(calm["quadrant"], "positive-valence/low-arousal");

    let sets: Vec<Value> = reqwest::get(format!("{base}/v1/vectorsets"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(sets.len(), 1);
    assert_eq!(sets[0]["id"], "tiny-comprehension");
    assert_eq!(sets[0]["default"], true);
    assert_eq!(sets[0]["emotions"].as_array().unwrap().len(), 20);
}

#[tokio::test(flavor = "multi_thread")]
async fn zero_strength_steer_matches_original_and_sessions_accumulate() {
    let base = serve(None).await;
    let r: SteerResponse = post_json(&format!("{base}/v1/steer"), steer_body(0.0))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(r.steered, r.original);
    assert_eq!(r.target_delta, 0.0);

    let mut body = steer_body(0.05);
    body["session_id"] = json!(r.session_id);
    let r2: SteerResponse = post_json(&format!("{base}/v1/steer"), body)
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(r2.session_id, r.session_id);

    let s: Value = reqwest::get(format!("{base}/v1/sessions/{}", r.session_id))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let history = s["history"].as_array().unwrap();
    assert_eq!(history.len(), 2);
    assert_eq!(history[0]["strength"], 0.0);
    assert_eq!(history[1]["strength"], 0.05);
    assert_eq!(history[1]["steered"], json!(r2.steered));
    assert_eq!(s["scenario"]["target_emotion"], "calm");
}

#[tokio::test(flavor = "multi_thread")]
async fn restart_reproduces_responses() {
    let (a, b) = (serve(None).await, serve(None).await);
    let ra: SteerResponse = post_json(&format!("{a}/v1/steer"), steer_body(0.03))
        .await
        .json()
        .await
        .unwrap();
    let rb: SteerResponse = post_json(&format!("{b}/v1/steer"), steer_body(0.03))
        .await
        .json()
        .await
        .unwrap();
    assert_ne!(ra.session_id, rb.session_id);
    assert_eq!(
        (ra.steered, ra.target_delta, ra.ppl_steered),
        (rb.steered, rb.target_delta, rb.ppl_steered)
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_requests_are_isolated() {
    let base = serve(None).await;
    let strengths = [0.0, 0.01, 0.03, 0.05];
    let mut sequential = Vec::new();
    for s in strengths {
        let r: SteerResponse = post_json(&format!("{base}/v1/steer"), steer_body(s))
            .await
            .json()
            .await
            .unwrap();
        sequential.push(r);
    }
    let tasks: Vec<_> = strengths
        .iter()
        .map(|&s| {
            let url = format!("{base}/v1/steer");
            tokio::spawn(async move {
                post_json(&url, steer_body(s))
                    .await
                    .json::<SteerResponse>()
                    .await
                    .unwrap()
            })
        })
        .collect();
    for (t, seq) in tasks.into_iter().zip(&sequential) {
        let r = t.await.unwrap();
        assert_eq!(r.steered, seq.steered);
        assert_eq!(r.target_delta, seq.target_delta);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn request_errors_are_structured() {
    let base = serve(None).await;
    let mut body = steer_body(0.01);
    body["emotion"] = json!("schadenfreude");
    let r = post_json(&format!("{base}/v1/steer"), body).await;
    assert_eq!(r.status(), 400);
    let e: Value = r.json().await.unwrap();
    assert_eq!(e["error"]["code"], "unknown_emotion");
    assert!(e["error"]["message"]
        .as_str()
        .unwrap()
        .contains("schadenfreude"));

    let r = post_json(&format!("{base}/v1/steer"), steer_body(-1.0)).await;
    assert_eq!(r.status(), 400);

    let mut body = steer_body(0.01);
    body["session_id"] = json!("00000000-0000-4000-8000-000000000000");
    assert_eq!(
        post_json(&format!("{base}/v1/steer"), body).await.status(),
        404
    );

    let mut body = steer_body(0.01);
    body["vector_set"] = json!("nope");
    assert_eq!(
        post_json(&format!("{base}/v1/steer"), body).await.status(),
        404
    );

    let mut body = steer_body(0.0);
    body["strengths"] = json!([0.02, 0.01]);
    assert_eq!(
        post_json(&format!("{base}/v1/sweep"), body).await.status(),
        400
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn sweep_streams_points_then_annotations() {
    let base = serve(None).await;
    let body = json!({"prompt": "I have called six times and", "emotion": "calm", "source_emotion": "angry"});
    let r = post_json(&format!("{base}/v1/sweep"), body).await;
    assert_eq!(r.status(), 200);
    assert!(r.headers()["content-type"]
        .to_str()
        .unwrap()
        .starts_with("text/event-stream"));
    let events = common::parse_sse(&r.text().await.unwrap());
    assert_eq!(events.len(), 6);
    let mut indices: Vec<u64> = events[..5]
        .iter()
        .map(|e| {
            assert_eq!(e.event, "point");
            e.data["index"].as_u64().unwrap()
        })
        .collect();
    indices.sort();
    assert_eq!(indices, [0, 1, 2, 3, 4]);
    let last = &events[5];
    assert_eq!(last.event, "annotations");
    assert_eq!(
        last.data["strengths"],
        json!([0.005, 0.01, 0.02, 0.03, 0.05])
    );
    for key in ["flip_point", "sweet_spot", "collapse_point", "regime"] {
        assert!(last.data.get(key).is_some(), "{key} missing");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn token_stream_matches_final_text() {
    let base = serve(None).await;
    let r = post_json(&format!("{base}/v1/steer/stream"), steer_body(0.02)).await;
    let events = common::parse_sse(&r.text().await.unwrap());
    let done = events.last().unwrap();
    assert_eq!(done.event, "done");
    let streamed: String = events
        .iter()
        .filter(|e| e.event == "token")
        .map(|e| e.data["text"].as_str().unwrap().to_string())
        .collect();
    assert!(!streamed.is_empty());
    assert_eq!(streamed, done.data["steered"].as_str().unwrap());
}

#[tokio::test(flavor = "multi_thread")]
async fn classify_proxies_or_reports_unconfigured() {
    let base = serve(None).await;
    let r = post_json(&format!("{base}/v1/classify"), json!({"text": "hello"})).await;
    assert_eq!(r.status(), 503);

    let stub = common::spawn(Router::new().route(
        "/",
        post(|| async { Json(json!({"joy": 0.9, "anger": 0.1})) }),
    ))
    .await;
    let base = serve(Some(ClassifierClient::new(stub))).await;
    let v: Value = post_json(&format!("{base}/v1/classify"), json!({"text": "hello"}))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(v["top_label"], "joy");

    let bad = common::spawn(Router::new().route(
        "/",
        post(|| async { Json(json!({"joy": 0.25, "anger": 0.25})) }),
    ))
    .await;
    let base = serve(Some(ClassifierClient::new(bad))).await;
    let r = post_json(&format!("{base}/v1/classify"), json!({"text": "hello"})).await;
    assert_eq!(r.status(), 502);
    let e: Value = r.json().await.unwrap();
    assert_eq!(e["error"]["code"], "classifier_error");
}
