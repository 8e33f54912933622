//! HTTP service for interactive steering. One model is shared read-only;
//! every request runs its own generation on the blocking pool.

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use emosteer::analysis::{self, RegimeLabel};
use emosteer::steering::{self, Measurement, DEFAULT_STRENGTHS};
use emosteer::{
    EmotionVectorSet, InterventionSpec, Method, ModelHandle, Scenario, SteeringConfig,
    StimulusCorpus, SweepPoint,
};
use futures::Stream;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;
use tokio_stream::wrappers::UnboundedReceiverStream;
use tokio_stream::StreamExt;
use uuid::Uuid;

use crate::classifier::{classifier_label, ClassifierClient, ClassifierError, ClassifierVerdict};

pub const MAX_TOKENS_LIMIT: usize = 256;

pub struct NamedVectorSet {
    pub id: String,
    pub set: EmotionVectorSet,
}

pub struct ServiceState {
    model: Arc<ModelHandle>,
    corpus: StimulusCorpus,
    sets: BTreeMap<String, Arc<EmotionVectorSet>>,
    default_set: String,
    sessions: Mutex<HashMap<Uuid, SteerSession>>,
    classifier: Option<ClassifierClient>,
    config: SteeringConfig,
}

impl ServiceState {
    pub fn new(
        model: Arc<ModelHandle>,
        corpus: StimulusCorpus,
        sets: Vec<NamedVectorSet>,
        classifier: Option<ClassifierClient>,
        config: SteeringConfig,
    ) -> anyhow::Result<Self> {
        let default_set = sets
            .first()
            .map(|s| s.id.clone())
            .ok_or_else(|| anyhow::anyhow!("no vector sets given"))?;
        let mut by_id = BTreeMap::new();
        for NamedVectorSet { id, set } in sets {
            set.validate()?;
            if set.model_dim() != model.model_dim() {
                anyhow::bail!(
                    "vector set `{id}` has dimension {}, model has {}",
                    set.model_dim(),
                    model.model_dim()
                );
            }
            model.check_layer(set.layer)?;
            if by_id.insert(id.clone(), Arc::new(set)).is_some() {
                anyhow::bail!("duplicate vector set id `{id}`");
            }
        }
        Ok(Self {
            model,
            corpus,
            sets: by_id,
            default_set,
            sessions: Mutex::new(HashMap::new()),
            classifier,
            config,
        })
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/emotions", get(emotions))
        .route("/v1/vectorsets", get(vectorsets))
        .route("/v1/scenarios", get(scenarios))
        .route("/v1/steer", post(steer))
        .route("/v1/steer/stream", post(steer_stream))
        .route("/v1/sessions/{id}", get(session))
        .route("/v1/sweep", post(sweep))
        .route("/v1/classify", post(classify))
        .with_state(state)
}

// ------------------------------------------------------------------ errors

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    code: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code,
                message: &self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<emosteer::Error> for ApiError {
    fn from(e: emosteer::Error) -> Self {
        use emosteer::Error as E;
        let (status, code) = match &e {
            E::UnknownEmotion(_) => (StatusCode::BAD_REQUEST, "unknown_emotion"),
            E::InvalidSweep(_)
            | E::InvalidScenario(_)
            | E::InvalidArgument(_)
            | E::InvalidIntervention(_)
            | E::EmptyPrompt
            | E::ContextOverflow { .. } => (StatusCode::BAD_REQUEST, "invalid_request"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<ClassifierError> for ApiError {
    fn from(e: ClassifierError) -> Self {
        let (status, code) = match &e {
            ClassifierError::EmptyText => (StatusCode::BAD_REQUEST, "invalid_request"),
            ClassifierError::Unavailable { .. } => {
                (StatusCode::BAD_GATEWAY, "classifier_unavailable")
            }
            ClassifierError::Rejected { .. } | ClassifierError::Malformed(_) => {
                (StatusCode::BAD_GATEWAY, "classifier_error")
            }
        };
        Self::new(status, code, e.to_string())
    }
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::new(
        StatusCode::INTERNAL_SERVER_ERROR,
        "internal",
        format!("worker failed: {e}"),
    )
}

// ----------------------------------------------------------------- catalog

#[derive(Debug, Serialize, Deserialize)]
pub struct EmotionInfo {
    pub name: String,
    pub valence: emosteer::stimuli::Valence,
    pub arousal: emosteer::stimuli::Arousal,
    pub quadrant: String,
    pub classifier_label: Option<String>,
}

async fn emotions(State(state): State<Arc<ServiceState>>) -> Json<Vec<EmotionInfo>> {
    Json(
        state
            .corpus
            .emotions
            .iter()
            .map(|e| EmotionInfo {
                name: e.name.clone(),
                valence: e.valence,
                arousal: e.arousal,
                quadrant: e.quadrant().to_string(),
                classifier_label: classifier_label(&e.name).map(String::from),
            })
            .collect(),
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VectorSetInfo {
    pub id: String,
    pub model_id: String,
    pub method: Method,
    pub layer: usize,
    pub corpus_hash: String,
    pub emotions: Vec<String>,
    pub default: bool,
}

async fn vectorsets(State(state): State<Arc<ServiceState>>) -> Json<Vec<VectorSetInfo>> {
    Json(
        state
            .sets
            .iter()
            .map(|(id, s)| VectorSetInfo {
                id: id.clone(),
                model_id: s.model_id.clone(),
                method: s.method,
                layer: s.layer,
                corpus_hash: s.corpus_hash.clone(),
                emotions: s.vectors.keys().cloned().collect(),
                default: *id == state.default_set,
            })
            .collect(),
    )
}

async fn scenarios() -> Json<Vec<Scenario>> {
    Json(steering::default_scenarios())
}

// ------------------------------------------------------------------- steer

fn default_sign() -> i8 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteerRequest {
    pub prompt: String,
    pub emotion: String,
    #[serde(default = "default_sign")]
    pub sign: i8,
    pub strength: f64,
    #[serde(default)]
    pub max_tokens: Option<usize>,
    #[serde(default)]
    pub source_emotion: Option<String>,
    #[serde(default)]
    pub vector_set: Option<String>,
    #[serde(default)]
    pub session_id: Option<Uuid>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteerResponse {
    pub session_id: Uuid,
    pub vector_set: String,
    pub layer: usize,
    pub strength: f64,
    pub original: String,
    pub steered: String,
    pub target_delta: f64,
    pub source_delta: Option<f64>,
    pub ppl_original: Option<f64>,
    pub ppl_steered: Option<f64>,
    pub repetition: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub seq: u64,
    pub strength: f64,
    pub steered: String,
    pub target_delta: f64,
    pub ppl: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteerSession {
    pub id: Uuid,
    pub model_id: String,
    pub vector_set: String,
    pub scenario: Scenario,
    pub history: Vec<HistoryEntry>,
    #[serde(skip)]
    next_seq: u64,
}

/// A request resolved against the loaded vector sets.
struct Resolved {
    set_id: String,
    set: Arc<EmotionVectorSet>,
    scenario: Scenario,
    config: SteeringConfig,
}

fn resolve(
    state: &ServiceState,
    prompt: &str,
    emotion: &str,
    sign: i8,
    source: Option<&str>,
    vector_set: Option<&str>,
    max_tokens: Option<usize>,
) -> Result<Resolved, ApiError> {
    let set_id = vector_set.unwrap_or(&state.default_set).to_string();
    let set = state.sets.get(&set_id).cloned().ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_vector_set",
            format!("no vector set `{set_id}`"),
        )
    })?;
    if prompt.trim().is_empty() {
        return Err(ApiError::bad_request("prompt is empty"));
    }
    let max_tokens = max_tokens.unwrap_or(state.config.max_tokens);
    if max_tokens == 0 || max_tokens > MAX_TOKENS_LIMIT {
        return Err(ApiError::bad_request(format!(
            "max_tokens must lie in 1..={MAX_TOKENS_LIMIT}"
        )));
    }
    let scenario = Scenario {
        name: "interactive".into(),
        prompt: prompt.to_string(),
        source_emotion: source.map(String::from),
        target_emotion: emotion.to_string(),
        sign,
    };
    scenario.check_against(&set)?;
    let config = SteeringConfig {
        max_tokens,
        ..state.config.clone()
    };
    Ok(Resolved {
        set_id,
        set,
        scenario,
        config,
    })
}

fn check_strength(strength: f64) -> Result<(), ApiError> {
    if strength.is_finite() && strength >= 0.0 {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!(
            "strength {strength} must be a non-negative number"
        )))
    }
}

/// Opens (or continues) a session and reserves the history slot for this
/// request, so history stays in arrival order when requests overlap.
fn open_session(
    state: &ServiceState,
    req: &SteerRequest,
    r: &Resolved,
) -> Result<(Uuid, u64), ApiError> {
    let mut sessions = state.sessions.lock().expect("session lock");
    let id = match req.session_id {
        Some(id) if !sessions.contains_key(&id) => {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_session",
                format!("no session {id}"),
            ))
        }
        Some(id) => id,
        None => {
            let id = Uuid::new_v4();
            sessions.insert(
                id,
                SteerSession {
                    id,
                    model_id: state.model.id().to_string(),
                    vector_set: r.set_id.clone(),
                    scenario: r.scenario.clone(),
                    history: Vec::new(),
                    next_seq: 0,
                },
            );
            id
        }
    };
    let s = sessions.get_mut(&id).expect("present");
    s.scenario = r.scenario.clone();
    s.vector_set = r.set_id.clone();
    let seq = s.next_seq;
    s.next_seq += 1;
    Ok((id, seq))
}

fn record(state: &ServiceState, id: Uuid, entry: HistoryEntry) {
    let mut sessions = state.sessions.lock().expect("session lock");
    if let Some(s) = sessions.get_mut(&id) {
        let at = s.history.partition_point(|h| h.seq < entry.seq);
        s.history.insert(at, entry);
    }
}

fn respond(id: Uuid, r: &Resolved, p: SweepPoint) -> SteerResponse {
    SteerResponse {
        session_id: id,
        vector_set: r.set_id.clone(),
        layer: r.set.layer,
        strength: p.strength,
        original: p.original_text,
        steered: p.steered_text,
        target_delta: p.target_delta,
        source_delta: p.source_delta,
        ppl_original: p.ppl_original,
        ppl_steered: p.ppl_steered,
        repetition: p.repetition,
    }
}

async fn run_steer(state: Arc<ServiceState>, req: SteerRequest) -> Result<SteerResponse, ApiError> {
    check_strength(req.strength)?;
    let r = resolve(
        &state,
        &req.prompt,
        &req.emotion,
        req.sign,
        req.source_emotion.as_deref(),
        req.vector_set.as_deref(),
        req.max_tokens,
    )?;
    let (id, seq) = open_session(&state, &req, &r)?;
    let model = state.model.clone();
    let (set, scenario, config) = (r.set.clone(), r.scenario.clone(), r.config.clone());
    let strength = req.strength;
    let point = tokio::task::spawn_blocking(move || {
        steering::run_scenario(&model, &set, &scenario, strength, &config)
    })
    .await
    .map_err(join_error)??;
    record(
        &state,
        id,
        HistoryEntry {
            seq,
            strength: point.strength,
            steered: point.steered_text.clone(),
            target_delta: point.target_delta,
            ppl: point.ppl_steered,
        },
    );
    Ok(respond(id, &r, point))
}

async fn steer(
    State(state): State<Arc<ServiceState>>,
    Json(req): Json<SteerRequest>,
) -> Result<Json<SteerResponse>, ApiError> {
    run_steer(state, req).await.map(Json)
}

async fn session(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<Uuid>,
) -> Result<Json<SteerSession>, ApiError> {
    let sessions = state.sessions.lock().expect("session lock");
    sessions.get(&id).cloned().map(Json).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_session",
            format!("no session {id}"),
        )
    })
}

fn json_event(name: &str, value: &impl Serialize) -> Event {
    Event::default()
        .event(name)
        .data(serde_json::to_string(value).expect("event payload serialises"))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TokenEvent {
    pub index: usize,
    pub text: String,
}

/// Streams the steered continuation as `token` events, then sends the full
/// measured response as a `done` event.
async fn steer_stream(
    State(state): State<Arc<ServiceState>>,
    Json(req): Json<SteerRequest>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    check_strength(req.strength)?;
    let r = resolve(
        &state,
        &req.prompt,
        &req.emotion,
        req.sign,
        req.source_emotion.as_deref(),
        req.vector_set.as_deref(),
        req.max_tokens,
    )?;
    let target = r.set.get(&r.scenario.target_emotion)?;
    let spec = InterventionSpec::steering(
        &target.direction,
        f64::from(r.scenario.sign),
        req.strength as f32,
        r.config.layers.clone(),
    )?;
    let (tx, rx) = mpsc::unbounded_channel::<Event>();
    let model = state.model.clone();
    let (prompt, max_tokens) = (r.scenario.prompt.clone(), r.config.max_tokens);
    let stream_tx = tx.clone();
    let streamed = tokio::task::spawn_blocking(move || {
        let ids = model.tokenize(&prompt);
        let mut generated = Vec::new();
        let mut sent = 0usize;
        let mut index = 0usize;
        let mut emit = |text: &str, sent: &mut usize| {
            if text.len() > *sent {
                let _ = stream_tx.send(json_event(
                    "token",
                    &TokenEvent {
                        index,
                        text: text[*sent..].to_string(),
                    },
                ));
                *sent = text.len();
                index += 1;
            }
        };
        let g = model.generate_streaming(
            &ids,
            max_tokens,
            &Default::default(),
            Some(&spec),
            |tok| {
                generated.push(tok);
                // Hold back a trailing partial character until its bytes arrive.
                if let Ok(text) = model.detokenize(&generated) {
                    if !text.ends_with('\u{FFFD}') {
                        emit(&text, &mut sent);
                    }
                }
            },
        )?;
        emit(&model.detokenize(&g.tokens)?, &mut sent);
        Ok::<_, emosteer::Error>(())
    });
    tokio::spawn(async move {
        let done = match streamed.await {
            Ok(Ok(_)) => run_steer(state, req).await,
            Ok(Err(e)) => Err(e.into()),
            Err(e) => Err(join_error(e)),
        };
        let _ = match done {
            Ok(resp) => tx.send(json_event("done", &resp)),
            Err(e) => tx.send(json_event(
                "error",
                &serde_json::json!({ "code": e.code, "message": e.message }),
            )),
        };
    });
    Ok(Sse::new(UnboundedReceiverStream::new(rx).map(Ok)).keep_alive(KeepAlive::default()))
}

// ------------------------------------------------------------------- sweep

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRequest {
    pub prompt: String,
    pub emotion: String,
    #[serde(default = "default_sign")]
    pub sign: i8,
    #[serde(default)]
    pub strengths: Option<Vec<f64>>,
    #[serde(default)]
    pub max_tokens: Option<usize>,
    #[serde(default)]
    pub source_emotion: Option<String>,
    #[serde(default)]
    pub vector_set: Option<String>,
    #[serde(default)]
    pub measurement: Option<Measurement>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PointEvent {
    pub index: usize,
    pub point: SweepPoint,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationsEvent {
    pub layer: usize,
    pub strengths: Vec<f64>,
    pub flip_point: Option<f64>,
    pub sweet_spot: Option<f64>,
    pub collapse_point: Option<f64>,
    pub notes: Vec<String>,
    pub regime: Option<RegimeLabel>,
}

/// One `point` event per strength as it finishes (not necessarily in grid
/// order), then a terminal `annotations` event.
async fn sweep(
    State(state): State<Arc<ServiceState>>,
    Json(req): Json<SweepRequest>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let strengths = req
        .strengths
        .clone()
        .unwrap_or_else(|| DEFAULT_STRENGTHS.to_vec());
    steering::validate_strengths(&strengths)?;
    let mut r = resolve(
        &state,
        &req.prompt,
        &req.emotion,
        req.sign,
        req.source_emotion.as_deref(),
        req.vector_set.as_deref(),
        req.max_tokens,
    )?;
    if let Some(m) = req.measurement {
        r.config.measurement = m;
    }
    let (tx, rx) = mpsc::unbounded_channel::<Event>();
    let model = state.model.clone();
    tokio::task::spawn_blocking(move || {
        let point_tx = tx.clone();
        let result = steering::strength_sweep_with(
            &model,
            &r.set,
            &r.scenario,
            &strengths,
            &r.config,
            |index, p| {
                let _ = point_tx.send(json_event(
                    "point",
                    &PointEvent {
                        index,
                        point: p.clone(),
                    },
                ));
            },
        );
        let _ = match result {
            Ok(outcome) => {
                let regime = analysis::sweep_regime(
                    &outcome,
                    analysis::DEFAULT_EXPLOSIVE_THRESHOLD,
                    analysis::DEFAULT_REPETITION_THRESHOLD,
                )
                .ok();
                tx.send(json_event(
                    "annotations",
                    &AnnotationsEvent {
                        layer: outcome.layer,
                        strengths,
                        flip_point: outcome.flip_point,
                        sweet_spot: outcome.sweet_spot,
                        collapse_point: outcome.collapse_point,
                        notes: outcome.notes,
                        regime,
                    },
                ))
            }
            Err(e) => {
                let e = ApiError::from(e);
                tx.send(json_event(
                    "error",
                    &serde_json::json!({ "code": e.code, "message": e.message }),
                ))
            }
        };
    });
    Ok(Sse::new(UnboundedReceiverStream::new(rx).map(Ok)).keep_alive(KeepAlive::default()))
}

// ---------------------------------------------------------------- classify

#[derive(Debug, Deserialize)]
pub struct ClassifyRequest {
    pub text: String,
}

async fn classify(
    State(state): State<Arc<ServiceState>>,
    Json(req): Json<ClassifyRequest>,
) -> Result<Json<ClassifierVerdict>, ApiError> {
    let client = state.classifier.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "classifier_not_configured",
            "start the service with --classifier URL",
        )
    })?;
    Ok(Json(client.classify(&req.text).await?))
}
