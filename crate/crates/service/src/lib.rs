//! HTTP facade over the QA twin.
//!
//! All mutations go through one write lock around the twin and its log, so
//! events are applied by a single writer; reads share the lock and never
//! change state.

mod auth;
mod store;

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use twinqa_core::domain::{
    DecisionAction, ElementId, ElementKind, HumanDecision, Payload, QaEvent, SpatialRef, Timestamp,
};
use twinqa_core::engine::{
    AuditEntry, DecisionError, Evaluation, QaState, QaStateRecord, TwinState, WhatIfError,
};
use twinqa_core::ingest::{ingest_stream, records_from_jsonl, IngestConfig, QuarantineEntry};

pub use auth::{ApiSession, TokenTable};
pub use store::{Store, LOG_FILE, PROJECT_FILE, RULESET_FILE, SNAPSHOT_FILE};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8787";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("token file: {0}")]
    Tokens(String),
    #[error("data directory: {0}")]
    DataDir(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where the service listens and keeps its files, from `TWINQA_ADDR`,
/// `TWINQA_DATA_DIR` and `TWINQA_TOKENS`.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub data_dir: PathBuf,
    pub tokens: PathBuf,
}

impl ServiceConfig {
    pub fn from_env() -> Result<Self, String> {
        let addr = std::env::var("TWINQA_ADDR").unwrap_or_else(|_| DEFAULT_ADDR.to_string());
        let addr = addr.parse().map_err(|e| format!("TWINQA_ADDR `{addr}`: {e}"))?;
        let data_dir = PathBuf::from(std::env::var("TWINQA_DATA_DIR").unwrap_or_else(|_| "twinqa-data".into()));
        let tokens = std::env::var("TWINQA_TOKENS")
            .map(PathBuf::from)
            .unwrap_or_else(|_| data_dir.join("tokens.json"));
        Ok(Self { addr, data_dir, tokens })
    }
}

pub struct AppState {
    tokens: TokenTable,
    store: RwLock<Store>,
    ingest: IngestConfig,
}

impl AppState {
    pub fn new(store: Store, tokens: TokenTable) -> Self {
        Self {
            tokens,
            store: RwLock::new(store),
            ingest: IngestConfig::default(),
        }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Store> {
        self.store.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Store> {
        self.store.write().unwrap_or_else(|p| p.into_inner())
    }

    pub fn state_hash(&self) -> String {
        self.read().twin().state_hash()
    }

    pub fn flush(&self) -> std::io::Result<()> {
        self.write().flush()
    }
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/events", post(post_events))
        .route("/api/elements", get(list_elements))
        .route("/api/elements/{id}", get(get_element))
        .route("/api/elements/{id}/evidence", get(get_evidence))
        .route("/api/elements/{id}/decision", post(post_decision))
        .route("/api/elements/{id}/whatif", get(get_whatif))
        .route("/api/warnings", get(get_warnings))
        .route("/api/audit", get(get_audit))
        .route("/api/state", get(get_state))
        .with_state(app)
}

/// Serves until `shutdown` resolves, then syncs the log and writes a snapshot.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(app.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    app.flush()
}

fn error(status: StatusCode, reason: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({"reason": reason, "message": message.into()}))).into_response()
}

fn authenticate<'a>(app: &'a AppState, headers: &HeaderMap) -> Result<&'a ApiSession, Response> {
    let value = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
    app.tokens
        .authenticate(value)
        .ok_or_else(|| error(StatusCode::UNAUTHORIZED, "Unauthenticated", "missing or unknown bearer token"))
}

fn element_id(twin: &TwinState, raw: &str) -> Result<ElementId, Response> {
    ElementId::new(raw)
        .ok()
        .filter(|id| twin.graph().contains(id))
        .ok_or_else(|| error(StatusCode::NOT_FOUND, "UnknownElement", format!("unknown element `{raw}`")))
}

/// Decisions are never later than anything already applied.
fn decision_time(twin: &TwinState) -> Timestamp {
    let now = Utc::now();
    twin.clock().map_or(now, |c| c.max(now))
}

async fn post_events(State(app): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    let session = match authenticate(&app, &headers) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let Ok(text) = std::str::from_utf8(&body) else {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "MalformedBody", "body is not UTF-8");
    };
    let raws = records_from_jsonl(text, &format!("api:{}", session.actor), Utc::now());

    let mut store = app.write();
    let (events, mut report) = ingest_stream(&raws, store.twin().graph(), store.twin().known_ids(), &app.ingest);
    let mut applied: Vec<QaEvent> = Vec::with_capacity(events.len());
    for event in events {
        // a decision record may only speak for the caller
        if let Payload::HumanDecision(d) = &event.payload {
            if d.role != session.role || d.actor != session.actor {
                report.accepted -= 1;
                report.quarantined.push(quarantined(
                    &event,
                    format!(
                        "decision by {} ({}) submitted under the session of {} ({})",
                        d.actor, d.role, session.actor, session.role
                    ),
                ));
                continue;
            }
        }
        match store.twin_mut().apply(event.clone()) {
            Ok(_) => applied.push(event),
            Err(e) => {
                report.accepted -= 1;
                report.quarantined.push(quarantined(&event, e.to_string()));
            }
        }
    }
    if let Err(e) = store.append(&applied) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "LogWrite", e.to_string());
    }
    drop(store);

    // partial success is fine; a body with nothing usable in it is not
    let status = if report.total() == 0 || report.accepted + report.duplicates == 0 {
        StatusCode::UNPROCESSABLE_ENTITY
    } else {
        StatusCode::OK
    };
    (status, Json(report)).into_response()
}

fn quarantined(event: &QaEvent, reason: String) -> QuarantineEntry {
    QuarantineEntry {
        record: serde_json::to_value(event).unwrap_or(Value::Null),
        reason,
    }
}

#[derive(Serialize)]
struct ElementSummary {
    id: ElementId,
    kind: ElementKind,
    state: QaState,
    since: Timestamp,
    recommended: QaState,
    gate_open: bool,
    warnings: usize,
}

async fn list_elements(State(app): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    if let Err(r) = authenticate(&app, &headers) {
        return r;
    }
    let store = app.read();
    let twin = store.twin();
    let mut out = Vec::new();
    for id in twin.graph().topological_order() {
        let (Some(element), Some(rec), Ok(eval)) = (twin.graph().element(id), twin.record(id), twin.evaluate_qa(id))
        else {
            continue;
        };
        out.push(ElementSummary {
            id: id.clone(),
            kind: element.kind.clone(),
            state: rec.state,
            since: rec.since,
            recommended: eval.recommended,
            gate_open: eval.gate_open,
            warnings: eval.warnings.len(),
        });
    }
    Json(json!({"elements": out})).into_response()
}

#[derive(Serialize)]
struct ElementView<'a> {
    element: &'a twinqa_core::domain::Element,
    record: &'a QaStateRecord,
    evaluation: Evaluation,
}

async fn get_element(State(app): State<Arc<AppState>>, headers: HeaderMap, Path(raw): Path<String>) -> Response {
    if let Err(r) = authenticate(&app, &headers) {
        return r;
    }
    let store = app.read();
    let twin = store.twin();
    let id = match element_id(twin, &raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    let evaluation = match twin.evaluate_qa(&id) {
        Ok(e) => e,
        Err(e) => return error(StatusCode::NOT_FOUND, "UnknownElement", e.to_string()),
    };
    Json(ElementView {
        element: twin.graph().element(&id).expect("checked"),
        record: twin.record(&id).expect("checked"),
        evaluation,
    })
    .into_response()
}

async fn get_evidence(State(app): State<Arc<AppState>>, headers: HeaderMap, Path(raw): Path<String>) -> Response {
    if let Err(r) = authenticate(&app, &headers) {
        return r;
    }
    let store = app.read();
    let id = match element_id(store.twin(), &raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    match store.twin().evidence_bundle(&id) {
        Ok(bundle) => Json(bundle).into_response(),
        Err(e) => error(StatusCode::NOT_FOUND, "UnknownElement", e.to_string()),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    action: DecisionAction,
    rationale: String,
    #[serde(default, rename = "override")]
    override_gate: bool,
}

async fn post_decision(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(raw): Path<String>,
    body: Bytes,
) -> Response {
    let session = match authenticate(&app, &headers) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let body: DecisionBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, "MalformedBody", e.to_string()),
    };

    let mut store = app.write();
    let id = match element_id(store.twin(), &raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    let at = decision_time(store.twin());
    let n = store.twin().log().count() + 1;
    let event = QaEvent::new(
        format!("api-decision-{n}-{}", at.format("%Y%m%dT%H%M%S%.6fZ")),
        at,
        at,
        SpatialRef::ExplicitId(id.clone()),
        Payload::HumanDecision(HumanDecision {
            actor: session.actor.clone(),
            role: session.role,
            action: body.action,
            rationale: body.rationale,
            override_gate: body.override_gate,
        }),
        format!("api:{}", session.actor),
    );
    let result = match store.twin_mut().apply(event.clone()) {
        Ok(applied) => {
            // refused attempts are audited too, so they go to the log as well
            if !applied.duplicate {
                if let Err(e) = store.append([&event]) {
                    return error(StatusCode::INTERNAL_SERVER_ERROR, "LogWrite", e.to_string());
                }
            }
            applied
                .decision
                .unwrap_or_else(|| Err(DecisionError::DuplicateEvent(event.event_id.clone())))
        }
        Err(e) => return error(StatusCode::NOT_FOUND, "UnknownElement", e.to_string()),
    };
    drop(store);

    match result {
        Ok(record) => Json(record).into_response(),
        Err(e) => decision_error(e),
    }
}

fn decision_error(e: DecisionError) -> Response {
    let message = e.to_string();
    let reason = e.code();
    match e {
        DecisionError::UnauthorizedRole { role, action } => (
            StatusCode::FORBIDDEN,
            Json(json!({"reason": reason, "message": message, "role": role, "action": action})),
        )
            .into_response(),
        DecisionError::GateBlocked { predecessors } => (
            StatusCode::CONFLICT,
            Json(json!({"reason": reason, "message": message, "predecessors": predecessors})),
        )
            .into_response(),
        DecisionError::IllegalTransition { from, action } => (
            StatusCode::CONFLICT,
            Json(json!({"reason": reason, "message": message, "from": from, "action": action})),
        )
            .into_response(),
        DecisionError::DuplicateEvent(_) => error(StatusCode::CONFLICT, reason, message),
        DecisionError::EmptyRationale => error(StatusCode::UNPROCESSABLE_ENTITY, reason, message),
        DecisionError::UnknownElement(_) => error(StatusCode::NOT_FOUND, reason, message),
    }
}

async fn get_whatif(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(raw): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> Response {
    if let Err(r) = authenticate(&app, &headers) {
        return r;
    }
    let number = |key: &str| -> Result<f64, Response> {
        let v = q
            .get(key)
            .ok_or_else(|| error(StatusCode::UNPROCESSABLE_ENTITY, "Validation", format!("`{key}` is required")))?;
        v.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| error(StatusCode::UNPROCESSABLE_ENTITY, "Validation", format!("`{key}` is not a number: `{v}`")))
    };
    let (temp_c, threshold) = match (number("temp_c"), number("threshold")) {
        (Ok(t), Ok(th)) => (t, th),
        (Err(r), _) | (_, Err(r)) => return r,
    };
    let store = app.read();
    let id = match element_id(store.twin(), &raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    match store.twin().whatif_readiness(&id, temp_c, threshold) {
        Ok(w) => Json(w).into_response(),
        Err(WhatIfError::Invalid(m)) => error(StatusCode::UNPROCESSABLE_ENTITY, "Validation", m),
        Err(WhatIfError::InsufficientData(m)) => error(StatusCode::CONFLICT, "InsufficientData", m),
        Err(e @ WhatIfError::UnknownElement(_)) => error(StatusCode::NOT_FOUND, "UnknownElement", e.to_string()),
    }
}

async fn get_warnings(State(app): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    if let Err(r) = authenticate(&app, &headers) {
        return r;
    }
    Json(app.read().twin().warnings()).into_response()
}

async fn get_audit(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<BTreeMap<String, String>>,
) -> Response {
    if let Err(r) = authenticate(&app, &headers) {
        return r;
    }
    let store = app.read();
    let entries: Vec<&AuditEntry> = store
        .twin()
        .audit()
        .iter()
        .filter(|a| q.get("element").is_none_or(|e| a.element.as_str() == e))
        .collect();
    Json(entries).into_response()
}

async fn get_state(State(app): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    if let Err(r) = authenticate(&app, &headers) {
        return r;
    }
    let store = app.read();
    let twin = store.twin();
    Json(json!({
        "state_hash": twin.state_hash(),
        "events": twin.log().count(),
        "export": twin.export(),
    }))
    .into_response()
}
