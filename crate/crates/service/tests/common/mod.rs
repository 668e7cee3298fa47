#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::SecondsFormat;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use twinqa_core::domain::{add_hours, Element, ElementGraph, ElementId, ElementKind, SpatialRef, Timestamp};
use twinqa_core::engine::{EngineConfig, MixSpec, Project, TwinState};
use twinqa_core::rules::{parse_ruleset, RuleSet};
use twinqa_service::{router, AppState, Store, TokenTable};

pub const STAGES: [&str; 5] = ["SHAFT", "COL", "CAP", "GIRDER", "DECK"];
pub const INSPECTOR: &str = "tok-insp";
pub const ENGINEER: &str = "tok-eng";
pub const MANAGER: &str = "tok-qam";

pub const TOKENS: &str = r#"[
  {"token": "tok-insp", "actor": "ivy", "role": "Inspector"},
  {"token": "tok-eng", "actor": "eli", "role": "Engineer"},
  {"token": "tok-qam", "actor": "quinn", "role": "QaManager"}
]"#;

pub fn t(h: f64) -> Timestamp {
    add_hours("2025-06-02T06:00:00Z".parse().unwrap(), h)
}

fn ts(h: f64) -> String {
    t(h).to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Five-stage chain planned 48 h apart; one mix calibrated on (40, 0.002, 50).
pub fn project() -> Project {
    let elements = STAGES
        .iter()
        .zip(ElementKind::STAGES)
        .enumerate()
        .map(|(i, (id, kind))| Element {
            id: ElementId::new(*id).unwrap(),
            kind,
            location: SpatialRef::ExplicitId(ElementId::new(*id).unwrap()),
            planned_placement: t(48.0 * i as f64),
            design_strength_mpa: 40.0,
        })
        .collect();
    let edges = STAGES
        .windows(2)
        .map(|w| (ElementId::new(w[0]).unwrap(), ElementId::new(w[1]).unwrap()))
        .collect();
    let pairs = [100.0, 200.0, 400.0, 600.0, 900.0, 1200.0, 1600.0, 2000.0]
        .iter()
        .map(|&m: &f64| (m, 40.0 * 0.002 * (m - 50.0) / (1.0 + 0.002 * (m - 50.0))))
        .collect();
    Project {
        graph: ElementGraph::build(elements, edges).unwrap(),
        mixes: [("MIX".to_string(), MixSpec { calibration: pairs })].into(),
        created_at: t(-100.0),
    }
}

pub fn rules_doc() -> String {
    let kinds = ["DrilledShaft", "Column", "Cap", "GirderOrDeckPanel", "DeckPour"];
    let rules: serde_json::Map<String, Value> = kinds
        .iter()
        .map(|k| {
            (
                k.to_string(),
                json!({
                    "required_inspections": [{"code": "PRE", "phase": "pre-placement", "hold_point": true}],
                    "acceptance": {"property": "compressive_strength", "limit_mpa": 40.0, "age_days": 28},
                    "readiness_threshold": 0.75,
                    "testing_frequency": 2
                }),
            )
        })
        .collect();
    json!({"version": "A", "rules": rules}).to_string()
}

pub fn rules() -> RuleSet {
    parse_ruleset(&rules_doc()).unwrap()
}

pub fn fresh_twin() -> TwinState {
    TwinState::new(&project(), rules(), EngineConfig::default()).unwrap()
}

pub fn app_with(store: Store) -> (Router, Arc<AppState>) {
    let app = Arc::new(AppState::new(store, TokenTable::parse(TOKENS).unwrap()));
    (router(app.clone()), app)
}

pub fn app() -> (Router, Arc<AppState>) {
    app_with(Store::in_memory(fresh_twin()))
}

pub fn line(id: &str, el: &str, at: f64, event_type: &str, payload: Value) -> String {
    json!({
        "event_id": id,
        "event_type": event_type,
        "occurred_at": ts(at),
        "recorded_at": ts(at),
        "subject": {"element_id": el},
        "payload": payload,
        "source": "test",
    })
    .to_string()
}

pub fn inspect(el: &str, at: f64, pass: bool) -> String {
    line(
        &format!("{el}-pre-{at}"),
        el,
        at,
        "InspectionCompleted",
        json!({"inspection_code": "PRE", "phase": "pre-placement", "result": if pass {"pass"} else {"fail"}, "notes": ""}),
    )
}

pub fn batch(el: &str, at: f64) -> String {
    line(
        &format!("{el}-batch"),
        el,
        at,
        "BatchTicket",
        json!({"batch_id": format!("B-{el}"), "mix_id": "MIX", "volume_m3": 10.0, "batched_at": ts(at)}),
    )
}

pub fn place(el: &str, at: f64) -> String {
    line(
        &format!("{el}-place"),
        el,
        at,
        "PlacementRecorded",
        json!({
            "batch_id": format!("B-{el}"),
            "started_at": ts(at),
            "finished_at": ts(at + 3.0),
            "ambient_temp": {"magnitude": 68.0, "unit": "degF"},
        }),
    )
}

pub fn reading(el: &str, at: f64, temp_c: f64) -> String {
    line(
        &format!("{el}-temp-{at}"),
        el,
        at,
        "SensorReading",
        json!({"sensor_id": format!("T-{el}"), "temp": {"magnitude": temp_c, "unit": "degC"}}),
    )
}

pub fn lab(el: &str, n: u32, at: f64, age_days: f64, mpa: f64) -> String {
    line(
        &format!("{el}-lab-{n}"),
        el,
        at,
        "LabResult",
        json!({"specimen_id": format!("{el}-{n}"), "age_days": age_days, "cured": "lab",
               "strength": {"magnitude": mpa, "unit": "MPa"}}),
    )
}

/// Inspection, batch, placement and passing 28-day results: enough for Provisional.
pub fn evidence(el: &str, at: f64) -> String {
    [
        inspect(el, at - 10.0, true),
        batch(el, at - 1.0),
        place(el, at),
        lab(el, 1, at + 5.0, 28.0, 44.0),
        lab(el, 2, at + 5.0, 28.0, 45.0),
    ]
    .join("\n")
}

pub async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: impl Into<Body>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(tok) = token {
        req = req.header("authorization", format!("Bearer {tok}"));
    }
    let resp = app
        .clone()
        .oneshot(req.body(body.into()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub async fn get(app: &Router, uri: &str, token: &str) -> (StatusCode, Value) {
    call(app, "GET", uri, Some(token), "").await
}

pub async fn post(app: &Router, uri: &str, token: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    call(app, "POST", uri, Some(token), body).await
}

pub async fn decide(app: &Router, el: &str, token: &str, action: &str, rationale: &str) -> (StatusCode, Value) {
    post(
        app,
        &format!("/api/elements/{el}/decision"),
        token,
        json!({"action": action, "rationale": rationale}).to_string(),
    )
    .await
}
