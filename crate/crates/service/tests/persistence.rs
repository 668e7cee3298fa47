mod common;

use std::collections::BTreeSet;

use axum::http::StatusCode;
use common::*;
use twinqa_core::engine::{EngineConfig, TwinState};
use twinqa_core::ingest::{ingest_stream, IngestConfig};
use twinqa_core::simulator::{emit_event_stream, generate_project, SimConfig};
use twinqa_service::{Store, LOG_FILE, PROJECT_FILE, RULESET_FILE, SNAPSHOT_FILE};

fn init_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(PROJECT_FILE), serde_json::to_string(&project()).unwrap()).unwrap();
    std::fs::write(dir.path().join(RULESET_FILE), rules_doc()).unwrap();
    dir
}

#[tokio::test]
async fn restart_replays_the_log() {
    let dir = init_dir();
    let (app, state) = app_with(Store::open(dir.path(), EngineConfig::default()).unwrap());
    post(&app, "/api/events", INSPECTOR, evidence("SHAFT", 0.0)).await;
    decide(&app, "SHAFT", INSPECTOR, "release", "not mine to make").await;
    decide(&app, "SHAFT", ENGINEER, "release", "fine").await;
    post(&app, "/api/events", INSPECTOR, [batch("COL", 47.0), place("COL", 48.0), reading("COL", 48.0, 21.0)].join("\n")).await;
    let (_, audit) = get(&app, "/api/audit", INSPECTOR).await;
    let hash = state.state_hash();
    state.flush().unwrap();
    drop((app, state));

    let snapshot: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join(SNAPSHOT_FILE)).unwrap()).unwrap();
    assert_eq!(snapshot["state_hash"], hash);

    let (app, state) = app_with(Store::open(dir.path(), EngineConfig::default()).unwrap());
    assert_eq!(state.state_hash(), hash);
    assert_eq!(get(&app, "/api/audit", INSPECTOR).await.1, audit);
    // a re-post after restart is still recognized as a duplicate
    let (_, report) = post(&app, "/api/events", INSPECTOR, evidence("SHAFT", 0.0)).await;
    assert_eq!(report["duplicates"], 5);
    assert_eq!(state.state_hash(), hash);
}

#[tokio::test]
async fn torn_last_line_is_ignored() {
    let dir = init_dir();
    {
        let (app, _) = app_with(Store::open(dir.path(), EngineConfig::default()).unwrap());
        post(&app, "/api/events", INSPECTOR, evidence("SHAFT", 0.0)).await;
    }
    let log = dir.path().join(LOG_FILE);
    let mut text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().count(), 5);
    text.push_str("{\"event_id\": \"half");
    std::fs::write(&log, &text).unwrap();
    let store = Store::open(dir.path(), EngineConfig::default()).unwrap();
    assert_eq!(store.twin().log().count(), 5);

    // corruption earlier in the file is not silently skipped
    std::fs::write(&log, format!("garbage\n{text}\n")).unwrap();
    assert!(Store::open(dir.path(), EngineConfig::default()).is_err());
}

#[tokio::test]
async fn missing_project_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(Store::open(dir.path(), EngineConfig::default()).is_err());
}

#[tokio::test]
async fn service_ingest_matches_library_replay() {
    // the same raw stream through the API and through the library calls the
    // batch runner uses ends in the same state
    let cfg = SimConfig::default();
    let sim = generate_project(&cfg);
    let raws = emit_event_stream(&sim, &cfg);
    let body: String = raws.iter().map(|r| format!("{}\n", r.body)).collect();

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(PROJECT_FILE), serde_json::to_string(&sim.project).unwrap()).unwrap();
    std::fs::write(dir.path().join(RULESET_FILE), sim.ruleset.to_value().to_string()).unwrap();
    let (app, state) = app_with(Store::open(dir.path(), EngineConfig::default()).unwrap());
    let (status, report) = post(&app, "/api/events", INSPECTOR, body).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["accepted"], raws.len());

    let (events, _) = ingest_stream(&raws, &sim.project.graph, &BTreeSet::new(), &IngestConfig::default());
    let mut direct = TwinState::new(&sim.project, sim.ruleset.clone(), EngineConfig::default()).unwrap();
    direct.apply_with_script(&events, &[]).unwrap();
    assert_eq!(state.state_hash(), direct.state_hash());

    drop(app);
    let reopened = Store::open(dir.path(), EngineConfig::default()).unwrap();
    assert_eq!(reopened.twin().state_hash(), direct.state_hash());
}
