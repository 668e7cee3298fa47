//! Durable store: an append-only event log beside the project and rule set.
//!
//! Data directory layout:
//!
//! - `project.json`: element graph, mixes and creation time
//! - `ruleset.json`: the rule set document
//! - `event-log.jsonl`: every applied event, one JSON object per line, in
//!   application order (the ingest record format plus the mapped `element`)
//! - `snapshot.json`: state export written on shutdown; informational only,
//!   the log is the source of truth

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use twinqa_core::domain::{EventType, QaEvent, SpatialRef};
use twinqa_core::engine::{EngineConfig, Project, StateExport, TwinState};
use twinqa_core::ingest::{map_to_element, MappingTolerances};
use twinqa_core::rules::parse_ruleset;

use crate::ServiceError;

pub const PROJECT_FILE: &str = "project.json";
pub const RULESET_FILE: &str = "ruleset.json";
pub const LOG_FILE: &str = "event-log.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

pub struct Store {
    twin: TwinState,
    log: Option<(PathBuf, File)>,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    state_hash: String,
    events: usize,
    state: &'a StateExport,
}

impl Store {
    /// A store without a log file; nothing survives the process.
    pub fn in_memory(twin: TwinState) -> Self {
        Self { twin, log: None }
    }

    /// Opens `dir`, rebuilding the twin by replaying its event log.
    pub fn open(dir: &Path, cfg: EngineConfig) -> Result<Self, ServiceError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| ServiceError::DataDir(format!("{}: {e}", path.display())))
        };
        let project: Project = serde_json::from_str(&read(PROJECT_FILE)?)
            .map_err(|e| ServiceError::DataDir(format!("{PROJECT_FILE}: {e}")))?;
        let ruleset =
            parse_ruleset(&read(RULESET_FILE)?).map_err(|e| ServiceError::DataDir(format!("{RULESET_FILE}: {e}")))?;
        let mut twin = TwinState::new(&project, ruleset, cfg).map_err(|e| ServiceError::DataDir(e.to_string()))?;

        let path = dir.join(LOG_FILE);
        if path.exists() {
            for event in read_log(&path, &twin)? {
                twin.apply(event).map_err(|e| ServiceError::DataDir(format!("{LOG_FILE}: {e}")))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ServiceError::DataDir(format!("{}: {e}", path.display())))?;
        Ok(Self {
            twin,
            log: Some((path, file)),
        })
    }

    pub fn twin(&self) -> &TwinState {
        &self.twin
    }

    pub fn twin_mut(&mut self) -> &mut TwinState {
        &mut self.twin
    }

    /// Appends already-applied events and syncs the file before returning.
    pub fn append<'a>(&mut self, events: impl IntoIterator<Item = &'a QaEvent>) -> std::io::Result<()> {
        let Some((_, file)) = &mut self.log else {
            return Ok(());
        };
        let mut buf = String::new();
        for e in events {
            buf.push_str(&serde_json::to_string(e)?);
            buf.push('\n');
        }
        if buf.is_empty() {
            return Ok(());
        }
        file.write_all(buf.as_bytes())?;
        file.sync_data()
    }

    /// Syncs the log and writes `snapshot.json` next to it.
    pub fn flush(&mut self) -> std::io::Result<()> {
        let Some((path, file)) = &mut self.log else {
            return Ok(());
        };
        file.sync_all()?;
        let export = self.twin.export();
        let snap = Snapshot {
            state_hash: self.twin.state_hash(),
            events: self.twin.log().count(),
            state: &export,
        };
        let dir = path.parent().unwrap_or(Path::new("."));
        std::fs::write(dir.join(SNAPSHOT_FILE), serde_json::to_vec_pretty(&snap)?)
    }
}

fn read_log(path: &Path, twin: &TwinState) -> Result<Vec<QaEvent>, ServiceError> {
    let file = File::open(path).map_err(|e| ServiceError::DataDir(format!("{}: {e}", path.display())))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| ServiceError::DataDir(format!("{LOG_FILE}: {e}")))?;
    let tolerances = MappingTolerances::default();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut event: QaEvent = match serde_json::from_str(line) {
            Ok(e) => e,
            // a torn final write from a crash; everything before it is intact
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => return Err(ServiceError::DataDir(format!("{LOG_FILE} line {}: {e}", i + 1))),
        };
        if event.element.is_none() && event.event_type != EventType::SpecRevision {
            if let SpatialRef::ExplicitId(id) = &event.subject {
                event.element = Some(id.clone());
            } else {
                let m = map_to_element(&event.subject, twin.graph(), &tolerances)
                    .map_err(|e| ServiceError::DataDir(format!("{LOG_FILE} line {}: {e}", i + 1)))?;
                event.element = Some(m.element);
            }
        }
        out.push(event);
    }
    Ok(out)
}
