//! Validation, unit normalization, time alignment and spatial mapping of raw
//! construction records.
//!
//! Records that cannot be validated or mapped to exactly one element are
//! quarantined with a reason; they are never partially applied.

mod mapping;
mod units;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::{
    hours_between, ElementGraph, EventType, Payload, QaEvent, SpatialRef, Timestamp,
};
use crate::rules::RuleSet;

pub use mapping::{
    great_circle_m, map_to_element, MappingConfidence, MappingError, MappingMethod, MappingResult,
    MappingTolerances,
};
pub use units::{normalize_unit, Dimension, FOOT_TO_M, KELVIN_OFFSET, PSI_TO_MPA, SUPPORTED_UNITS};

/// The only record schema this build understands.
pub const SCHEMA_V1: &str = "1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("schema violation at `{field}`: {reason}")]
    SchemaViolation { field: String, reason: String },
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("value out of range at `{field}`: {detail}")]
    ValueOutOfRange { field: String, detail: String },
    #[error("schema version `{0}` is not registered")]
    UnknownSchema(String),
}

fn violation(field: impl Into<String>, reason: impl Into<String>) -> IngestError {
    IngestError::SchemaViolation {
        field: field.into(),
        reason: reason.into(),
    }
}

fn out_of_range(field: impl Into<String>, detail: impl Into<String>) -> IngestError {
    IngestError::ValueOutOfRange {
        field: field.into(),
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub clock_skew_tolerance_min: i64,
    pub late_arrival_threshold_h: f64,
    pub tolerances: MappingTolerances,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            clock_skew_tolerance_min: 5,
            late_arrival_threshold_h: 24.0,
            tolerances: MappingTolerances::default(),
        }
    }
}

/// A record as it arrived, before any validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub source: String,
    pub body: String,
    pub received_at: Timestamp,
}

impl RawRecord {
    pub fn new(source: impl Into<String>, body: impl Into<String>, received_at: Timestamp) -> Self {
        Self {
            source: source.into(),
            body: body.into(),
            received_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    /// The original body: parsed JSON when it parses, otherwise the raw text.
    pub record: Value,
    pub reason: String,
}

impl QuarantineEntry {
    pub fn new(raw: &RawRecord, reason: impl Into<String>) -> Self {
        let record =
            serde_json::from_str(&raw.body).unwrap_or_else(|_| Value::String(raw.body.clone()));
        Self {
            record,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub duplicates: usize,
    pub quarantined: Vec<QuarantineEntry>,
    pub unit_conversions: usize,
    pub late_arrivals: usize,
    pub tolerances: MappingTolerances,
}

impl IngestReport {
    pub fn empty(tolerances: MappingTolerances) -> Self {
        Self {
            accepted: 0,
            duplicates: 0,
            quarantined: Vec::new(),
            unit_conversions: 0,
            late_arrivals: 0,
            tolerances,
        }
    }

    pub fn total(&self) -> usize {
        self.accepted + self.duplicates + self.quarantined.len()
    }
}

fn required<'a>(obj: &'a Map<String, Value>, field: &str) -> Result<&'a Value, IngestError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(violation(field, "missing")),
        Some(v) => Ok(v),
    }
}

fn required_str<'a>(obj: &'a Map<String, Value>, field: &str) -> Result<&'a str, IngestError> {
    required(obj, field)?
        .as_str()
        .ok_or_else(|| violation(field, "expected a string"))
}

/// Parses an ISO 8601 timestamp that must carry the `Z` (UTC) designator.
pub fn parse_utc(field: &str, text: &str) -> Result<Timestamp, IngestError> {
    if !text.ends_with('Z') {
        return Err(violation(field, "timestamp must be UTC with a `Z` suffix"));
    }
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| violation(field, format!("invalid ISO 8601 timestamp: {e}")))
}

/// Replaces the `{magnitude, unit}` object at `payload[key]` with its
/// canonical form. Returns whether a conversion took place.
fn normalize_field(
    payload: &mut Map<String, Value>,
    key: &str,
    expected: Dimension,
) -> Result<bool, IngestError> {
    let field = format!("payload.{key}");
    let obj = payload
        .get(key)
        .ok_or_else(|| violation(&field, "missing"))?
        .as_object()
        .ok_or_else(|| violation(&field, "expected {magnitude, unit}"))?;
    let magnitude = obj
        .get("magnitude")
        .and_then(Value::as_f64)
        .ok_or_else(|| violation(format!("{field}.magnitude"), "expected a number"))?;
    let unit = obj
        .get("unit")
        .and_then(Value::as_str)
        .ok_or_else(|| violation(format!("{field}.unit"), "expected a unit string"))?;
    let q = normalize_unit(magnitude, unit)?;
    if q.unit.dimension() != Some(expected) {
        return Err(violation(
            format!("{field}.unit"),
            format!("unit `{unit}` is not a {expected:?} unit"),
        ));
    }
    let converted = unit != q.unit.to_string();
    payload.insert(key.to_string(), serde_json::to_value(q).expect("quantity serializes"));
    Ok(converted)
}

/// Validates one raw record into a canonical-unit [`QaEvent`].
///
/// The returned event is not yet mapped to an element unless its subject is
/// an explicit element id.
pub fn validate_record(raw: &RawRecord, schema_version: &str) -> Result<QaEvent, IngestError> {
    validate_with(raw, schema_version, &IngestConfig::default()).map(|(ev, _)| ev)
}

/// As [`validate_record`], with explicit config; also returns how many unit
/// conversions were applied.
pub fn validate_with(
    raw: &RawRecord,
    schema_version: &str,
    cfg: &IngestConfig,
) -> Result<(QaEvent, usize), IngestError> {
    if schema_version != SCHEMA_V1 {
        return Err(IngestError::UnknownSchema(schema_version.to_string()));
    }
    let doc: Value = serde_json::from_str(&raw.body)
        .map_err(|e| violation("record", format!("not parseable as JSON: {e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| violation("record", "expected a JSON object"))?;

    let event_id = required_str(obj, "event_id")?;
    if event_id.trim().is_empty() {
        return Err(violation("event_id", "empty"));
    }
    let type_name = required_str(obj, "event_type")?;
    let event_type = EventType::parse(type_name)
        .ok_or_else(|| violation("event_type", format!("unknown event type `{type_name}`")))?;
    let occurred_at = parse_utc("occurred_at", required_str(obj, "occurred_at")?)?;
    let recorded_at = parse_utc("recorded_at", required_str(obj, "recorded_at")?)?;
    if recorded_at < occurred_at - Duration::minutes(cfg.clock_skew_tolerance_min) {
        return Err(violation(
            "recorded_at",
            format!(
                "precedes occurred_at by more than the {} min clock-skew tolerance",
                cfg.clock_skew_tolerance_min
            ),
        ));
    }
    let subject: SpatialRef = serde_json::from_value(required(obj, "subject")?.clone())
        .map_err(|e| violation("subject", e.to_string()))?;
    subject
        .validate()
        .map_err(|e| out_of_range("subject", e.to_string()))?;
    let source = required_str(obj, "source")?;
    let mut payload = required(obj, "payload")?
        .as_object()
        .cloned()
        .ok_or_else(|| violation("payload", "expected an object"))?;

    let mut conversions = 0;
    match event_type {
        EventType::SensorReading => {
            conversions += normalize_field(&mut payload, "temp", Dimension::Temperature)? as usize;
        }
        EventType::PlacementRecorded => {
            conversions +=
                normalize_field(&mut payload, "ambient_temp", Dimension::Temperature)? as usize;
        }
        EventType::LabResult | EventType::FieldTestResult => {
            conversions += normalize_field(&mut payload, "strength", Dimension::Stress)? as usize;
        }
        _ => {}
    }

    let payload = Payload::from_value(event_type, Value::Object(payload))
        .map_err(|e| violation("payload", e.to_string()))?;
    check_ranges(&payload)?;

    let event = QaEvent::new(event_id, occurred_at, recorded_at, subject, payload, source);
    Ok((event, conversions))
}

fn check_ranges(payload: &Payload) -> Result<(), IngestError> {
    use crate::domain::{MAX_TEMP_C, MIN_TEMP_C};
    let temp_ok = |t: f64| (MIN_TEMP_C..=MAX_TEMP_C).contains(&t);
    match payload {
        Payload::SensorReading(r) if !temp_ok(r.temp.magnitude) => Err(out_of_range(
            "payload.temp",
            format!("{} degC outside [{MIN_TEMP_C}, {MAX_TEMP_C}]", r.temp.magnitude),
        )),
        Payload::PlacementRecorded(p) => {
            if !temp_ok(p.ambient_temp.magnitude) {
                return Err(out_of_range(
                    "payload.ambient_temp",
                    format!("{} degC", p.ambient_temp.magnitude),
                ));
            }
            if p.finished_at < p.started_at {
                return Err(out_of_range("payload.finished_at", "before started_at"));
            }
            Ok(())
        }
        Payload::LabResult(r) | Payload::FieldTestResult(r) => {
            if !(0.0..=250.0).contains(&r.strength.magnitude) {
                return Err(out_of_range(
                    "payload.strength",
                    format!("{} MPa outside [0, 250]", r.strength.magnitude),
                ));
            }
            if !(r.age_days.is_finite() && r.age_days > 0.0 && r.age_days <= 3650.0) {
                return Err(out_of_range("payload.age_days", format!("{}", r.age_days)));
            }
            Ok(())
        }
        Payload::BatchTicket(b) if !(b.volume_m3.is_finite() && b.volume_m3 > 0.0) => {
            Err(out_of_range("payload.volume_m3", format!("{}", b.volume_m3)))
        }
        Payload::SpecRevision(s) => {
            let rules = RuleSet::from_value(&s.document)
                .map_err(|e| violation("payload.document", e.to_string()))?;
            if rules.version != s.ruleset_version {
                return Err(violation(
                    "payload.ruleset_version",
                    format!("does not match document version `{}`", rules.version),
                ));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Stable total order by `(occurred_at, event_id)`; flags events whose
/// arrival lagged occurrence by more than the late-arrival threshold.
pub fn align_events(mut events: Vec<QaEvent>, cfg: &IngestConfig) -> Vec<QaEvent> {
    events.sort_by(|a, b| {
        a.occurred_at
            .cmp(&b.occurred_at)
            .then_with(|| a.event_id.cmp(&b.event_id))
    });
    for ev in &mut events {
        ev.late_arrival = hours_between(ev.occurred_at, ev.recorded_at) > cfg.late_arrival_threshold_h;
    }
    events
}

/// Validates, de-duplicates, maps and aligns a batch of raw records.
///
/// Events whose id is in `known_ids` (or repeats earlier in the same batch)
/// count as duplicates and are not re-emitted.
pub fn ingest_stream(
    raws: &[RawRecord],
    graph: &ElementGraph,
    known_ids: &BTreeSet<String>,
    cfg: &IngestConfig,
) -> (Vec<QaEvent>, IngestReport) {
    let mut report = IngestReport::empty(cfg.tolerances);
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();

    for raw in raws {
        let (mut event, conversions) = match validate_with(raw, SCHEMA_V1, cfg) {
            Ok(v) => v,
            Err(e) => {
                report.quarantined.push(QuarantineEntry::new(raw, e.to_string()));
                continue;
            }
        };
        if known_ids.contains(&event.event_id) || seen.contains(&event.event_id) {
            report.duplicates += 1;
            continue;
        }
        if event.event_type != EventType::SpecRevision {
            match map_to_element(&event.subject, graph, &cfg.tolerances) {
                Ok(m) => event.element = Some(m.element),
                Err(e) => {
                    report.quarantined.push(QuarantineEntry::new(raw, e.to_string()));
                    continue;
                }
            }
        }
        seen.insert(event.event_id.clone());
        report.accepted += 1;
        report.unit_conversions += conversions;
        out.push(event);
    }

    let aligned = align_events(out, cfg);
    report.late_arrivals = aligned.iter().filter(|e| e.late_arrival).count();
    (aligned, report)
}

/// Splits a JSON Lines document into raw records, skipping blank lines.
pub fn records_from_jsonl(text: &str, source: &str, received_at: Timestamp) -> Vec<RawRecord> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| RawRecord::new(source, l, received_at))
        .collect()
}

pub fn read_jsonl_file(path: &Path, received_at: Timestamp) -> io::Result<Vec<RawRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let source = path.display().to_string();
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(RawRecord::new(source.as_str(), line, received_at));
        }
    }
    Ok(out)
}

/// Writes the quarantine sidecar: one `{record, reason}` object per line.
pub fn write_quarantine(path: &Path, report: &IngestReport) -> io::Result<()> {
    let mut file = File::create(path)?;
    for entry in &report.quarantined {
        writeln!(file, "{}", serde_json::to_string(entry)?)?;
    }
    file.sync_all()
}
