use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ElementId, Quantity, SpatialRef, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventType {
    InspectionCompleted,
    BatchTicket,
    PlacementRecorded,
    SensorReading,
    LabResult,
    FieldTestResult,
    SpecRevision,
    HumanDecision,
}

impl EventType {
    pub const ALL: [EventType; 8] = [
        EventType::InspectionCompleted,
        EventType::BatchTicket,
        EventType::PlacementRecorded,
        EventType::SensorReading,
        EventType::LabResult,
        EventType::FieldTestResult,
        EventType::SpecRevision,
        EventType::HumanDecision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::InspectionCompleted => "InspectionCompleted",
            EventType::BatchTicket => "BatchTicket",
            EventType::PlacementRecorded => "PlacementRecorded",
            EventType::SensorReading => "SensorReading",
            EventType::LabResult => "LabResult",
            EventType::FieldTestResult => "FieldTestResult",
            EventType::SpecRevision => "SpecRevision",
            EventType::HumanDecision => "HumanDecision",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InspectionPhase {
    #[serde(rename = "pre-placement")]
    PrePlacement,
    #[serde(rename = "placement")]
    Placement,
    #[serde(rename = "post-placement")]
    PostPlacement,
}

impl fmt::Display for InspectionPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InspectionPhase::PrePlacement => "pre-placement",
            InspectionPhase::Placement => "placement",
            InspectionPhase::PostPlacement => "post-placement",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InspectionOutcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cured {
    Lab,
    Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Inspector,
    Engineer,
    QaManager,
    System,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionAction {
    Release,
    Hold,
    LiftHold,
    OpenNcr,
    CloseNcr,
}

impl DecisionAction {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionAction::Release => "release",
            DecisionAction::Hold => "hold",
            DecisionAction::LiftHold => "lift_hold",
            DecisionAction::OpenNcr => "open_ncr",
            DecisionAction::CloseNcr => "close_ncr",
        }
    }
}

impl fmt::Display for DecisionAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InspectionCompleted {
    pub inspection_code: String,
    pub phase: InspectionPhase,
    pub result: InspectionOutcome,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchTicket {
    pub batch_id: String,
    pub mix_id: String,
    pub volume_m3: f64,
    pub batched_at: Timestamp,
}

/// Safety or environmental notes ride along in `observations`; they are
/// never evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementRecorded {
    pub batch_id: String,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
    pub ambient_temp: Quantity,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub observations: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorReading {
    pub sensor_id: String,
    pub temp: Quantity,
}

/// Body of both `LabResult` and `FieldTestResult` events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabResult {
    pub specimen_id: String,
    pub age_days: f64,
    pub strength: Quantity,
    pub cured: Cured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanDecision {
    pub actor: String,
    pub role: Role,
    pub action: DecisionAction,
    pub rationale: String,
    #[serde(default, rename = "override", skip_serializing_if = "std::ops::Not::not")]
    pub override_gate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecRevision {
    pub ruleset_version: String,
    pub document: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    InspectionCompleted(InspectionCompleted),
    BatchTicket(BatchTicket),
    PlacementRecorded(PlacementRecorded),
    SensorReading(SensorReading),
    LabResult(LabResult),
    FieldTestResult(LabResult),
    SpecRevision(SpecRevision),
    HumanDecision(HumanDecision),
}

impl Payload {
    pub fn event_type(&self) -> EventType {
        match self {
            Payload::InspectionCompleted(_) => EventType::InspectionCompleted,
            Payload::BatchTicket(_) => EventType::BatchTicket,
            Payload::PlacementRecorded(_) => EventType::PlacementRecorded,
            Payload::SensorReading(_) => EventType::SensorReading,
            Payload::LabResult(_) => EventType::LabResult,
            Payload::FieldTestResult(_) => EventType::FieldTestResult,
            Payload::SpecRevision(_) => EventType::SpecRevision,
            Payload::HumanDecision(_) => EventType::HumanDecision,
        }
    }

    /// Decodes a canonical payload body for the given event type.
    pub fn from_value(event_type: EventType, body: Value) -> Result<Self, serde_json::Error> {
        Ok(match event_type {
            EventType::InspectionCompleted => Payload::InspectionCompleted(serde_json::from_value(body)?),
            EventType::BatchTicket => Payload::BatchTicket(serde_json::from_value(body)?),
            EventType::PlacementRecorded => Payload::PlacementRecorded(serde_json::from_value(body)?),
            EventType::SensorReading => Payload::SensorReading(serde_json::from_value(body)?),
            EventType::LabResult => Payload::LabResult(serde_json::from_value(body)?),
            EventType::FieldTestResult => Payload::FieldTestResult(serde_json::from_value(body)?),
            EventType::SpecRevision => Payload::SpecRevision(serde_json::from_value(body)?),
            EventType::HumanDecision => Payload::HumanDecision(serde_json::from_value(body)?),
        })
    }
}

/// A timestamped, typed record in canonical units.
///
/// Two events are the same event iff their `event_id`s match. `element` is
/// filled in by spatial mapping during ingestion (absent for global events
/// such as spec revisions); `late_arrival` is set by alignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "WireEvent")]
pub struct QaEvent {
    pub event_id: String,
    pub event_type: EventType,
    pub occurred_at: Timestamp,
    pub recorded_at: Timestamp,
    pub subject: SpatialRef,
    pub payload: Payload,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<ElementId>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub late_arrival: bool,
}

impl PartialEq for QaEvent {
    fn eq(&self, other: &Self) -> bool {
        self.event_id == other.event_id
    }
}

impl Eq for QaEvent {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEvent {
    event_id: String,
    event_type: EventType,
    occurred_at: Timestamp,
    recorded_at: Timestamp,
    subject: SpatialRef,
    payload: Value,
    source: String,
    #[serde(default)]
    element: Option<ElementId>,
    #[serde(default)]
    late_arrival: bool,
}

impl TryFrom<WireEvent> for QaEvent {
    type Error = String;

    fn try_from(w: WireEvent) -> Result<Self, Self::Error> {
        let payload = Payload::from_value(w.event_type, w.payload).map_err(|e| e.to_string())?;
        Ok(QaEvent {
            event_id: w.event_id,
            event_type: w.event_type,
            occurred_at: w.occurred_at,
            recorded_at: w.recorded_at,
            subject: w.subject,
            payload,
            source: w.source,
            element: w.element,
            late_arrival: w.late_arrival,
        })
    }
}

impl QaEvent {
    pub fn new(
        event_id: impl Into<String>,
        occurred_at: Timestamp,
        recorded_at: Timestamp,
        subject: SpatialRef,
        payload: Payload,
        source: impl Into<String>,
    ) -> Self {
        let element = match &subject {
            SpatialRef::ExplicitId(id) => Some(id.clone()),
            _ => None,
        };
        QaEvent {
            event_id: event_id.into(),
            event_type: payload.event_type(),
            occurred_at,
            recorded_at,
            subject,
            payload,
            source: source.into(),
            element,
            late_arrival: false,
        }
    }

    pub fn with_element(mut self, element: ElementId) -> Self {
        self.element = Some(element);
        self
    }
}
