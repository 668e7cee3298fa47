//! Core vocabulary of the twin: elements, spatial references, canonical
//! quantities, temperature histories, the element dependency graph and
//! the QA event record.

mod event;
mod graph;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use event::{
    Cured, DecisionAction, EventType, HumanDecision, InspectionCompleted, InspectionOutcome,
    InspectionPhase, LabResult, Payload, PlacementRecorded, QaEvent, Role, SensorReading,
    SpecRevision, BatchTicket,
};
pub use graph::{ElementGraph, GraphError};

/// Timestamps are always UTC.
pub type Timestamp = DateTime<Utc>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("element id must be non-empty")]
    EmptyId,
    #[error("invalid spatial reference: {0}")]
    InvalidLocation(String),
    #[error("element {0}: design strength must be positive for concrete elements")]
    InvalidDesignStrength(ElementId),
    #[error("unknown element kind `{0}`")]
    UnknownKind(String),
    #[error("non-finite quantity magnitude")]
    NonFiniteQuantity,
    #[error("temperature history: {0}")]
    InvalidHistory(String),
}

/// Project-unique element identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ElementId(String);

impl ElementId {
    pub fn new(value: impl Into<String>) -> Result<Self, DomainError> {
        let value = value.into();
        if value.trim().is_empty() {
            return Err(DomainError::EmptyId);
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ElementId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        ElementId::new(raw).map_err(serde::de::Error::custom)
    }
}

impl FromStr for ElementId {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ElementId::new(s)
    }
}

/// Construction stage of an element. `Other` kinds are written `Other:<name>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElementKind {
    DrilledShaft,
    Column,
    Cap,
    GirderOrDeckPanel,
    DeckPour,
    Other(String),
}

impl ElementKind {
    pub const STAGES: [ElementKind; 5] = [
        ElementKind::DrilledShaft,
        ElementKind::Column,
        ElementKind::Cap,
        ElementKind::GirderOrDeckPanel,
        ElementKind::DeckPour,
    ];

    pub fn is_concrete(&self) -> bool {
        !matches!(self, ElementKind::Other(_))
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementKind::DrilledShaft => f.write_str("DrilledShaft"),
            ElementKind::Column => f.write_str("Column"),
            ElementKind::Cap => f.write_str("Cap"),
            ElementKind::GirderOrDeckPanel => f.write_str("GirderOrDeckPanel"),
            ElementKind::DeckPour => f.write_str("DeckPour"),
            ElementKind::Other(name) => write!(f, "Other:{name}"),
        }
    }
}

impl FromStr for ElementKind {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "DrilledShaft" => Ok(ElementKind::DrilledShaft),
            "Column" => Ok(ElementKind::Column),
            "Cap" => Ok(ElementKind::Cap),
            "GirderOrDeckPanel" => Ok(ElementKind::GirderOrDeckPanel),
            "DeckPour" => Ok(ElementKind::DeckPour),
            other => match other.strip_prefix("Other:") {
                Some(name) if !name.is_empty() => Ok(ElementKind::Other(name.to_string())),
                _ => Err(DomainError::UnknownKind(other.to_string())),
            },
        }
    }
}

impl Serialize for ElementKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ElementKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Where a record or element sits. Serialized as an object with exactly one
/// of `element_id`, `station_offset` or `gps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum SpatialRef {
    #[serde(rename = "element_id")]
    ExplicitId(ElementId),
    #[serde(rename = "station_offset")]
    StationOffset { station_m: f64, offset_m: f64 },
    #[serde(rename = "gps")]
    Gps { lat: f64, lon: f64 },
}

impl SpatialRef {
    pub fn validate(&self) -> Result<(), DomainError> {
        match *self {
            SpatialRef::ExplicitId(_) => Ok(()),
            SpatialRef::StationOffset {
                station_m,
                offset_m,
            } => {
                if !station_m.is_finite() || !offset_m.is_finite() {
                    return Err(DomainError::InvalidLocation("non-finite station/offset".into()));
                }
                if station_m < 0.0 {
                    return Err(DomainError::InvalidLocation(format!(
                        "station {station_m} m is negative"
                    )));
                }
                Ok(())
            }
            SpatialRef::Gps { lat, lon } => {
                if !(-90.0..=90.0).contains(&lat) {
                    return Err(DomainError::InvalidLocation(format!("latitude {lat} out of range")));
                }
                if !(-180.0..=180.0).contains(&lon) {
                    return Err(DomainError::InvalidLocation(format!(
                        "longitude {lon} out of range"
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: ElementId,
    pub kind: ElementKind,
    pub location: SpatialRef,
    pub planned_placement: Timestamp,
    pub design_strength_mpa: f64,
}

impl Element {
    pub fn validate(&self) -> Result<(), DomainError> {
        self.location.validate()?;
        if self.kind.is_concrete()
            && !(self.design_strength_mpa.is_finite() && self.design_strength_mpa > 0.0)
        {
            return Err(DomainError::InvalidDesignStrength(self.id.clone()));
        }
        Ok(())
    }
}

/// Canonical units. Everything downstream of ingestion uses only these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "degC")]
    DegC,
    #[serde(rename = "MPa")]
    MPa,
    #[serde(rename = "m")]
    Meter,
    #[serde(rename = "h")]
    Hour,
    #[serde(rename = "degC_hour")]
    DegCHour,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::DegC => "degC",
            Unit::MPa => "MPa",
            Unit::Meter => "m",
            Unit::Hour => "h",
            Unit::DegCHour => "degC_hour",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub magnitude: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(magnitude: f64, unit: Unit) -> Result<Self, DomainError> {
        if !magnitude.is_finite() {
            return Err(DomainError::NonFiniteQuantity);
        }
        Ok(Self { magnitude, unit })
    }

    pub fn mpa(magnitude: f64) -> Self {
        Self {
            magnitude,
            unit: Unit::MPa,
        }
    }

    pub fn deg_c(magnitude: f64) -> Self {
        Self {
            magnitude,
            unit: Unit::DegC,
        }
    }
}

pub const MIN_TEMP_C: f64 = -50.0;
pub const MAX_TEMP_C: f64 = 100.0;

/// Ordered temperature samples for one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureHistory {
    element: ElementId,
    samples: Vec<(Timestamp, f64)>,
}

impl TemperatureHistory {
    pub fn new(element: ElementId, samples: Vec<(Timestamp, f64)>) -> Result<Self, DomainError> {
        for window in samples.windows(2) {
            if window[1].0 <= window[0].0 {
                return Err(DomainError::InvalidHistory(format!(
                    "timestamps not strictly increasing at {}",
                    window[1].0
                )));
            }
        }
        for &(t, temp) in &samples {
            if !temp.is_finite() || !(MIN_TEMP_C..=MAX_TEMP_C).contains(&temp) {
                return Err(DomainError::InvalidHistory(format!(
                    "temperature {temp} degC at {t} outside [{MIN_TEMP_C}, {MAX_TEMP_C}]"
                )));
            }
        }
        Ok(Self { element, samples })
    }

    pub fn empty(element: ElementId) -> Self {
        Self {
            element,
            samples: Vec::new(),
        }
    }

    pub fn element(&self) -> &ElementId {
        &self.element
    }

    pub fn samples(&self) -> &[(Timestamp, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_time(&self) -> Option<Timestamp> {
        self.samples.first().map(|s| s.0)
    }

    pub fn last_time(&self) -> Option<Timestamp> {
        self.samples.last().map(|s| s.0)
    }

    /// Appends a sample after the current last one.
    pub fn push(&mut self, t: Timestamp, temp_c: f64) -> Result<(), DomainError> {
        if let Some(last) = self.last_time() {
            if t <= last {
                return Err(DomainError::InvalidHistory(format!(
                    "sample at {t} does not follow {last}"
                )));
            }
        }
        if !temp_c.is_finite() || !(MIN_TEMP_C..=MAX_TEMP_C).contains(&temp_c) {
            return Err(DomainError::InvalidHistory(format!(
                "temperature {temp_c} degC outside [{MIN_TEMP_C}, {MAX_TEMP_C}]"
            )));
        }
        self.samples.push((t, temp_c));
        Ok(())
    }

    /// History truncated to samples at or before `t`.
    pub fn until(&self, t: Timestamp) -> Self {
        Self {
            element: self.element.clone(),
            samples: self.samples.iter().copied().filter(|s| s.0 <= t).collect(),
        }
    }
}

/// Hours between two instants, as a real number.
pub fn hours_between(from: Timestamp, to: Timestamp) -> f64 {
    (to - from).num_milliseconds() as f64 / 3_600_000.0
}

/// `t` advanced by a fractional number of hours (millisecond resolution).
pub fn add_hours(t: Timestamp, hours: f64) -> Timestamp {
    t + chrono::Duration::milliseconds((hours * 3_600_000.0).round() as i64)
}
