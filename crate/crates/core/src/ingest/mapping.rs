use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ElementGraph, ElementId, SpatialRef};

/// Mean Earth radius (IUGG), meters.
const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingTolerances {
    pub station_m: f64,
    pub offset_m: f64,
    pub gps_m: f64,
}

impl Default for MappingTolerances {
    fn default() -> Self {
        Self {
            station_m: 5.0,
            offset_m: 3.0,
            gps_m: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MappingMethod {
    ExplicitId,
    StationOffset,
    Gps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MappingConfidence {
    Exact,
    Proximate,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingResult {
    pub element: ElementId,
    pub method: MappingMethod,
    pub confidence: MappingConfidence,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MappingError {
    #[error("no element matches the record location")]
    NoMatch,
    #[error("ambiguous location: {} candidate elements", .0.len())]
    AmbiguousMatch(Vec<ElementId>),
}

/// Haversine distance in meters.
pub fn great_circle_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// Resolves a record location to exactly one element.
///
/// Explicit ids must name an element. Station/offset and GPS locations are
/// matched against elements located in the same reference system; a match
/// needs exactly one element inside the tolerance window. Two or more
/// candidates are reported as [`MappingError::AmbiguousMatch`] and never
/// committed.
pub fn map_to_element(
    subject: &SpatialRef,
    graph: &ElementGraph,
    tol: &MappingTolerances,
) -> Result<MappingResult, MappingError> {
    let (method, candidates): (MappingMethod, Vec<ElementId>) = match *subject {
        SpatialRef::ExplicitId(ref id) => {
            return if graph.contains(id) {
                Ok(MappingResult {
                    element: id.clone(),
                    method: MappingMethod::ExplicitId,
                    confidence: MappingConfidence::Exact,
                })
            } else {
                Err(MappingError::NoMatch)
            };
        }
        SpatialRef::StationOffset {
            station_m,
            offset_m,
        } => (
            MappingMethod::StationOffset,
            graph
                .elements()
                .filter(|e| match e.location {
                    SpatialRef::StationOffset {
                        station_m: s,
                        offset_m: o,
                    } => (s - station_m).abs() <= tol.station_m && (o - offset_m).abs() <= tol.offset_m,
                    _ => false,
                })
                .map(|e| e.id.clone())
                .collect(),
        ),
        SpatialRef::Gps { lat, lon } => (
            MappingMethod::Gps,
            graph
                .elements()
                .filter(|e| match e.location {
                    SpatialRef::Gps { lat: a, lon: b } => great_circle_m(lat, lon, a, b) <= tol.gps_m,
                    _ => false,
                })
                .map(|e| e.id.clone())
                .collect(),
        ),
    };
    match candidates.len() {
        0 => Err(MappingError::NoMatch),
        1 => Ok(MappingResult {
            element: candidates.into_iter().next().unwrap(),
            method,
            confidence: MappingConfidence::Proximate,
        }),
        _ => Err(MappingError::AmbiguousMatch(candidates)),
    }
}
