//! Versioned, declarative specification requirements and their evaluation.
//!
//! A [`RuleSet`] is a JSON document keyed by element kind. Every evaluation
//! result carries the version of the rule set that produced it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{
    Cured, Element, ElementKind, InspectionOutcome, InspectionPhase, Payload, PlacementRecorded,
    QaEvent, Timestamp,
};
use crate::maturity::StrengthPrediction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleError {
    #[error("ruleset parse error at `{path}`: {message}")]
    ParseError { path: String, message: String },
    #[error("invalid threshold `{0}`")]
    InvalidThreshold(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrengthProperty {
    CompressiveStrength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequiredInspection {
    pub code: String,
    pub phase: InspectionPhase,
    pub hold_point: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acceptance {
    pub property: StrengthProperty,
    pub limit_mpa: f64,
    pub age_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindRules {
    pub required_inspections: Vec<RequiredInspection>,
    pub acceptance: Acceptance,
    /// Fraction of design strength needed before dependent work proceeds.
    pub readiness_threshold: f64,
    /// Specimens per placement.
    pub testing_frequency: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleSet {
    pub version: String,
    pub rules: BTreeMap<ElementKind, KindRules>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSetDoc {
    version: String,
    rules: BTreeMap<String, KindRules>,
}

impl<'de> Deserialize<'de> for RuleSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = RuleSetDoc::deserialize(deserializer)?;
        RuleSet::from_doc(doc).map_err(serde::de::Error::custom)
    }
}

/// Parses and validates a rule set document.
pub fn parse_ruleset(document: &str) -> Result<RuleSet, RuleError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let doc: RuleSetDoc = serde_path_to_error::deserialize(de).map_err(|e| RuleError::ParseError {
        path: display_path(e.path()),
        message: e.inner().to_string(),
    })?;
    RuleSet::from_doc(doc)
}

fn display_path(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s == "." {
        "$".to_string()
    } else {
        s
    }
}

impl RuleSet {
    pub fn from_value(document: &Value) -> Result<RuleSet, RuleError> {
        let doc: RuleSetDoc =
            serde_path_to_error::deserialize(document).map_err(|e| RuleError::ParseError {
                path: display_path(e.path()),
                message: e.inner().to_string(),
            })?;
        RuleSet::from_doc(doc)
    }

    fn from_doc(doc: RuleSetDoc) -> Result<RuleSet, RuleError> {
        if doc.version.trim().is_empty() {
            return Err(RuleError::ParseError {
                path: "version".into(),
                message: "empty version".into(),
            });
        }
        let mut rules = BTreeMap::new();
        for (name, kind_rules) in doc.rules {
            let kind: ElementKind = name.parse().map_err(|_| RuleError::ParseError {
                path: format!("rules.{name}"),
                message: format!("unknown element kind `{name}`"),
            })?;
            let at = |field: &str| format!("rules.{name}.{field}");
            let r = &kind_rules;
            if !(r.readiness_threshold > 0.0 && r.readiness_threshold <= 1.0) {
                return Err(RuleError::InvalidThreshold(at("readiness_threshold")));
            }
            if !(r.acceptance.limit_mpa.is_finite() && r.acceptance.limit_mpa > 0.0) {
                return Err(RuleError::InvalidThreshold(at("acceptance.limit_mpa")));
            }
            if !(r.acceptance.age_days.is_finite() && r.acceptance.age_days > 0.0) {
                return Err(RuleError::InvalidThreshold(at("acceptance.age_days")));
            }
            if r.testing_frequency < 1 {
                return Err(RuleError::InvalidThreshold(at("testing_frequency")));
            }
            for (i, req) in r.required_inspections.iter().enumerate() {
                if req.code.trim().is_empty() {
                    return Err(RuleError::ParseError {
                        path: at(&format!("required_inspections[{i}].code")),
                        message: "empty inspection code".into(),
                    });
                }
            }
            rules.insert(kind, kind_rules);
        }
        Ok(RuleSet {
            version: doc.version,
            rules,
        })
    }

    pub fn for_kind(&self, kind: &ElementKind) -> Option<&KindRules> {
        self.rules.get(kind)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("ruleset serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MissingInspection {
    pub code: String,
    pub phase: InspectionPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessResult {
    pub satisfied: bool,
    pub missing: Vec<MissingInspection>,
    pub failed: Vec<String>,
    pub out_of_sequence: Vec<String>,
    pub ruleset_version: String,
}

/// Checks required inspections for one element.
///
/// For each `(code, phase)` the most recent record wins, so a passing
/// re-inspection supersedes an earlier failure. A pre-placement inspection
/// whose passing records all postdate the placement start is reported as
/// out of sequence.
pub fn evaluate_completeness<'a>(
    element: &Element,
    rules: &RuleSet,
    inspections: impl IntoIterator<Item = &'a QaEvent>,
    placement: Option<&PlacementRecorded>,
) -> CompletenessResult {
    struct Observed {
        latest: (Timestamp, String, InspectionOutcome),
        earliest_pass: Option<Timestamp>,
    }
    let mut observed: BTreeMap<(String, InspectionPhase), Observed> = BTreeMap::new();
    for ev in inspections {
        let Payload::InspectionCompleted(body) = &ev.payload else {
            continue;
        };
        let key = (body.inspection_code.clone(), body.phase);
        let stamp = (ev.occurred_at, ev.event_id.clone(), body.result);
        let entry = observed.entry(key).or_insert_with(|| Observed {
            latest: stamp.clone(),
            earliest_pass: None,
        });
        if (stamp.0, &stamp.1) > (entry.latest.0, &entry.latest.1) {
            entry.latest = stamp.clone();
        }
        if body.result == InspectionOutcome::Pass {
            entry.earliest_pass = Some(match entry.earliest_pass {
                Some(t) => t.min(ev.occurred_at),
                None => ev.occurred_at,
            });
        }
    }

    let required: &[RequiredInspection] = rules
        .for_kind(&element.kind)
        .map(|r| r.required_inspections.as_slice())
        .unwrap_or(&[]);

    let passed = |key: &(String, InspectionPhase)| {
        observed
            .get(key)
            .is_some_and(|o| o.latest.2 == InspectionOutcome::Pass)
    };

    let mut missing: Vec<MissingInspection> = required
        .iter()
        .filter(|r| !passed(&(r.code.clone(), r.phase)))
        .map(|r| MissingInspection {
            code: r.code.clone(),
            phase: r.phase,
        })
        .collect();
    missing.sort();
    missing.dedup();

    let mut failed: Vec<String> = observed
        .iter()
        .filter(|(_, o)| o.latest.2 == InspectionOutcome::Fail)
        .map(|((code, _), _)| code.clone())
        .collect();
    failed.dedup();

    let mut out_of_sequence = Vec::new();
    if let Some(p) = placement {
        for ((code, phase), o) in &observed {
            if *phase == InspectionPhase::PrePlacement
                && o.latest.2 == InspectionOutcome::Pass
                && o.earliest_pass.is_some_and(|t| t > p.started_at)
            {
                out_of_sequence.push(code.clone());
            }
        }
    }

    CompletenessResult {
        satisfied: missing.is_empty() && failed.is_empty() && out_of_sequence.is_empty(),
        missing,
        failed,
        out_of_sequence,
        ruleset_version: rules.version.clone(),
    }
}

/// A measured compressive strength from a lab or field specimen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredStrength {
    pub event_id: String,
    pub age_days: f64,
    pub strength_mpa: f64,
    pub cured: Cured,
    pub at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaterialStatus {
    CompliantMeasured,
    TrendingCompliant,
    TrendingDeficient,
    DeficientMeasured,
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "snake_case")]
pub enum MaterialEvidence {
    Measured {
        event_ids: Vec<String>,
        strengths_mpa: Vec<f64>,
        mean_mpa: f64,
        limit_mpa: f64,
    },
    Predicted {
        prediction: StrengthPrediction,
        readiness_limit_mpa: f64,
    },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialResult {
    pub status: MaterialStatus,
    pub evidence: MaterialEvidence,
    pub ruleset_version: String,
}

/// Classifies material compliance for one element.
///
/// Results at or past the acceptance age decide on their own (mean of
/// specimens against the limit). Otherwise the prediction band is compared
/// with the readiness limit, `readiness_threshold × design strength`.
pub fn evaluate_material(
    element: &Element,
    rules: &RuleSet,
    prediction: Option<&StrengthPrediction>,
    measured: &[MeasuredStrength],
) -> MaterialResult {
    let result = |status, evidence| MaterialResult {
        status,
        evidence,
        ruleset_version: rules.version.clone(),
    };
    let Some(kind_rules) = rules.for_kind(&element.kind) else {
        return result(MaterialStatus::InsufficientData, MaterialEvidence::None);
    };

    let qualifying: Vec<&MeasuredStrength> = measured
        .iter()
        .filter(|m| m.age_days >= kind_rules.acceptance.age_days)
        .collect();
    if !qualifying.is_empty() {
        let mean = qualifying.iter().map(|m| m.strength_mpa).sum::<f64>() / qualifying.len() as f64;
        let limit = kind_rules.acceptance.limit_mpa;
        let status = if mean >= limit {
            MaterialStatus::CompliantMeasured
        } else {
            MaterialStatus::DeficientMeasured
        };
        return result(
            status,
            MaterialEvidence::Measured {
                event_ids: qualifying.iter().map(|m| m.event_id.clone()).collect(),
                strengths_mpa: qualifying.iter().map(|m| m.strength_mpa).collect(),
                mean_mpa: mean,
                limit_mpa: limit,
            },
        );
    }

    let Some(p) = prediction else {
        return result(MaterialStatus::InsufficientData, MaterialEvidence::None);
    };
    let readiness = kind_rules.readiness_threshold * element.design_strength_mpa;
    let status = if p.lower_mpa >= readiness {
        MaterialStatus::TrendingCompliant
    } else if p.upper_mpa < readiness {
        MaterialStatus::TrendingDeficient
    } else {
        MaterialStatus::InsufficientData
    };
    result(
        status,
        MaterialEvidence::Predicted {
            prediction: p.clone(),
            readiness_limit_mpa: readiness,
        },
    )
}

#[cfg(test)]
pub(crate) mod tests;
