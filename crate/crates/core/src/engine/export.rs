use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{AuditEntry, AuditOutcome, Basis, EngineError, QaState, TwinState, Warning};
use crate::domain::{ElementId, ElementKind, QaEvent, Timestamp};
use crate::maturity::StrengthPrediction;
use crate::rules::{CompletenessResult, MaterialResult};

/// Floats are rounded to this many decimals before hashing.
const FLOAT_DECIMALS: i32 = 9;

fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => {
            let x = n.as_f64().unwrap_or(0.0);
            let scale = 10f64.powi(FLOAT_DECIMALS);
            let r = (x * scale).round() / scale;
            // -0.0 and 0.0 must hash alike
            let r = if r == 0.0 { 0.0 } else { r };
            serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        // serde_json's map is ordered by key, so objects come out sorted
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        other => other,
    }
}

/// Sorted-key, fixed-precision JSON text of any serializable value.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value serializes to JSON");
    serde_json::to_string(&canonicalize(v)).expect("JSON value prints")
}

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    Sha256::digest(bytes.as_ref())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementExport {
    pub state: QaState,
    pub since: Timestamp,
    pub basis: Basis,
    pub rationale: String,
    pub gate_open: bool,
    pub warnings: Vec<Warning>,
}

/// Snapshot of the twin for reports and the HTTP API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateExport {
    pub elements: BTreeMap<ElementId, ElementExport>,
    pub audit: Vec<AuditEntry>,
    pub ruleset_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub element: ElementId,
    pub kind: ElementKind,
    pub state: QaState,
    pub ruleset_version: String,
    /// Linked events ordered by (occurred_at, event_id).
    pub events: Vec<QaEvent>,
    pub completeness: CompletenessResult,
    pub material: MaterialResult,
    pub prediction: Option<StrengthPrediction>,
    /// Every audit entry for the element, rejected attempts included.
    pub state_history: Vec<AuditEntry>,
    /// Audit seq of the decision behind the current Released state.
    pub authorizing_release_seq: Option<u64>,
    pub content_hash: String,
}

impl EvidenceBundle {
    fn hash_without_field(&self) -> String {
        let mut v = serde_json::to_value(self).expect("bundle serializes");
        v.as_object_mut().expect("bundle is an object").remove("content_hash");
        sha256_hex(canonical_json(&v))
    }

    /// True if `content_hash` matches the rest of the document.
    pub fn verify(&self) -> bool {
        self.content_hash == self.hash_without_field()
    }

    pub fn to_canonical_json(&self) -> String {
        canonical_json(self)
    }
}

impl TwinState {
    pub fn export(&self) -> StateExport {
        let warnings = self.warnings();
        let elements = self
            .elements
            .iter()
            .map(|(id, rec)| {
                (
                    id.clone(),
                    ElementExport {
                        state: rec.record.state,
                        since: rec.record.since,
                        basis: rec.record.basis,
                        rationale: rec.record.rationale.clone(),
                        gate_open: self.gate_open(id),
                        warnings: warnings.iter().filter(|w| &w.element == id).cloned().collect(),
                    },
                )
            })
            .collect();
        StateExport {
            elements,
            audit: self.audit.clone(),
            ruleset_version: self.ruleset.version.clone(),
        }
    }

    pub fn evidence_bundle(&self, id: &ElementId) -> Result<EvidenceBundle, EngineError> {
        let eval = self.evaluate_qa(id)?;
        let rec = &self.elements[id];
        let element = self.graph.element(id).expect("known element");
        let mut events: Vec<QaEvent> = rec.events.iter().map(|e| e.as_ref().clone()).collect();
        events.sort_by(|a, b| (a.occurred_at, &a.event_id).cmp(&(b.occurred_at, &b.event_id)));
        let state_history: Vec<AuditEntry> =
            self.audit.iter().filter(|a| &a.element == id).cloned().collect();
        let authorizing_release_seq = (rec.record.state == QaState::Released)
            .then(|| {
                state_history
                    .iter()
                    .rev()
                    .find(|a| a.outcome == AuditOutcome::Applied && a.to == QaState::Released)
                    .map(|a| a.seq)
            })
            .flatten();
        let mut bundle = EvidenceBundle {
            element: id.clone(),
            kind: element.kind.clone(),
            state: rec.record.state,
            ruleset_version: self.ruleset.version.clone(),
            events,
            completeness: eval.completeness,
            material: eval.material,
            prediction: eval.prediction,
            state_history,
            authorizing_release_seq,
            content_hash: String::new(),
        };
        bundle.content_hash = bundle.hash_without_field();
        Ok(bundle)
    }

    /// 64-hex digest of everything the log determines: states, audit,
    /// active rules, applied event ids, mix models and residuals.
    pub fn state_hash(&self) -> String {
        #[derive(Serialize)]
        struct ElementDigest<'a> {
            record: &'a super::QaStateRecord,
            placement: Option<&'a str>,
            inspections: Vec<&'a str>,
            measured: usize,
            sensors: BTreeMap<&'a str, (usize, f64)>,
            gate_violation: bool,
        }
        let elements: BTreeMap<&ElementId, ElementDigest> = self
            .elements
            .iter()
            .map(|(id, r)| {
                (
                    id,
                    ElementDigest {
                        record: &r.record,
                        placement: r.placement.as_ref().map(|(e, _)| e.as_str()),
                        inspections: r.inspections.iter().map(|e| e.event_id.as_str()).collect(),
                        measured: r.measured.len(),
                        sensors: r
                            .sensors
                            .iter()
                            .map(|(k, s)| (k.as_str(), (s.acc.samples(), s.acc.maturity())))
                            .collect(),
                        gate_violation: r.gate_violation.is_some(),
                    },
                )
            })
            .collect();
        let models: BTreeMap<&str, _> = self
            .mixes
            .iter()
            .map(|(k, m)| (k.as_str(), &m.lineage))
            .collect();
        let doc = serde_json::json!({
            "elements": elements,
            "audit": self.audit,
            "ruleset": self.ruleset.to_value(),
            "log": self.log.iter().map(|e| e.event_id.as_str()).collect::<Vec<_>>(),
            "models": models,
            "residuals": self.residuals.entries(),
        });
        sha256_hex(canonical_json(&doc))
    }
}
