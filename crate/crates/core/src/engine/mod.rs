//! Event-sourced twin core: per-element stores, the QA state machine, stage
//! gates, human decisions and the append-only audit trail.
//!
//! [`TwinState`] is a deterministic function of the project, the initial
//! rule set and the ordered event log. Warnings and evaluations are derived
//! on demand and never stored.

mod decide;
mod eval;
mod export;
mod script;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    ElementGraph, ElementId, Payload, PlacementRecorded, QaEvent, Role, SpatialRef,
    TemperatureHistory, Timestamp,
};
use crate::learning::{recalibrate, RecalibrationPolicy, ResidualLog};
use crate::maturity::{
    calibrate, predict_strength, CalibrationPair, MaturityAccumulator, MaturityConfig, MaturityError,
    StrengthMaturityModel,
};
use crate::rules::{MeasuredStrength, RuleError, RuleSet};

pub use decide::{authorized, DecisionError};
pub use eval::{BlockingPredecessor, Evaluation, Warning, WarningKind, WhatIf, WhatIfError};
pub use export::{canonical_json, sha256_hex, ElementExport, EvidenceBundle, StateExport};
pub use script::{parse_script, script_to_jsonl, ScriptError, ScriptOutcome, ScriptedDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QaState {
    Pending,
    Provisional,
    Released,
    Hold,
    NonConformance,
}

impl fmt::Display for QaState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Automatic,
    HumanDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaStateRecord {
    pub element: ElementId,
    pub state: QaState,
    pub since: Timestamp,
    pub basis: Basis,
    pub rationale: String,
    pub ruleset_version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditOutcome {
    Applied,
    /// A human decision that was refused; state did not change.
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub at: Timestamp,
    pub actor: String,
    pub role: Role,
    pub element: ElementId,
    pub from: QaState,
    pub to: QaState,
    pub rationale: String,
    pub evidence_refs: Vec<String>,
    pub ruleset_version: String,
    pub basis: Basis,
    pub outcome: AuditOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<String>,
}

/// Calibration data for one concrete mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    /// `(maturity °C·h, strength MPa)` pairs from lab trial batches.
    pub calibration: Vec<CalibrationPair>,
}

/// Everything the twin needs besides the rule set and the events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub graph: ElementGraph,
    pub mixes: BTreeMap<String, MixSpec>,
    /// Used as the calibration date of the initial mix models.
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub maturity: MaturityConfig,
    pub recalibration: RecalibrationPolicy,
    /// Post-placement inspections count as missing only this long after
    /// placement finished.
    pub post_placement_grace_h: f64,
    /// Window of recent readings averaged into the assumed future temperature.
    pub assumed_temp_window_h: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            maturity: MaturityConfig::default(),
            recalibration: RecalibrationPolicy::default(),
            post_placement_grace_h: 48.0,
            assumed_temp_window_h: 24.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("unknown element `{0}`")]
    UnknownElement(ElementId),
    #[error("event `{0}` is not mapped to an element")]
    Unmapped(String),
    #[error("rule set revision rejected: {0}")]
    Rules(#[from] RuleError),
    #[error("mix `{mix}` could not be calibrated: {source}")]
    Calibration { mix: String, source: MaturityError },
    #[error("maturity config: {0}")]
    Config(MaturityError),
}

/// What one `apply` did.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub duplicate: bool,
    /// Result of a human decision event, if this was one.
    pub decision: Option<Result<QaStateRecord, DecisionError>>,
}

#[derive(Debug, Clone)]
pub(crate) struct MixState {
    pub base_pairs: Vec<CalibrationPair>,
    pub model: StrengthMaturityModel,
    /// Every model this mix has used, oldest first.
    pub lineage: Vec<StrengthMaturityModel>,
}

#[derive(Debug, Clone)]
pub(crate) struct Sensor {
    pub history: TemperatureHistory,
    pub acc: MaturityAccumulator,
}

#[derive(Debug, Clone)]
pub(crate) struct MeasuredRecord {
    pub value: MeasuredStrength,
    /// Maturity of the specimen when tested, if known.
    pub maturity: Option<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ElementRecord {
    pub events: Vec<Arc<QaEvent>>,
    pub inspections: Vec<Arc<QaEvent>>,
    pub placement: Option<(String, PlacementRecorded)>,
    /// batch id → mix id
    pub batches: BTreeMap<String, String>,
    pub last_mix: Option<String>,
    pub sensors: BTreeMap<String, Sensor>,
    pub measured: Vec<MeasuredRecord>,
    pub record: QaStateRecord,
    /// Placement start and the predecessors that were not Released then.
    pub gate_violation: Option<(Timestamp, Vec<BlockingPredecessor>)>,
}

impl ElementRecord {
    pub fn mix_id(&self) -> Option<&str> {
        self.placement
            .as_ref()
            .and_then(|(_, p)| self.batches.get(&p.batch_id))
            .or(self.last_mix.as_ref())
            .map(String::as_str)
    }

    /// The sensor with the least maturity: the conservative choice when an
    /// element carries several.
    pub fn governing_sensor(&self) -> Option<&Sensor> {
        self.sensors
            .values()
            .filter(|s| s.acc.samples() > 0)
            .min_by(|a, b| a.acc.maturity().total_cmp(&b.acc.maturity()))
    }
}

#[derive(Debug, Clone)]
pub struct TwinState {
    pub(crate) graph: Arc<ElementGraph>,
    pub(crate) cfg: EngineConfig,
    pub(crate) ruleset: Arc<RuleSet>,
    pub(crate) mixes: BTreeMap<String, MixState>,
    pub(crate) residuals: ResidualLog,
    pub(crate) elements: BTreeMap<ElementId, ElementRecord>,
    pub(crate) audit: Vec<AuditEntry>,
    pub(crate) seen: BTreeSet<String>,
    pub(crate) log: Vec<Arc<QaEvent>>,
    pub(crate) clock: Option<Timestamp>,
}

pub(crate) const SYSTEM_ACTOR: &str = "system";

impl TwinState {
    /// Empty twin: every element Pending, mix models calibrated from the
    /// project's trial-batch pairs.
    pub fn new(project: &Project, ruleset: RuleSet, cfg: EngineConfig) -> Result<Self, EngineError> {
        cfg.maturity.validate().map_err(EngineError::Config)?;
        let mut mixes = BTreeMap::new();
        for (mix, spec) in &project.mixes {
            let model = calibrate(&spec.calibration, None, project.created_at).map_err(|source| {
                EngineError::Calibration {
                    mix: mix.clone(),
                    source,
                }
            })?;
            mixes.insert(
                mix.clone(),
                MixState {
                    base_pairs: spec.calibration.clone(),
                    lineage: vec![model.clone()],
                    model,
                },
            );
        }
        let elements = project
            .graph
            .elements()
            .map(|e| {
                let record = QaStateRecord {
                    element: e.id.clone(),
                    state: QaState::Pending,
                    since: project.created_at,
                    basis: Basis::Automatic,
                    rationale: "initial state".into(),
                    ruleset_version: ruleset.version.clone(),
                };
                (
                    e.id.clone(),
                    ElementRecord {
                        events: Vec::new(),
                        inspections: Vec::new(),
                        placement: None,
                        batches: BTreeMap::new(),
                        last_mix: None,
                        sensors: BTreeMap::new(),
                        measured: Vec::new(),
                        record,
                        gate_violation: None,
                    },
                )
            })
            .collect();
        Ok(Self {
            graph: Arc::new(project.graph.clone()),
            cfg,
            ruleset: Arc::new(ruleset),
            mixes,
            residuals: ResidualLog::new(),
            elements,
            audit: Vec::new(),
            seen: BTreeSet::new(),
            log: Vec::new(),
            clock: None,
        })
    }

    pub fn graph(&self) -> &ElementGraph {
        &self.graph
    }

    pub fn ruleset(&self) -> &RuleSet {
        &self.ruleset
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    /// The ordered event log this state was built from.
    pub fn log(&self) -> impl Iterator<Item = &QaEvent> {
        self.log.iter().map(|e| e.as_ref())
    }

    pub fn known_ids(&self) -> &BTreeSet<String> {
        &self.seen
    }

    /// Latest `occurred_at` seen so far.
    pub fn clock(&self) -> Option<Timestamp> {
        self.clock
    }

    pub fn residuals(&self) -> &ResidualLog {
        &self.residuals
    }

    pub fn model(&self, mix_id: &str) -> Option<&StrengthMaturityModel> {
        self.mixes.get(mix_id).map(|m| &m.model)
    }

    pub fn model_lineage(&self, mix_id: &str) -> &[StrengthMaturityModel] {
        self.mixes.get(mix_id).map(|m| m.lineage.as_slice()).unwrap_or(&[])
    }

    pub fn mix_ids(&self) -> impl Iterator<Item = &str> {
        self.mixes.keys().map(String::as_str)
    }

    pub fn record(&self, id: &ElementId) -> Option<&QaStateRecord> {
        self.elements.get(id).map(|r| &r.record)
    }

    pub fn state_of(&self, id: &ElementId) -> Option<QaState> {
        self.record(id).map(|r| r.state)
    }

    pub fn element_mix(&self, id: &ElementId) -> Option<&str> {
        self.elements.get(id).and_then(ElementRecord::mix_id)
    }

    /// In-place temperature history of the governing sensor.
    pub fn temperature_history(&self, id: &ElementId) -> Option<&TemperatureHistory> {
        self.elements
            .get(id)
            .and_then(|r| r.governing_sensor())
            .map(|s| &s.history)
    }

    /// All events linked to an element, in application order.
    pub fn element_events(&self, id: &ElementId) -> Vec<&QaEvent> {
        self.elements
            .get(id)
            .map(|r| r.events.iter().map(|e| e.as_ref()).collect())
            .unwrap_or_default()
    }

    /// True iff every direct predecessor is Released.
    pub fn gate_open(&self, id: &ElementId) -> bool {
        self.blocking_predecessors(id).is_empty()
    }

    pub fn blocking_predecessors(&self, id: &ElementId) -> Vec<BlockingPredecessor> {
        let Ok(preds) = self.graph.predecessors(id) else {
            return Vec::new();
        };
        preds
            .iter()
            .filter_map(|p| {
                let state = self.elements[p].record.state;
                (state != QaState::Released).then(|| BlockingPredecessor {
                    element: p.clone(),
                    state,
                })
            })
            .collect()
    }

    /// Immutable form of [`TwinState::apply`].
    pub fn apply_event(&self, event: QaEvent) -> Result<TwinState, EngineError> {
        let mut next = self.clone();
        next.apply(event)?;
        Ok(next)
    }

    /// Applies one event in place. Duplicate ids are no-ops.
    pub fn apply(&mut self, event: QaEvent) -> Result<Applied, EngineError> {
        if self.seen.contains(&event.event_id) {
            return Ok(Applied {
                duplicate: true,
                decision: None,
            });
        }
        let at = event.occurred_at;

        if let Payload::SpecRevision(rev) = &event.payload {
            let ruleset = RuleSet::from_value(&rev.document)?;
            self.commit(event);
            self.ruleset = Arc::new(ruleset);
            self.reevaluate_all(at);
            return Ok(Applied {
                duplicate: false,
                decision: None,
            });
        }

        let id = match (&event.element, &event.subject) {
            (Some(id), _) | (None, SpatialRef::ExplicitId(id)) => id.clone(),
            _ => return Err(EngineError::Unmapped(event.event_id.clone())),
        };
        if !self.elements.contains_key(&id) {
            return Err(EngineError::UnknownElement(id));
        }
        let event = Arc::new(event);
        self.commit_arc(event.clone());
        self.elements.get_mut(&id).unwrap().events.push(event.clone());

        let mut decision = None;
        let mut recalibrated = false;
        match &event.payload {
            Payload::InspectionCompleted(_) => {
                self.elements.get_mut(&id).unwrap().inspections.push(event.clone());
            }
            Payload::BatchTicket(b) => {
                let rec = self.elements.get_mut(&id).unwrap();
                rec.batches.insert(b.batch_id.clone(), b.mix_id.clone());
                rec.last_mix = Some(b.mix_id.clone());
            }
            Payload::PlacementRecorded(p) => {
                let blocking = self.blocking_predecessors(&id);
                let rec = self.elements.get_mut(&id).unwrap();
                let replace = rec
                    .placement
                    .as_ref()
                    .is_none_or(|(_, old)| p.started_at >= old.started_at);
                if replace {
                    rec.placement = Some((event.event_id.clone(), p.clone()));
                }
                if !blocking.is_empty() {
                    rec.gate_violation = Some((p.started_at, blocking.clone()));
                    let state = rec.record.state;
                    if state != QaState::Hold && state != QaState::NonConformance {
                        let listed = blocking
                            .iter()
                            .map(|b| format!("{} ({})", b.element, b.state))
                            .collect::<Vec<_>>()
                            .join(", ");
                        self.transition(
                            &id,
                            QaState::Hold,
                            at,
                            SYSTEM_ACTOR,
                            Role::System,
                            Basis::Automatic,
                            format!("gate violation: placement started while predecessors not Released: {listed}"),
                            vec![event.event_id.clone()],
                        );
                    }
                }
            }
            Payload::SensorReading(r) => {
                let cfg = self.cfg.maturity;
                let rec = self.elements.get_mut(&id).unwrap();
                let sensor = rec.sensors.entry(r.sensor_id.clone()).or_insert_with(|| Sensor {
                    history: TemperatureHistory::empty(id.clone()),
                    acc: MaturityAccumulator::new(&cfg),
                });
                insert_reading(sensor, at, r.temp.magnitude, &cfg);
            }
            Payload::LabResult(r) | Payload::FieldTestResult(r) => {
                let value = MeasuredStrength {
                    event_id: event.event_id.clone(),
                    age_days: r.age_days,
                    strength_mpa: r.strength.magnitude,
                    cured: r.cured,
                    at,
                };
                recalibrated = self.record_measured(&id, value);
            }
            Payload::HumanDecision(d) => {
                decision = Some(self.decide_in_place(&id, d, &event));
            }
            Payload::SpecRevision(_) => unreachable!("handled above"),
        }

        if recalibrated {
            self.reevaluate_all(at);
        } else {
            self.reevaluate_from(&id, at);
        }
        Ok(Applied {
            duplicate: false,
            decision,
        })
    }

    fn commit(&mut self, event: QaEvent) {
        self.commit_arc(Arc::new(event));
    }

    fn commit_arc(&mut self, event: Arc<QaEvent>) {
        self.seen.insert(event.event_id.clone());
        self.clock = Some(self.clock.map_or(event.occurred_at, |c| c.max(event.occurred_at)));
        self.log.push(event);
    }

    /// Stores a measured result, logs its residual against the current mix
    /// model and recalibrates when the policy triggers. Returns whether the
    /// model changed.
    fn record_measured(&mut self, id: &ElementId, value: MeasuredStrength) -> bool {
        let cfg = self.cfg;
        let rec = &self.elements[id];
        let maturity = match value.cured {
            crate::domain::Cured::Lab => Some(cfg.maturity.lab_cured_maturity(value.age_days)),
            crate::domain::Cured::Field => rec.governing_sensor().and_then(|s| {
                let upto = s.history.until(value.at);
                (!upto.is_empty()).then(|| MaturityAccumulator::from_history(&upto, &cfg.maturity).maturity())
            }),
        };
        let mix = rec.mix_id().map(str::to_string);
        self.elements.get_mut(id).unwrap().measured.push(MeasuredRecord {
            value: value.clone(),
            maturity,
        });

        let (Some(mix), Some(m)) = (mix, maturity) else {
            return false;
        };
        let Some(state) = self.mixes.get_mut(&mix) else {
            return false;
        };
        let prediction = predict_strength(&state.model, m);
        self.residuals
            .record(id, &mix, &prediction, &value)
            .expect("model predictions have Predicted basis");
        match recalibrate(&state.model, &state.base_pairs, &self.residuals, &mix, &cfg.recalibration) {
            Ok((model, true)) => {
                state.lineage.push(model.clone());
                state.model = model;
                true
            }
            // a failed refit keeps the previous model
            _ => false,
        }
    }

    /// Records an applied state change. Leaving Released puts every
    /// Released descendant on Hold so no Released element ever sits behind
    /// a non-Released predecessor.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn transition(
        &mut self,
        id: &ElementId,
        to: QaState,
        at: Timestamp,
        actor: &str,
        role: Role,
        basis: Basis,
        rationale: String,
        evidence_refs: Vec<String>,
    ) {
        let from = self.elements[id].record.state;
        self.push_transition(id, from, to, at, actor, role, basis, rationale, evidence_refs);
        if from == QaState::Released && to != QaState::Released {
            for d in self.graph.descendants(id) {
                if self.elements[&d].record.state == QaState::Released {
                    self.push_transition(
                        &d,
                        QaState::Released,
                        QaState::Hold,
                        at,
                        SYSTEM_ACTOR,
                        Role::System,
                        Basis::Automatic,
                        format!("upstream element {id} left Released ({to})"),
                        Vec::new(),
                    );
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push_transition(
        &mut self,
        id: &ElementId,
        from: QaState,
        to: QaState,
        at: Timestamp,
        actor: &str,
        role: Role,
        basis: Basis,
        rationale: String,
        evidence_refs: Vec<String>,
    ) {
        let version = self.ruleset.version.clone();
        self.audit.push(AuditEntry {
            seq: self.audit.len() as u64 + 1,
            at,
            actor: actor.to_string(),
            role,
            element: id.clone(),
            from,
            to,
            rationale: rationale.clone(),
            evidence_refs,
            ruleset_version: version.clone(),
            basis,
            outcome: AuditOutcome::Applied,
            rejection: None,
        });
        self.elements.get_mut(id).unwrap().record = QaStateRecord {
            element: id.clone(),
            state: to,
            since: at,
            basis,
            rationale,
            ruleset_version: version,
        };
    }

    /// Automatic Pending ↔ Provisional moves for `id` and everything
    /// downstream of it, in topological order.
    fn reevaluate_from(&mut self, id: &ElementId, at: Timestamp) {
        self.auto_transition(id, at);
        for d in self.graph.descendants(id) {
            self.auto_transition(&d, at);
        }
    }

    fn reevaluate_all(&mut self, at: Timestamp) {
        let order: Vec<ElementId> = self.graph.topological_order().to_vec();
        for id in &order {
            self.auto_transition(id, at);
        }
    }

    fn auto_transition(&mut self, id: &ElementId, at: Timestamp) {
        let current = self.elements[id].record.state;
        if current != QaState::Pending && current != QaState::Provisional {
            return;
        }
        let eval = self.evaluate_qa_at(id, at);
        let target = if eval.recommended == QaState::Provisional {
            QaState::Provisional
        } else {
            QaState::Pending
        };
        if target != current {
            self.transition(
                id,
                target,
                at,
                SYSTEM_ACTOR,
                Role::System,
                Basis::Automatic,
                eval.rationale,
                eval.evidence_refs,
            );
        }
    }
}

/// Inserts a reading in time order; an out-of-order reading rebuilds the
/// running integral. Repeated timestamps keep the first reading.
fn insert_reading(sensor: &mut Sensor, t: Timestamp, temp_c: f64, cfg: &MaturityConfig) {
    use crate::domain::{MAX_TEMP_C, MIN_TEMP_C};
    if !(MIN_TEMP_C..=MAX_TEMP_C).contains(&temp_c) {
        return;
    }
    if sensor.acc.push(t, temp_c) {
        sensor
            .history
            .push(t, temp_c)
            .expect("validated reading appended after the last sample");
        return;
    }
    let mut samples = sensor.history.samples().to_vec();
    match samples.binary_search_by(|s| s.0.cmp(&t)) {
        Ok(_) => return,
        Err(pos) => samples.insert(pos, (t, temp_c)),
    }
    sensor.history = TemperatureHistory::new(sensor.history.element().clone(), samples)
        .expect("sorted, validated samples");
    sensor.acc = MaturityAccumulator::from_history(&sensor.history, cfg);
}

/// Folds the ordered log into a fresh twin.
pub fn replay<'a>(
    project: &Project,
    ruleset: RuleSet,
    cfg: EngineConfig,
    log: impl IntoIterator<Item = &'a QaEvent>,
) -> Result<TwinState, EngineError> {
    let mut state = TwinState::new(project, ruleset, cfg)?;
    for event in log {
        state.apply(event.clone())?;
    }
    Ok(state)
}
