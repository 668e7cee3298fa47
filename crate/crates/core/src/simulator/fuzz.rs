use rand::seq::SliceRandom;
use rand::Rng;

use crate::domain::{
    add_hours, BatchTicket, Cured, DecisionAction, ElementGraph, HumanDecision, InspectionCompleted,
    InspectionOutcome, InspectionPhase, LabResult, Payload, PlacementRecorded, Quantity, QaEvent,
    Role, SensorReading, SpatialRef, Timestamp,
};
use crate::rules::RuleSet;

/// `len` random, already-mapped events over `graph`, in time order.
///
/// The mix is weighted toward the events that move QA state: inspections
/// (passing and failing, against the rule set's required codes), batches,
/// placements, strength results around the acceptance limit, sensor readings
/// and human decisions with every role, action and override setting.
pub fn random_event_sequence<R: Rng>(
    rng: &mut R,
    graph: &ElementGraph,
    rules: &RuleSet,
    start: Timestamp,
    len: usize,
) -> Vec<QaEvent> {
    let ids: Vec<_> = graph.ids().cloned().collect();
    let mut t = start;
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        t = add_hours(t, rng.gen_range(0.25..12.0));
        let id = ids.choose(rng).expect("graph has elements").clone();
        let element = graph.element(&id).expect("known");
        let kind_rules = rules.for_kind(&element.kind);
        let payload = match rng.gen_range(0..100) {
            0..=24 => {
                let (code, phase) = kind_rules
                    .and_then(|r| r.required_inspections.choose(rng))
                    .map(|r| (r.code.clone(), r.phase))
                    .unwrap_or(("GENERAL".into(), InspectionPhase::PrePlacement));
                Payload::InspectionCompleted(InspectionCompleted {
                    inspection_code: code,
                    phase,
                    result: if rng.gen_bool(0.85) {
                        InspectionOutcome::Pass
                    } else {
                        InspectionOutcome::Fail
                    },
                    notes: String::new(),
                })
            }
            25..=32 => Payload::BatchTicket(BatchTicket {
                batch_id: format!("B-{id}"),
                mix_id: "MIX".into(),
                volume_m3: 10.0,
                batched_at: t,
            }),
            33..=44 => Payload::PlacementRecorded(PlacementRecorded {
                batch_id: format!("B-{id}"),
                started_at: t,
                finished_at: add_hours(t, 3.0),
                ambient_temp: Quantity::deg_c(20.0),
                observations: Default::default(),
            }),
            45..=54 => {
                let limit = kind_rules.map_or(30.0, |r| r.acceptance.limit_mpa);
                let age = *[1.0, 7.0, 28.0].choose(rng).expect("non-empty");
                let body = LabResult {
                    specimen_id: format!("C{i}"),
                    age_days: age,
                    strength: Quantity::mpa(limit * rng.gen_range(0.5..1.3)),
                    cured: if age < 7.0 { Cured::Field } else { Cured::Lab },
                };
                if age < 7.0 {
                    Payload::FieldTestResult(body)
                } else {
                    Payload::LabResult(body)
                }
            }
            55..=64 => Payload::SensorReading(SensorReading {
                sensor_id: format!("T-{id}"),
                temp: Quantity::deg_c(rng.gen_range(5.0..35.0)),
            }),
            _ => {
                let action = *[
                    DecisionAction::Release,
                    DecisionAction::Release,
                    DecisionAction::Hold,
                    DecisionAction::LiftHold,
                    DecisionAction::OpenNcr,
                    DecisionAction::CloseNcr,
                ]
                .choose(rng)
                .expect("non-empty");
                let role = *[Role::Inspector, Role::Engineer, Role::QaManager, Role::System]
                    .choose(rng)
                    .expect("non-empty");
                Payload::HumanDecision(HumanDecision {
                    actor: "fuzz".into(),
                    role,
                    action,
                    rationale: if rng.gen_bool(0.95) { "fuzzed".into() } else { String::new() },
                    override_gate: rng.gen_bool(0.3),
                })
            }
        };
        out.push(QaEvent::new(
            format!("fz-{i}"),
            t,
            t,
            SpatialRef::ExplicitId(id),
            payload,
            "fuzz",
        ));
    }
    out
}
