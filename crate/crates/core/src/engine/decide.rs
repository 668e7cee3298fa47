use thiserror::Error;

use super::{AuditEntry, AuditOutcome, Basis, BlockingPredecessor, QaState, QaStateRecord, TwinState};
use crate::domain::{DecisionAction, ElementId, HumanDecision, Payload, QaEvent, Role, SpatialRef, Timestamp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecisionError {
    #[error("role {role} may not {action}")]
    UnauthorizedRole { role: Role, action: DecisionAction },
    #[error("a decision needs a rationale")]
    EmptyRationale,
    #[error("cannot {action} from {from}")]
    IllegalTransition { from: QaState, action: DecisionAction },
    #[error("gate blocked by {}", list(.predecessors))]
    GateBlocked { predecessors: Vec<BlockingPredecessor> },
    #[error("unknown element `{0}`")]
    UnknownElement(ElementId),
    #[error("event `{0}` was already applied")]
    DuplicateEvent(String),
}

fn list(preds: &[BlockingPredecessor]) -> String {
    preds
        .iter()
        .map(|b| format!("{} ({})", b.element, b.state))
        .collect::<Vec<_>>()
        .join(", ")
}

impl DecisionError {
    /// Short machine-readable reason.
    pub fn code(&self) -> &'static str {
        match self {
            DecisionError::UnauthorizedRole { .. } => "UnauthorizedRole",
            DecisionError::EmptyRationale => "EmptyRationale",
            DecisionError::IllegalTransition { .. } => "IllegalTransition",
            DecisionError::GateBlocked { .. } => "GateBlocked",
            DecisionError::UnknownElement(_) => "UnknownElement",
            DecisionError::DuplicateEvent(_) => "DuplicateEvent",
        }
    }
}

/// Role table: release, hold and lift_hold need an Engineer or QA manager;
/// opening and closing an NCR needs a QA manager.
pub fn authorized(role: Role, action: DecisionAction) -> bool {
    match action {
        DecisionAction::Release | DecisionAction::Hold | DecisionAction::LiftHold => {
            matches!(role, Role::Engineer | Role::QaManager)
        }
        DecisionAction::OpenNcr | DecisionAction::CloseNcr => role == Role::QaManager,
    }
}

fn target(from: QaState, action: DecisionAction, override_gate: bool) -> Option<QaState> {
    use QaState::*;
    match (action, from) {
        (DecisionAction::Release, Provisional) => Some(Released),
        (DecisionAction::Release, Pending) if override_gate => Some(Released),
        (DecisionAction::Hold, Pending | Provisional | Released) => Some(Hold),
        (DecisionAction::LiftHold, Hold) => Some(Pending),
        (DecisionAction::OpenNcr, s) if s != NonConformance => Some(NonConformance),
        (DecisionAction::CloseNcr, NonConformance) => Some(Hold),
        _ => None,
    }
}

impl TwinState {
    pub(crate) fn decide_in_place(
        &mut self,
        id: &ElementId,
        d: &HumanDecision,
        event: &QaEvent,
    ) -> Result<QaStateRecord, DecisionError> {
        let from = self.elements[id].record.state;
        let attempted = target(from, d.action, d.override_gate);
        let rationale = if d.override_gate {
            format!("override=true; {}", d.rationale.trim())
        } else {
            d.rationale.trim().to_string()
        };

        let check = || -> Result<QaState, DecisionError> {
            if !authorized(d.role, d.action) {
                return Err(DecisionError::UnauthorizedRole {
                    role: d.role,
                    action: d.action,
                });
            }
            if d.rationale.trim().is_empty() {
                return Err(DecisionError::EmptyRationale);
            }
            let to = attempted.ok_or(DecisionError::IllegalTransition {
                from,
                action: d.action,
            })?;
            if to == QaState::Released {
                // an override lifts the Provisional requirement, never the gate
                let blocking = self.blocking_predecessors(id);
                if !blocking.is_empty() {
                    return Err(DecisionError::GateBlocked { predecessors: blocking });
                }
            }
            Ok(to)
        };

        match check() {
            Ok(to) => {
                let refs = vec![event.event_id.clone()];
                self.transition(
                    id,
                    to,
                    event.occurred_at,
                    &d.actor,
                    d.role,
                    Basis::HumanDecision,
                    rationale,
                    refs,
                );
                if matches!(d.action, DecisionAction::Release | DecisionAction::LiftHold) {
                    self.elements.get_mut(id).unwrap().gate_violation = None;
                }
                Ok(self.elements[id].record.clone())
            }
            Err(err) => {
                self.audit.push(AuditEntry {
                    seq: self.audit.len() as u64 + 1,
                    at: event.occurred_at,
                    actor: d.actor.clone(),
                    role: d.role,
                    element: id.clone(),
                    from,
                    to: attempted.unwrap_or(from),
                    rationale,
                    evidence_refs: vec![event.event_id.clone()],
                    ruleset_version: self.ruleset.version.clone(),
                    basis: Basis::HumanDecision,
                    outcome: AuditOutcome::Rejected,
                    rejection: Some(err.to_string()),
                });
                Err(err)
            }
        }
    }

    /// Applies a human decision, wrapping it in an event with the given id.
    /// The decision's own result is returned; the state advances either way
    /// (a rejected attempt is still audited).
    pub fn decide(
        &mut self,
        element: &ElementId,
        decision: HumanDecision,
        event_id: impl Into<String>,
        at: Timestamp,
    ) -> Result<QaStateRecord, DecisionError> {
        if !self.elements.contains_key(element) {
            return Err(DecisionError::UnknownElement(element.clone()));
        }
        let event_id = event_id.into();
        let source = format!("decision:{}", decision.actor);
        let event = QaEvent::new(
            event_id.clone(),
            at,
            at,
            SpatialRef::ExplicitId(element.clone()),
            Payload::HumanDecision(decision),
            source,
        );
        match self.apply(event) {
            Ok(applied) => applied
                .decision
                .unwrap_or(Err(DecisionError::DuplicateEvent(event_id))),
            Err(_) => Err(DecisionError::UnknownElement(element.clone())),
        }
    }
}
