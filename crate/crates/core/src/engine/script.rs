//! Scripted human decisions interleaved with an event log.
//!
//! A script is JSON Lines; each line is a decision anchored to the event
//! after which it is taken. The decision is stamped with the anchor's
//! `occurred_at`, so replaying the resulting log is deterministic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EngineError, QaStateRecord, TwinState};
use crate::domain::{DecisionAction, ElementId, HumanDecision, Payload, QaEvent, Role, SpatialRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedDecision {
    pub after_event_id: String,
    pub element: ElementId,
    pub actor: String,
    pub role: Role,
    pub action: DecisionAction,
    pub rationale: String,
    #[serde(default, rename = "override", skip_serializing_if = "std::ops::Not::not")]
    pub override_gate: bool,
}

impl ScriptedDecision {
    /// The decision as an event, timed at its anchor.
    pub fn to_event(&self, anchor: &QaEvent, n: usize) -> QaEvent {
        QaEvent::new(
            format!("{}/decision-{n}", self.after_event_id),
            anchor.occurred_at,
            anchor.occurred_at,
            SpatialRef::ExplicitId(self.element.clone()),
            Payload::HumanDecision(HumanDecision {
                actor: self.actor.clone(),
                role: self.role,
                action: self.action,
                rationale: self.rationale.clone(),
                override_gate: self.override_gate,
            }),
            "decision-script",
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScriptOutcome {
    pub decision: ScriptedDecision,
    pub event_id: String,
    /// The resulting state, or the reason the decision was refused.
    pub result: Result<QaStateRecord, String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("decision anchored to unknown event `{0}`")]
    UnknownAnchor(String),
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptedDecision>, ScriptError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ScriptError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn script_to_jsonl(script: &[ScriptedDecision]) -> String {
    script
        .iter()
        .map(|d| serde_json::to_string(d).expect("decision serializes") + "\n")
        .collect()
}

impl TwinState {
    /// Applies `events` in order, taking each scripted decision right after
    /// its anchor event (in script order when several share an anchor).
    pub fn apply_with_script(
        &mut self,
        events: &[QaEvent],
        script: &[ScriptedDecision],
    ) -> Result<Vec<ScriptOutcome>, Box<dyn std::error::Error + Send + Sync>> {
        let mut by_anchor: BTreeMap<&str, Vec<&ScriptedDecision>> = BTreeMap::new();
        for d in script {
            by_anchor.entry(d.after_event_id.as_str()).or_default().push(d);
        }
        for anchor in by_anchor.keys() {
            if !events.iter().any(|e| e.event_id == *anchor) {
                return Err(ScriptError::UnknownAnchor(anchor.to_string()).into());
            }
        }
        let mut outcomes = Vec::new();
        for event in events {
            self.apply(event.clone()).map_err(Box::new)?;
            let Some(decisions) = by_anchor.get(event.event_id.as_str()) else {
                continue;
            };
            for (n, d) in decisions.iter().enumerate() {
                let ev = d.to_event(event, n + 1);
                let event_id = ev.event_id.clone();
                let applied = match self.apply(ev) {
                    Ok(a) => a,
                    Err(EngineError::UnknownElement(id)) => {
                        outcomes.push(ScriptOutcome {
                            decision: (*d).clone(),
                            event_id,
                            result: Err(format!("unknown element `{id}`")),
                        });
                        continue;
                    }
                    Err(e) => return Err(Box::new(e)),
                };
                let result = match applied.decision {
                    Some(Ok(rec)) => Ok(rec),
                    Some(Err(e)) => Err(e.to_string()),
                    None => Err("duplicate decision event".into()),
                };
                outcomes.push(ScriptOutcome {
                    decision: (*d).clone(),
                    event_id,
                    result,
                });
            }
        }
        Ok(outcomes)
    }
}
