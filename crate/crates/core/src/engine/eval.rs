use serde::{Deserialize, Serialize};

use super::{ElementRecord, EngineError, QaState, Sensor, TwinState};
use crate::domain::{add_hours, hours_between, ElementId, InspectionPhase, Timestamp};
use crate::maturity::{forecast_readiness, Forecast, StrengthMaturityModel, StrengthPrediction};
use crate::rules::{
    evaluate_completeness, evaluate_material, CompletenessResult, MaterialEvidence, MaterialResult,
    MaterialStatus, MeasuredStrength,
};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockingPredecessor {
    pub element: ElementId,
    pub state: QaState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WarningKind {
    StrengthLag,
    MissingInspection,
    GateViolation,
    LateEvidenceConflict,
    PartialData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub kind: WarningKind,
    pub element: ElementId,
    pub detail: String,
    pub raised_at: Timestamp,
}

/// Derived QA assessment of one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub element: ElementId,
    pub state: QaState,
    pub recommended: QaState,
    pub rationale: String,
    pub completeness: CompletenessResult,
    pub material: MaterialResult,
    /// Current in-place strength estimate, adjusted by early measured anchors.
    pub prediction: Option<StrengthPrediction>,
    /// measured ÷ predicted, averaged over early-age results; 1 without any.
    pub anchor_factor: f64,
    pub maturity_degc_h: Option<f64>,
    pub mix_id: Option<String>,
    pub placed: bool,
    pub gate_open: bool,
    pub blocking: Vec<BlockingPredecessor>,
    pub evidence_refs: Vec<String>,
    pub ruleset_version: String,
    pub warnings: Vec<Warning>,
}

/// In-place strength picture of one element under its mix model.
struct StrengthView<'a> {
    model: &'a StrengthMaturityModel,
    sensor: &'a Sensor,
    factor: f64,
}

impl StrengthView<'_> {
    fn predict(&self, maturity: f64) -> StrengthPrediction {
        StrengthPrediction::band(
            self.factor * self.model.strength_at(maturity.max(0.0)),
            self.model.residual_se_mpa,
            maturity.max(0.0),
        )
    }

    fn maturity_now(&self) -> f64 {
        self.sensor.acc.maturity()
    }

    /// Mean of the readings in the trailing window before the last sample.
    fn assumed_temp(&self, window_h: f64) -> f64 {
        let samples = self.sensor.history.samples();
        let last = samples.last().expect("governing sensor has samples").0;
        let recent: Vec<f64> = samples
            .iter()
            .rev()
            .take_while(|s| hours_between(s.0, last) <= window_h)
            .map(|s| s.1)
            .collect();
        recent.iter().sum::<f64>() / recent.len() as f64
    }

    /// Maturity projected to `t` at the assumed temperature.
    fn maturity_at(&self, t: Timestamp, window_h: f64, datum: f64) -> f64 {
        let last = self.sensor.acc.last_sample().expect("samples").0;
        let ahead = hours_between(last, t).max(0.0);
        self.maturity_now() + (self.assumed_temp(window_h) - datum).max(0.0) * ahead
    }
}

impl TwinState {
    fn strength_view<'a>(&'a self, rec: &'a ElementRecord) -> Option<StrengthView<'a>> {
        let model = &self.mixes.get(rec.mix_id()?)?.model;
        let sensor = rec.governing_sensor()?;
        Some(StrengthView {
            model,
            sensor,
            factor: self.anchor_factor(rec, model),
        })
    }

    /// Early-age results (before the acceptance age) scale the model's
    /// prediction for this element by the mean measured/predicted ratio.
    fn anchor_factor(&self, rec: &ElementRecord, model: &StrengthMaturityModel) -> f64 {
        let element = self.graph.element(&rec.record.element).expect("known element");
        let Some(rules) = self.ruleset.for_kind(&element.kind) else {
            return 1.0;
        };
        let ratios: Vec<f64> = rec
            .measured
            .iter()
            .filter(|m| m.value.age_days < rules.acceptance.age_days)
            .filter_map(|m| {
                let predicted = model.strength_at(m.maturity?);
                (predicted > 0.5).then(|| m.value.strength_mpa / predicted)
            })
            .collect();
        if ratios.is_empty() {
            1.0
        } else {
            ratios.iter().sum::<f64>() / ratios.len() as f64
        }
    }

    /// When the element's strength is needed: the earliest planned start of
    /// a successor, or for a terminal element its acceptance age.
    fn needed_by(&self, rec: &ElementRecord) -> Option<Timestamp> {
        let id = &rec.record.element;
        let succ = self.graph.successors(id).ok()?;
        if let Some(t) = succ
            .iter()
            .filter_map(|s| self.graph.element(s))
            .map(|e| e.planned_placement)
            .min()
        {
            return Some(t);
        }
        let element = self.graph.element(id)?;
        let rules = self.ruleset.for_kind(&element.kind)?;
        let start = rec
            .placement
            .as_ref()
            .map_or(element.planned_placement, |(_, p)| p.started_at);
        Some(add_hours(start, rules.acceptance.age_days * 24.0))
    }

    fn successor_planned(&self, id: &ElementId) -> Option<Timestamp> {
        self.graph
            .successors(id)
            .ok()?
            .iter()
            .filter_map(|s| self.graph.element(s))
            .map(|e| e.planned_placement)
            .min()
    }

    /// Material status with a forward look: a current band below the
    /// readiness limit is only `TrendingDeficient` if the band projected to
    /// the need date is still below it; otherwise the element is simply
    /// still curing.
    fn material_for(
        &self,
        rec: &ElementRecord,
        view: Option<&StrengthView<'_>>,
    ) -> (MaterialResult, Option<StrengthPrediction>) {
        let element = self.graph.element(&rec.record.element).expect("known element");
        let measured: Vec<MeasuredStrength> = rec.measured.iter().map(|m| m.value.clone()).collect();
        let current = view.map(|v| v.predict(v.maturity_now()));
        let result = evaluate_material(element, &self.ruleset, current.as_ref(), &measured);
        if result.status != MaterialStatus::TrendingDeficient {
            return (result, current);
        }
        let (Some(v), Some(need)) = (view, self.needed_by(rec)) else {
            return (result, current);
        };
        let projected = v.predict(v.maturity_at(
            need,
            self.cfg.assumed_temp_window_h,
            self.cfg.maturity.datum_temp_c,
        ));
        let ahead = evaluate_material(element, &self.ruleset, Some(&projected), &measured);
        if ahead.status == MaterialStatus::TrendingDeficient {
            (ahead, current)
        } else {
            (
                MaterialResult {
                    status: MaterialStatus::InsufficientData,
                    evidence: result.evidence,
                    ruleset_version: result.ruleset_version,
                },
                current,
            )
        }
    }

    /// Assessment of `id` as of the state's clock, with warnings.
    pub fn evaluate_qa(&self, id: &ElementId) -> Result<Evaluation, EngineError> {
        if !self.elements.contains_key(id) {
            return Err(EngineError::UnknownElement(id.clone()));
        }
        let now = self.clock.unwrap_or_else(|| self.elements[id].record.since);
        let mut eval = self.evaluate_qa_at(id, now);
        eval.warnings = self.element_warnings(id, now);
        Ok(eval)
    }

    pub(crate) fn evaluate_qa_at(&self, id: &ElementId, _at: Timestamp) -> Evaluation {
        let rec = &self.elements[id];
        let element = self.graph.element(id).expect("known element");
        let placement = rec.placement.as_ref().map(|(_, p)| p);
        let completeness = evaluate_completeness(
            element,
            &self.ruleset,
            rec.inspections.iter().map(|e| e.as_ref()),
            placement,
        );
        let view = self.strength_view(rec);
        let (material, prediction) = self.material_for(rec, view.as_ref());
        let blocking = self.blocking_predecessors(id);
        let gate_open = blocking.is_empty();
        let placed = placement.is_some();
        let state = rec.record.state;

        let material_ok = !element.kind.is_concrete()
            || matches!(
                material.status,
                MaterialStatus::TrendingCompliant | MaterialStatus::CompliantMeasured
            );
        let mut hold_reasons = Vec::new();
        if !completeness.failed.is_empty() {
            hold_reasons.push(format!("failed inspections: {}", completeness.failed.join(", ")));
        }
        match material.status {
            MaterialStatus::TrendingDeficient => hold_reasons.push("material trending deficient".into()),
            MaterialStatus::DeficientMeasured => hold_reasons.push("measured strength below acceptance limit".into()),
            _ => {}
        }

        let mut why = vec![
            if completeness.satisfied {
                "inspections complete".to_string()
            } else {
                describe_incomplete(&completeness)
            },
            describe_material(&material),
            if gate_open {
                "gate open".to_string()
            } else {
                format!(
                    "gate closed by {}",
                    blocking
                        .iter()
                        .map(|b| format!("{} ({})", b.element, b.state))
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            },
        ];
        if !placed {
            why.push("not yet placed".into());
        }

        let recommended = match state {
            QaState::Released if material.status == MaterialStatus::DeficientMeasured => {
                why.insert(0, "late evidence conflicts with release; non-conformance review recommended".into());
                QaState::NonConformance
            }
            QaState::Released | QaState::NonConformance | QaState::Hold => state,
            QaState::Pending | QaState::Provisional => {
                if !hold_reasons.is_empty() {
                    why.insert(0, format!("hold recommended: {}", hold_reasons.join("; ")));
                    QaState::Hold
                } else if placed && completeness.satisfied && material_ok && gate_open {
                    QaState::Provisional
                } else {
                    QaState::Pending
                }
            }
        };

        let mut evidence_refs: Vec<String> = rec
            .placement
            .iter()
            .map(|(id, _)| id.clone())
            .chain(rec.inspections.iter().map(|e| e.event_id.clone()))
            .collect();
        if let MaterialEvidence::Measured { event_ids, .. } = &material.evidence {
            evidence_refs.extend(event_ids.iter().cloned());
        }
        evidence_refs.sort();
        evidence_refs.dedup();

        Evaluation {
            element: id.clone(),
            state,
            recommended,
            rationale: why.join("; "),
            completeness,
            anchor_factor: view.as_ref().map_or(1.0, |v| v.factor),
            maturity_degc_h: rec.governing_sensor().map(|s| s.acc.maturity()),
            material,
            prediction,
            mix_id: rec.mix_id().map(str::to_string),
            placed,
            gate_open,
            blocking,
            evidence_refs,
            ruleset_version: self.ruleset.version.clone(),
            warnings: Vec::new(),
        }
    }

    /// Warnings for every element, ordered by (element id, kind).
    pub fn early_warnings(&self, now: Timestamp) -> Vec<Warning> {
        let mut out: Vec<Warning> = self
            .elements
            .keys()
            .flat_map(|id| self.element_warnings(id, now))
            .collect();
        out.sort_by(|a, b| (&a.element, a.kind).cmp(&(&b.element, b.kind)));
        out
    }

    /// Warnings as of the state's clock.
    pub fn warnings(&self) -> Vec<Warning> {
        match self.clock {
            Some(now) => self.early_warnings(now),
            None => Vec::new(),
        }
    }

    pub fn element_warnings(&self, id: &ElementId, now: Timestamp) -> Vec<Warning> {
        let Some(rec) = self.elements.get(id) else {
            return Vec::new();
        };
        let eval = self.evaluate_qa_at(id, now);
        let mut out = Vec::new();
        let mut warn = |kind, detail: String, raised_at| {
            out.push(Warning {
                kind,
                element: id.clone(),
                detail,
                raised_at,
            })
        };

        if let Some((_, p)) = &rec.placement {
            let grace_end = add_hours(p.finished_at, self.cfg.post_placement_grace_h);
            let overdue: Vec<String> = eval
                .completeness
                .missing
                .iter()
                .filter(|m| m.phase != InspectionPhase::PostPlacement || now >= grace_end)
                .map(|m| format!("{} ({})", m.code, phase_name(m.phase)))
                .collect();
            let mut parts = Vec::new();
            if !overdue.is_empty() {
                parts.push(format!("missing {}", overdue.join(", ")));
            }
            if !eval.completeness.out_of_sequence.is_empty() {
                parts.push(format!(
                    "recorded after placement start: {}",
                    eval.completeness.out_of_sequence.join(", ")
                ));
            }
            if !parts.is_empty() {
                warn(WarningKind::MissingInspection, parts.join("; "), p.started_at);
            }
        }

        if let Some((at, blocking)) = &rec.gate_violation {
            if rec.record.state != QaState::Released {
                let listed = blocking
                    .iter()
                    .map(|b| format!("{} ({})", b.element, b.state))
                    .collect::<Vec<_>>()
                    .join(", ");
                warn(
                    WarningKind::GateViolation,
                    format!("placed while predecessors not Released: {listed}"),
                    *at,
                );
            }
        }

        if eval.recommended == QaState::NonConformance && eval.state == QaState::Released {
            let at = rec
                .measured
                .iter()
                .map(|m| m.value.at)
                .max()
                .unwrap_or(now);
            warn(
                WarningKind::LateEvidenceConflict,
                format!("released element now {}", describe_material(&eval.material)),
                at,
            );
        }

        let gaps: Vec<_> = rec.sensors.values().flat_map(|s| s.acc.gaps().iter()).collect();
        if let Some(worst) = gaps.iter().max_by(|a, b| a.hours.total_cmp(&b.hours)) {
            warn(
                WarningKind::PartialData,
                format!(
                    "{} sensor gap(s) beyond the {} h interpolation limit; longest {:.1} h from {}; maturity is a lower bound",
                    gaps.len(),
                    self.cfg.maturity.max_gap_h,
                    worst.hours,
                    worst.from.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
                ),
                worst.to,
            );
        }

        if let Some(detail) = self.strength_lag(rec, &eval) {
            warn(WarningKind::StrengthLag, detail, now);
        }
        out
    }

    fn strength_lag(&self, rec: &ElementRecord, eval: &Evaluation) -> Option<String> {
        if matches!(eval.state, QaState::Released | QaState::NonConformance) || !eval.placed {
            return None;
        }
        if matches!(
            eval.material.status,
            MaterialStatus::TrendingCompliant | MaterialStatus::CompliantMeasured
        ) {
            return None;
        }
        let need = self.successor_planned(&rec.record.element)?;
        let element = self.graph.element(&rec.record.element)?;
        let rules = self.ruleset.for_kind(&element.kind)?;
        let view = self.strength_view(rec)?;
        let threshold = rules.readiness_threshold * element.design_strength_mpa;
        let assumed = view.assumed_temp(self.cfg.assumed_temp_window_h);
        // the anchor factor scales strength, so scale the target instead
        let forecast = forecast_readiness(
            view.model,
            &view.sensor.history,
            view.sensor.acc.first_time()?,
            assumed,
            threshold / view.factor.max(1e-9),
            &self.cfg.maturity,
        )
        .ok()?;
        match forecast {
            Forecast::Reached { at, .. } if at <= need => None,
            Forecast::Reached { at, .. } => Some(format!(
                "readiness {threshold:.2} MPa forecast at {} ({:.1} h after the next activity planned at {}) assuming {assumed:.1} degC",
                at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                hours_between(need, at),
                need.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            )),
            Forecast::Unreachable => Some(format!(
                "readiness {threshold:.2} MPa unreachable at an assumed {assumed:.1} degC; next activity planned at {}",
                need.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            )),
        }
    }
}

/// Answer to "when would this element reach `threshold` of its design
/// strength if it cured at `assumed_temp_c` from now on?".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIf {
    pub element: ElementId,
    pub assumed_temp_c: f64,
    pub threshold_fraction: f64,
    pub threshold_mpa: f64,
    pub anchor_factor: f64,
    pub forecast: Forecast,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WhatIfError {
    #[error("unknown element `{0}`")]
    UnknownElement(ElementId),
    #[error("{0}")]
    Invalid(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl TwinState {
    /// Pure readiness forecast; never touches state.
    pub fn whatif_readiness(
        &self,
        id: &ElementId,
        assumed_temp_c: f64,
        threshold_fraction: f64,
    ) -> Result<WhatIf, WhatIfError> {
        if !(threshold_fraction > 0.0 && threshold_fraction <= 1.0) {
            return Err(WhatIfError::Invalid(format!(
                "threshold must be in (0, 1], got {threshold_fraction}"
            )));
        }
        if !assumed_temp_c.is_finite() {
            return Err(WhatIfError::Invalid("temp_c must be a finite number".into()));
        }
        let rec = self
            .elements
            .get(id)
            .ok_or_else(|| WhatIfError::UnknownElement(id.clone()))?;
        let element = self.graph.element(id).expect("known element");
        let mix = rec
            .mix_id()
            .ok_or_else(|| WhatIfError::InsufficientData("no batch ticket, so no mix model".into()))?;
        if !self.mixes.contains_key(mix) {
            return Err(WhatIfError::InsufficientData(format!("mix `{mix}` has no calibrated model")));
        }
        let view = self
            .strength_view(rec)
            .ok_or_else(|| WhatIfError::InsufficientData("no temperature history".into()))?;
        let threshold_mpa = threshold_fraction * element.design_strength_mpa;
        let start = view
            .sensor
            .acc
            .first_time()
            .ok_or_else(|| WhatIfError::InsufficientData("no temperature history".into()))?;
        let forecast = forecast_readiness(
            view.model,
            &view.sensor.history,
            start,
            assumed_temp_c,
            threshold_mpa / view.factor.max(1e-9),
            &self.cfg.maturity,
        )
        .map_err(|e| WhatIfError::Invalid(e.to_string()))?;
        Ok(WhatIf {
            element: id.clone(),
            assumed_temp_c,
            threshold_fraction,
            threshold_mpa,
            anchor_factor: view.factor,
            forecast,
        })
    }
}

fn phase_name(p: InspectionPhase) -> &'static str {
    match p {
        InspectionPhase::PrePlacement => "pre-placement",
        InspectionPhase::Placement => "placement",
        InspectionPhase::PostPlacement => "post-placement",
    }
}

fn describe_incomplete(c: &CompletenessResult) -> String {
    let mut parts = Vec::new();
    if !c.missing.is_empty() {
        parts.push(format!(
            "missing {}",
            c.missing
                .iter()
                .map(|m| format!("{} ({})", m.code, phase_name(m.phase)))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    if !c.failed.is_empty() {
        parts.push(format!("failed {}", c.failed.join(", ")));
    }
    if !c.out_of_sequence.is_empty() {
        parts.push(format!("out of sequence {}", c.out_of_sequence.join(", ")));
    }
    format!("inspections incomplete: {}", parts.join("; "))
}

fn describe_material(m: &MaterialResult) -> String {
    match &m.evidence {
        MaterialEvidence::Measured {
            mean_mpa, limit_mpa, ..
        } => format!("material {:?} (measured mean {mean_mpa:.2} vs limit {limit_mpa:.2} MPa)", m.status),
        MaterialEvidence::Predicted {
            prediction,
            readiness_limit_mpa,
        } => format!(
            "material {:?} (predicted {:.2} [{:.2}, {:.2}] vs readiness {readiness_limit_mpa:.2} MPa)",
            m.status, prediction.mean_mpa, prediction.lower_mpa, prediction.upper_mpa
        ),
        MaterialEvidence::None => format!("material {:?}", m.status),
    }
}
