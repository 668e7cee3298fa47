//! Deterministic synthetic bridge projects.
//!
//! A seed fixes everything: the element layout and schedule, the hidden
//! "true" strength model of each mix, trial-batch calibration data, in-place
//! temperatures and the arrival-ordered record stream. Defects can be
//! injected per construction stage.

mod fuzz;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{DurationRound, TimeDelta, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{
    add_hours, hours_between, BatchTicket, Cured, Element, ElementGraph, ElementId, ElementKind,
    InspectionCompleted, InspectionOutcome, InspectionPhase, LabResult, Payload, PlacementRecorded,
    Quantity, QaEvent, SensorReading, SpatialRef, TemperatureHistory, Timestamp,
};
use crate::engine::{EngineConfig, EngineError, MixSpec, Project, QaState, ScriptedDecision, TwinState};
use crate::ingest::RawRecord;
use crate::maturity::{CalibrationPair, MaturityAccumulator, MaturityConfig, ModelParams};
use crate::rules::{parse_ruleset, RuleSet};
use crate::domain::{DecisionAction, Role};

pub use fuzz::random_event_sequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DefectKind {
    /// The first pre-placement inspection is never recorded.
    MissingInspection,
    /// Every strength result of the element is scaled by 0.6.
    WeakBatch,
    /// In-place readings stop for six hours, ten hours after placement.
    SensorGap,
    /// 28-day results come back at 75% of the expected strength.
    LateFailingLab,
}

impl std::str::FromStr for DefectKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MissingInspection" => Ok(Self::MissingInspection),
            "WeakBatch" => Ok(Self::WeakBatch),
            "SensorGap" => Ok(Self::SensorGap),
            "LateFailingLab" => Ok(Self::LateFailingLab),
            other => Err(format!("unknown defect kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defect {
    pub kind: DefectKind,
    /// Applies to this stage in every span.
    pub stage: ElementKind,
}

/// `KIND:STAGE`, where the stage is an element kind (`DeckPour`) or its id
/// tag in any case (`deck`).
impl std::str::FromStr for Defect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, stage) = s
            .split_once(':')
            .ok_or_else(|| format!("expected KIND:STAGE, got `{s}`"))?;
        let stage = ElementKind::STAGES
            .into_iter()
            .find(|k| stage_tag(k).eq_ignore_ascii_case(stage) || k.to_string() == stage)
            .ok_or_else(|| format!("unknown stage `{stage}`"))?;
        Ok(Defect {
            kind: kind.parse()?,
            stage,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub n_spans: usize,
    pub start: Timestamp,
    pub stage_interval_days: f64,
    pub ambient_mean_c: f64,
    pub ambient_amplitude_c: f64,
    /// UTC hour of the daily ambient maximum.
    pub ambient_peak_hour: f64,
    pub bump_peak_delta_c: f64,
    pub bump_peak_at_h: f64,
    pub bump_decay_h: f64,
    pub lab_result_delay_days: (f64, f64),
    pub inspection_upload_delay_h: (f64, f64),
    pub sensor_duration_h: f64,
    pub design_strength_mpa: f64,
    pub defects: Vec<Defect>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_spans: 1,
            start: "2025-06-02T06:00:00Z".parse().expect("valid literal"),
            stage_interval_days: 7.0,
            ambient_mean_c: 20.0,
            ambient_amplitude_c: 5.0,
            ambient_peak_hour: 15.0,
            bump_peak_delta_c: 12.0,
            bump_peak_at_h: 14.0,
            bump_decay_h: 30.0,
            lab_result_delay_days: (1.0, 3.0),
            inspection_upload_delay_h: (0.5, 6.0),
            sensor_duration_h: 168.0,
            design_strength_mpa: 40.0,
            defects: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn with_defect(mut self, kind: DefectKind, stage: ElementKind) -> Self {
        self.defects.push(Defect { kind, stage });
        self
    }

    fn has(&self, kind: DefectKind, stage: &ElementKind) -> bool {
        self.defects.iter().any(|d| d.kind == kind && &d.stage == stage)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_spans == 0 {
            return Err("at least one span is required".into());
        }
        let (a, b) = self.lab_result_delay_days;
        let (c, d) = self.inspection_upload_delay_h;
        if !(0.0 <= a && a <= b && 0.0 <= c && c <= d) {
            return Err("delays must be non-negative ranges".into());
        }
        if !(self.sensor_duration_h > 0.0) {
            return Err("sensor duration must be positive".into());
        }
        Ok(())
    }
}

/// Stage name used in element ids.
fn stage_tag(kind: &ElementKind) -> &'static str {
    match kind {
        ElementKind::DrilledShaft => "SHAFT",
        ElementKind::Column => "COL",
        ElementKind::Cap => "CAP",
        ElementKind::GirderOrDeckPanel => "GIRDER",
        ElementKind::DeckPour => "DECK",
        ElementKind::Other(_) => "OTHER",
    }
}

fn mix_for(kind: &ElementKind) -> &'static str {
    match kind {
        ElementKind::GirderOrDeckPanel | ElementKind::DeckPour => "MIX-SUP",
        _ => "MIX-SUB",
    }
}

fn pre_placement_codes(kind: &ElementKind) -> [&'static str; 2] {
    match kind {
        ElementKind::DrilledShaft => ["EXCAVATION", "REBAR_CAGE"],
        ElementKind::GirderOrDeckPanel => ["BEARINGS", "FORMWORK"],
        _ => ["REBAR_LAYOUT", "FORMWORK"],
    }
}

const PLACEMENT_CODE: &str = "SLUMP_AIR";
const POST_CODE: &str = "CURE_CHECK";
/// Specimen ages, in days, of the trial-batch calibration series.
const CALIBRATION_AGES_D: [f64; 7] = [0.5, 1.0, 2.0, 3.0, 7.0, 14.0, 28.0];
const LAB_TEMP_C: f64 = 23.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimProject {
    pub project: Project,
    pub ruleset: RuleSet,
    /// Actual placement start of every element.
    pub schedule: BTreeMap<ElementId, Timestamp>,
    /// Hidden strength model per mix: the oracle for calibration checks.
    pub truths: BTreeMap<String, ModelParams>,
}

fn sim_ruleset(cfg: &SimConfig) -> RuleSet {
    let rules: serde_json::Map<String, Value> = ElementKind::STAGES
        .iter()
        .map(|kind| {
            let mut required: Vec<Value> = pre_placement_codes(kind)
                .iter()
                .map(|c| serde_json::json!({"code": c, "phase": "pre-placement", "hold_point": true}))
                .collect();
            required.push(serde_json::json!({"code": PLACEMENT_CODE, "phase": "placement", "hold_point": false}));
            required.push(serde_json::json!({"code": POST_CODE, "phase": "post-placement", "hold_point": false}));
            (
                kind.to_string(),
                serde_json::json!({
                    "required_inspections": required,
                    "acceptance": {
                        "property": "compressive_strength",
                        "limit_mpa": cfg.design_strength_mpa,
                        "age_days": 28
                    },
                    "readiness_threshold": 0.75,
                    "testing_frequency": 2
                }),
            )
        })
        .collect();
    let doc = serde_json::json!({"version": "SIM-1", "rules": rules});
    parse_ruleset(&doc.to_string()).expect("simulator rule set is valid")
}

fn whole_seconds(t: Timestamp) -> Timestamp {
    t.duration_round(TimeDelta::seconds(1)).expect("in range")
}

fn at(t: Timestamp, hours: f64) -> Timestamp {
    whole_seconds(add_hours(t, hours))
}

/// Project layout: per span a pier (shaft, column, cap at one station,
/// offsets −6/0/+6 m) and a superstructure bay 20 m further on (girder at
/// −6 m, deck at +6 m). Each span is its own five-stage chain.
pub fn generate_project(cfg: &SimConfig) -> SimProject {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut truths = BTreeMap::new();
    truths.insert(
        "MIX-SUB".to_string(),
        ModelParams {
            su_mpa: rng.gen_range(44.0..48.0),
            k_rate: rng.gen_range(0.0022..0.0028),
            m0: rng.gen_range(40.0..60.0),
        },
    );
    truths.insert(
        "MIX-SUP".to_string(),
        ModelParams {
            su_mpa: rng.gen_range(45.0..48.0),
            k_rate: rng.gen_range(0.0022..0.0028),
            m0: rng.gen_range(40.0..60.0),
        },
    );
    let maturity = MaturityConfig::default();
    let mixes = truths
        .iter()
        .map(|(mix, truth)| {
            let calibration: Vec<CalibrationPair> = CALIBRATION_AGES_D
                .iter()
                .flat_map(|&d| [d, d])
                .map(|d| {
                    let m = (LAB_TEMP_C - maturity.datum_temp_c) * 24.0 * d;
                    (m, truth.strength_at(m) * (1.0 + rng.gen_range(-0.02..=0.02)))
                })
                .collect();
            (mix.clone(), MixSpec { calibration })
        })
        .collect();

    let mut elements = Vec::new();
    let mut edges = Vec::new();
    let mut schedule = BTreeMap::new();
    for span in 0..cfg.n_spans {
        let pier = 1000.0 + 40.0 * span as f64;
        let spots = [(pier, -6.0), (pier, 0.0), (pier, 6.0), (pier + 20.0, -6.0), (pier + 20.0, 6.0)];
        let mut prev: Option<ElementId> = None;
        for (stage, kind) in ElementKind::STAGES.iter().enumerate() {
            let id = ElementId::new(format!("S{}-{}", span + 1, stage_tag(kind))).expect("non-empty");
            let planned = at(
                cfg.start,
                24.0 * (stage as f64 * cfg.stage_interval_days + span as f64),
            );
            let (station_m, offset_m) = spots[stage];
            elements.push(Element {
                id: id.clone(),
                kind: kind.clone(),
                location: SpatialRef::StationOffset { station_m, offset_m },
                planned_placement: planned,
                design_strength_mpa: cfg.design_strength_mpa,
            });
            // crews start up to two hours late
            schedule.insert(id.clone(), at(planned, rng.gen_range(0.0..2.0)));
            if let Some(p) = prev.replace(id.clone()) {
                edges.push((p, id));
            }
        }
    }
    SimProject {
        project: Project {
            graph: ElementGraph::build(elements, edges).expect("generated graph is a DAG"),
            mixes,
            created_at: cfg.start - TimeDelta::days(7),
        },
        ruleset: sim_ruleset(cfg),
        schedule,
        truths,
    }
}

/// In-place temperature every 0.5 h from placement for `duration_h`:
/// a 24 h ambient sinusoid plus a hydration bump that rises linearly to its
/// peak and then decays exponentially.
pub fn synthesize_temperature(
    element: &ElementId,
    placement_at: Timestamp,
    duration_h: f64,
    cfg: &SimConfig,
) -> TemperatureHistory {
    let n = (duration_h / 0.5).round() as usize;
    let samples = (0..=n)
        .map(|i| {
            let h = i as f64 * 0.5;
            let t = at(placement_at, h);
            (t, temperature_at(placement_at, h, cfg))
        })
        .collect();
    TemperatureHistory::new(element.clone(), samples).expect("synthetic series is valid")
}

fn temperature_at(placement_at: Timestamp, h: f64, cfg: &SimConfig) -> f64 {
    let t = add_hours(placement_at, h);
    let hod = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;
    let ambient =
        cfg.ambient_mean_c + cfg.ambient_amplitude_c * (2.0 * PI * (hod - cfg.ambient_peak_hour) / 24.0).cos();
    let bump = if cfg.bump_peak_at_h > 0.0 && h < cfg.bump_peak_at_h {
        cfg.bump_peak_delta_c * h / cfg.bump_peak_at_h
    } else if cfg.bump_decay_h > 0.0 {
        cfg.bump_peak_delta_c * (-(h - cfg.bump_peak_at_h) / cfg.bump_decay_h).exp()
    } else {
        0.0
    };
    ambient + bump
}

/// Wire form of an event: what a field app, plant or lab would send.
fn wire(event: &QaEvent) -> String {
    let mut v = serde_json::to_value(event).expect("event serializes");
    let obj = v.as_object_mut().expect("object");
    obj.remove("element");
    obj.remove("late_arrival");
    serde_json::to_string(&v).expect("prints")
}

struct Emitter<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    out: Vec<QaEvent>,
}

impl Emitter<'_> {
    fn upload_delay(&mut self) -> f64 {
        let (a, b) = self.cfg.inspection_upload_delay_h;
        if a == b {
            a
        } else {
            self.rng.gen_range(a..b)
        }
    }

    fn lab_delay_h(&mut self) -> f64 {
        let (a, b) = self.cfg.lab_result_delay_days;
        24.0 * if a == b { a } else { self.rng.gen_range(a..b) }
    }

    fn noise(&mut self) -> f64 {
        1.0 + self.rng.gen_range(-0.02..=0.02)
    }

    fn push(&mut self, id: String, occurred: Timestamp, delay_h: f64, subject: SpatialRef, payload: Payload, source: &str) {
        let recorded = at(occurred, delay_h);
        self.out.push(QaEvent::new(id, occurred, recorded, subject, payload, source));
    }
}

/// The full record stream of a simulated project, in arrival order
/// (`recorded_at`, then id) — not occurrence order.
pub fn emit_event_stream(sim: &SimProject, cfg: &SimConfig) -> Vec<RawRecord> {
    let mut events = emit_events(sim, cfg);
    events.sort_by(|a, b| (a.recorded_at, &a.event_id).cmp(&(b.recorded_at, &b.event_id)));
    events
        .iter()
        .map(|e| RawRecord::new(e.source.clone(), wire(e), e.recorded_at))
        .collect()
}

fn emit_events(sim: &SimProject, cfg: &SimConfig) -> Vec<QaEvent> {
    let mut em = Emitter {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_e7e4_75),
        out: Vec::new(),
    };
    let maturity = MaturityConfig::default();
    for element in sim.project.graph.elements() {
        let id = element.id.clone();
        let kind = &element.kind;
        let p = sim.schedule[&id];
        let explicit = SpatialRef::ExplicitId(id.clone());
        let truth = sim.truths[mix_for(kind)];
        let weak = if cfg.has(DefectKind::WeakBatch, kind) { 0.6 } else { 1.0 };
        let tag = id.as_str();

        for (i, code) in pre_placement_codes(kind).iter().enumerate() {
            if i == 0 && cfg.has(DefectKind::MissingInspection, kind) {
                continue;
            }
            let when = at(p, -24.0 + 4.0 * i as f64);
            let delay = em.upload_delay();
            em.push(
                format!("{tag}-insp-{code}"),
                when,
                delay,
                explicit.clone(),
                inspection(code, InspectionPhase::PrePlacement),
                "field-app",
            );
        }

        let batch_id = format!("{tag}-B1");
        let volume = em.rng.gen_range(20.0..120.0);
        em.push(
            format!("{tag}-batch"),
            at(p, -1.0),
            0.1,
            explicit.clone(),
            Payload::BatchTicket(BatchTicket {
                batch_id: batch_id.clone(),
                mix_id: mix_for(kind).to_string(),
                volume_m3: volume,
                batched_at: at(p, -1.0),
            }),
            "batch-plant",
        );

        let duration = em.rng.gen_range(3.0..6.0);
        let finished = at(p, duration);
        em.push(
            format!("{tag}-placement"),
            p,
            duration + 0.5,
            explicit.clone(),
            Payload::PlacementRecorded(PlacementRecorded {
                batch_id,
                started_at: p,
                finished_at: finished,
                ambient_temp: Quantity::deg_c(temperature_at(p, 0.0, cfg)),
                observations: Default::default(),
            }),
            "field-app",
        );

        let delay = em.upload_delay();
        em.push(
            format!("{tag}-insp-{PLACEMENT_CODE}"),
            at(p, 0.5),
            delay,
            explicit.clone(),
            inspection(PLACEMENT_CODE, InspectionPhase::Placement),
            "field-app",
        );
        let delay = em.upload_delay();
        em.push(
            format!("{tag}-insp-{POST_CODE}"),
            at(p, 24.0),
            delay,
            explicit.clone(),
            inspection(POST_CODE, InspectionPhase::PostPlacement),
            "field-app",
        );

        let history = synthesize_temperature(&id, p, cfg.sensor_duration_h, cfg);
        let gap = cfg.has(DefectKind::SensorGap, kind);
        let (station_m, offset_m) = match element.location {
            SpatialRef::StationOffset { station_m, offset_m } => (station_m, offset_m),
            _ => unreachable!("simulated elements are located by station"),
        };
        for (n, &(t, temp)) in history.samples().iter().enumerate() {
            let h = hours_between(p, t);
            if gap && h > 10.0 && h < 16.0 {
                continue;
            }
            let subject = SpatialRef::StationOffset {
                station_m: station_m + em.rng.gen_range(-0.5..0.5),
                offset_m: offset_m + em.rng.gen_range(-0.5..0.5),
            };
            em.push(
                format!("{tag}-temp-{n:04}"),
                t,
                1.0 / 60.0,
                subject,
                Payload::SensorReading(SensorReading {
                    sensor_id: format!("{tag}-T1"),
                    temp: Quantity::deg_c(temp),
                }),
                "sensor-gateway",
            );
        }

        // field-cured cylinder broken on site after one day
        let one_day = at(p, 24.0);
        let m_field = MaturityAccumulator::from_history(&history.until(one_day), &maturity).maturity();
        let strength = truth.strength_at(m_field) * weak * em.noise();
        let delay = em.upload_delay();
        em.push(
            format!("{tag}-field-1d"),
            one_day,
            delay,
            explicit.clone(),
            strength_result(&format!("{tag}-F1"), 1.0, strength, Cured::Field),
            "field-lab",
        );

        for age in [7.0, 28.0] {
            let late = if age >= 28.0 && cfg.has(DefectKind::LateFailingLab, kind) {
                0.75
            } else {
                1.0
            };
            let tested = at(p, 24.0 * age);
            let delay = em.lab_delay_h();
            for n in 1..=2 {
                let m = maturity.lab_cured_maturity(age);
                let strength = truth.strength_at(m) * weak * late * em.noise();
                em.push(
                    format!("{tag}-lab-{age}d-{n}"),
                    tested,
                    delay,
                    explicit.clone(),
                    strength_result(&format!("{tag}-C{age}-{n}"), age, strength, Cured::Lab),
                    "testing-lab",
                );
            }
        }
    }
    em.out
}

fn inspection(code: &str, phase: InspectionPhase) -> Payload {
    Payload::InspectionCompleted(InspectionCompleted {
        inspection_code: code.to_string(),
        phase,
        result: InspectionOutcome::Pass,
        notes: String::new(),
    })
}

fn strength_result(specimen: &str, age_days: f64, mpa: f64, cured: Cured) -> Payload {
    let body = LabResult {
        specimen_id: specimen.to_string(),
        age_days,
        strength: Quantity::mpa(mpa),
        cured,
    };
    match cured {
        Cured::Lab => Payload::LabResult(body),
        Cured::Field => Payload::FieldTestResult(body),
    }
}

/// A site engineer who acts on every recommendation as soon as it appears:
/// releases Provisional elements whose gate is open, holds elements the
/// engine flags for Hold, and has the QA manager open an NCR when late
/// evidence contradicts a release.
///
/// Each decision is anchored to the event after which it was taken.
pub fn responsive_script(
    sim: &SimProject,
    events: &[QaEvent],
    cfg: EngineConfig,
) -> Result<Vec<ScriptedDecision>, EngineError> {
    let mut state = TwinState::new(&sim.project, sim.ruleset.clone(), cfg)?;
    let mut script = Vec::new();
    for event in events {
        state.apply(event.clone())?;
        let affected: Vec<ElementId> = match &event.element {
            Some(id) => std::iter::once(id.clone())
                .chain(state.graph().descendants(id))
                .collect(),
            None => state.graph().topological_order().to_vec(),
        };
        let mut n = 0;
        for id in affected {
            let eval = state.evaluate_qa_at(&id, event.occurred_at);
            let choice = match eval.state {
                QaState::Provisional if eval.gate_open => Some((
                    Role::Engineer,
                    DecisionAction::Release,
                    format!("released on review: {}", eval.rationale),
                )),
                QaState::Pending | QaState::Provisional if eval.recommended == QaState::Hold => {
                    Some((Role::Engineer, DecisionAction::Hold, eval.rationale.clone()))
                }
                QaState::Released if eval.recommended == QaState::NonConformance => {
                    Some((Role::QaManager, DecisionAction::OpenNcr, eval.rationale.clone()))
                }
                _ => None,
            };
            let Some((role, action, rationale)) = choice else {
                continue;
            };
            n += 1;
            let decision = ScriptedDecision {
                after_event_id: event.event_id.clone(),
                element: id.clone(),
                actor: match role {
                    Role::QaManager => "qa.manager".into(),
                    _ => "site.engineer".into(),
                },
                role,
                action,
                rationale,
                override_gate: false,
            };
            let applied = state.apply(decision.to_event(event, n))?;
            debug_assert!(matches!(applied.decision, Some(Ok(_))));
            script.push(decision);
        }
    }
    Ok(script)
}
