//! Acceptance suite: one PASS/FAIL line per criterion, each checked at its
//! stated tolerance and within its runtime budget. Exits non-zero if any
//! criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twinqa_core::domain::{
    add_hours, hours_between, Element, ElementGraph, ElementId, ElementKind, Payload, TemperatureHistory, Timestamp,
};
use twinqa_core::domain::SpatialRef;
use twinqa_core::engine::{
    replay, AuditOutcome, Basis, EngineConfig, QaState, TwinState, WarningKind,
};
use twinqa_core::ingest::{
    ingest_stream, map_to_element, normalize_unit, validate_record, IngestConfig, IngestError, MappingError,
    MappingTolerances, RawRecord,
};
use twinqa_core::maturity::{
    calibrate, equivalent_age, forecast_readiness, nurse_saul_maturity, Forecast, MaturityConfig, ModelParams,
    StrengthMaturityModel,
};
use twinqa_core::simulator::{
    emit_event_stream, generate_project, random_event_sequence, responsive_script, DefectKind, SimConfig,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn t0() -> Timestamp {
    "2025-06-02T06:00:00Z".parse().unwrap()
}

fn history(points: &[(f64, f64)]) -> TemperatureHistory {
    let samples = points.iter().map(|&(h, c)| (add_hours(t0(), h), c)).collect();
    TemperatureHistory::new(ElementId::new("E").unwrap(), samples).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn maturity_oracle() -> Outcome {
    let cfg = MaturityConfig::default();
    let flat: Vec<(f64, f64)> = (0..=96).map(|i| (i as f64 * 0.5, 20.0)).collect();
    let m = nurse_saul_maturity(&history(&flat), &cfg).map_err(|e| e.to_string())?.magnitude;
    ensure!(rel(m, 960.0) <= 1e-9, "48 h at 20 degC gave {m}");
    // 12 h at 10 degC, then 12 h at 30 degC; the step sample sits at the midpoint
    let mut step: Vec<(f64, f64)> = (0..12).map(|h| (h as f64, 10.0)).collect();
    step.push((12.0, 20.0));
    step.extend((13..=24).map(|h| (h as f64, 30.0)));
    let s = nurse_saul_maturity(&history(&step), &cfg).map_err(|e| e.to_string())?.magnitude;
    ensure!(rel(s, 480.0) <= 1e-9, "two-step history gave {s}");
    Ok(format!("{m:.6} and {s:.6} degC h"))
}

fn equivalent_age_oracle() -> Outcome {
    let cfg = MaturityConfig::default();
    let series = |c: f64| history(&(0..=48).map(|i| (i as f64 * 0.5, c)).collect::<Vec<_>>());
    let warm = equivalent_age(&series(30.0), &cfg).map_err(|e| e.to_string())?.magnitude;
    ensure!((warm - 35.44).abs() <= 0.05, "24 h at 30 degC gave {warm} h");
    let same = equivalent_age(&series(23.0), &cfg).map_err(|e| e.to_string())?.magnitude;
    ensure!(rel(same, 24.0) <= 1e-9, "identity at the reference gave {same} h");
    Ok(format!("{warm:.4} h at 30 degC; {same:.9} h at 23 degC"))
}

const GRID: [f64; 8] = [100.0, 200.0, 400.0, 600.0, 900.0, 1200.0, 1600.0, 2000.0];

fn calibration_recovery() -> Outcome {
    let truth = ModelParams {
        su_mpa: 40.0,
        k_rate: 0.002,
        m0: 50.0,
    };
    let clean: Vec<(f64, f64)> = GRID.iter().map(|&m| (m, truth.strength_at(m))).collect();
    let fit = calibrate(&clean, None, t0()).map_err(|e| e.to_string())?;
    for (name, got, want) in [("S_u", fit.su_mpa, 40.0), ("k", fit.k_rate, 0.002), ("M0", fit.m0, 50.0)] {
        ensure!(rel(got, want) <= 1e-3, "noise-free {name} = {got} vs {want}");
    }
    let mut within = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy: Vec<(f64, f64)> = clean
            .iter()
            .map(|&(m, s)| (m, s * (1.0 + rng.gen_range(-0.02..=0.02))))
            .collect();
        if let Ok(f) = calibrate(&noisy, None, t0()) {
            if rel(f.su_mpa, 40.0) <= 0.05 {
                within += 1;
            }
        }
    }
    ensure!(within >= 95, "only {within}/100 noisy fits had S_u within 5%");
    Ok(format!(
        "noise-free ({:.6}, {:.8}, {:.5}); noisy S_u within 5% on {within}/100 seeds",
        fit.su_mpa, fit.k_rate, fit.m0
    ))
}

fn readiness_cross_check() -> Outcome {
    let model = StrengthMaturityModel {
        su_mpa: 40.0,
        k_rate: 0.002,
        m0: 50.0,
        residual_se_mpa: 0.0,
        calibrated_at: t0(),
        n_points: 8,
        revision: 0,
    };
    let threshold = 0.75 * model.su_mpa;
    let empty = TemperatureHistory::empty(ElementId::new("D").unwrap());
    let cfg = MaturityConfig::default();
    let f = forecast_readiness(&model, &empty, t0(), 20.0, threshold, &cfg).map_err(|e| e.to_string())?;
    let Forecast::Reached {
        at, hours_after_start, ..
    } = f
    else {
        return Err("forecast says unreachable".into());
    };
    ensure!((hours_after_start - 77.5).abs() <= 0.5, "forecast {hours_after_start} h");
    let h = hours_between(t0(), at);
    let at_time = model.strength_at(20.0 * h);
    let before = model.strength_at(20.0 * (h - 1.0));
    ensure!(at_time >= threshold, "{at_time} MPa at the forecast time");
    ensure!(before < threshold, "{before} MPa one hour earlier already meets {threshold}");
    Ok(format!("{hours_after_start} h; {at_time:.3} MPa then, {before:.3} MPa an hour before"))
}

fn gate_safety() -> Outcome {
    let sim = generate_project(&SimConfig::default());
    let template = TwinState::new(&sim.project, sim.ruleset.clone(), EngineConfig::default()).map_err(|e| e.to_string())?;
    let graph = sim.project.graph.clone();
    let ids: Vec<ElementId> = graph.ids().cloned().collect();
    const SEQUENCES: u64 = 100_000;
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get()).min(16) as u64;

    let results: Vec<Result<(u64, u64), String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (template, graph, ids, rules) = (&template, &graph, &ids, &sim.ruleset);
                scope.spawn(move || -> Result<(u64, u64), String> {
                    let mut events = 0u64;
                    let mut human = 0u64;
                    for seq in (w..SEQUENCES).step_by(workers as usize) {
                        let mut rng = ChaCha8Rng::seed_from_u64(seq);
                        let len = rng.gen_range(10..60);
                        let log = random_event_sequence(&mut rng, graph, rules, t0(), len);
                        let mut state = template.clone();
                        let mut before: Vec<QaState> = ids.iter().map(|id| state.state_of(id).unwrap()).collect();
                        for e in log {
                            let is_decision = matches!(e.payload, Payload::HumanDecision(_));
                            let eid = e.event_id.clone();
                            state.apply(e).map_err(|err| format!("sequence {seq}: {err}"))?;
                            events += 1;
                            for (i, id) in ids.iter().enumerate() {
                                let now = state.state_of(id).unwrap();
                                if now == QaState::Released {
                                    for p in graph.predecessors(id).unwrap() {
                                        if state.state_of(p) != Some(QaState::Released) {
                                            return Err(format!("sequence {seq} after {eid}: {id} Released while {p} is not"));
                                        }
                                    }
                                }
                                let entered = now != before[i] && matches!(now, QaState::Released | QaState::NonConformance);
                                if entered {
                                    if !is_decision {
                                        return Err(format!("sequence {seq}: {id} entered {now} on {eid}, not a decision"));
                                    }
                                    human += 1;
                                }
                                before[i] = now;
                            }
                        }
                        for a in state.audit() {
                            let terminal = matches!(a.to, QaState::Released | QaState::NonConformance);
                            if terminal && a.outcome == AuditOutcome::Applied && a.from != a.to {
                                if a.basis != Basis::HumanDecision || a.role == twinqa_core::domain::Role::System {
                                    return Err(format!("sequence {seq}: audit seq {} entered {} without a human", a.seq, a.to));
                                }
                            }
                        }
                    }
                    Ok((events, human))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("worker panicked".into()))).collect()
    });
    let (mut events, mut human) = (0, 0);
    for r in results {
        let (e, h) = r?;
        events += e;
        human += h;
    }
    ensure!(human > 0, "no sequence ever reached Released or NonConformance; the check is vacuous");
    Ok(format!(
        "{SEQUENCES} sequences, {events} events, {human} human entries into Released/NonConformance, 0 violations"
    ))
}

fn replay_determinism() -> Outcome {
    let kinds = [None, Some(DefectKind::WeakBatch), Some(DefectKind::LateFailingLab), Some(DefectKind::SensorGap), Some(DefectKind::MissingInspection)];
    let mut total = 0;
    for seed in 0..20u64 {
        let mut cfg = SimConfig {
            seed: 1000 + seed,
            n_spans: 1 + (seed % 2) as usize,
            ..SimConfig::default()
        };
        if let Some(kind) = kinds[seed as usize % kinds.len()] {
            cfg = cfg.with_defect(kind, ElementKind::STAGES[seed as usize % 5].clone());
        }
        let sim = generate_project(&cfg);
        let raws = emit_event_stream(&sim, &cfg);
        let icfg = IngestConfig::default();
        let (events, _) = ingest_stream(&raws, &sim.project.graph, &BTreeSet::new(), &icfg);
        let script = responsive_script(&sim, &events, EngineConfig::default()).map_err(|e| e.to_string())?;
        let fresh = || TwinState::new(&sim.project, sim.ruleset.clone(), EngineConfig::default());

        // incremental: one immutable step per event, decisions interleaved
        let mut scripted = fresh().map_err(|e| e.to_string())?;
        scripted.apply_with_script(&events, &script).map_err(|e| e.to_string())?;
        let log: Vec<_> = scripted.log().cloned().collect();
        let mut step = fresh().map_err(|e| e.to_string())?;
        for e in &log {
            step = step.apply_event(e.clone()).map_err(|e| e.to_string())?;
        }
        let folded = replay(&sim.project, sim.ruleset.clone(), EngineConfig::default(), &log).map_err(|e| e.to_string())?;
        let hash = folded.state_hash();
        ensure!(step.state_hash() == hash, "seed {}: incremental {} vs replay {hash}", cfg.seed, step.state_hash());
        ensure!(scripted.state_hash() == hash, "seed {}: scripted run differs from replay", cfg.seed);

        // ingest the same stream again: nothing new, nothing changes
        let (again, report) = ingest_stream(&raws, &sim.project.graph, step.known_ids(), &icfg);
        ensure!(again.is_empty() && report.accepted == 0, "seed {}: {} re-accepted", cfg.seed, report.accepted);
        ensure!(report.duplicates == raws.len(), "seed {}: {} duplicates of {}", cfg.seed, report.duplicates, raws.len());
        for e in &log {
            ensure!(step.apply(e.clone()).map_err(|e| e.to_string())?.duplicate, "seed {}: {} applied twice", cfg.seed, e.event_id);
        }
        ensure!(step.state_hash() == hash, "seed {}: double ingestion changed the hash", cfg.seed);
        total += log.len();
    }
    Ok(format!("20 streams, {total} logged events; replay = incremental, double ingestion a no-op"))
}

fn latency_semantics() -> Outcome {
    let cfg = SimConfig::default().with_defect(DefectKind::LateFailingLab, ElementKind::Column);
    let sim = generate_project(&cfg);
    let raws = emit_event_stream(&sim, &cfg);
    let (events, _) = ingest_stream(&raws, &sim.project.graph, &BTreeSet::new(), &IngestConfig::default());
    let script = responsive_script(&sim, &events, EngineConfig::default()).map_err(|e| e.to_string())?;
    let col = ElementId::new("S1-COL").unwrap();
    let ncr = script
        .iter()
        .find(|d| d.element == col && d.action == twinqa_core::domain::DecisionAction::OpenNcr)
        .ok_or("no NCR decision was scripted for the column")?;

    let mut state = TwinState::new(&sim.project, sim.ruleset.clone(), EngineConfig::default()).map_err(|e| e.to_string())?;
    state.apply_with_script(&events, &script).map_err(|e| e.to_string())?;
    let log: Vec<_> = state.log().cloned().collect();
    let ncr_at = log
        .iter()
        .position(|e| e.event_id.starts_with(&format!("{}/", ncr.after_event_id)) && e.element.as_ref() == Some(&col))
        .ok_or("NCR decision missing from the log")?;

    // the moment before the NCR: released, with the late result in conflict
    let before = replay(&sim.project, sim.ruleset.clone(), EngineConfig::default(), &log[..ncr_at]).map_err(|e| e.to_string())?;
    ensure!(before.state_of(&col) == Some(QaState::Released), "column is {:?} before the NCR", before.state_of(&col));
    let conflict = before
        .warnings()
        .into_iter()
        .find(|w| w.element == col && w.kind == WarningKind::LateEvidenceConflict)
        .ok_or("no LateEvidenceConflict warning before the NCR")?;

    ensure!(state.state_of(&col) == Some(QaState::NonConformance), "column ends {:?}", state.state_of(&col));
    let audit = state.audit();
    ensure!(audit.starts_with(before.audit()), "audit entries before the NCR were rewritten");
    let release = audit
        .iter()
        .find(|a| a.element == col && a.to == QaState::Released && a.outcome == AuditOutcome::Applied)
        .ok_or("original release entry missing")?;
    ensure!(release.basis == Basis::HumanDecision, "release was not a human decision");
    let open = audit
        .iter()
        .find(|a| a.element == col && a.to == QaState::NonConformance)
        .ok_or("no NCR audit entry")?;
    ensure!(open.from == QaState::Released && open.role == twinqa_core::domain::Role::QaManager, "NCR entry {open:?}");
    ensure!(open.seq > release.seq, "NCR recorded before the release");
    Ok(format!(
        "release #{} -> warning \"{}\" -> open_ncr #{} by {}",
        release.seq, conflict.detail, open.seq, open.actor
    ))
}

fn unit_normalization() -> Outcome {
    let psi = normalize_unit(4000.0, "psi").map_err(|e| e.to_string())?;
    ensure!((psi.magnitude - 27.5790).abs() <= 1e-4, "4000 psi = {} MPa", psi.magnitude);
    let f = normalize_unit(68.0, "degF").map_err(|e| e.to_string())?;
    ensure!(f.magnitude == 20.0, "68 degF = {} degC", f.magnitude);
    for unit in ["furlong", "ksi", "", "degR"] {
        ensure!(
            matches!(normalize_unit(1.0, unit), Err(IngestError::UnknownUnit(_))),
            "unit `{unit}` was accepted"
        );
    }
    // and through record validation
    let body = r#"{"event_id":"u1","event_type":"LabResult","occurred_at":"2025-06-02T06:00:00Z","recorded_at":"2025-06-02T06:00:00Z","subject":{"element_id":"X"},"source":"lab","payload":{"specimen_id":"c","age_days":28,"cured":"lab","strength":{"magnitude":4000,"unit":"psi"}}}"#;
    let ev = validate_record(&RawRecord::new("t", body, t0()), "1").map_err(|e| e.to_string())?;
    let Payload::LabResult(r) = ev.payload else {
        return Err("wrong payload".into());
    };
    ensure!((r.strength.magnitude - 27.5790).abs() <= 1e-4, "record gave {}", r.strength.magnitude);
    let bad = body.replace("psi", "bar");
    ensure!(
        matches!(validate_record(&RawRecord::new("t", bad, t0()), "1"), Err(IngestError::UnknownUnit(_))),
        "record with unit `bar` validated"
    );
    Ok(format!("{:.4} MPa, {} degC, unknown units rejected", psi.magnitude, f.magnitude))
}

/// Exhaustive scan written independently of the production matcher.
fn brute_force(subject: &SpatialRef, elements: &[Element], tol: &MappingTolerances) -> Result<ElementId, MappingError> {
    let mut hits: Vec<ElementId> = elements
        .iter()
        .filter(|e| match (subject, &e.location) {
            (SpatialRef::StationOffset { station_m, offset_m }, SpatialRef::StationOffset { station_m: s, offset_m: o }) => {
                (station_m - s).abs() <= tol.station_m && (offset_m - o).abs() <= tol.offset_m
            }
            (SpatialRef::Gps { lat, lon }, SpatialRef::Gps { lat: a, lon: b }) => {
                let (p1, p2) = (lat.to_radians(), a.to_radians());
                let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * (lon - b).to_radians().cos();
                6_371_008.8 * c.clamp(-1.0, 1.0).acos() <= tol.gps_m
            }
            (SpatialRef::ExplicitId(id), _) => &e.id == id,
            _ => false,
        })
        .map(|e| e.id.clone())
        .collect();
    hits.sort();
    match hits.len() {
        0 => Err(MappingError::NoMatch),
        1 => Ok(hits.remove(0)),
        _ => Err(MappingError::AmbiguousMatch(hits)),
    }
}

fn mapping_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let at = |id: String, location: SpatialRef| Element {
        id: ElementId::new(id).unwrap(),
        kind: ElementKind::Column,
        location,
        planned_placement: t0(),
        design_strength_mpa: 40.0,
    };
    let so = |s: f64, o: f64| SpatialRef::StationOffset { station_m: s, offset_m: o };
    let mut elements: Vec<Element> = (0..15).map(|i| at(format!("P{i:02}"), so(500.0 + 25.0 * i as f64, 0.0))).collect();
    // close pairs that make some locations ambiguous
    elements.push(at("P90".into(), so(604.0, 1.5)));
    elements.push(at("P91".into(), so(753.0, -2.0)));
    for i in 0..8 {
        elements.push(at(format!("G{i:02}"), SpatialRef::Gps { lat: -33.0 + 0.0004 * i as f64, lon: 151.0 }));
    }
    elements.push(at("G90".into(), SpatialRef::Gps { lat: -32.99992, lon: 151.0 }));
    let graph = ElementGraph::build(elements.clone(), vec![]).map_err(|e| e.to_string())?;
    let tol = MappingTolerances::default();

    let mut subjects = vec![
        so(602.0, 0.7),
        so(751.0, -1.0),
        SpatialRef::Gps { lat: -32.99996, lon: 151.0 },
    ];
    while subjects.len() < 50 {
        subjects.push(match rng.gen_range(0..3) {
            0 => so(rng.gen_range(490.0..870.0), rng.gen_range(-4.0..4.0)),
            1 => SpatialRef::Gps {
                lat: rng.gen_range(-33.0003..-32.9968),
                lon: rng.gen_range(150.9998..151.0002),
            },
            _ => SpatialRef::ExplicitId(ElementId::new(format!("P{:02}", rng.gen_range(0..20))).unwrap()),
        });
    }
    let (mut ambiguous, mut matched, mut none) = (0, 0, 0);
    for s in &subjects {
        let got = map_to_element(s, &graph, &tol).map(|m| m.element);
        let want = brute_force(s, &elements, &tol);
        ensure!(got == want, "{s:?}: matcher {got:?}, oracle {want:?}");
        match got {
            Ok(_) => matched += 1,
            Err(MappingError::AmbiguousMatch(_)) => ambiguous += 1,
            Err(_) => none += 1,
        }
    }
    ensure!(ambiguous >= 3, "only {ambiguous} ambiguous cases exercised");
    Ok(format!("50 subjects: {matched} matched, {ambiguous} ambiguous, {none} unmatched; all agree"))
}

fn end_to_end() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_twinqa");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for (name, defects, want_exit) in [("happy", None, 0), ("weak", Some("WeakBatch:deck"), 1)] {
        let d = dir.path().join(name);
        let ds = d.to_str().unwrap();
        let mut args = vec!["simulate", "--seed", "42", "--spans", "1", "--out", ds, "--with-decisions"];
        if let Some(def) = defects {
            args.extend(["--defects", def]);
        }
        let sim = Command::new(bin).args(&args).output().map_err(|e| e.to_string())?;
        ensure!(sim.status.success(), "simulate failed: {}", String::from_utf8_lossy(&sim.stderr));
        let p = |f: &str| d.join(f).to_str().unwrap().to_string();
        let out = Command::new(bin)
            .args([
                "run", "--project", &p("project.json"), "--ruleset", &p("ruleset.json"), "--events", &p("events.jsonl"),
                "--decisions", &p("decisions.jsonl"), "--report", &p("report.json"),
            ])
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(out.status.code() == Some(want_exit), "{name}: exit {:?}, wanted {want_exit}", out.status.code());
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(p("report.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let states: Vec<(String, String)> = report["export"]["elements"]
            .as_object()
            .ok_or("report has no elements")?
            .iter()
            .map(|(k, v)| (k.clone(), v["state"].as_str().unwrap_or("?").to_string()))
            .collect();
        ensure!(states.len() == 5, "{name}: {} elements", states.len());
        if name == "happy" {
            ensure!(states.iter().all(|(_, s)| s == "Released"), "happy: {states:?}");
            let warnings = report["warnings"].as_array().map_or(usize::MAX, |w| w.len());
            ensure!(warnings == 0, "happy: {warnings} warnings");
        } else {
            ensure!(states.contains(&("S1-DECK".into(), "Hold".into())), "weak: {states:?}");
        }
        lines.push(format!("{name} exit {want_exit}"));
    }
    Ok(format!("{}; happy path all Released with 0 warnings, deck on Hold", lines.join(", ")))
}

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 10] = [
        (1, "maturity oracle", Duration::from_secs(1), maturity_oracle),
        (2, "equivalent-age oracle", Duration::from_secs(1), equivalent_age_oracle),
        (3, "calibration recovery", Duration::from_secs(10), calibration_recovery),
        (4, "readiness forecast cross-check", Duration::from_secs(1), readiness_cross_check),
        (5, "gate safety", Duration::from_secs(60), gate_safety),
        (6, "replay determinism", Duration::from_secs(30), replay_determinism),
        (7, "latency semantics", Duration::from_secs(5), latency_semantics),
        (8, "unit normalization", Duration::from_secs(1), unit_normalization),
        (9, "mapping oracle", Duration::from_secs(5), mapping_oracle),
        (10, "end-to-end happy path", Duration::from_secs(10), end_to_end),
    ];
    let mut failed = 0;
    for (n, name, budget, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(d) if elapsed > budget => Err(format!("{d}; but took {:.2} s, budget {} s", elapsed.as_secs_f64(), budget.as_secs())),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS {n:>2} {name} [{:.3} s]: {detail}", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {n:>2} {name} [{:.3} s]: {why}", elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
