use proptest::prelude::*;

use super::*;
use crate::domain::{
    add_hours, Cured, ElementId, InspectionCompleted, InspectionOutcome, InspectionPhase, Payload,
    PlacementRecorded, Quantity, QaEvent, SpatialRef,
};
use crate::maturity::StrengthPrediction;

pub(crate) const FIXTURE_A: &str = r#"{
  "version": "A",
  "rules": {
    "DeckPour": {
      "required_inspections": [
        {"code": "REBAR_LAYOUT", "phase": "pre-placement", "hold_point": true},
        {"code": "FORMWORK", "phase": "pre-placement", "hold_point": true}
      ],
      "acceptance": {"property": "compressive_strength", "limit_mpa": 27.6, "age_days": 28},
      "readiness_threshold": 0.75,
      "testing_frequency": 2
    }
  }
}"#;

fn t(h: f64) -> Timestamp {
    add_hours("2025-04-01T08:00:00Z".parse().unwrap(), h)
}

fn deck() -> Element {
    let id = ElementId::new("DECK-1").unwrap();
    Element {
        id: id.clone(),
        kind: ElementKind::DeckPour,
        location: SpatialRef::ExplicitId(id),
        planned_placement: t(0.0),
        design_strength_mpa: 40.0,
    }
}

fn inspection(id: &str, code: &str, phase: InspectionPhase, pass: bool, at: f64) -> QaEvent {
    QaEvent::new(
        id,
        t(at),
        t(at),
        SpatialRef::ExplicitId(deck().id),
        Payload::InspectionCompleted(InspectionCompleted {
            inspection_code: code.into(),
            phase,
            result: if pass {
                InspectionOutcome::Pass
            } else {
                InspectionOutcome::Fail
            },
            notes: String::new(),
        }),
        "field-app",
    )
}

fn placement(start: f64) -> PlacementRecorded {
    PlacementRecorded {
        batch_id: "B1".into(),
        started_at: t(start),
        finished_at: t(start + 4.0),
        ambient_temp: Quantity::deg_c(18.0),
        observations: Default::default(),
    }
}

fn measured(id: &str, age: f64, mpa: f64) -> MeasuredStrength {
    MeasuredStrength {
        event_id: id.into(),
        age_days: age,
        strength_mpa: mpa,
        cured: Cured::Lab,
        at: t(age * 24.0),
    }
}

#[test]
fn parses_fixture_document() {
    let rs = parse_ruleset(FIXTURE_A).unwrap();
    assert_eq!(rs.version, "A");
    let deck = rs.for_kind(&ElementKind::DeckPour).unwrap();
    assert_eq!(deck.readiness_threshold, 0.75);
    assert_eq!(deck.acceptance.limit_mpa, 27.6);
    assert_eq!(deck.acceptance.age_days, 28.0);
    assert_eq!(deck.required_inspections.len(), 2);
    assert!(deck.required_inspections.iter().all(|r| r.hold_point));
    // serialized form parses back to the same value
    let again = RuleSet::from_value(&rs.to_value()).unwrap();
    assert_eq!(again, rs);
}

#[test]
fn rejects_bad_documents() {
    let bad = FIXTURE_A.replace("0.75", "1.5");
    assert_eq!(
        parse_ruleset(&bad),
        Err(RuleError::InvalidThreshold("rules.DeckPour.readiness_threshold".into()))
    );
    assert!(matches!(parse_ruleset(""), Err(RuleError::ParseError { .. })));
    assert!(matches!(parse_ruleset("{}"), Err(RuleError::ParseError { .. })));
    let unknown = FIXTURE_A.replace("DeckPour", "Pier");
    assert!(matches!(parse_ruleset(&unknown), Err(RuleError::ParseError { path, .. }) if path == "rules.Pier"));
    let zero_freq = FIXTURE_A.replace("\"testing_frequency\": 2", "\"testing_frequency\": 0");
    assert!(matches!(parse_ruleset(&zero_freq), Err(RuleError::InvalidThreshold(_))));
    let neg_limit = FIXTURE_A.replace("27.6", "-1");
    assert!(matches!(parse_ruleset(&neg_limit), Err(RuleError::InvalidThreshold(_))));
    let typo = FIXTURE_A.replace("\"hold_point\": true}", "\"hold\": true}");
    match parse_ruleset(&typo) {
        Err(RuleError::ParseError { path, .. }) => assert!(path.starts_with("rules.DeckPour.required_inspections"), "{path}"),
        other => panic!("{other:?}"),
    }
    let empty_version = FIXTURE_A.replace("\"version\": \"A\"", "\"version\": \"\"");
    assert!(matches!(parse_ruleset(&empty_version), Err(RuleError::ParseError { .. })));
}

#[test]
fn complete_before_placement_is_satisfied() {
    let rs = parse_ruleset(FIXTURE_A).unwrap();
    let events = [
        inspection("i1", "REBAR_LAYOUT", InspectionPhase::PrePlacement, true, -5.0),
        inspection("i2", "FORMWORK", InspectionPhase::PrePlacement, true, -3.0),
    ];
    let r = evaluate_completeness(&deck(), &rs, &events, Some(&placement(0.0)));
    assert!(r.satisfied, "{r:?}");
    assert_eq!(r.ruleset_version, "A");
}

#[test]
fn missing_rebar_layout() {
    let rs = parse_ruleset(FIXTURE_A).unwrap();
    let events = [inspection("i2", "FORMWORK", InspectionPhase::PrePlacement, true, -3.0)];
    let r = evaluate_completeness(&deck(), &rs, &events, Some(&placement(0.0)));
    assert!(!r.satisfied);
    assert_eq!(
        r.missing,
        vec![MissingInspection {
            code: "REBAR_LAYOUT".into(),
            phase: InspectionPhase::PrePlacement
        }]
    );
}

#[test]
fn pre_placement_inspection_after_pour_is_out_of_sequence() {
    let rs = parse_ruleset(FIXTURE_A).unwrap();
    let events = [
        inspection("i1", "REBAR_LAYOUT", InspectionPhase::PrePlacement, true, 1.0),
        inspection("i2", "FORMWORK", InspectionPhase::PrePlacement, true, -3.0),
    ];
    let r = evaluate_completeness(&deck(), &rs, &events, Some(&placement(0.0)));
    assert_eq!(r.out_of_sequence, vec!["REBAR_LAYOUT".to_string()]);
    assert!(r.missing.is_empty());
    assert!(!r.satisfied);
}

#[test]
fn later_pass_supersedes_failure() {
    let rs = parse_ruleset(FIXTURE_A).unwrap();
    let mut events = vec![
        inspection("i1", "REBAR_LAYOUT", InspectionPhase::PrePlacement, false, -6.0),
        inspection("i2", "FORMWORK", InspectionPhase::PrePlacement, true, -3.0),
    ];
    let r = evaluate_completeness(&deck(), &rs, &events, None);
    assert_eq!(r.failed, vec!["REBAR_LAYOUT".to_string()]);
    assert!(!r.satisfied);
    events.push(inspection("i3", "REBAR_LAYOUT", InspectionPhase::PrePlacement, true, -2.0));
    let r = evaluate_completeness(&deck(), &rs, &events, Some(&placement(0.0)));
    assert!(r.satisfied, "{r:?}");
}

#[test]
fn material_measured_compliant() {
    let rs = parse_ruleset(FIXTURE_A).unwrap();
    let r = evaluate_material(
        &deck(),
        &rs,
        None,
        &[measured("l1", 28.0, 29.0), measured("l2", 28.0, 28.5)],
    );
    assert_eq!(r.status, MaterialStatus::CompliantMeasured);
    match r.evidence {
        MaterialEvidence::Measured { mean_mpa, .. } => assert!((mean_mpa - 28.75).abs() < 1e-12),
        other => panic!("{other:?}"),
    }
    let r = evaluate_material(&deck(), &rs, None, &[measured("l1", 28.0, 20.0)]);
    assert_eq!(r.status, MaterialStatus::DeficientMeasured);
}

#[test]
fn material_trending_from_prediction_band() {
    let rs = parse_ruleset(FIXTURE_A).unwrap();
    // readiness = 0.75 * 40 = 30 MPa
    let good = StrengthPrediction {
        mean_mpa: 32.0,
        lower_mpa: 30.1,
        upper_mpa: 33.9,
        maturity_degc_h: 1500.0,
        basis: crate::maturity::PredictionBasis::Predicted,
    };
    assert_eq!(evaluate_material(&deck(), &rs, Some(&good), &[]).status, MaterialStatus::TrendingCompliant);
    let poor = StrengthPrediction {
        mean_mpa: 25.0,
        lower_mpa: 23.0,
        upper_mpa: 29.9,
        ..good.clone()
    };
    assert_eq!(evaluate_material(&deck(), &rs, Some(&poor), &[]).status, MaterialStatus::TrendingDeficient);
    let straddling = StrengthPrediction {
        mean_mpa: 30.0,
        lower_mpa: 28.0,
        upper_mpa: 32.0,
        ..good
    };
    assert_eq!(evaluate_material(&deck(), &rs, Some(&straddling), &[]).status, MaterialStatus::InsufficientData);
    assert_eq!(evaluate_material(&deck(), &rs, None, &[]).status, MaterialStatus::InsufficientData);
    // early-age results alone never decide
    assert_eq!(
        evaluate_material(&deck(), &rs, None, &[measured("l7", 7.0, 10.0)]).status,
        MaterialStatus::InsufficientData
    );
}

proptest! {
    #[test]
    fn measured_supersedes_predicted(
        mean in 0.0f64..60.0,
        half in 0.0f64..10.0,
        strengths in prop::collection::vec(10.0f64..50.0, 1..4),
    ) {
        let rs = parse_ruleset(FIXTURE_A).unwrap();
        let ms: Vec<_> = strengths.iter().enumerate().map(|(i, &s)| measured(&format!("m{i}"), 28.0, s)).collect();
        let baseline = evaluate_material(&deck(), &rs, None, &ms).status;
        let p = StrengthPrediction::band(mean, half, 1000.0);
        prop_assert_eq!(evaluate_material(&deck(), &rs, Some(&p), &ms).status, baseline);
    }

    #[test]
    fn adding_a_passing_inspection_never_unsatisfies(
        spec in prop::collection::vec((0usize..3, 0usize..3, any::<bool>(), -10.0f64..10.0), 0..10),
        add in (0usize..3, 0usize..3, -10.0f64..10.0),
        placed in any::<bool>(),
    ) {
        let codes = ["REBAR_LAYOUT", "FORMWORK", "CURING"];
        let phases = [InspectionPhase::PrePlacement, InspectionPhase::Placement, InspectionPhase::PostPlacement];
        let rs = parse_ruleset(FIXTURE_A).unwrap();
        let mut events: Vec<QaEvent> = spec.iter().enumerate()
            .map(|(i, &(c, p, pass, at))| inspection(&format!("e{i:02}"), codes[c], phases[p], pass, at))
            .collect();
        let pl = placement(0.0);
        let placement = placed.then_some(&pl);
        let before = evaluate_completeness(&deck(), &rs, &events, placement).satisfied;
        events.push(inspection("zz", codes[add.0], phases[add.1], true, add.2));
        let after = evaluate_completeness(&deck(), &rs, &events, placement).satisfied;
        prop_assert!(!before || after);
    }
}
