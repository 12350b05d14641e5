use std::sync::Arc;

use fbdiag::fde::plan::{standard_plans, Injection};
use fbdiag::fde::{
    compare, AnomalyKind, AnomalyOrigin, Command, DiagnosisReport, DiagnosticTarget, Expected, Fde, FdeConfig, FdeError,
    FdeMode, FaultPathway, GateMode, Hypothesis, Instrumentation, Observed, PacketKind, TelemetryPacket, Verdict,
};
use fbdiag::hvac::{set_software_fault, Simulation, SoftwareFault, ROOM_CONTROLLER, TWO_ROOM};
use fbdiag::model::{parse_system, Value};
use fbdiag::plant::{Plant, PlantCoefficients, SensorFaultMode};

fn still_plant(zones: &[f64]) -> Plant {
    let coeffs = PlantCoefficients { walk_step_c: 0.0, outside_init_c: zones[0], ..Default::default() };
    Plant::new(coeffs, zones, 11)
}

fn room(temp_c: f64) -> Simulation {
    let sys = Arc::new(parse_system(ROOM_CONTROLLER).unwrap());
    Simulation::new(sys, still_plant(&[temp_c]), &[], 10).unwrap()
}

fn engine(sim: &mut Simulation, mode: FdeMode) -> Fde {
    Fde::new(&FdeConfig { mode, ..Default::default() }, sim).unwrap()
}

fn conversion_bug(sim: &mut Simulation) {
    set_software_fault(&mut sim.app, "F_TO_C_CONV", Some(SoftwareFault { lo_f: 60.0, hi_f: 80.0, offset_c: 7.0 }))
        .unwrap();
}

fn intermittent(sim: &mut Simulation) {
    sim.world
        .borrow_mut()
        .plant
        .set_sensor_fault(0, SensorFaultMode::Intermittent { noise_amp_f: 20.0, dropout_prob: 0.3 })
        .unwrap();
}

/// Polls every 50 ms until `end`, returning completed diagnoses.
fn run(sim: &mut Simulation, fde: &mut Fde, end: u64) -> Vec<DiagnosisReport> {
    let mut out = Vec::new();
    let mut t = sim.clock();
    while t < end {
        t = (t + 50).min(end).max(sim.clock());
        sim.advance_to(t).unwrap();
        out.extend(fde.step(sim).unwrap());
        t = sim.clock();
    }
    out
}

#[test]
fn compare_reports_first_failing_item() {
    let c = compare(&[Expected::Value(20.0)], &[Observed::Value(27.0)], 0.1);
    assert_eq!(c.verdict, Verdict::Mismatch { item: 1, reason: "expected 20, observed 27".into() });
    assert_eq!(c.residuals, vec![Some(7.0)]);
    let c = compare(
        &[Expected::Value(10.0), Expected::Silent, Expected::Event("ERROR".into())],
        &[Observed::Value(10.05), Observed::Nothing, Observed::Event("ERROR".into())],
        0.1,
    );
    assert!(c.verdict.is_match());
    let c = compare(&[Expected::Silent, Expected::Value(1.0)], &[Observed::Value(3.0), Observed::Nothing], 0.1);
    assert!(matches!(c.verdict, Verdict::Mismatch { item: 1, .. }));
}

#[test]
fn gate_commands_validate_targets() {
    let mut sim = room(20.0);
    let mut instr = Instrumentation::new();
    assert_eq!(instr.rewire(&mut sim.app, &[42]), Err(FdeError::UnknownDp(42)));
    let ids = instr.rewire(&mut sim.app, &[1, 2]).unwrap();
    assert_eq!(instr.rewire(&mut sim.app, &[1]), Err(FdeError::AlreadyRewired(1)));
    assert_eq!(instr.gate_close(&mut sim.app, &[ids[0], 9]), Err(FdeError::UnknownGate(9)));
    assert_eq!(instr.gate(ids[0]).unwrap().mode, GateMode::Monitor);
    let r = instr.inject(&mut sim.app, ids[0], "TEMP", &[Value::Real(50.0)], 100, 1000, None);
    assert_eq!(r, Err(FdeError::GateNotIsolated(ids[0])));
    assert_eq!(instr.gate(ids[0]).unwrap().sampling_interval_ms, 50);
    assert_eq!(instr.gate(ids[0]).unwrap().ports, vec!["TEMP".to_string(), "TS".to_string()]);
}

#[test]
fn monitor_gates_are_transparent() {
    let mut plain = room(21.0);
    let reference = plain.advance_to(5_000).unwrap();
    let mut gated = room(21.0);
    let mut fde = engine(&mut gated, FdeMode::Monitor);
    assert_eq!(fde.instr.len(), 5);
    let mut trace = Vec::new();
    for t in (50..=5_000).step_by(50) {
        trace.extend(gated.advance_to(t).unwrap());
        fde.step(&mut gated).unwrap();
    }
    assert_eq!(trace, reference);
    let packets = fde.take_telemetry();
    let samples = packets.iter().filter(|p| p.dp == 1 && p.port == "TEMP").count();
    assert_eq!(samples, 50);
    assert!(packets.iter().all(|p| matches!(p.kind, PacketKind::Event | PacketKind::Data | PacketKind::Heartbeat)));
    let beats = packets.iter().filter(|p| p.kind == PacketKind::Heartbeat).count();
    assert_eq!(beats, 5 * 5);
    assert_eq!(fde.anomalies().count(), 0);
}

#[test]
fn telemetry_round_trips_as_ndjson() {
    let mut sim = room(21.0);
    let mut fde = engine(&mut sim, FdeMode::Monitor);
    run(&mut sim, &mut fde, 1_000);
    let packets = fde.take_telemetry();
    let text: String = packets.iter().map(|p| p.to_ndjson() + "\n").collect();
    assert_eq!(fbdiag::fde::gate::parse_ndjson(&text).unwrap(), packets);
    let event = packets.iter().find(|p| p.is_event()).unwrap();
    assert!(!event.to_ndjson().contains("value"));
    let first: TelemetryPacket = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first.seq, 0);
}

#[test]
fn commands_parse_and_execute() {
    let mut sim = room(21.0);
    let mut instr = Instrumentation::new();
    for line in [
        r#"{"cmd":"rewire","dps":[1,2]}"#,
        r#"{"cmd":"gate_close","gates":[0]}"#,
        r#"{"cmd":"inject","gate":0,"port":"TEMP","values":[50.0],"spacing_ms":100,"start_ms":500,"stamp_port":"TS"}"#,
    ] {
        Command::parse(line).unwrap().execute(&mut instr, &mut sim.app).unwrap();
    }
    assert_eq!(instr.gate(0).unwrap().mode, GateMode::Inject);
    sim.advance_to(600).unwrap();
    let packets = instr.poll(&mut sim.app).unwrap();
    let conv: Vec<_> = packets.iter().filter(|p| p.dp == 2 && p.port == "TEMP_C").collect();
    assert_eq!(conv.len(), 1);
    assert!((conv[0].number().unwrap() - 10.0).abs() < 1e-9);
    Command::parse(r#"{"cmd":"gate_open","gates":[0]}"#).unwrap().execute(&mut instr, &mut sim.app).unwrap();
    Command::parse(r#"{"cmd":"unwire"}"#).unwrap().execute(&mut instr, &mut sim.app).unwrap();
    assert!(instr.is_empty());
    assert!(Command::parse(r#"{"cmd":"explode"}"#).is_err());
}

#[test]
fn standard_plans_expect_the_conversion_formula() {
    let mut sim = room(21.0);
    let fde = engine(&mut sim, FdeMode::Monitor);
    let p = FaultPathway::from_descriptor(sim.app.descriptor(), "temp").unwrap();
    let plans = standard_plans(&p, &fde.instr).unwrap();
    assert_eq!(plans.len(), 3);
    let conv = &plans[1];
    let expected: Vec<_> = conv.injections[0]
        .values
        .iter()
        .map(|v| {
            let c = (v.as_f64().unwrap() - 32.0) * 5.0 / 9.0;
            if (-100.0..=150.0).contains(&c) { Expected::Value(c) } else { Expected::Silent }
        })
        .collect();
    assert_eq!(conv.expectations[0].items, expected);
    assert_eq!(conv.expectations[1].items.last(), Some(&Expected::Event("ERROR".into())));
    let bad = Injection { dp: 99, port: "X".into(), values: vec![], spacing_ms: 1, stamp_port: None };
    let mut broken = conv.clone();
    broken.injections = vec![bad];
    assert!(broken.check(&p).is_err());
}

fn forced(setup: fn(&mut Simulation)) -> (Simulation, Fde, DiagnosisReport) {
    let mut sim = room(20.0);
    setup(&mut sim);
    let mut fde = engine(&mut sim, FdeMode::Auto);
    let report = fde.force_diagnosis("temp", &mut sim).unwrap();
    (sim, fde, report)
}

#[test]
fn forced_diagnosis_of_healthy_system_finds_no_fault() {
    let (mut sim, fde, report) = forced(|_| {});
    assert_eq!(report.origin, AnomalyOrigin::Forced);
    assert_eq!(report.hypothesis, Hypothesis::NoFault, "{}", report.to_json());
    assert!(report.outcomes.iter().all(|o| o.verdict.is_match()));
    assert!(fde.instr.gates().all(|g| g.mode == GateMode::Monitor));
    assert!(sim.app.halts().is_empty());
    assert!(!sim.take_backlog().is_empty());
}

#[test]
fn forced_diagnosis_localizes_conversion_bug() {
    let (_, _, report) = forced(conversion_bug);
    assert_eq!(report.hypothesis, Hypothesis::ConversionFault, "{}", report.to_json());
    let conv = &report.outcomes[1];
    assert_eq!(conv.verdict, Verdict::Mismatch { item: 3, reason: "expected 20, observed 27".into() });
    assert!(report.outcomes[0].verdict.is_match());
    assert!(report.outcomes[2].verdict.is_match());
}

#[test]
fn forced_diagnosis_localizes_intermittent_sensor() {
    let (_, _, report) = forced(intermittent);
    assert_eq!(report.hypothesis, Hypothesis::SensorFault, "{}", report.to_json());
    assert!(!report.outcomes[0].verdict.is_match());
}

#[test]
fn auto_mode_diagnoses_conversion_bug_once() {
    let mut sim = room(20.0);
    conversion_bug(&mut sim);
    let mut fde = engine(&mut sim, FdeMode::Auto);
    let reports = run(&mut sim, &mut fde, 60_000);
    assert_eq!(reports.len(), 1);
    let r = &reports[0];
    assert_eq!(r.origin, AnomalyOrigin::Monitor);
    assert!(matches!(r.trigger.as_ref().unwrap().kind, AnomalyKind::Inconsistency { .. }));
    assert_eq!(r.hypothesis, Hypothesis::ConversionFault);
    assert!(r.posterior.conversion_fault >= 0.95, "{}", r.to_json());
}

#[test]
fn auto_mode_diagnoses_intermittent_sensor() {
    let mut sim = room(20.0);
    intermittent(&mut sim);
    let mut fde = engine(&mut sim, FdeMode::Auto);
    let reports = run(&mut sim, &mut fde, 60_000);
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].hypothesis, Hypothesis::SensorFault, "{}", reports[0].to_json());
}

#[test]
fn healthy_auto_run_never_intervenes() {
    let mut sim = room(20.0);
    let mut fde = engine(&mut sim, FdeMode::Auto);
    assert!(run(&mut sim, &mut fde, 60_000).is_empty());
    assert_eq!(fde.anomalies().count(), 0);
}

#[test]
fn halted_main_controller_is_flagged_as_shared() {
    let sys = Arc::new(parse_system(TWO_ROOM).unwrap());
    let mut sim = Simulation::new(sys, still_plant(&[20.0, 22.0]), &[], 10).unwrap();
    let mut fde = engine(&mut sim, FdeMode::Monitor);
    assert_eq!(fde.agents.len(), 2);
    run(&mut sim, &mut fde, 2_000);
    assert!(fde.exchange_beliefs().shared.is_empty());
    sim.app.halt("HVAC_MAIN", "stopped by test").unwrap();
    run(&mut sim, &mut fde, 4_000);
    let view = fde.exchange_beliefs();
    assert_eq!(view.agents.len(), 2);
    assert_eq!(view.shared.len(), 1);
    assert_eq!(view.shared[0].instance, "HVAC_MAIN");
    assert_eq!(view.shared[0].agents.len(), 2);
}

#[test]
fn off_mode_wires_nothing() {
    let mut sim = room(20.0);
    let mut fde = engine(&mut sim, FdeMode::Off);
    assert!(fde.instr.is_empty());
    assert!(fde.step(&mut sim).unwrap().is_empty());
    assert!(fde.force_diagnosis("temp", &mut sim).is_err());
    assert!(sim.app().timer_periods().len() >= 2);
}
