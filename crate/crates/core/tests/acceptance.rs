//! End-to-end acceptance criteria. Each test prints one PASS/FAIL line with
//! its measured figures; run with `--nocapture` to see them. The criteria
//! share a lock so wall-clock measurements are not disturbed by each other.

mod common;

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use fbdiag::fde::{
    gate, AnomalyKind, AnomalyOrigin, Belief, Component, DiagnosisReport, Evidence, Fde, FdeConfig,
    FdeMode, Hypothesis, LikelihoodTable, PacketKind, TelemetryPacket,
};
use fbdiag::hvac::Simulation;
use fbdiag::model::{parse_system, Value};
use fbdiag::runtime::{BuiltinRegistry, RuntimeApp};
use fbdiag::scenario::{run, RunOptions, RunReport, Scenario, Sinks};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

const SEEDS: u64 = 100;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios")
}

fn load(name: &str) -> Scenario {
    Scenario::load(&fixtures().join(name)).unwrap()
}

fn scenario(json: serde_json::Value) -> Scenario {
    Scenario::from_json(&json.to_string(), &fixtures()).unwrap()
}

fn report(s: &Scenario, seed: u64) -> RunReport {
    let opts = RunOptions { seed: Some(seed), ..Default::default() };
    run(s, opts, Sinks::default()).unwrap().report
}

fn verdict(name: &str, pass: bool, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

/// Polls a simulation with its engine every 50 ms until `end`.
fn drive(sim: &mut Simulation, fde: &mut Fde, end: u64, packets: &mut Vec<TelemetryPacket>) {
    while sim.clock() < end {
        let next = ((sim.clock() / 50 + 1) * 50).min(end);
        sim.advance_to(next).unwrap();
        fde.step(sim).unwrap();
        packets.extend(fde.take_telemetry());
    }
}

fn monitored(seed: u64) -> (Simulation, Fde) {
    let mut sim = load("healthy.json").build(seed).unwrap();
    let fde = Fde::new(&FdeConfig { mode: FdeMode::Monitor, ..Default::default() }, &mut sim).unwrap();
    (sim, fde)
}

fn isolate(sim: &mut Simulation, fde: &mut Fde) -> usize {
    let g1 = fde.instr.gate_for_dp(1).unwrap();
    let g5 = fde.instr.gate_for_dp(5).unwrap();
    fde.instr.gate_close(&mut sim.app, &[g1, g5]).unwrap();
    g1
}

#[test]
fn c1_ten_gate_monitor_overhead() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let s = load("ten_gate_monitor.json");
    let bare = run(&s, RunOptions { fde: Some(FdeMode::Off), ..Default::default() }, Sinks::default()).unwrap().report;
    let gated = run(&s, RunOptions { fde: Some(FdeMode::Monitor), ..Default::default() }, Sinks::default()).unwrap().report;
    let expected = s.file.duration_ms / 100;
    let full = |r: &RunReport| r.counters.sensor_samples.len() == 2 && r.counters.sensor_samples.iter().all(|(_, n)| *n == expected);
    let ratio = gated.counters.wall_clock_ms / bare.counters.wall_clock_ms;
    let pass = gated.counters.gates == 10
        && full(&bare)
        && full(&gated)
        && ratio <= 2.0
        && bare.all_budgets_met()
        && gated.all_budgets_met()
        && gated.anomalies.is_empty();
    verdict(
        "ten-gate monitor overhead",
        pass,
        format!(
            "gates {}, samples bare {:?} gated {:?}, wall {:.0} ms vs {:.0} ms (x{ratio:.2}), budgets {}/{}",
            gated.counters.gates,
            bare.counters.sensor_samples,
            gated.counters.sensor_samples,
            bare.counters.wall_clock_ms,
            gated.counters.wall_clock_ms,
            bare.all_budgets_met(),
            gated.all_budgets_met()
        ),
    );
}

#[test]
fn c2_thousand_presses_within_budget() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let s = scenario(serde_json::json!({
        "name": "thousand-presses",
        "system": "room_controller",
        "duration_ms": 2_010_000,
        "zones": [20.0],
        "occupant": [{ "at_ms": 5000, "button": "up", "repeat": 999, "every_ms": 2000, "alternate": true }]
    }));
    let r = report(&s, 1);
    let c = &r.compliance;
    let pass = s.presses().len() == 1000 && c[2].total == 1000 && r.all_budgets_met();
    let lines: Vec<String> =
        c.iter().map(|c| format!("{} {}/{} max {:?} ms", c.requirement, c.met, c.total, c.max_latency_ms)).collect();
    verdict("Table I timing over 1000 presses", pass, lines.join("; "));
}

#[test]
fn c3_absolute_zero_takes_error_branch() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let (mut errors, mut leaks, mut unseen) = (0, 0, 0);
    for seed in 0..SEEDS {
        let (mut sim, mut fde) = monitored(seed);
        let warmup = 2000 + (seed * 530) % 3000;
        let mut before = Vec::new();
        drive(&mut sim, &mut fde, warmup, &mut before);
        if !before.iter().any(|p| p.dp == 5 && p.port == "ZONE_TEMP" && p.is_observed()) {
            unseen += 1;
        }
        let g1 = isolate(&mut sim, &mut fde);
        let at = warmup + 100;
        fde.instr.inject(&mut sim.app, g1, "TEMP", &[Value::Real(-459.67)], 100, at, Some("TS")).unwrap();
        let mut window = Vec::new();
        drive(&mut sim, &mut fde, at + 2000, &mut window);
        if window.iter().any(|p| p.dp == 3 && p.kind == PacketKind::Event && p.port == "ERROR" && p.time_ms >= at) {
            errors += 1;
        }
        leaks += window.iter().filter(|p| p.dp == 5 && p.port == "ZONE_TEMP" && p.is_observed()).count();
    }
    verdict(
        "absolute-zero error branch",
        errors == SEEDS && leaks == 0 && unseen == 0,
        format!("ERROR at DP3 in {errors}/{SEEDS}, ZONE_TEMP at DP5 during window {leaks}"),
    );
}

#[test]
fn c4_seeded_conversion_bug() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let s = load("conversion_bug.json");
    let (mut diagnosed, mut sensor, mut detected) = (0, 0, 0);
    for seed in 0..SEEDS {
        let mut tele = Vec::new();
        let opts = RunOptions { seed: Some(seed), ..Default::default() };
        let r = run(&s, opts, Sinks { trace: None, telemetry: Some(&mut tele) }).unwrap().report;
        let packets = gate::parse_ndjson(std::str::from_utf8(&tele).unwrap()).unwrap();
        let Some(d) = r.diagnoses.first() else { continue };
        let trigger = d.trigger.as_ref().unwrap();
        let dp3_silent = !packets.iter().any(|p| p.dp == 3 && p.kind == PacketKind::Event && p.time_ms <= trigger.time_ms);
        if matches!(trigger.kind, AnomalyKind::Inconsistency { .. }) && dp3_silent {
            detected += 1;
        }
        if d.hypothesis == Hypothesis::ConversionFault && d.posterior.conversion_fault >= 0.95 {
            diagnosed += 1;
        }
        sensor += r.diagnoses.iter().filter(|d| d.hypothesis == Hypothesis::SensorFault).count();
    }
    verdict(
        "seeded conversion bug",
        detected == SEEDS && diagnosed >= 95 && sensor == 0,
        format!("inconsistency with DP3 silent {detected}/{SEEDS}, ConversionFault >= 0.95 in {diagnosed}/{SEEDS}, SensorFault {sensor}"),
    );
}

fn segments_match(d: &DiagnosisReport) -> bool {
    d.outcomes.iter().filter(|o| o.component != Component::Sensor).all(|o| o.verdict.is_match())
}

#[test]
fn c5_sensor_exoneration() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let s = load("intermittent_sensor.json");
    let mut good = 0;
    for seed in 0..SEEDS {
        let r = report(&s, seed);
        if let Some(d) = r.diagnoses.first() {
            if d.hypothesis == Hypothesis::SensorFault && segments_match(d) && d.outcomes.len() == 3 {
                good += 1;
            }
        }
    }
    verdict(
        "sensor exoneration",
        good >= 95,
        format!("conversion and controller segments Match with SensorFault MAP in {good}/{SEEDS}"),
    );
}

/// Intervention must start within the rate window of the last setpoint
/// change, plus one polling interval.
const INTERVENTION_BUDGET_MS: u64 = 300_000 + 100;

fn intervention_bar(s: &Scenario) -> (u64, Vec<u64>) {
    let last_press = s.presses().last().unwrap().time_ms;
    let mut good = 0;
    let mut delays = Vec::new();
    for seed in 0..SEEDS {
        let r = report(s, seed);
        if let Some(d) = r.diagnoses.first() {
            let delay = d.started_ms.saturating_sub(last_press);
            delays.push(delay);
            if d.origin == AnomalyOrigin::Rate
                && delay <= INTERVENTION_BUDGET_MS
                && d.hypothesis == Hypothesis::ActuatorOrPlantFault
            {
                good += 1;
            }
        }
    }
    (good, delays)
}

#[test]
fn c6_blocked_duct_and_no_response() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let duct = load("blocked_duct.json");
    let (duct_ok, duct_delays) = intervention_bar(&duct);
    let (vent_ok, vent_delays) = intervention_bar(&load("no_response.json"));
    let mut quiet = duct.clone();
    quiet.file.faults.clear();
    let false_positives = (0..SEEDS).filter(|&seed| !report(&quiet, seed).diagnoses.is_empty()).count();
    let worst = |d: &[u64]| d.iter().max().copied().unwrap_or(0);
    verdict(
        "blocked duct",
        duct_ok >= 95 && vent_ok >= 95 && false_positives <= 2,
        format!(
            "blocked duct {duct_ok}/{SEEDS} (max delay {} ms), no response {vent_ok}/{SEEDS} (max delay {} ms), fault-free interventions {false_positives}/{SEEDS}",
            worst(&duct_delays),
            worst(&vent_delays)
        ),
    );
}

#[test]
fn c7_monitor_transparency() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut rng = ChaCha8Rng::seed_from_u64(61499);
    let mut equal = 0;
    let mut records = 0;
    for _ in 0..20 {
        let two = rng.gen_bool(0.5);
        let rooms = if two { 2 } else { 1 };
        let presses: Vec<_> = (0..rng.gen_range(0..12))
            .map(|_| {
                serde_json::json!({
                    "at_ms": rng.gen_range(1..60) * 1000 + rng.gen_range(0..10) * 10,
                    "zone": rng.gen_range(0..rooms),
                    "button": if rng.gen() { "up" } else { "down" },
                })
            })
            .collect();
        let s = scenario(serde_json::json!({
            "system": if two { "two_room" } else { "room_controller" },
            "duration_ms": rng.gen_range(30..90) * 1000,
            "seed": rng.gen::<u32>(),
            "zones": (0..rooms).map(|_| rng.gen_range(17.0..25.0)).collect::<Vec<f64>>(),
            "occupant": presses,
        }));
        let trace = |mode| {
            let opts = RunOptions { fde: Some(mode), keep_trace: true, ..Default::default() };
            run(&s, opts, Sinks::default()).unwrap().trace
        };
        let bare = trace(FdeMode::Off);
        let gated = trace(FdeMode::Monitor);
        records += bare.len();
        if bare == gated {
            equal += 1;
        }
    }
    verdict("monitor transparency", equal == 20, format!("{equal}/20 traces equal, {records} records compared"));
}

/// Drives F_TO_C_CONV through an isolated DP1 and reads DP2. A lead-in
/// ramp from the last live reading stays under the block's jump filter.
fn conversion_sweep() -> Result<usize, String> {
    let (mut sim, mut fde) = monitored(3);
    let mut packets = Vec::new();
    drive(&mut sim, &mut fde, 1000, &mut packets);
    let live = packets.iter().rev().find(|p| p.dp == 1 && p.port == "TEMP").and_then(|p| p.number()).unwrap();
    let g1 = isolate(&mut sim, &mut fde);
    let sweep: Vec<f64> = (0..=800).map(|k| -100.0 + k as f64 * 0.5).collect();
    let lead: Vec<f64> = (1..).map(|k| live - 8.0 * k as f64).take_while(|f| *f > -100.0).collect();
    let values: Vec<Value> = lead.iter().chain(&sweep).map(|f| Value::Real(*f)).collect();
    fde.instr.inject(&mut sim.app, g1, "TEMP", &values, 100, 1100, Some("TS")).unwrap();
    let mut out = Vec::new();
    drive(&mut sim, &mut fde, 1100 + 100 * values.len() as u64 + 200, &mut out);
    let got: Vec<f64> =
        out.iter().filter(|p| p.dp == 2 && p.port == "TEMP_C" && p.is_observed()).filter_map(|p| p.number()).collect();
    if got.len() != values.len() {
        return Err(format!("{} outputs for {} inputs", got.len(), values.len()));
    }
    for (f, c) in sweep.iter().zip(&got[lead.len()..]) {
        let expected = (f - 32.0) * 5.0 / 9.0;
        if (c - expected).abs() > 1e-9 {
            return Err(format!("{f} F gave {c} C, expected {expected}"));
        }
    }
    Ok(sweep.len())
}

struct EccCase {
    name: &'static str,
    fbtype: &'static str,
    /// Events posted to instance X at time zero, in order.
    inputs: &'static [&'static str],
    /// One entry per delivered event: its transitions as `from->to`, then
    /// `!EVENT` for each emitted event, or `no transition`.
    expected: &'static [&'static str],
    final_state: &'static str,
}

const ECC_CASES: &[EccCase] = &[
    EccCase {
        name: "toggle",
        fbtype: "fbtype F basic\n event in T\n event out ON\n event out OFF\n state OFF_S\n state ON_S\n action -> ON\n state GO_OFF\n action -> OFF\n transition OFF_S -> ON_S on T\n transition ON_S -> GO_OFF on T\n transition GO_OFF -> OFF_S\nend_fbtype",
        inputs: &["T", "T", "T"],
        expected: &["OFF_S->ON_S !ON", "ON_S->GO_OFF GO_OFF->OFF_S !OFF", "OFF_S->ON_S !ON"],
        final_state: "ON_S",
    },
    EccCase {
        name: "modulo counter",
        fbtype: "fbtype F basic\n event in CU\n event out WRAP\n var n INT\n algorithm INC\n n := n + 1;\n end_algorithm\n algorithm RESET\n n := 0;\n end_algorithm\n state IDLE\n state CNT\n action INC\n state W\n action RESET -> WRAP\n transition IDLE -> CNT on CU\n transition CNT -> W when n >= 3\n transition CNT -> IDLE\n transition W -> IDLE\nend_fbtype",
        inputs: &["CU", "CU", "CU", "CU"],
        expected: &["IDLE->CNT CNT->IDLE", "IDLE->CNT CNT->IDLE", "IDLE->CNT CNT->W W->IDLE !WRAP", "IDLE->CNT CNT->IDLE"],
        final_state: "IDLE",
    },
    EccCase {
        name: "declaration order wins",
        fbtype: "fbtype F basic\n event in GO\n event out A\n event out B\n state S\n state P\n action -> A\n state Q\n action -> B\n transition S -> P on GO\n transition S -> Q on GO\n transition P -> S\n transition Q -> S\nend_fbtype",
        inputs: &["GO"],
        expected: &["S->P P->S !A"],
        final_state: "S",
    },
    EccCase {
        name: "guard loop to quiescence",
        fbtype: "fbtype F basic\n event in GO\n event out DONE\n var k INT\n algorithm INC\n k := k + 1;\n end_algorithm\n state S\n state L\n action INC\n state E\n action -> DONE\n transition S -> L on GO\n transition L -> E when k >= 3\n transition L -> L\n transition E -> S\nend_fbtype",
        inputs: &["GO"],
        expected: &["S->L L->L L->L L->E E->S !DONE"],
        final_state: "S",
    },
    EccCase {
        name: "unmatched event is ignored",
        fbtype: "fbtype F basic\n event in A\n event in B\n event out OK\n state IDLE\n state WAIT\n state DONE\n action -> OK\n transition IDLE -> WAIT on A\n transition WAIT -> DONE on B\n transition DONE -> IDLE\nend_fbtype",
        inputs: &["B", "A", "A", "B"],
        expected: &["no transition", "IDLE->WAIT", "no transition", "WAIT->DONE DONE->IDLE !OK"],
        final_state: "IDLE",
    },
    EccCase {
        name: "guarded branch selection",
        fbtype: "fbtype F basic\n event in GO\n event out HI\n event out LO\n var n INT\n algorithm INC\n n := n + 1;\n end_algorithm\n state S\n state C\n action INC\n state H\n action -> HI\n state L\n action -> LO\n transition S -> C on GO\n transition C -> H when n MOD 2 = 0\n transition C -> L\n transition H -> S\n transition L -> S\nend_fbtype",
        inputs: &["GO", "GO"],
        expected: &["S->C C->L L->S !LO", "S->C C->H H->S !HI"],
        final_state: "S",
    },
];

fn run_ecc_case(case: &EccCase) -> Result<(), String> {
    let src = format!("{}\ndevice D\nsubapp A on D\n  instance X : F\nend_subapp\n", case.fbtype);
    let sys = parse_system(&src).map_err(|d| format!("{d:?}"))?;
    let mut app = RuntimeApp::instantiate(Arc::new(sys), &BuiltinRegistry::new()).map_err(|e| e.to_string())?;
    for e in case.inputs {
        app.post_event("X", e, 0).map_err(|e| e.to_string())?;
    }
    let mut seen = Vec::new();
    while app.next_event_time().is_some() {
        let rep = app.step().map_err(|e| e.to_string())?;
        if rep.transitions.is_empty() {
            seen.push("no transition".to_string());
            continue;
        }
        let moves = rep.transitions.iter().map(|(from, to)| format!("{from}->{to}"));
        let fired = rep.fired.iter().map(|e| format!("!{e}"));
        seen.push(moves.chain(fired).collect::<Vec<_>>().join(" "));
    }
    let state = app.ecc_state("X").map_err(|e| e.to_string())?;
    if seen != case.expected || state != Some(case.final_state) {
        return Err(format!("{}: got {seen:?} ending in {state:?}", case.name));
    }
    Ok(())
}

#[test]
fn c8_oracle_equivalence() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let sweep = conversion_sweep();
    let exprs = common::expr::check_expressions(1000);
    let ecc: Vec<_> = ECC_CASES.iter().map(run_ecc_case).filter_map(Result::err).collect();
    verdict(
        "oracle equivalence",
        sweep.is_ok() && exprs == Ok(1000) && ecc.is_empty() && ECC_CASES.len() >= 6,
        format!("conversion sweep {sweep:?}, expressions {exprs:?}, ECC cases {}/{} {ecc:?}", ECC_CASES.len() - ecc.len(), ECC_CASES.len()),
    );
}

const EVIDENCE: [Evidence; 14] = [
    Evidence::Outlier,
    Evidence::Inconsistency,
    Evidence::Latency,
    Evidence::ErrorBranch,
    Evidence::MissingAck,
    Evidence::RateAnomaly,
    Evidence::SegmentMatch(Component::Sensor),
    Evidence::SegmentMatch(Component::Conversion),
    Evidence::SegmentMatch(Component::Controller),
    Evidence::SegmentMismatch(Component::Sensor),
    Evidence::SegmentMismatch(Component::Conversion),
    Evidence::SegmentMismatch(Component::Controller),
    Evidence::ExonerateSensor,
    Evidence::ExoneratePlant,
];

#[test]
fn c9_belief_algebra() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let table = LikelihoodTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut normalized, mut stable, mut worst) = (0, 0, 0.0f64);
    for _ in 0..10_000 {
        let weights: [f64; 5] = std::array::from_fn(|_| rng.gen_range(0.01..1.0));
        let prior = Belief::new(weights).unwrap();
        let mut b = prior;
        let mut rows = Vec::new();
        for _ in 0..rng.gen_range(0..20) {
            let row = if rng.gen_bool(0.5) {
                table.row(EVIDENCE[rng.gen_range(0..EVIDENCE.len())])
            } else {
                std::array::from_fn(|_| rng.gen_range(0.01..1.0))
            };
            b.update(&row).unwrap();
            rows.push(row);
        }
        let p = b.probabilities();
        let expected = common::bayes::oracle(prior.probabilities(), &rows);
        worst = worst.max(p.iter().zip(expected).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max));
        if (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && p.iter().all(|x| *x >= 0.0) && common::bayes::close(p, expected, 1e-9) {
            normalized += 1;
        }
        let row: [f64; 5] = std::array::from_fn(|_| rng.gen_range(0.01..1.0));
        let k = 10f64.powf(rng.gen_range(-3.0..3.0));
        let (mut x, mut y) = (b, b);
        x.update(&row).unwrap();
        y.update(&row.map(|l| l * k)).unwrap();
        if x.map() == y.map() && common::bayes::close(x.probabilities(), y.probabilities(), 1e-12) {
            stable += 1;
        }
    }
    verdict(
        "belief algebra",
        normalized == 10_000 && stable == 10_000,
        format!("normalized and Bayes-consistent {normalized}/10000 (max error {worst:.1e}), argmax stable under scaling {stable}/10000"),
    );
}
