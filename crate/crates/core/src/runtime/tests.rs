use super::*;
use crate::model::parse_system;

const CONV: &str = r#"
fbtype CONV basic
  event in REQ with TEMP_F
  event out CNF with TEMP_C
  event out ERROR
  data in TEMP_F REAL
  data out TEMP_C REAL
  var c REAL
  algorithm CONVERT
    c := (TEMP_F - 32.0) * 5.0 / 9.0;
  end_algorithm
  algorithm STORE
    TEMP_C := c;
  end_algorithm
  state START
  state CONV
  action CONVERT
  state OK
  action STORE -> CNF
  state ERR
  action -> ERROR
  transition START -> CONV on REQ
  transition CONV -> ERR when c < -100.0 OR c > 150.0
  transition CONV -> OK
  transition OK -> START
  transition ERR -> START
end_fbtype

fbtype SINK basic
  event in IN with V
  data in V REAL
  var n INT
  var last REAL
  algorithm COUNT
    n := n + 1;
    last := V;
  end_algorithm
  state IDLE
  state GOT
  action COUNT
  transition IDLE -> GOT on IN
  transition GOT -> IDLE
end_fbtype

fbtype ESINK basic
  event in IN
  var n INT
  algorithm COUNT
    n := n + 1;
  end_algorithm
  state IDLE
  state GOT
  action COUNT
  transition IDLE -> GOT on IN
  transition GOT -> IDLE
end_fbtype

fbtype TICKER service builtin TICK
  event out SAMPLED with TEMP
  data out TEMP REAL
end_fbtype

device D
subapp A on D
  instance T : TICKER
  instance C : CONV
  instance S : SINK
  instance E : ESINK
end_subapp
connect event T.SAMPLED -> C.REQ
connect event C.CNF -> S.IN
connect event C.ERROR -> E.IN
connect data T.TEMP -> C.TEMP_F
connect data C.TEMP_C -> S.V
"#;

struct Ticker {
    values: Vec<f64>,
    next: usize,
}

impl ServiceBehavior for Ticker {
    fn timer_period_ms(&self) -> Option<u64> {
        Some(100)
    }
    fn on_timer(&mut self, io: &mut ServiceIo<'_>) -> Result<(), EvalError> {
        let v = self.values[self.next % self.values.len()];
        self.next += 1;
        io.set("TEMP", Value::Real(v))?;
        io.fire("SAMPLED")
    }
}

fn app_with(values: Vec<f64>) -> RuntimeApp {
    let sys = Arc::new(parse_system(CONV).expect("fixture parses"));
    let mut reg = BuiltinRegistry::new();
    reg.register_service("TICK", move |_| Box::new(Ticker { values: values.clone(), next: 0 }));
    RuntimeApp::instantiate(sys, &reg).unwrap()
}

fn real(app: &RuntimeApp, inst: &str, var: &str) -> f64 {
    app.get_var(inst, var).unwrap().as_f64().unwrap()
}

#[test]
fn boiling_point_converts_exactly() {
    let mut app = app_with(vec![212.0]);
    app.run_until(100).unwrap();
    assert_eq!(real(&app, "S", "last"), 100.0);
    assert_eq!(app.get_var("S", "n").unwrap(), Value::Int(1));
}

#[test]
fn below_absolute_zero_takes_error_branch() {
    let mut app = app_with(vec![-459.67]);
    let trace = app.run_until(100).unwrap();
    assert!(trace.iter().any(|r| r.is_event("C", "ERROR")));
    assert!(!trace.iter().any(|r| r.is_event("C", "CNF")));
    assert_eq!(app.get_var("E", "n").unwrap(), Value::Int(1));
    assert_eq!(app.get_var("S", "n").unwrap(), Value::Int(0));
    assert_eq!(app.ecc_state("C").unwrap(), Some("START"));
}

#[test]
fn timer_fires_every_period() {
    let mut app = app_with(vec![70.0]);
    let trace = app.run_until(1000).unwrap();
    let fired = trace.iter().filter(|r| r.is_event("T", "SAMPLED")).count();
    assert_eq!(fired, 10);
    let expected = (70.0 - 32.0) * 5.0 / 9.0;
    assert!((real(&app, "S", "last") - expected).abs() < 1e-12);
}

#[test]
fn runs_are_deterministic() {
    let run = || {
        let mut app = app_with(vec![50.0, 300.0, -500.0, 80.0]);
        trace_to_csv(&app.run_until(2000).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn equal_timestamps_are_fifo() {
    let mut app = app_with(vec![0.0]);
    app.post_event("E", "IN", 5).unwrap();
    app.post_event("S", "IN", 5).unwrap();
    app.post_event("E", "IN", 5).unwrap();
    let order: Vec<String> = (0..3).map(|_| app.step().unwrap().token.unwrap().instance).collect();
    assert_eq!(order, ["E", "S", "E"]);
    assert!(matches!(app.step(), Err(RuntimeError::EmptyQueue)));
}

#[test]
fn posting_in_the_past_is_rejected() {
    let mut app = app_with(vec![0.0]);
    app.run_until(50).unwrap();
    assert_eq!(app.post_event("E", "IN", 40), Err(RuntimeError::PastTimestamp { at: 40, clock: 50 }));
    assert!(matches!(app.post_event("E", "NOPE", 60), Err(RuntimeError::UnknownPort { .. })));
}

#[test]
fn trace_is_event_ordered() {
    let mut app = app_with(vec![212.0]);
    let trace = app.run_until(100).unwrap();
    let kinds: Vec<(&str, &str)> = trace.iter().map(|r| (&*r.instance, &*r.port)).collect();
    let pos = |i: &str, p: &str| kinds.iter().position(|k| *k == (i, p)).unwrap();
    assert!(pos("T", "SAMPLED") < pos("C", "REQ"));
    assert!(pos("C", "REQ") < pos("C", "CNF"));
    assert!(pos("C", "CNF") < pos("S", "IN"));
    assert!(trace.windows(2).all(|w| w[0].seq < w[1].seq));
}

#[test]
fn pass_through_tap_is_transparent() {
    let values = vec![50.0, 212.0, 70.0, -500.0, 90.0];
    let mut plain = app_with(values.clone());
    let mut tapped = app_with(values);
    let ep = |i: &str, p: &str| Endpoint { instance: i.into(), port: p.into() };
    let id = tapped.attach_tap(&ep("T", "SAMPLED"), &ep("C", "REQ")).unwrap();
    assert_eq!(plain.run_until(3000).unwrap(), tapped.run_until(3000).unwrap());
    let recs = tapped.drain_tap(id).unwrap();
    assert_eq!(recs.len(), 60);
    assert!(recs.iter().all(|r| r.origin == TapOrigin::Live));
}

#[test]
fn driven_tap_replaces_upstream_values() {
    let mut app = app_with(vec![50.0]);
    let ep = |i: &str, p: &str| Endpoint { instance: i.into(), port: p.into() };
    let id = app.attach_tap(&ep("T", "SAMPLED"), &ep("C", "REQ")).unwrap();
    app.set_tap_mode(id, TapMode::Driven).unwrap();
    app.schedule_injection(id, 150, &[("TEMP", Value::Real(212.0))]).unwrap();
    app.run_until(300).unwrap();
    assert_eq!(real(&app, "S", "last"), 100.0);
    assert_eq!(app.get_var("S", "n").unwrap(), Value::Int(1));
    let recs = app.drain_tap(id).unwrap();
    let suppressed = recs.iter().filter(|r| r.origin == TapOrigin::Suppressed).count();
    assert_eq!(suppressed, 6);
    assert!(recs.iter().any(|r| r.origin == TapOrigin::Injected
        && r.payload == TapPayload::Data("TEMP".into(), Value::Real(212.0))));
}

#[test]
fn blocked_tap_starves_destination() {
    let mut app = app_with(vec![50.0]);
    let ep = |i: &str, p: &str| Endpoint { instance: i.into(), port: p.into() };
    let id = app.attach_tap(&ep("C", "CNF"), &ep("S", "IN")).unwrap();
    app.set_tap_mode(id, TapMode::Blocked).unwrap();
    app.run_until(500).unwrap();
    assert_eq!(app.get_var("S", "n").unwrap(), Value::Int(0));
    app.set_tap_mode(id, TapMode::PassThrough).unwrap();
    app.detach_tap(id).unwrap();
    app.run_until(600).unwrap();
    assert_eq!(app.get_var("S", "n").unwrap(), Value::Int(1));
    assert!(matches!(app.drain_tap(id), Err(RuntimeError::UnknownTap(_))));
}

fn single(src: &str) -> RuntimeApp {
    let full = format!("{src}\ndevice D\nsubapp A on D\n  instance X : F\nend_subapp\n");
    let sys = parse_system(&full).unwrap_or_else(|d| panic!("{d:?}"));
    RuntimeApp::instantiate(Arc::new(sys), &BuiltinRegistry::new()).unwrap()
}

#[test]
fn unguarded_cycle_is_livelock() {
    let mut app = single(
        "fbtype F basic\n event in GO\n state A\n state B\n transition A -> B on GO\n transition B -> A when TRUE\n transition A -> B\nend_fbtype",
    );
    app.post_event("X", "GO", 0).unwrap();
    assert_eq!(
        app.step().unwrap_err(),
        RuntimeError::EccLivelock { instance: "X".into(), bound: ECC_TRANSITION_BOUND }
    );
    assert!(matches!(app.disposition("X").unwrap(), Disposition::Halted(_)));
    app.post_event("X", "GO", 0).unwrap();
    assert!(app.step().unwrap().dropped);
}

#[test]
fn transitions_scan_in_declaration_order() {
    let mut app = single(
        "fbtype F basic\n event in GO\n var w INT\n algorithm ONE\n w := 1;\n end_algorithm\n algorithm TWO\n w := 2;\n end_algorithm\n state S\n state P\n action ONE\n state Q\n action TWO\n transition S -> P on GO\n transition S -> Q on GO\nend_fbtype",
    );
    app.post_event("X", "GO", 0).unwrap();
    app.step().unwrap();
    assert_eq!(app.get_var("X", "w").unwrap(), Value::Int(1));
}

#[test]
fn unconsumed_flags_are_cleared() {
    // B is consumed only if the ECC sits in WAIT when it arrives.
    let mut app = single(
        "fbtype F basic\n event in A\n event in B\n var hits INT\n algorithm H\n hits := hits + 1;\n end_algorithm\n state IDLE\n state WAIT\n state DONE\n action H\n transition IDLE -> WAIT on A\n transition WAIT -> DONE on B\n transition DONE -> IDLE\nend_fbtype",
    );
    app.post_event("X", "B", 0).unwrap();
    app.post_event("X", "A", 0).unwrap();
    app.step().unwrap();
    app.step().unwrap();
    assert_eq!(app.ecc_state("X").unwrap(), Some("WAIT"));
    assert_eq!(app.get_var("X", "hits").unwrap(), Value::Int(0));
    app.post_event("X", "B", 0).unwrap();
    app.step().unwrap();
    assert_eq!(app.ecc_state("X").unwrap(), Some("IDLE"));
    assert_eq!(app.get_var("X", "hits").unwrap(), Value::Int(1));
}

#[test]
fn guard_chain_runs_to_quiescence_in_one_invocation() {
    let mut app = single(
        "fbtype F basic\n event in GO\n var k INT\n algorithm INC\n k := k + 1;\n end_algorithm\n state S\n state L\n action INC\n transition S -> L on GO\n transition L -> S when k >= 5\n transition L -> L when k < 5\nend_fbtype",
    );
    app.post_event("X", "GO", 0).unwrap();
    let rep = app.step().unwrap();
    assert_eq!(app.get_var("X", "k").unwrap(), Value::Int(5));
    assert_eq!(rep.transitions.len(), 6);
    assert_eq!(app.ecc_state("X").unwrap(), Some("S"));
}

#[test]
fn algorithm_error_halts_only_that_instance() {
    let mut app = single(
        "fbtype F basic\n event in GO\n var d INT\n var q INT\n algorithm DIV\n q := 10 / d;\n end_algorithm\n state S\n state T\n action DIV\n transition S -> T on GO\n transition T -> S\nend_fbtype",
    );
    app.post_event("X", "GO", 0).unwrap();
    app.run_until(10).unwrap();
    assert_eq!(app.halts().len(), 1);
    assert!(matches!(app.disposition("X").unwrap(), Disposition::Halted(_)));
}

#[test]
fn missing_service_builtin_is_reported() {
    let sys = Arc::new(parse_system(CONV).unwrap());
    let err = RuntimeApp::instantiate(sys, &BuiltinRegistry::new()).unwrap_err();
    assert_eq!(err, RuntimeError::MissingBuiltin { instance: "T".into(), binding: "TICK".into() });
}

#[test]
fn output_event_without_trigger_entry_action() {
    // An ECC whose initial state has an event-free transition fires on first token.
    let mut app = single(
        "fbtype F basic\n event in GO\n event out DONE\n state S\n state E\n action -> DONE\n transition S -> E on GO\n transition E -> S\nend_fbtype",
    );
    app.post_event("X", "GO", 0).unwrap();
    let rep = app.step().unwrap();
    assert_eq!(rep.fired, ["DONE"]);
}
