//! Deterministic discrete-event execution of an instantiated FB network.
//!
//! Tokens are ordered by `(timestamp, seq)`; connections have zero latency
//! and the logical clock advances only in tick quanta (or to the timestamp
//! of an explicitly posted token). Within one quantum, timer-driven service
//! FBs fire first and the queue then drains to quiescence.
//!
//! ECC invocation: consuming a token sets the input event flag and latches
//! its WITH data. The current state's transitions are then scanned in
//! declaration order; a transition is enabled when its trigger flag is set
//! (or it has none) and its guard holds. Taking one clears the trigger flag,
//! enters the target state and runs its actions in order. The scan repeats
//! until nothing is enabled, after which all remaining input flags are
//! cleared.

mod builtins;
mod store;
pub mod tap;
pub mod trace;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    eval_expression, exec_statements, ConnKind, Direction, Endpoint, EnvMut, EvalError, SystemDescriptor,
    Value,
};

pub use builtins::{AlgorithmFn, BuiltinRegistry, InstanceInit, ServiceBehavior, ServiceFactory, ServiceIo};
pub use store::VarView;
use store::{CompiledAlgorithm, TypeLayout};
pub use tap::{TapId, TapInfo, TapMode, TapOrigin, TapPayload, TapRecord};
use tap::{Tap, TapData};
pub use trace::{trace_to_csv, TraceKind, TraceRecord};

/// Maximum transitions taken in one ECC invocation.
pub const ECC_TRANSITION_BOUND: usize = 1000;
pub const DEFAULT_TICK_MS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("instance `{instance}` is bound to missing builtin `{binding}`")]
    MissingBuiltin { instance: String, binding: String },
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("unknown port `{instance}.{port}`")]
    UnknownPort { instance: String, port: String },
    #[error("timestamp {at} ms precedes the clock ({clock} ms)")]
    PastTimestamp { at: u64, clock: u64 },
    #[error("ECC of `{instance}` exceeded {bound} transitions in one invocation")]
    EccLivelock { instance: String, bound: usize },
    #[error("algorithm error in `{instance}`: {source}")]
    Algorithm { instance: String, source: EvalError },
    #[error("event queue is empty")]
    EmptyQueue,
    #[error("no connection {from} -> {to}")]
    UnknownConnection { from: String, to: String },
    #[error("connection {0} is already tapped")]
    AlreadyTapped(String),
    #[error("unknown tap {0}")]
    UnknownTap(TapId),
    #[error("tick quantum must be positive")]
    ZeroTick,
}

/// Whether an instance still executes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Disposition {
    Active,
    /// Stopped after an error or by the harness; tokens addressed to it are dropped.
    Halted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventToken {
    pub instance: String,
    pub port: String,
    pub timestamp_ms: u64,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    /// `None` when the step serviced an injection rather than a delivery.
    pub token: Option<EventToken>,
    pub transitions: Vec<(String, String)>,
    pub fired: Vec<String>,
    pub dropped: bool,
}

#[derive(Debug, Clone)]
enum Action {
    Deliver { dst: usize, event: usize },
    Drive { tap: TapId, values: Vec<(usize, Value)> },
}

#[derive(Debug, Clone)]
struct Pending {
    at: u64,
    seq: u64,
    action: Action,
}

impl PartialEq for Pending {
    fn eq(&self, o: &Self) -> bool {
        (self.at, self.seq) == (o.at, o.seq)
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Pending {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(o.at, o.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct Route {
    dst: usize,
    dst_event: usize,
    tap: Option<TapId>,
}

#[derive(Debug, Clone, Copy)]
struct DataSource {
    src: usize,
    src_slot: usize,
    tap: Option<(TapId, usize)>,
}

struct Instance {
    name: Arc<str>,
    layout: usize,
    vars: Vec<Value>,
    /// Output data as last published by an output event.
    published: Vec<Value>,
    state: usize,
    flags: Vec<bool>,
    disposition: Disposition,
    behavior: Option<Box<dyn ServiceBehavior>>,
    timer: Option<u64>,
}

/// A recorded algorithm failure that halted one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HaltRecord {
    pub time_ms: u64,
    pub instance: String,
    pub reason: String,
}

pub struct RuntimeApp {
    descriptor: Arc<SystemDescriptor>,
    layouts: Vec<TypeLayout>,
    instances: Vec<Instance>,
    instance_index: HashMap<String, usize>,
    routes: Vec<Vec<Vec<Route>>>,
    sources: Vec<Vec<Option<DataSource>>>,
    taps: Vec<Tap>,
    queue: BinaryHeap<Reverse<Pending>>,
    next_seq: u64,
    clock: u64,
    tick_ms: u64,
    trace: Vec<TraceRecord>,
    trace_seq: u64,
    trace_enabled: bool,
    tap_order: u64,
    halts: Vec<HaltRecord>,
    events_processed: u64,
}

impl std::fmt::Debug for RuntimeApp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RuntimeApp")
            .field("instances", &self.instances.len())
            .field("clock", &self.clock)
            .field("queued", &self.queue.len())
            .finish()
    }
}

impl RuntimeApp {
    /// Instantiates a validated descriptor. All variables start at their
    /// declared initial values (instance parameters applied), every ECC is in
    /// its initial state, the queue is empty and the clock is zero.
    pub fn instantiate(
        descriptor: Arc<SystemDescriptor>,
        builtins: &BuiltinRegistry,
    ) -> Result<Self, RuntimeError> {
        let mut layouts = Vec::new();
        let mut layout_index = HashMap::new();
        for t in &descriptor.fb_types {
            layout_index.insert(t.name.clone(), layouts.len());
            layouts.push(TypeLayout::compile(t, builtins)?);
        }

        let mut instances = Vec::new();
        let mut instance_index = HashMap::new();
        for (_, decl) in descriptor.instances() {
            let &li = layout_index
                .get(&decl.type_name)
                .ok_or_else(|| RuntimeError::UnknownInstance(decl.name.clone()))?;
            let layout = &layouts[li];
            let mut vars = layout.initial.clone();
            for (p, v) in &decl.params {
                if let Some(&slot) = layout.slots.get(p) {
                    if let Some(v) = v.clone().coerce(layout.slot_types[slot]) {
                        vars[slot] = v;
                    }
                }
            }
            let behavior = match &layout.service_binding {
                Some(binding) => {
                    let factory = builtins.service(binding).ok_or_else(|| RuntimeError::MissingBuiltin {
                        instance: decl.name.clone(),
                        binding: binding.clone(),
                    })?;
                    Some(factory(&InstanceInit {
                        instance: decl.name.clone(),
                        type_name: decl.type_name.clone(),
                        params: decl.params.clone(),
                    }))
                }
                None => None,
            };
            let timer = behavior.as_ref().and_then(|b| b.timer_period_ms()).filter(|&p| p > 0);
            instance_index.insert(decl.name.clone(), instances.len());
            instances.push(Instance {
                name: Arc::from(decl.name.as_str()),
                layout: li,
                published: vars.clone(),
                vars,
                state: 0,
                flags: vec![false; layout.events.len()],
                disposition: Disposition::Active,
                behavior,
                timer,
            });
        }

        let mut routes: Vec<Vec<Vec<Route>>> =
            instances.iter().map(|i| vec![Vec::new(); layouts[i.layout].events.len()]).collect();
        let mut sources: Vec<Vec<Option<DataSource>>> =
            instances.iter().map(|i| vec![None; layouts[i.layout].slot_names.len()]).collect();

        let resolve_event = |ep: &Endpoint| -> Option<(usize, usize)> {
            let &i = instance_index.get(&ep.instance)?;
            let &e = layouts[instances[i].layout].event_index.get(&ep.port)?;
            Some((i, e))
        };
        let resolve_slot = |ep: &Endpoint| -> Option<(usize, usize)> {
            let &i = instance_index.get(&ep.instance)?;
            let &s = layouts[instances[i].layout].slots.get(&ep.port)?;
            Some((i, s))
        };
        for c in &descriptor.event_connections {
            if let (Some((si, se)), Some((di, de))) = (resolve_event(&c.from), resolve_event(&c.to)) {
                routes[si][se].push(Route { dst: di, dst_event: de, tap: None });
            }
        }
        for c in &descriptor.data_connections {
            if let (Some((si, ss)), Some((di, ds))) = (resolve_slot(&c.from), resolve_slot(&c.to)) {
                sources[di][ds] = Some(DataSource { src: si, src_slot: ss, tap: None });
            }
        }

        Ok(RuntimeApp {
            descriptor,
            layouts,
            instances,
            instance_index,
            routes,
            sources,
            taps: Vec::new(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            clock: 0,
            tick_ms: DEFAULT_TICK_MS,
            trace: Vec::new(),
            trace_seq: 0,
            trace_enabled: true,
            tap_order: 0,
            halts: Vec::new(),
            events_processed: 0,
        })
    }

    pub fn descriptor(&self) -> &Arc<SystemDescriptor> {
        &self.descriptor
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn tick_ms(&self) -> u64 {
        self.tick_ms
    }

    pub fn set_tick_ms(&mut self, tick: u64) -> Result<(), RuntimeError> {
        if tick == 0 {
            return Err(RuntimeError::ZeroTick);
        }
        self.tick_ms = tick;
        Ok(())
    }

    pub fn set_trace_enabled(&mut self, on: bool) {
        self.trace_enabled = on;
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn instance_names(&self) -> impl Iterator<Item = &str> {
        self.instances.iter().map(|i| &*i.name)
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    pub fn halts(&self) -> &[HaltRecord] {
        &self.halts
    }

    /// Timer periods of all timer-driven service instances.
    pub fn timer_periods(&self) -> Vec<(String, u64)> {
        self.instances.iter().filter_map(|i| i.timer.map(|p| (i.name.to_string(), p))).collect()
    }

    fn index(&self, instance: &str) -> Result<usize, RuntimeError> {
        self.instance_index
            .get(instance)
            .copied()
            .ok_or_else(|| RuntimeError::UnknownInstance(instance.to_string()))
    }

    pub fn disposition(&self, instance: &str) -> Result<&Disposition, RuntimeError> {
        Ok(&self.instances[self.index(instance)?].disposition)
    }

    /// Current ECC state name of a basic FB instance.
    pub fn ecc_state(&self, instance: &str) -> Result<Option<&str>, RuntimeError> {
        let inst = &self.instances[self.index(instance)?];
        Ok(self.layouts[inst.layout].states.get(inst.state).map(|s| &*s.name))
    }

    /// Halts an instance from outside, as when its device fails.
    pub fn halt(&mut self, instance: &str, reason: &str) -> Result<(), RuntimeError> {
        let i = self.index(instance)?;
        self.halt_index(i, reason.to_string());
        Ok(())
    }

    fn halt_index(&mut self, i: usize, reason: String) {
        self.halts.push(HaltRecord { time_ms: self.clock, instance: self.instances[i].name.to_string(), reason: reason.clone() });
        self.instances[i].disposition = Disposition::Halted(reason);
    }

    pub fn get_var(&self, instance: &str, name: &str) -> Result<Value, RuntimeError> {
        let inst = &self.instances[self.index(instance)?];
        let layout = &self.layouts[inst.layout];
        let &slot = layout.slots.get(name).ok_or_else(|| RuntimeError::UnknownPort {
            instance: instance.to_string(),
            port: name.to_string(),
        })?;
        Ok(inst.vars[slot].clone())
    }

    /// Writes a variable directly. Used by fault-injection harnesses; never
    /// by diagnostic monitoring.
    pub fn set_var(&mut self, instance: &str, name: &str, value: Value) -> Result<(), RuntimeError> {
        let i = self.index(instance)?;
        let inst = &mut self.instances[i];
        let layout = &self.layouts[inst.layout];
        let mut view = VarView { layout, values: &mut inst.vars };
        view.set(name, value).map_err(|source| RuntimeError::Algorithm { instance: instance.to_string(), source })
    }

    /// Output data value as last published by an output event.
    pub fn published(&self, instance: &str, port: &str) -> Result<Value, RuntimeError> {
        let inst = &self.instances[self.index(instance)?];
        let layout = &self.layouts[inst.layout];
        let &slot = layout.slots.get(port).ok_or_else(|| RuntimeError::UnknownPort {
            instance: instance.to_string(),
            port: port.to_string(),
        })?;
        Ok(inst.published[slot].clone())
    }

    fn push(&mut self, at: u64, action: Action) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Pending { at, seq, action }));
        seq
    }

    /// Enqueues an input event for delivery at `at`.
    pub fn post_event(&mut self, instance: &str, event: &str, at: u64) -> Result<u64, RuntimeError> {
        if at < self.clock {
            return Err(RuntimeError::PastTimestamp { at, clock: self.clock });
        }
        let i = self.index(instance)?;
        let layout = &self.layouts[self.instances[i].layout];
        let e = layout
            .event_index
            .get(event)
            .copied()
            .filter(|&e| layout.events[e].direction == Direction::In)
            .ok_or_else(|| RuntimeError::UnknownPort { instance: instance.to_string(), port: event.to_string() })?;
        Ok(self.push(at, Action::Deliver { dst: i, event: e }))
    }

    fn record(&mut self, kind: TraceKind, inst: usize, port: Arc<str>, value: Option<Value>) {
        if !self.trace_enabled {
            return;
        }
        self.trace.push(TraceRecord {
            time_ms: self.clock,
            seq: self.trace_seq,
            kind,
            instance: self.instances[inst].name.clone(),
            port,
            value,
        });
        self.trace_seq += 1;
    }

    /// Removes and returns trace records captured since the last call.
    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }

    pub fn next_event_time(&self) -> Option<u64> {
        self.queue.peek().map(|Reverse(p)| p.at)
    }

    /// Consumes the next token and runs the receiving FB to quiescence.
    pub fn step(&mut self) -> Result<StepReport, RuntimeError> {
        let Reverse(p) = self.queue.pop().ok_or(RuntimeError::EmptyQueue)?;
        if p.at > self.clock {
            self.clock = p.at;
        }
        match p.action {
            Action::Drive { tap, values } => {
                self.drive(tap, values);
                Ok(StepReport { token: None, transitions: Vec::new(), fired: Vec::new(), dropped: false })
            }
            Action::Deliver { dst, event } => self.deliver(dst, event, p.at, p.seq),
        }
    }

    fn drive(&mut self, id: TapId, values: Vec<(usize, Value)>) {
        let now = self.clock;
        let tap = &mut self.taps[id];
        if !tap.attached {
            return;
        }
        for (k, v) in values {
            tap.driven[k] = v;
        }
        let mut order = self.tap_order;
        tap.records.push(TapRecord { time_ms: now, order, origin: TapOrigin::Injected, payload: TapPayload::Event(tap.event_name.clone()) });
        for (d, v) in tap.data.iter().zip(&tap.driven) {
            order += 1;
            tap.records.push(TapRecord {
                time_ms: now,
                order,
                origin: TapOrigin::Injected,
                payload: TapPayload::Data(d.port.clone(), v.clone()),
            });
        }
        self.tap_order = order + 1;
        let (dst, event) = (tap.dst, tap.dst_event);
        self.push(now, Action::Deliver { dst, event });
    }

    fn deliver(&mut self, dst: usize, event: usize, at: u64, seq: u64) -> Result<StepReport, RuntimeError> {
        let layout = &self.layouts[self.instances[dst].layout];
        let token = EventToken {
            instance: self.instances[dst].name.to_string(),
            port: layout.events[event].name.to_string(),
            timestamp_ms: at,
            seq,
        };
        let mut report = StepReport { token: Some(token), transitions: Vec::new(), fired: Vec::new(), dropped: false };
        if self.instances[dst].disposition != Disposition::Active {
            report.dropped = true;
            return Ok(report);
        }
        self.events_processed += 1;

        // Latch WITH data from the incoming connections.
        let with = layout.events[event].with.clone();
        for slot in with {
            if let Some(src) = self.sources[dst][slot] {
                let v = match src.tap {
                    Some((t, k)) if self.taps[t].mode != TapMode::PassThrough => self.taps[t].driven[k].clone(),
                    _ => self.instances[src.src].published[src.src_slot].clone(),
                };
                self.instances[dst].vars[slot] = v;
            }
        }
        let name = self.layouts[self.instances[dst].layout].events[event].name.clone();
        self.record(TraceKind::EventFired, dst, name.clone(), None);

        let result = if self.layouts[self.instances[dst].layout].service_binding.is_some() {
            self.run_service(dst, Some(&name), &mut report)
        } else {
            self.run_ecc(dst, event, &mut report)
        };
        match result {
            Ok(()) => Ok(report),
            Err(e) => {
                self.halt_index(dst, e.to_string());
                Err(e)
            }
        }
    }

    fn run_ecc(&mut self, i: usize, event: usize, report: &mut StepReport) -> Result<(), RuntimeError> {
        let li = self.instances[i].layout;
        self.instances[i].flags[event] = true;
        let mut taken = 0usize;
        loop {
            let state = self.instances[i].state;
            let mut chosen = None;
            for t in &self.layouts[li].states[state].transitions {
                if let Some(trig) = t.trigger {
                    if !self.instances[i].flags[trig] {
                        continue;
                    }
                }
                let enabled = match &t.guard {
                    None => true,
                    Some(g) => {
                        let inst = &mut self.instances[i];
                        let view = VarView { layout: &self.layouts[li], values: &mut inst.vars };
                        match eval_expression(g, &view) {
                            Ok(Value::Bool(b)) => b,
                            Ok(other) => {
                                return Err(RuntimeError::Algorithm {
                                    instance: inst.name.to_string(),
                                    source: EvalError::TypeError(format!("guard yielded {}", other.value_type())),
                                })
                            }
                            Err(source) => {
                                return Err(RuntimeError::Algorithm { instance: inst.name.to_string(), source })
                            }
                        }
                    }
                };
                if enabled {
                    chosen = Some((t.target, t.trigger));
                    break;
                }
            }
            let Some((target, trigger)) = chosen else { break };
            taken += 1;
            if taken > ECC_TRANSITION_BOUND {
                return Err(RuntimeError::EccLivelock {
                    instance: self.instances[i].name.to_string(),
                    bound: ECC_TRANSITION_BOUND,
                });
            }
            if let Some(trig) = trigger {
                self.instances[i].flags[trig] = false;
            }
            let from = self.layouts[li].states[state].name.to_string();
            self.instances[i].state = target;
            let target_name = self.layouts[li].states[target].name.clone();
            report.transitions.push((from, target_name.to_string()));
            self.record(TraceKind::StateEntered, i, target_name, None);

            for a in 0..self.layouts[li].states[target].actions.len() {
                let (alg, out) = self.layouts[li].states[target].actions[a];
                if let Some(alg) = alg {
                    self.run_algorithm(i, alg)?;
                }
                if let Some(out) = out {
                    self.fire(i, out, report);
                }
            }
        }
        self.instances[i].flags.iter_mut().for_each(|f| *f = false);
        Ok(())
    }

    fn run_algorithm(&mut self, i: usize, alg: usize) -> Result<(), RuntimeError> {
        let li = self.instances[i].layout;
        let inst = &mut self.instances[i];
        let mut view = VarView { layout: &self.layouts[li], values: &mut inst.vars };
        let res = match &self.layouts[li].algorithms[alg] {
            CompiledAlgorithm::Statements(stmts) => exec_statements(stmts, &mut view),
            CompiledAlgorithm::Builtin(f) => f(&mut view),
        };
        res.map_err(|source| RuntimeError::Algorithm { instance: inst.name.to_string(), source })
    }

    fn run_service(
        &mut self,
        i: usize,
        event: Option<&str>,
        report: &mut StepReport,
    ) -> Result<(), RuntimeError> {
        let Some(mut behavior) = self.instances[i].behavior.take() else { return Ok(()) };
        let li = self.instances[i].layout;
        let now = self.clock;
        let inst = &mut self.instances[i];
        let mut io = ServiceIo {
            now,
            instance: &inst.name,
            vars: VarView { layout: &self.layouts[li], values: &mut inst.vars },
            outputs: &self.layouts[li].output_events,
            fired: Vec::new(),
        };
        let res = match event {
            Some(e) => behavior.on_event(e, &mut io),
            None => behavior.on_timer(&mut io),
        };
        let fired = std::mem::take(&mut io.fired);
        let name = inst.name.to_string();
        inst.behavior = Some(behavior);
        res.map_err(|source| RuntimeError::Algorithm { instance: name, source })?;
        for e in fired {
            self.fire(i, e, report);
        }
        Ok(())
    }

    /// Publishes WITH data and routes an output event to every destination.
    fn fire(&mut self, i: usize, event: usize, report: &mut StepReport) {
        let li = self.instances[i].layout;
        let ev = &self.layouts[li].events[event];
        let ev_name = ev.name.clone();
        for k in 0..ev.with.len() {
            let slot = self.layouts[li].events[event].with[k];
            let v = self.instances[i].vars[slot].clone();
            self.instances[i].published[slot] = v.clone();
            let port = self.layouts[li].slot_names[slot].clone();
            self.record(TraceKind::DataWritten, i, port, Some(v));
        }
        self.record(TraceKind::EventFired, i, ev_name.clone(), None);
        report.fired.push(ev_name.to_string());

        let now = self.clock;
        for r in 0..self.routes[i][event].len() {
            let route = self.routes[i][event][r];
            let forward = match route.tap {
                None => true,
                Some(t) => {
                    let tap = &mut self.taps[t];
                    let origin = match tap.mode {
                        TapMode::PassThrough => TapOrigin::Live,
                        _ => TapOrigin::Suppressed,
                    };
                    let mut order = self.tap_order;
                    tap.records.push(TapRecord { time_ms: now, order, origin, payload: TapPayload::Event(ev_name.clone()) });
                    for d in &tap.data {
                        order += 1;
                        let v = self.instances[i].published[d.src_slot].clone();
                        tap.records.push(TapRecord { time_ms: now, order, origin, payload: TapPayload::Data(d.port.clone(), v) });
                    }
                    self.tap_order = order + 1;
                    tap.mode == TapMode::PassThrough
                }
            };
            if forward {
                self.push(now, Action::Deliver { dst: route.dst, event: route.dst_event });
            }
        }
    }

    fn fire_timers(&mut self) -> Result<(), RuntimeError> {
        for i in 0..self.instances.len() {
            let Some(period) = self.instances[i].timer else { continue };
            if !self.clock.is_multiple_of(period) || self.instances[i].disposition != Disposition::Active {
                continue;
            }
            let mut report = StepReport { token: None, transitions: Vec::new(), fired: Vec::new(), dropped: false };
            if let Err(e) = self.run_service(i, None, &mut report) {
                self.halt_index(i, e.to_string());
            }
        }
        Ok(())
    }

    /// Steps, recording algorithm failures (the instance is already halted)
    /// and propagating anything else.
    fn step_tolerant(&mut self) -> Result<(), RuntimeError> {
        match self.step() {
            Ok(_) | Err(RuntimeError::Algorithm { .. }) => Ok(()),
            Err(e) => Err(e),
        }
    }

    fn drain_through(&mut self, t: u64) -> Result<(), RuntimeError> {
        while self.next_event_time().is_some_and(|at| at <= t) {
            self.step_tolerant()?;
        }
        Ok(())
    }

    /// Advances to `t` quantum by quantum and returns the trace captured on
    /// the way. At each quantum boundary, due timers fire and the queue then
    /// drains before the clock moves on.
    pub fn run_until(&mut self, t: u64) -> Result<Vec<TraceRecord>, RuntimeError> {
        if t < self.clock {
            return Err(RuntimeError::PastTimestamp { at: t, clock: self.clock });
        }
        self.drain_through(self.clock)?;
        while self.clock < t {
            let next_quantum = (self.clock / self.tick_ms + 1) * self.tick_ms;
            let target = next_quantum.min(t);
            while self.next_event_time().is_some_and(|at| at < target) {
                self.step_tolerant()?;
            }
            self.clock = target;
            if target == next_quantum {
                self.fire_timers()?;
            }
            self.drain_through(target)?;
        }
        Ok(self.take_trace())
    }

    // ---- taps -----------------------------------------------------------

    /// Splices a tap into the event connection `from -> to` together with
    /// every data connection feeding the destination event's WITH ports from
    /// the same source instance.
    pub fn attach_tap(&mut self, from: &Endpoint, to: &Endpoint) -> Result<TapId, RuntimeError> {
        let unknown = || RuntimeError::UnknownConnection { from: from.to_string(), to: to.to_string() };
        let src = self.index(&from.instance)?;
        let dst = self.index(&to.instance)?;
        let src_event = *self.layouts[self.instances[src].layout].event_index.get(&from.port).ok_or_else(unknown)?;
        let dst_event = *self.layouts[self.instances[dst].layout].event_index.get(&to.port).ok_or_else(unknown)?;
        let r = self.routes[src][src_event]
            .iter()
            .position(|r| r.dst == dst && r.dst_event == dst_event)
            .ok_or_else(unknown)?;
        if self.routes[src][src_event][r].tap.is_some() {
            return Err(RuntimeError::AlreadyTapped(format!("{from} -> {to}")));
        }
        let id = self.taps.len();
        let dst_layout = &self.layouts[self.instances[dst].layout];
        let src_layout = &self.layouts[self.instances[src].layout];
        let mut data = Vec::new();
        for &slot in &dst_layout.events[dst_event].with {
            if let Some(s) = self.sources[dst][slot] {
                if s.src == src && s.tap.is_none() {
                    data.push(TapData { src_slot: s.src_slot, dst_slot: slot, port: src_layout.slot_names[s.src_slot].clone() });
                }
            }
        }
        for (k, d) in data.iter().enumerate() {
            if let Some(s) = self.sources[dst][d.dst_slot].as_mut() {
                s.tap = Some((id, k));
            }
        }
        self.routes[src][src_event][r].tap = Some(id);
        let driven = data.iter().map(|d| self.instances[src].published[d.src_slot].clone()).collect();
        self.taps.push(Tap {
            src,
            src_event,
            dst,
            dst_event,
            event_name: src_layout.events[src_event].name.clone(),
            data,
            mode: TapMode::PassThrough,
            driven,
            records: Vec::new(),
            attached: true,
        });
        Ok(id)
    }

    fn tap(&self, id: TapId) -> Result<&Tap, RuntimeError> {
        self.taps.get(id).filter(|t| t.attached).ok_or(RuntimeError::UnknownTap(id))
    }

    pub fn detach_tap(&mut self, id: TapId) -> Result<(), RuntimeError> {
        let tap = self.tap(id)?.clone();
        for r in self.routes[tap.src][tap.src_event].iter_mut() {
            if r.tap == Some(id) {
                r.tap = None;
            }
        }
        for d in &tap.data {
            if let Some(s) = self.sources[tap.dst][d.dst_slot].as_mut() {
                s.tap = None;
            }
        }
        self.taps[id].attached = false;
        Ok(())
    }

    pub fn tap_info(&self, id: TapId) -> Result<TapInfo, RuntimeError> {
        let t = self.tap(id)?;
        Ok(TapInfo {
            id,
            source: self.instances[t.src].name.to_string(),
            destination: self.instances[t.dst].name.to_string(),
            event: t.event_name.to_string(),
            data_ports: t.data.iter().map(|d| d.port.to_string()).collect(),
            mode: t.mode,
        })
    }

    pub fn tap_mode(&self, id: TapId) -> Result<TapMode, RuntimeError> {
        Ok(self.tap(id)?.mode)
    }

    /// Switching away from pass-through seeds the driven values with what the
    /// source last published.
    pub fn set_tap_mode(&mut self, id: TapId, mode: TapMode) -> Result<(), RuntimeError> {
        let t = self.tap(id)?;
        if t.mode == TapMode::PassThrough && mode != TapMode::PassThrough {
            let seeded: Vec<Value> =
                t.data.iter().map(|d| self.instances[t.src].published[d.src_slot].clone()).collect();
            self.taps[id].driven = seeded;
        }
        self.taps[id].mode = mode;
        Ok(())
    }

    /// Takes the records a tap has captured so far.
    pub fn drain_tap(&mut self, id: TapId) -> Result<Vec<TapRecord>, RuntimeError> {
        self.tap(id)?;
        Ok(std::mem::take(&mut self.taps[id].records))
    }

    /// Schedules a stimulus through a tap: at `at`, the named source-side
    /// data ports take the given values and the destination event is
    /// delivered. Ports not named keep their previously driven values.
    pub fn schedule_injection(
        &mut self,
        id: TapId,
        at: u64,
        values: &[(&str, Value)],
    ) -> Result<u64, RuntimeError> {
        if at < self.clock {
            return Err(RuntimeError::PastTimestamp { at, clock: self.clock });
        }
        let t = self.tap(id)?;
        let mut resolved = Vec::new();
        for (port, v) in values {
            let k = t.data.iter().position(|d| &*d.port == *port).ok_or_else(|| RuntimeError::UnknownPort {
                instance: self.instances[t.src].name.to_string(),
                port: port.to_string(),
            })?;
            resolved.push((k, v.clone()));
        }
        Ok(self.push(at, Action::Drive { tap: id, values: resolved }))
    }

    /// Resolves a descriptor connection to its tap, if any.
    pub fn tap_on(&self, kind: ConnKind, from: &Endpoint, to: &Endpoint) -> Option<TapId> {
        let src = *self.instance_index.get(&from.instance)?;
        let dst = *self.instance_index.get(&to.instance)?;
        match kind {
            ConnKind::Event => {
                let se = *self.layouts[self.instances[src].layout].event_index.get(&from.port)?;
                let de = *self.layouts[self.instances[dst].layout].event_index.get(&to.port)?;
                self.routes[src][se].iter().find(|r| r.dst == dst && r.dst_event == de)?.tap
            }
            ConnKind::Data => {
                let ds = *self.layouts[self.instances[dst].layout].slots.get(&to.port)?;
                self.sources[dst][ds].and_then(|s| s.tap).map(|(t, _)| t)
            }
        }
    }
}

#[cfg(test)]
mod tests;
