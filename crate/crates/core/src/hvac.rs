//! The room-controller application: shipped network descriptors, host
//! bindings for its service FBs, the software-fault hook, and timing
//! measurement against the controller's latency budgets.

use std::cell::RefCell;
use std::collections::{HashMap, VecDeque};
use std::rc::Rc;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{SystemDescriptor, Value};
use crate::plant::{Mode, Plant};
use crate::runtime::{BuiltinRegistry, RuntimeApp, RuntimeError, ServiceBehavior, ServiceIo, TraceKind, TraceRecord};
use crate::model::EvalError;

pub const ROOM_CONTROLLER: &str = include_str!("../fixtures/room_controller.fbsys");
pub const TWO_ROOM: &str = include_str!("../fixtures/two_room.fbsys");

pub const SENSOR_PERIOD_MS: u64 = 100;
pub const SWITCH_POLL_MS: u64 = 100;

pub const NOTIFY_BUDGET_MS: u64 = 500;
pub const DISPLAY_BUDGET_MS: u64 = 250;
pub const SETPOINT_BUDGET_MS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Button {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Press {
    #[serde(rename = "t")]
    pub time_ms: u64,
    #[serde(default)]
    pub zone: usize,
    pub button: Button,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DisplayState {
    pub temp_c: Option<f64>,
    pub setpoint_c: Option<f64>,
    pub fault: bool,
    pub updates: u64,
}

/// Everything outside the FB network: the plant, pending occupant presses
/// and what each zone display shows.
#[derive(Debug)]
pub struct World {
    pub plant: Plant,
    presses: HashMap<(usize, Button), VecDeque<u64>>,
    pub displays: Vec<DisplayState>,
}

pub type SharedWorld = Rc<RefCell<World>>;

impl World {
    pub fn new(plant: Plant, presses: &[Press]) -> Self {
        let mut sorted = presses.to_vec();
        sorted.sort_by_key(|p| p.time_ms);
        let mut map: HashMap<(usize, Button), VecDeque<u64>> = HashMap::new();
        for p in sorted {
            map.entry((p.zone, p.button)).or_default().push_back(p.time_ms);
        }
        let displays = vec![DisplayState::default(); plant.zones.len()];
        World { plant, presses: map, displays }
    }

    pub fn shared(self) -> SharedWorld {
        Rc::new(RefCell::new(self))
    }

    fn take_presses(&mut self, zone: usize, button: Button, now: u64) -> usize {
        let Some(q) = self.presses.get_mut(&(zone, button)) else { return 0 };
        let mut n = 0;
        while q.front().is_some_and(|&t| t <= now) {
            q.pop_front();
            n += 1;
        }
        n
    }
}

fn zone_param(init: &crate::runtime::InstanceInit) -> usize {
    match init.param("ZONE") {
        Some(Value::Int(z)) if *z >= 0 => *z as usize,
        _ => 0,
    }
}

fn plant_err(e: crate::plant::PlantError) -> EvalError {
    EvalError::TypeError(e.to_string())
}

struct Sensor {
    world: SharedWorld,
    zone: usize,
}

impl ServiceBehavior for Sensor {
    fn timer_period_ms(&self) -> Option<u64> {
        Some(SENSOR_PERIOD_MS)
    }

    fn on_timer(&mut self, io: &mut ServiceIo<'_>) -> Result<(), EvalError> {
        let f = self.world.borrow_mut().plant.read_sensor_f(self.zone).map_err(plant_err)?;
        io.set("TEMP", Value::Real(f))?;
        io.set("TS", Value::Real(io.now() as f64))?;
        io.fire("SAMPLED")
    }
}

struct Switch {
    world: SharedWorld,
    zone: usize,
    button: Button,
}

impl ServiceBehavior for Switch {
    fn timer_period_ms(&self) -> Option<u64> {
        Some(SWITCH_POLL_MS)
    }

    fn on_timer(&mut self, io: &mut ServiceIo<'_>) -> Result<(), EvalError> {
        let n = self.world.borrow_mut().take_presses(self.zone, self.button, io.now());
        for _ in 0..n {
            io.fire("PRESSED")?;
        }
        Ok(())
    }
}

struct Display {
    world: SharedWorld,
    zone: usize,
}

impl ServiceBehavior for Display {
    fn on_event(&mut self, event: &str, io: &mut ServiceIo<'_>) -> Result<(), EvalError> {
        let mut w = self.world.borrow_mut();
        let Some(d) = w.displays.get_mut(self.zone) else { return Ok(()) };
        match event {
            "TEMP_UPD" => d.temp_c = io.get_f64("DISP_TEMP"),
            "SET_UPD" => d.setpoint_c = io.get_f64("SET_TEMP"),
            "LAMP" => d.fault = io.get("FAULT").and_then(|v| v.as_bool()).unwrap_or(false),
            _ => return Ok(()),
        }
        d.updates += 1;
        Ok(())
    }
}

struct Actuator {
    world: SharedWorld,
    zone: usize,
}

impl ServiceBehavior for Actuator {
    fn on_event(&mut self, event: &str, io: &mut ServiceIo<'_>) -> Result<(), EvalError> {
        if event == "REQ" {
            let mode = Mode::from_command(io.get_i64("MODE").unwrap_or(0));
            self.world.borrow_mut().plant.set_mode(self.zone, mode).map_err(plant_err)?;
        }
        Ok(())
    }
}

/// Host bindings for the application's service FBs, all sharing `world`.
pub fn registry(world: &SharedWorld) -> BuiltinRegistry {
    let mut reg = BuiltinRegistry::new();
    let w = world.clone();
    reg.register_service("ZONE_SENSOR", move |init| Box::new(Sensor { world: w.clone(), zone: zone_param(init) }));
    let w = world.clone();
    reg.register_service("ZONE_SWITCH", move |init| {
        let button = match init.param("DIR") {
            Some(Value::Int(d)) if *d < 0 => Button::Down,
            _ => Button::Up,
        };
        Box::new(Switch { world: w.clone(), zone: zone_param(init), button })
    });
    let w = world.clone();
    reg.register_service("ZONE_DISPLAY", move |init| Box::new(Display { world: w.clone(), zone: zone_param(init) }));
    let w = world.clone();
    reg.register_service("DUCT_ACTUATOR", move |init| Box::new(Actuator { world: w.clone(), zone: zone_param(init) }));
    reg
}

/// Range-gated conversion error: readings between `lo_f` and `hi_f`
/// (inclusive) come out `offset_c` too high.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftwareFault {
    pub lo_f: f64,
    pub hi_f: f64,
    pub offset_c: f64,
}

/// Arms or clears the software-fault hook of a conversion instance.
pub fn set_software_fault(
    app: &mut RuntimeApp,
    instance: &str,
    fault: Option<SoftwareFault>,
) -> Result<(), RuntimeError> {
    match fault {
        Some(f) => {
            app.set_var(instance, "swLoF", Value::Real(f.lo_f))?;
            app.set_var(instance, "swHiF", Value::Real(f.hi_f))?;
            app.set_var(instance, "swOffsetC", Value::Real(f.offset_c))?;
            app.set_var(instance, "swActive", Value::Bool(true))
        }
        None => app.set_var(instance, "swActive", Value::Bool(false)),
    }
}

/// Instance and port names of one room controller as wired in a descriptor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoomPorts {
    pub zone: usize,
    pub sensor: String,
    pub conversion: String,
    pub controller: String,
    pub display: String,
    pub main: String,
    pub main_zone_event: String,
    pub main_setp_event: String,
}

impl RoomPorts {
    /// Finds every room controller: one per `Z_TEMPERATURE` instance, with
    /// siblings sharing its name prefix.
    pub fn discover(sys: &SystemDescriptor) -> Vec<RoomPorts> {
        let mut rooms = Vec::new();
        for (_, inst) in sys.instances().filter(|(_, i)| i.type_name == "Z_TEMPERATURE") {
            let prefix = inst.name.strip_suffix("Z_TEMPERATURE").unwrap_or("");
            let zone = match inst.params.iter().find(|(n, _)| n == "ZONE") {
                Some((_, Value::Int(z))) => *z as usize,
                _ => 0,
            };
            let controller = format!("{prefix}Z_CONTROLLER");
            let target = |port: &str| {
                sys.event_connections
                    .iter()
                    .find(|c| c.from.instance == controller && c.from.port == port)
                    .map(|c| (c.to.instance.clone(), c.to.port.clone()))
            };
            let (Some((main, zone_ev)), Some((_, setp_ev))) = (target("NOTIFY"), target("MODE_REQ")) else {
                continue;
            };
            rooms.push(RoomPorts {
                zone,
                sensor: inst.name.clone(),
                conversion: format!("{prefix}F_TO_C_CONV"),
                controller,
                display: format!("{prefix}Z_DISPLAY"),
                main,
                main_zone_event: zone_ev,
                main_setp_event: setp_ev,
            });
        }
        rooms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Compliance {
    pub requirement: String,
    pub budget_ms: u64,
    pub met: u64,
    pub total: u64,
    pub max_latency_ms: Option<u64>,
}

impl Compliance {
    fn new(requirement: &str, budget_ms: u64) -> Self {
        Compliance { requirement: requirement.to_string(), budget_ms, met: 0, total: 0, max_latency_ms: None }
    }

    fn observe(&mut self, latency: Option<u64>) {
        self.total += 1;
        if let Some(l) = latency {
            if l < self.budget_ms {
                self.met += 1;
            }
            self.max_latency_ms = Some(self.max_latency_ms.map_or(l, |m| m.max(l)));
        }
    }

    fn merge(&mut self, other: &Compliance) {
        self.met += other.met;
        self.total += other.total;
        self.max_latency_ms = match (self.max_latency_ms, other.max_latency_ms) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }

    pub fn all_met(&self) -> bool {
        self.met == self.total
    }
}

/// Open stimulus waiting for its response records.
#[derive(Debug)]
struct Pending {
    t: u64,
    done: [bool; 2],
}

#[derive(Debug)]
struct RoomTiming {
    ports: RoomPorts,
    samples: VecDeque<Pending>,
    presses: VecDeque<Pending>,
    future_presses: VecDeque<u64>,
    sample_count: u64,
    sample_notify: Compliance,
    display: Compliance,
    press_notify: Compliance,
    setpoint: Compliance,
}

/// Streaming latency measurement over trace records. Each sensor sample
/// must reach the main controller and the display; each press must reach
/// the display's setpoint and the main controller.
#[derive(Debug)]
pub struct TimingMonitor {
    rooms: Vec<RoomTiming>,
}

/// A response answers the most recent unanswered stimulus; stimuli it skips
/// over later expire as violations.
fn match_latest(q: &mut VecDeque<Pending>, slot: usize, now: u64) -> Option<u64> {
    let p = q.iter_mut().rev().find(|p| !p.done[slot] && p.t <= now)?;
    p.done[slot] = true;
    Some(now - p.t)
}

impl TimingMonitor {
    pub fn new(rooms: Vec<RoomPorts>, presses: &[Press]) -> Self {
        let rooms = rooms
            .into_iter()
            .map(|ports| {
                let mut fp: Vec<u64> = presses.iter().filter(|p| p.zone == ports.zone).map(|p| p.time_ms).collect();
                fp.sort_unstable();
                RoomTiming {
                    ports,
                    samples: VecDeque::new(),
                    presses: VecDeque::new(),
                    future_presses: fp.into(),
                    sample_count: 0,
                    sample_notify: Compliance::new("notify", NOTIFY_BUDGET_MS),
                    display: Compliance::new("display_update", DISPLAY_BUDGET_MS),
                    press_notify: Compliance::new("notify", NOTIFY_BUDGET_MS),
                    setpoint: Compliance::new("setpoint_update", SETPOINT_BUDGET_MS),
                }
            })
            .collect();
        TimingMonitor { rooms }
    }

    pub fn feed(&mut self, records: &[TraceRecord]) {
        for r in records {
            if r.kind != TraceKind::EventFired {
                continue;
            }
            for room in &mut self.rooms {
                room.activate_presses(r.time_ms);
                let (inst, port) = (&*r.instance, &*r.port);
                let p = &room.ports;
                if inst == p.sensor && port == "SAMPLED" {
                    room.sample_count += 1;
                    room.samples.push_back(Pending { t: r.time_ms, done: [false; 2] });
                } else if inst == p.main && port == p.main_zone_event {
                    let l = match_latest(&mut room.samples, 0, r.time_ms);
                    room.sample_notify.observe(l);
                } else if inst == p.display && port == "TEMP_UPD" {
                    let l = match_latest(&mut room.samples, 1, r.time_ms);
                    room.display.observe(l);
                } else if inst == p.main && port == p.main_setp_event {
                    let l = match_latest(&mut room.presses, 0, r.time_ms);
                    room.press_notify.observe(l);
                } else if inst == p.display && port == "SET_UPD" {
                    let l = match_latest(&mut room.presses, 1, r.time_ms);
                    room.setpoint.observe(l);
                }
            }
        }
    }

    /// Closes every stimulus whose budgets have all lapsed by `now`; any
    /// response still missing counts as a violation.
    pub fn advance(&mut self, now: u64) {
        for room in &mut self.rooms {
            room.activate_presses(now);
            room.expire(now, false);
        }
    }

    /// Ends measurement. Stimuli whose budget window extends past `end` are
    /// not counted unless already answered.
    pub fn finish(&mut self, end: u64) {
        for room in &mut self.rooms {
            room.activate_presses(end);
            room.expire(end, true);
        }
    }

    pub fn samples_per_room(&self) -> Vec<(String, u64)> {
        self.rooms.iter().map(|r| (r.ports.sensor.clone(), r.sample_count)).collect()
    }

    /// Aggregated compliance for the three budgets, notify combining samples
    /// and presses.
    pub fn compliance(&self) -> Vec<Compliance> {
        let mut notify = Compliance::new("notify", NOTIFY_BUDGET_MS);
        let mut display = Compliance::new("display_update", DISPLAY_BUDGET_MS);
        let mut setpoint = Compliance::new("setpoint_update", SETPOINT_BUDGET_MS);
        for r in &self.rooms {
            notify.merge(&r.sample_notify);
            notify.merge(&r.press_notify);
            display.merge(&r.display);
            setpoint.merge(&r.setpoint);
        }
        vec![notify, display, setpoint]
    }

    /// Press-driven measurements only.
    pub fn press_compliance(&self) -> Vec<Compliance> {
        let mut notify = Compliance::new("notify", NOTIFY_BUDGET_MS);
        let mut setpoint = Compliance::new("setpoint_update", SETPOINT_BUDGET_MS);
        for r in &self.rooms {
            notify.merge(&r.press_notify);
            setpoint.merge(&r.setpoint);
        }
        vec![notify, setpoint]
    }
}

impl RoomTiming {
    fn activate_presses(&mut self, now: u64) {
        while self.future_presses.front().is_some_and(|&t| t <= now) {
            let t = self.future_presses.pop_front().unwrap_or_default();
            self.presses.push_back(Pending { t, done: [false; 2] });
        }
    }

    fn expire(&mut self, now: u64, finishing: bool) {
        let budgets = [NOTIFY_BUDGET_MS, DISPLAY_BUDGET_MS];
        while let Some(p) = self.samples.front() {
            if p.done.iter().all(|&d| d) {
                self.samples.pop_front();
                continue;
            }
            if now.saturating_sub(p.t) < budgets[0].max(budgets[1]) {
                break;
            }
            let p = self.samples.pop_front().unwrap_or(Pending { t: 0, done: [true; 2] });
            if !p.done[0] {
                self.sample_notify.observe(None);
            }
            if !p.done[1] {
                self.display.observe(None);
            }
        }
        let budgets = [NOTIFY_BUDGET_MS, SETPOINT_BUDGET_MS];
        while let Some(p) = self.presses.front() {
            if p.done.iter().all(|&d| d) {
                self.presses.pop_front();
                continue;
            }
            if now.saturating_sub(p.t) < budgets[0].max(budgets[1]) {
                break;
            }
            let p = self.presses.pop_front().unwrap_or(Pending { t: 0, done: [true; 2] });
            if !p.done[0] {
                self.press_notify.observe(None);
            }
            if !p.done[1] {
                self.setpoint.observe(None);
            }
        }
        if finishing {
            self.samples.clear();
            self.presses.clear();
        }
    }
}

/// The FB network coupled to its world. The plant advances in fixed steps
/// between runtime quanta.
pub struct Simulation {
    pub app: RuntimeApp,
    pub world: SharedWorld,
    plant_step_ms: u64,
    backlog: Vec<TraceRecord>,
}

impl Simulation {
    pub fn new(
        descriptor: Arc<SystemDescriptor>,
        plant: Plant,
        presses: &[Press],
        tick_ms: u64,
    ) -> Result<Self, RuntimeError> {
        let plant_step_ms = plant.coefficients.step_ms.max(1);
        let world = World::new(plant, presses).shared();
        let mut app = RuntimeApp::instantiate(descriptor, &registry(&world))?;
        app.set_tick_ms(tick_ms)?;
        Ok(Simulation { app, world, plant_step_ms, backlog: Vec::new() })
    }

    pub fn clock(&self) -> u64 {
        self.app.clock()
    }

    /// Runs to `t`, returning the trace produced on the way.
    pub fn advance_to(&mut self, t: u64) -> Result<Vec<TraceRecord>, RuntimeError> {
        let mut out = Vec::new();
        while self.app.clock() < t {
            let boundary = (self.app.clock() / self.plant_step_ms + 1) * self.plant_step_ms;
            let next = boundary.min(t);
            out.extend(self.app.run_until(next)?);
            if next == boundary {
                self.world.borrow_mut().plant.step(self.plant_step_ms);
            }
        }
        Ok(out)
    }

    /// Trace produced while a diagnosis drove the simulation.
    pub fn take_backlog(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.backlog)
    }
}

impl crate::fde::DiagnosticTarget for Simulation {
    fn app(&mut self) -> &mut RuntimeApp {
        &mut self.app
    }

    fn advance_to(&mut self, t: u64) -> Result<(), crate::fde::FdeError> {
        let trace = Simulation::advance_to(self, t)?;
        self.backlog.extend(trace);
        Ok(())
    }
}
