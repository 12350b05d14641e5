//! Scenario files and the runner that plays them: plant, occupant script,
//! fault schedule and optional diagnostic engine over one simulated run.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fde::{Anomaly, DiagnosisReport, Fde, FdeConfig, FdeError, FdeMode, MergedView};
use crate::hvac::{set_software_fault, Button, Compliance, Press, RoomPorts, Simulation, SoftwareFault, TimingMonitor};
use crate::hvac::{ROOM_CONTROLLER, TWO_ROOM};
use crate::model::{parse_system, SystemDescriptor};
use crate::plant::{ActuatorFaultMode, Plant, PlantCoefficients, PlantError, SensorFaultMode};
use crate::runtime::trace::{write_csv_header, write_csv_rows};
use crate::runtime::{HaltRecord, RuntimeError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("descriptor {name}:\n{diagnostics}")]
    Descriptor { name: String, diagnostics: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Fde(#[from] FdeError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("writing output: {0}")]
    Output(#[source] io::Error),
}

/// A scripted button press, optionally repeated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedPress {
    pub at_ms: u64,
    #[serde(default)]
    pub zone: usize,
    pub button: Button,
    /// Further presses after the first.
    #[serde(default)]
    pub repeat: u32,
    #[serde(default)]
    pub every_ms: u64,
    /// Swap Up and Down on every repetition.
    #[serde(default)]
    pub alternate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultTarget {
    Sensor { zone: usize, mode: SensorFaultMode },
    Actuator { zone: usize, mode: ActuatorFaultMode },
    /// Conversion corruption inside a Fahrenheit range.
    Software { instance: String, lo_f: f64, hi_f: f64, offset_c: f64 },
    /// Stops an FB instance, e.g. to simulate a failed controller.
    Halt { instance: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultAction {
    #[default]
    Activate,
    Clear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEntry {
    pub at_ms: u64,
    #[serde(default)]
    pub action: FaultAction,
    pub fault: FaultTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    /// `room_controller`, `two_room`, or a descriptor path relative to the
    /// scenario file.
    pub system: String,
    pub duration_ms: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_tick")]
    pub tick_ms: u64,
    #[serde(default)]
    pub plant: PlantCoefficients,
    /// Initial zone temperatures in °C, one per room.
    pub zones: Vec<f64>,
    #[serde(default)]
    pub occupant: Vec<ScriptedPress>,
    #[serde(default)]
    pub faults: Vec<FaultEntry>,
    /// Absent means no diagnostic engine.
    #[serde(default)]
    pub fde: Option<FdeConfig>,
}

fn default_seed() -> u64 {
    1
}

fn default_tick() -> u64 {
    10
}

/// A parsed scenario with its descriptor resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub descriptor: Arc<SystemDescriptor>,
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = read(path)?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Self::new(file, base)
    }

    pub fn new(file: ScenarioFile, base: &Path) -> Result<Self, ScenarioError> {
        let src = match file.system.as_str() {
            "room_controller" => ROOM_CONTROLLER.to_string(),
            "two_room" => TWO_ROOM.to_string(),
            rel => read(&base.join(rel))?,
        };
        let descriptor = parse_system(&src)
            .map_err(|d| ScenarioError::Descriptor { name: file.system.clone(), diagnostics: d.to_string() })?;
        let s = Scenario { file, descriptor: Arc::new(descriptor) };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), ScenarioError> {
        let f = &self.file;
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if f.duration_ms == 0 {
            return bad("duration_ms must be positive".into());
        }
        if f.tick_ms == 0 {
            return bad("tick_ms must be positive".into());
        }
        let rooms = RoomPorts::discover(&self.descriptor).len();
        if f.zones.len() != rooms {
            return bad(format!("{} zone temperatures for {rooms} rooms", f.zones.len()));
        }
        if f.faults.windows(2).any(|w| w[1].at_ms < w[0].at_ms) {
            return bad("fault times must be non-decreasing".into());
        }
        for e in &f.faults {
            match &e.fault {
                FaultTarget::Sensor { zone, mode } => {
                    mode.check()?;
                    if *zone >= rooms {
                        return bad(format!("fault on unknown zone {zone}"));
                    }
                }
                FaultTarget::Actuator { zone, .. } if *zone >= rooms => return bad(format!("fault on unknown zone {zone}")),
                FaultTarget::Software { instance, .. } | FaultTarget::Halt { instance }
                    if self.descriptor.instance(instance).is_none() =>
                {
                    return bad(format!("fault on unknown instance `{instance}`"));
                }
                FaultTarget::Halt { .. } if e.action == FaultAction::Clear => {
                    return bad("a halted instance cannot be resumed".into());
                }
                _ => {}
            }
        }
        if f.occupant.iter().any(|p| p.zone >= rooms) {
            return bad("press on unknown zone".into());
        }
        if let Some(fde) = &f.fde {
            let dps = fde.dps.iter().flatten();
            let plans = fde.plans.values().flatten().flat_map(|p| {
                p.ring_fence
                    .iter()
                    .chain(p.injections.iter().map(|i| &i.dp))
                    .chain(p.expectations.iter().map(|e| &e.dp))
            });
            for dp in dps.chain(plans) {
                if self.descriptor.diagnostic_point(*dp).is_none() {
                    return bad(format!("unknown diagnostic point {dp}"));
                }
            }
        }
        Ok(())
    }

    /// Expanded press list, sorted by time.
    pub fn presses(&self) -> Vec<Press> {
        let mut out = Vec::new();
        for s in &self.file.occupant {
            for k in 0..=s.repeat {
                let button = match (s.alternate && k % 2 == 1, s.button) {
                    (false, b) => b,
                    (true, Button::Up) => Button::Down,
                    (true, Button::Down) => Button::Up,
                };
                out.push(Press { time_ms: s.at_ms + k as u64 * s.every_ms, zone: s.zone, button });
            }
        }
        out.sort_by_key(|p| p.time_ms);
        out
    }

    pub fn fde_mode(&self) -> FdeMode {
        self.file.fde.as_ref().map_or(FdeMode::Off, |c| c.mode)
    }

    /// Builds the simulation with every fault due at time zero applied.
    pub fn build(&self, seed: u64) -> Result<Simulation, ScenarioError> {
        let plant = Plant::new(self.file.plant.clone(), &self.file.zones, seed);
        let mut sim = Simulation::new(self.descriptor.clone(), plant, &self.presses(), self.file.tick_ms)?;
        for e in self.file.faults.iter().filter(|e| e.at_ms == 0) {
            apply_fault(&mut sim, e)?;
        }
        Ok(sim)
    }
}

pub fn apply_fault(sim: &mut Simulation, e: &FaultEntry) -> Result<(), ScenarioError> {
    let on = e.action == FaultAction::Activate;
    match &e.fault {
        FaultTarget::Sensor { zone, mode } => {
            let mode = if on { *mode } else { SensorFaultMode::None };
            sim.world.borrow_mut().plant.set_sensor_fault(*zone, mode)?;
        }
        FaultTarget::Actuator { zone, mode } => {
            let mode = if on { *mode } else { ActuatorFaultMode::None };
            sim.world.borrow_mut().plant.set_actuator_fault(*zone, mode)?;
        }
        FaultTarget::Software { instance, lo_f, hi_f, offset_c } => {
            let fault = on.then_some(SoftwareFault { lo_f: *lo_f, hi_f: *hi_f, offset_c: *offset_c });
            set_software_fault(&mut sim.app, instance, fault)?;
        }
        FaultTarget::Halt { instance } => sim.app.halt(instance, "halted by fault schedule")?,
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Counters {
    pub events_processed: u64,
    pub trace_records: u64,
    pub gates: usize,
    pub packets: u64,
    pub sensor_samples: Vec<(String, u64)>,
    /// Host time; excluded from the report document so artifacts stay
    /// reproducible.
    #[serde(skip)]
    pub wall_clock_ms: f64,
    #[serde(skip)]
    pub per_tick_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub duration_ms: u64,
    pub fde: FdeMode,
    pub compliance: Vec<Compliance>,
    pub anomalies: Vec<Anomaly>,
    pub diagnoses: Vec<DiagnosisReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beliefs: Option<MergedView>,
    pub halts: Vec<HaltRecord>,
    pub counters: Counters,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default() + "\n"
    }

    pub fn all_budgets_met(&self) -> bool {
        self.compliance.iter().all(Compliance::all_met)
    }
}

/// Where a run writes its streams; either may be absent.
#[derive(Default)]
pub struct Sinks<'a> {
    pub trace: Option<&'a mut dyn Write>,
    pub telemetry: Option<&'a mut dyn Write>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub fde: Option<FdeMode>,
    /// Record the FB trace even without a trace sink (it always feeds the
    /// timing monitor).
    pub keep_trace: bool,
}

/// Outcome of a run plus whatever trace was kept in memory.
pub struct RunOutput {
    pub report: RunReport,
    pub trace: Vec<crate::runtime::TraceRecord>,
}

pub fn run(scenario: &Scenario, opts: RunOptions, mut sinks: Sinks<'_>) -> Result<RunOutput, ScenarioError> {
    let started = Instant::now();
    let f = &scenario.file;
    let seed = opts.seed.unwrap_or(f.seed);
    let mode = opts.fde.unwrap_or_else(|| scenario.fde_mode());
    let mut sim = scenario.build(seed)?;
    let mut config = f.fde.clone().unwrap_or_default();
    config.mode = mode;
    let mut fde = Fde::new(&config, &mut sim)?;
    let mut timing = TimingMonitor::new(RoomPorts::discover(&scenario.descriptor), &scenario.presses());

    let out = |e: io::Error| ScenarioError::Output(e);
    if let Some(w) = sinks.trace.as_mut() {
        write_csv_header(w).map_err(out)?;
    }
    let step = if mode == FdeMode::Off { 100 } else { fde.instr.gates().map(|g| g.sampling_interval_ms).min().unwrap_or(50) };
    let mut pending_faults = f.faults.iter().filter(|e| e.at_ms > 0).peekable();
    let mut kept = Vec::new();
    let mut trace_records = 0u64;
    let mut ticks = 0u64;
    let mut diagnoses = Vec::new();
    while sim.clock() < f.duration_ms {
        let mut next = ((sim.clock() / step + 1) * step).min(f.duration_ms);
        if let Some(e) = pending_faults.peek() {
            next = next.min(e.at_ms.max(sim.clock() + 1));
        }
        let mut trace = sim.advance_to(next)?;
        ticks += 1;
        while let Some(e) = pending_faults.next_if(|e| e.at_ms <= sim.clock()) {
            apply_fault(&mut sim, e)?;
        }
        diagnoses.extend(fde.step(&mut sim)?);
        trace.extend(sim.take_backlog());
        timing.feed(&trace);
        timing.advance(sim.clock());
        trace_records += trace.len() as u64;
        if let Some(w) = sinks.trace.as_mut() {
            write_csv_rows(&trace, w).map_err(out)?;
        }
        if let Some(w) = sinks.telemetry.as_mut() {
            for p in fde.take_telemetry() {
                writeln!(w, "{}", p.to_ndjson()).map_err(out)?;
            }
        } else {
            fde.take_telemetry();
        }
        if opts.keep_trace {
            kept.extend(trace);
        }
    }
    timing.finish(f.duration_ms);
    let wall = started.elapsed().as_secs_f64() * 1000.0;
    let report = RunReport {
        scenario: f.name.clone(),
        seed,
        duration_ms: f.duration_ms,
        fde: mode,
        compliance: timing.compliance(),
        anomalies: fde.anomalies().cloned().collect(),
        diagnoses,
        beliefs: (mode != FdeMode::Off).then(|| fde.exchange_beliefs()),
        halts: sim.app.halts().to_vec(),
        counters: Counters {
            events_processed: sim.app.events_processed(),
            trace_records,
            gates: fde.instr.len(),
            packets: fde.packets_seen,
            sensor_samples: timing.samples_per_room(),
            wall_clock_ms: wall,
            per_tick_us: wall * 1000.0 / ticks.max(1) as f64,
        },
    };
    Ok(RunOutput { report, trace: kept })
}

/// Forces a diagnosis of `pathway` at time zero.
pub fn diagnose(scenario: &Scenario, pathway: &str, seed: Option<u64>) -> Result<DiagnosisReport, ScenarioError> {
    let mut sim = scenario.build(seed.unwrap_or(scenario.file.seed))?;
    let mut config = scenario.file.fde.clone().unwrap_or_default();
    if config.mode == FdeMode::Off {
        config.mode = FdeMode::Monitor;
    }
    let mut fde = Fde::new(&config, &mut sim)?;
    if fde.plans(pathway).is_none() {
        return Err(FdeError::PlanMissing(pathway.to_string()).into());
    }
    Ok(fde.force_diagnosis(pathway, &mut sim)?)
}
