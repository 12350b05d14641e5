//! Diagnostic plans: ring-fence, stimulate, observe, and compare.

use serde::{Deserialize, Serialize};

use crate::model::Value;
use crate::plant::f_to_c;
use crate::runtime::RuntimeApp;

use super::belief::Component;
use super::gate::{DpId, GateMode, Instrumentation, InjectionReceipt, PacketKind, TelemetryPacket};
use super::pathway::FaultPathway;
use super::FdeError;

/// The running system a diagnosis acts on.
pub trait DiagnosticTarget {
    fn app(&mut self) -> &mut RuntimeApp;
    /// Advances the whole simulation (FB network and its world) to `t`.
    fn advance_to(&mut self, t: u64) -> Result<(), FdeError>;
}

impl DiagnosticTarget for RuntimeApp {
    fn app(&mut self) -> &mut RuntimeApp {
        self
    }

    fn advance_to(&mut self, t: u64) -> Result<(), FdeError> {
        self.run_until(t)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub dp: DpId,
    pub port: String,
    pub values: Vec<Value>,
    pub spacing_ms: u64,
    /// Port that receives each item's emission time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stamp_port: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expected {
    Value(f64),
    Event(String),
    /// Nothing may be observed for this item.
    Silent,
}

/// What one point shows for each injected item, aligned by injection time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub dp: DpId,
    /// Data port for value items; event name is taken from the item.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<String>,
    pub items: Vec<Expected>,
    pub tolerance: f64,
    pub timeout_ms: u64,
}

/// Passive check of the raw traffic arriving at a closed gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityCheck {
    pub dp: DpId,
    pub port: String,
    pub duration_ms: u64,
    pub max_jump_per_100ms: f64,
    /// More jumps than this make the segment fail.
    pub max_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticPlan {
    pub id: String,
    pub component: Component,
    /// Gates closed for this plan in addition to the pathway boundary.
    #[serde(default)]
    pub ring_fence: Vec<DpId>,
    #[serde(default)]
    pub injections: Vec<Injection>,
    #[serde(default)]
    pub expectations: Vec<Expectation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityCheck>,
}

impl DiagnosticPlan {
    /// Every point a plan touches must belong to the pathway, and expectation
    /// items must line up with the first injection.
    pub fn check(&self, pathway: &FaultPathway) -> Result<(), FdeError> {
        let bad = |m: String| Err(FdeError::BadConfig(format!("plan `{}`: {m}", self.id)));
        let dps = self
            .ring_fence
            .iter()
            .chain(self.injections.iter().map(|i| &i.dp))
            .chain(self.expectations.iter().map(|e| &e.dp))
            .chain(self.stability.iter().map(|s| &s.dp));
        for dp in dps {
            if !pathway.contains(*dp) {
                return bad(format!("DP {dp} is not on pathway `{}`", pathway.id));
            }
        }
        let n = self.injections.first().map_or(0, |i| i.values.len());
        if self.expectations.iter().any(|e| e.items.len() != n) {
            return bad("expectation length differs from the injection".into());
        }
        if self.injections.is_empty() && self.stability.is_none() {
            return bad("nothing to do".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Observed {
    Value(f64),
    Event(String),
    Nothing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Match,
    /// `item` is 1-based.
    Mismatch { item: usize, reason: String },
}

impl Verdict {
    pub fn is_match(&self) -> bool {
        *self == Verdict::Match
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub verdict: Verdict,
    /// Observed minus expected, for value items that were observed.
    pub residuals: Vec<Option<f64>>,
}

/// Compares observations item by item. The verdict names the first item
/// that is missing, unexpected, or out of tolerance.
pub fn compare(expected: &[Expected], observed: &[Observed], tolerance: f64) -> Comparison {
    let mut residuals = Vec::with_capacity(expected.len());
    let mut verdict = Verdict::Match;
    for (k, e) in expected.iter().enumerate() {
        let o = observed.get(k).unwrap_or(&Observed::Nothing);
        let (residual, failure) = match (e, o) {
            (Expected::Value(x), Observed::Value(y)) => {
                let r = y - x;
                (Some(r), (r.abs() > tolerance).then(|| format!("expected {x}, observed {y}")))
            }
            (Expected::Value(x), Observed::Nothing) => (None, Some(format!("expected {x}, nothing within timeout"))),
            (Expected::Event(a), Observed::Event(b)) if a == b => (None, None),
            (Expected::Event(a), Observed::Nothing) => (None, Some(format!("expected {a}, nothing within timeout"))),
            (Expected::Silent, Observed::Nothing) => (None, None),
            (e, o) => (None, Some(format!("expected {e:?}, observed {o:?}"))),
        };
        residuals.push(residual);
        if let (Some(reason), true) = (failure, verdict.is_match()) {
            verdict = Verdict::Mismatch { item: k + 1, reason };
        }
    }
    Comparison { verdict, residuals }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanOutcome {
    pub plan: String,
    pub component: Component,
    pub verdict: Verdict,
    pub comparisons: Vec<Comparison>,
    pub receipts: Vec<InjectionReceipt>,
    pub started_ms: u64,
    pub finished_ms: u64,
}

/// Collects what an expectation's point showed for each injection slot.
fn observe(expectation: &Expectation, times: &[u64], packets: &[TelemetryPacket], data_port: &str) -> Vec<Observed> {
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let end = (t + expectation.timeout_ms).min(times.get(k + 1).copied().unwrap_or(u64::MAX));
            let item = &expectation.items[k];
            packets
                .iter()
                .filter(|p| p.dp == expectation.dp && p.is_observed() && p.time_ms >= t && p.time_ms < end)
                .find_map(|p| match (&p.value, item) {
                    (Some(v), Expected::Value(_) | Expected::Silent) if p.port == data_port => v.as_f64().map(Observed::Value),
                    (None, Expected::Event(_) | Expected::Silent) if !is_data_dp(expectation, data_port) => {
                        Some(Observed::Event(p.port.clone()))
                    }
                    _ => None,
                })
                .unwrap_or(Observed::Nothing)
        })
        .collect()
}

fn is_data_dp(e: &Expectation, data_port: &str) -> bool {
    e.port.is_some() || !data_port.is_empty()
}

/// Counts jumps beyond the time-scaled limit between successive readings.
fn stability_violations(check: &StabilityCheck, packets: &[TelemetryPacket]) -> (usize, usize) {
    let readings: Vec<(u64, f64)> = packets
        .iter()
        .filter(|p| p.dp == check.dp && p.port == check.port && p.is_observed())
        .filter_map(|p| p.number().map(|v| (p.time_ms, v)))
        .collect();
    let violations = readings
        .windows(2)
        .filter(|w| {
            let limit = check.max_jump_per_100ms * ((w[1].0 - w[0].0) as f64 / 100.0).max(1.0);
            (w[1].1 - w[0].1).abs() > limit
        })
        .count();
    (violations, readings.len())
}

/// Runs one plan starting at `start_ms`. Gates the plan closes are
/// returned to Monitor afterwards; boundary gates stay as they were.
pub fn run_plan(
    target: &mut dyn DiagnosticTarget,
    instr: &mut Instrumentation,
    pathway: &FaultPathway,
    plan: &DiagnosticPlan,
    start_ms: u64,
    sink: &mut Vec<TelemetryPacket>,
) -> Result<PlanOutcome, FdeError> {
    plan.check(pathway)?;
    let mut opened_here = Vec::new();
    for &dp in &plan.ring_fence {
        let g = gate_of(instr, dp)?;
        if instr.gate(g)?.mode == GateMode::Monitor {
            opened_here.push(g);
        }
    }
    instr.gate_close(target.app(), &opened_here)?;
    for inj in &plan.injections {
        let g = gate_of(instr, inj.dp)?;
        if instr.gate(g)?.mode == GateMode::Monitor {
            instr.gate_close(target.app(), &[g])?;
            opened_here.push(g);
        }
    }

    let first = sink.len();
    let mut receipts = Vec::new();
    for inj in &plan.injections {
        let g = gate_of(instr, inj.dp)?;
        receipts.push(instr.inject(target.app(), g, &inj.port, &inj.values, inj.spacing_ms, start_ms, inj.stamp_port.as_deref())?);
    }
    let injection_end = receipts.iter().flat_map(|r| r.times_ms.last().copied()).max().unwrap_or(start_ms);
    let timeout = plan.expectations.iter().map(|e| e.timeout_ms).max().unwrap_or(0);
    let stability_end = plan.stability.as_ref().map_or(start_ms, |s| start_ms + s.duration_ms);
    let end = (injection_end + timeout + 1).max(stability_end);
    target.advance_to(end)?;
    sink.extend(instr.poll(target.app())?);
    let packets = &sink[first..];

    let mut verdict = Verdict::Match;
    let mut comparisons = Vec::new();
    if let Some(check) = &plan.stability {
        let (violations, n) = stability_violations(check, packets);
        if violations > check.max_violations {
            verdict = Verdict::Mismatch {
                item: 1,
                reason: format!("{violations} jumps beyond limit in {n} readings at DP {}", check.dp),
            };
        }
    }
    if let Some(r) = receipts.first() {
        for e in &plan.expectations {
            let data_port = match &e.port {
                Some(p) => p.clone(),
                None => data_port_of(pathway, e.dp),
            };
            let observed = observe(e, &r.times_ms, packets, &data_port);
            let c = compare(&e.items, &observed, e.tolerance);
            if verdict.is_match() && !c.verdict.is_match() {
                verdict = c.verdict.clone();
            }
            comparisons.push(c);
        }
    }
    instr.gate_open(target.app(), &opened_here)?;
    Ok(PlanOutcome {
        plan: plan.id.clone(),
        component: plan.component,
        verdict,
        comparisons,
        receipts,
        started_ms: start_ms,
        finished_ms: end,
    })
}

fn gate_of(instr: &Instrumentation, dp: DpId) -> Result<super::gate::GateId, FdeError> {
    instr.gate_for_dp(dp).ok_or(FdeError::UnknownDp(dp))
}

/// Data port a point reports values on; empty for event points.
fn data_port_of(pathway: &FaultPathway, dp: DpId) -> String {
    match pathway.dp(dp) {
        Some(d) if d.kind == crate::model::ConnKind::Data => d.from.port.clone(),
        _ => String::new(),
    }
}

/// Valid output band of the conversion block.
pub const CONVERSION_BAND_C: (f64, f64) = (-100.0, 150.0);
pub const CONVERSION_TEST_F: [f64; 6] = [32.0, 50.0, 68.0, 77.0, 212.0, -459.67];
pub const CONTROLLER_TEST_C: [f64; 3] = [18.0, 21.0, 24.0];

/// Authored plans for the room-controller pathway shape: sensor point,
/// conversion output, controller output, with an error branch off the
/// conversion block.
pub fn standard_plans(pathway: &FaultPathway, instr: &Instrumentation) -> Result<Vec<DiagnosticPlan>, FdeError> {
    let missing = || FdeError::PlanMissing(pathway.id.clone());
    if pathway.mainline.len() < 3 {
        return Err(missing());
    }
    let (sensor, conv, ctrl) = (&pathway.mainline[0], &pathway.mainline[1], &pathway.mainline[2]);
    let error = pathway.branches_from_block(0).next().ok_or_else(missing)?;
    let stamp = instr
        .gate_for_dp(sensor.id)
        .and_then(|g| instr.gate(g).ok())
        .and_then(|g| g.ports.iter().find(|p| *p == "TS").cloned());

    let sensor_plan = DiagnosticPlan {
        id: format!("{}-sensor", pathway.id),
        component: Component::Sensor,
        ring_fence: vec![],
        injections: vec![],
        expectations: vec![],
        stability: Some(StabilityCheck {
            dp: sensor.id,
            port: sensor.from.port.clone(),
            duration_ms: 3000,
            max_jump_per_100ms: 9.0,
            max_violations: 2,
        }),
    };

    let (lo, hi) = CONVERSION_BAND_C;
    let mut out_items = Vec::new();
    let mut err_items = Vec::new();
    for f in CONVERSION_TEST_F {
        let c = f_to_c(f);
        if (lo..=hi).contains(&c) {
            out_items.push(Expected::Value(c));
            err_items.push(Expected::Silent);
        } else {
            out_items.push(Expected::Silent);
            err_items.push(Expected::Event(error.from.port.clone()));
        }
    }
    let conversion_plan = DiagnosticPlan {
        id: format!("{}-conversion", pathway.id),
        component: Component::Conversion,
        ring_fence: vec![],
        injections: vec![Injection {
            dp: sensor.id,
            port: sensor.from.port.clone(),
            values: CONVERSION_TEST_F.iter().map(|&f| Value::Real(f)).collect(),
            spacing_ms: 5000,
            stamp_port: stamp,
        }],
        expectations: vec![
            Expectation { dp: conv.id, port: None, items: out_items, tolerance: 0.1, timeout_ms: 200 },
            Expectation { dp: error.id, port: None, items: err_items, tolerance: 0.0, timeout_ms: 200 },
        ],
        stability: None,
    };

    let controller_plan = DiagnosticPlan {
        id: format!("{}-controller", pathway.id),
        component: Component::Controller,
        ring_fence: vec![conv.id],
        injections: vec![Injection {
            dp: conv.id,
            port: conv.from.port.clone(),
            values: CONTROLLER_TEST_C.iter().map(|&c| Value::Real(c)).collect(),
            spacing_ms: 1000,
            stamp_port: None,
        }],
        expectations: vec![Expectation {
            dp: ctrl.id,
            port: None,
            items: CONTROLLER_TEST_C.iter().map(|&c| Expected::Value(c)).collect(),
            tolerance: 0.1,
            timeout_ms: 200,
        }],
        stability: None,
    };
    Ok(vec![sensor_plan, conversion_plan, controller_plan])
}

/// Whether a packet stream shows a packet at `dp` of the given kind.
pub fn saw(packets: &[TelemetryPacket], dp: DpId, port: &str, kinds: &[PacketKind]) -> bool {
    packets.iter().any(|p| p.dp == dp && p.port == port && kinds.contains(&p.kind))
}
