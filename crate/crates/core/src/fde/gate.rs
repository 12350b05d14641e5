//! Agent gates spliced into diagnostic points, and the telemetry they emit.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::{ConnKind, Endpoint, SystemDescriptor, Value};
use crate::runtime::{RuntimeApp, TapId, TapMode, TapOrigin, TapPayload};

use super::FdeError;

pub type GateId = usize;
pub type DpId = u32;

/// Period of gate liveness packets.
pub const HEARTBEAT_MS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Read-only pass-through.
    Monitor,
    /// Upstream traffic is dropped (and reported as suppressed).
    Closed,
    /// Closed, with downstream fed only by injected stimuli.
    Inject,
}

impl GateMode {
    fn tap_mode(self) -> TapMode {
        match self {
            GateMode::Monitor => TapMode::PassThrough,
            GateMode::Closed => TapMode::Blocked,
            GateMode::Inject => TapMode::Driven,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    Event,
    Data,
    Injected,
    Suppressed,
    /// Periodic liveness report; `port` carries the gate mode.
    Heartbeat,
}

/// One observation reported by a gate. Event packets carry no value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPacket {
    pub gate: GateId,
    pub dp: DpId,
    pub seq: u64,
    #[serde(rename = "t")]
    pub time_ms: u64,
    pub kind: PacketKind,
    pub port: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
}

impl TelemetryPacket {
    pub fn is_event(&self) -> bool {
        self.value.is_none() && self.kind != PacketKind::Heartbeat
    }

    pub fn number(&self) -> Option<f64> {
        self.value.as_ref().and_then(Value::as_f64)
    }

    /// Carried real traffic (forwarded or suppressed), as opposed to a stimulus.
    pub fn is_observed(&self) -> bool {
        matches!(self.kind, PacketKind::Event | PacketKind::Data | PacketKind::Suppressed)
    }

    pub fn to_ndjson(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

/// Parses newline-delimited packet records, skipping blank lines.
pub fn parse_ndjson(text: &str) -> Result<Vec<TelemetryPacket>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentGate {
    pub id: GateId,
    pub dp: DpId,
    pub mode: GateMode,
    pub sampling_interval_ms: u64,
    pub source: Endpoint,
    pub destination: Endpoint,
    /// Data ports carried with the intercepted event.
    pub ports: Vec<String>,
    #[serde(skip)]
    tap: TapId,
    next_seq: u64,
    #[serde(skip)]
    last_heartbeat_ms: Option<u64>,
}

/// Record of a scheduled stimulus sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectionReceipt {
    pub gate: GateId,
    pub dp: DpId,
    pub port: String,
    pub times_ms: Vec<u64>,
    pub values: Vec<Value>,
}

/// The set of gates currently spliced into an application.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Instrumentation {
    gates: Vec<AgentGate>,
    #[serde(skip)]
    by_dp: BTreeMap<DpId, GateId>,
}

/// Half the smallest timer period, so gates sample faster than any FB.
pub fn sampling_interval(app: &RuntimeApp) -> u64 {
    app.timer_periods().iter().map(|(_, p)| *p).min().map_or(50, |p| (p / 2).max(1))
}

impl Instrumentation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Splices a Monitor-mode gate into each listed diagnostic point.
    pub fn rewire(&mut self, app: &mut RuntimeApp, dps: &[DpId]) -> Result<Vec<GateId>, FdeError> {
        let sys = app.descriptor().clone();
        let mut resolved = Vec::new();
        for &dp in dps {
            if self.by_dp.contains_key(&dp) || resolved.iter().any(|(d, _, _)| *d == dp) {
                return Err(FdeError::AlreadyRewired(dp));
            }
            let (from, to) = carrier(&sys, dp)?;
            resolved.push((dp, from, to));
        }
        let interval = sampling_interval(app);
        let mut ids = Vec::new();
        for (dp, from, to) in resolved {
            let tap = app.attach_tap(&from, &to)?;
            let info = app.tap_info(tap)?;
            let id = self.gates.len();
            self.gates.push(AgentGate {
                id,
                dp,
                mode: GateMode::Monitor,
                sampling_interval_ms: interval,
                source: from,
                destination: to,
                ports: info.data_ports,
                tap,
                next_seq: 0,
                last_heartbeat_ms: None,
            });
            self.by_dp.insert(dp, id);
            ids.push(id);
        }
        Ok(ids)
    }

    /// Removes every gate, restoring the original topology.
    pub fn unwire(&mut self, app: &mut RuntimeApp) -> Result<(), FdeError> {
        for g in &self.gates {
            if self.by_dp.get(&g.dp) == Some(&g.id) {
                app.detach_tap(g.tap)?;
            }
        }
        self.by_dp.clear();
        Ok(())
    }

    pub fn gates(&self) -> impl Iterator<Item = &AgentGate> {
        self.gates.iter().filter(|g| self.by_dp.get(&g.dp) == Some(&g.id))
    }

    pub fn len(&self) -> usize {
        self.by_dp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_dp.is_empty()
    }

    pub fn gate_for_dp(&self, dp: DpId) -> Option<GateId> {
        self.by_dp.get(&dp).copied()
    }

    pub fn gate(&self, id: GateId) -> Result<&AgentGate, FdeError> {
        self.gates.get(id).filter(|g| self.by_dp.get(&g.dp) == Some(&g.id)).ok_or(FdeError::UnknownGate(id))
    }

    fn set_mode(&mut self, app: &mut RuntimeApp, id: GateId, mode: GateMode) -> Result<(), FdeError> {
        let tap = self.gate(id)?.tap;
        app.set_tap_mode(tap, mode.tap_mode())?;
        self.gates[id].mode = mode;
        Ok(())
    }

    /// Closes all listed gates; nothing changes if any id is unknown.
    pub fn gate_close(&mut self, app: &mut RuntimeApp, ids: &[GateId]) -> Result<(), FdeError> {
        for &id in ids {
            self.gate(id)?;
        }
        for &id in ids {
            self.set_mode(app, id, GateMode::Closed)?;
        }
        Ok(())
    }

    /// Returns the listed gates to Monitor mode.
    pub fn gate_open(&mut self, app: &mut RuntimeApp, ids: &[GateId]) -> Result<(), FdeError> {
        for &id in ids {
            self.gate(id)?;
        }
        for &id in ids {
            self.set_mode(app, id, GateMode::Monitor)?;
        }
        Ok(())
    }

    /// Schedules `values` on `port` through an isolated gate, one item every
    /// `spacing_ms` starting at `start_ms`. When `stamp_port` is given, each
    /// item also carries its own emission time on that port.
    #[allow(clippy::too_many_arguments)]
    pub fn inject(
        &mut self,
        app: &mut RuntimeApp,
        id: GateId,
        port: &str,
        values: &[Value],
        spacing_ms: u64,
        start_ms: u64,
        stamp_port: Option<&str>,
    ) -> Result<InjectionReceipt, FdeError> {
        let gate = self.gate(id)?;
        if gate.mode == GateMode::Monitor {
            return Err(FdeError::GateNotIsolated(id));
        }
        let (tap, dp) = (gate.tap, gate.dp);
        if gate.mode == GateMode::Closed {
            self.set_mode(app, id, GateMode::Inject)?;
        }
        let mut times = Vec::with_capacity(values.len());
        for (k, v) in values.iter().enumerate() {
            let at = start_ms + k as u64 * spacing_ms;
            let stamp = Value::Real(at as f64);
            let mut items = vec![(port, v.clone())];
            if let Some(sp) = stamp_port {
                items.push((sp, stamp));
            }
            app.schedule_injection(tap, at, &items)?;
            times.push(at);
        }
        Ok(InjectionReceipt { gate: id, dp, port: port.to_string(), times_ms: times, values: values.to_vec() })
    }

    /// Collects what every gate has seen since the last poll in observation
    /// order, numbering packets per gate. Each gate adds a heartbeat when
    /// [`HEARTBEAT_MS`] have passed since its last one.
    pub fn poll(&mut self, app: &mut RuntimeApp) -> Result<Vec<TelemetryPacket>, FdeError> {
        let mut out: Vec<(u64, TelemetryPacket)> = Vec::new();
        let live: Vec<GateId> = self.by_dp.values().copied().collect();
        for id in live {
            let records = app.drain_tap(self.gates[id].tap)?;
            let gate = &mut self.gates[id];
            for r in records {
                let (port, value, base) = match r.payload {
                    TapPayload::Event(e) => (e.to_string(), None, PacketKind::Event),
                    TapPayload::Data(p, v) => (p.to_string(), Some(v), PacketKind::Data),
                };
                let kind = match r.origin {
                    TapOrigin::Live => base,
                    TapOrigin::Injected => PacketKind::Injected,
                    TapOrigin::Suppressed => PacketKind::Suppressed,
                };
                out.push((r.order, TelemetryPacket { gate: gate.id, dp: gate.dp, seq: gate.next_seq, time_ms: r.time_ms, kind, port, value }));
                gate.next_seq += 1;
            }
        }
        out.sort_by_key(|(order, _)| *order);
        let mut packets: Vec<_> = out.into_iter().map(|(_, p)| p).collect();
        let now = app.clock();
        for &id in self.by_dp.values() {
            let gate = &mut self.gates[id];
            if gate.last_heartbeat_ms.is_some_and(|t| now < t + HEARTBEAT_MS) {
                continue;
            }
            gate.last_heartbeat_ms = Some(now);
            let port = match gate.mode {
                GateMode::Monitor => "monitor",
                GateMode::Closed => "closed",
                GateMode::Inject => "inject",
            };
            packets.push(TelemetryPacket {
                gate: gate.id,
                dp: gate.dp,
                seq: gate.next_seq,
                time_ms: now,
                kind: PacketKind::Heartbeat,
                port: port.to_string(),
                value: None,
            });
            gate.next_seq += 1;
        }
        Ok(packets)
    }
}

/// Resolves a diagnostic point to the event connection that carries it.
pub fn carrier(sys: &SystemDescriptor, dp: DpId) -> Result<(Endpoint, Endpoint), FdeError> {
    let decl = sys.diagnostic_point(dp).ok_or(FdeError::UnknownDp(dp))?;
    match decl.kind {
        ConnKind::Event => Ok((decl.from.clone(), decl.to.clone())),
        ConnKind::Data => {
            let c = sys.dp_event_connection(decl).ok_or(FdeError::UnknownDp(dp))?;
            Ok((c.from.clone(), c.to.clone()))
        }
    }
}

/// Checks per-gate sequence continuity over a packet stream.
#[derive(Debug, Default, Clone)]
pub struct SeqChecker {
    next: HashMap<GateId, u64>,
}

impl SeqChecker {
    /// Returns the expected sequence number when `p` skips ahead of it.
    pub fn check(&mut self, p: &TelemetryPacket) -> Option<u64> {
        let expected = self.next.entry(p.gate).or_insert(p.seq);
        let gap = (p.seq != *expected).then_some(*expected);
        *expected = p.seq + 1;
        gap
    }
}
