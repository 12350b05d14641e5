//! Fault diagnostic engine: gates at diagnostic points, monitor-mode
//! detectors, Bayesian agents and ring-fenced diagnostic plans.

pub mod agent;
pub mod belief;
pub mod detect;
pub mod gate;
pub mod pathway;
pub mod plan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Value;
use crate::runtime::{RuntimeApp, RuntimeError};

pub use agent::{exchange_beliefs, Agent, AnomalyOrigin, DiagnosisReport, Fde, FdeConfig, FdeMode, MergedView};
pub use belief::{Belief, Component, Evidence, Hypothesis, LikelihoodTable};
pub use detect::{Anomaly, AnomalyKind, PathwayMonitor, RateModel, RateMonitor, Thresholds};
pub use gate::{DpId, GateId, GateMode, Instrumentation, PacketKind, TelemetryPacket};
pub use pathway::FaultPathway;
pub use plan::{compare, DiagnosticPlan, DiagnosticTarget, Expected, Observed, Verdict};

#[derive(Debug, Error, PartialEq)]
pub enum FdeError {
    #[error("unknown diagnostic point {0}")]
    UnknownDp(DpId),
    #[error("diagnostic point {0} already has a gate")]
    AlreadyRewired(DpId),
    #[error("unknown gate {0}")]
    UnknownGate(GateId),
    #[error("gate {0} must be closed before injecting")]
    GateNotIsolated(GateId),
    #[error("unknown fault pathway `{0}`")]
    UnknownPathway(String),
    #[error("no diagnostic plans for pathway `{0}`")]
    PlanMissing(String),
    #[error("evidence has zero probability under every hypothesis")]
    DegenerateUpdate,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("need at least {need} samples, have {have}")]
    InsufficientSamples { have: usize, need: usize },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// Operator commands accepted over the back channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    Rewire { dps: Vec<DpId> },
    Unwire,
    GateClose { gates: Vec<GateId> },
    GateOpen { gates: Vec<GateId> },
    Inject {
        gate: GateId,
        port: String,
        values: Vec<Value>,
        spacing_ms: u64,
        start_ms: u64,
        #[serde(default)]
        stamp_port: Option<String>,
    },
}

impl Command {
    pub fn parse(line: &str) -> Result<Self, FdeError> {
        serde_json::from_str(line).map_err(|e| FdeError::BadConfig(format!("command: {e}")))
    }

    pub fn execute(&self, instr: &mut Instrumentation, app: &mut RuntimeApp) -> Result<(), FdeError> {
        match self {
            Command::Rewire { dps } => instr.rewire(app, dps).map(drop),
            Command::Unwire => instr.unwire(app),
            Command::GateClose { gates } => instr.gate_close(app, gates),
            Command::GateOpen { gates } => instr.gate_open(app, gates),
            Command::Inject { gate, port, values, spacing_ms, start_ms, stamp_port } => instr
                .inject(app, *gate, port, values, *spacing_ms, *start_ms, stamp_port.as_deref())
                .map(drop),
        }
    }
}
