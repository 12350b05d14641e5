//! Connection taps: interception points spliced into an event connection
//! and its WITH-associated data connections.
//!
//! A tap is invoked synchronously while the source event is being routed, so
//! a pass-through tap changes neither the order nor the timing of delivery.

use std::sync::Arc;

use serde::Serialize;

use crate::model::Value;

pub type TapId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TapMode {
    /// Forward traffic unchanged and record it.
    PassThrough,
    /// Drop upstream traffic (recorded as suppressed).
    Blocked,
    /// Drop upstream traffic; downstream sees only driven values.
    Driven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TapOrigin {
    Live,
    Injected,
    Suppressed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TapPayload {
    Event(Arc<str>),
    Data(Arc<str>, Value),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TapRecord {
    pub time_ms: u64,
    /// Position among all tap records of the application.
    pub order: u64,
    pub origin: TapOrigin,
    pub payload: TapPayload,
}

#[derive(Debug, Clone)]
pub(crate) struct TapData {
    pub src_slot: usize,
    pub dst_slot: usize,
    /// Source port name, used in records and to address injected values.
    pub port: Arc<str>,
}

#[derive(Debug, Clone)]
pub(crate) struct Tap {
    pub src: usize,
    pub src_event: usize,
    pub dst: usize,
    pub dst_event: usize,
    pub event_name: Arc<str>,
    pub data: Vec<TapData>,
    pub mode: TapMode,
    pub driven: Vec<Value>,
    pub records: Vec<TapRecord>,
    pub attached: bool,
}

/// Public description of an attached tap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TapInfo {
    pub id: TapId,
    pub source: String,
    pub destination: String,
    pub event: String,
    pub data_ports: Vec<String>,
    pub mode: TapMode,
}
