//! Execution trace records and their CSV export.

use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;

use crate::model::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TraceKind {
    /// An event consumed by an input port or emitted from an output port.
    EventFired,
    /// An output data value published alongside an output event.
    DataWritten,
    StateEntered,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::EventFired => "EventFired",
            TraceKind::DataWritten => "DataWritten",
            TraceKind::StateEntered => "StateEntered",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub time_ms: u64,
    /// Position in the global trace order.
    pub seq: u64,
    pub kind: TraceKind,
    pub instance: Arc<str>,
    /// Port name, or state name for `StateEntered`.
    pub port: Arc<str>,
    pub value: Option<Value>,
}

impl TraceRecord {
    pub fn is_event(&self, instance: &str, port: &str) -> bool {
        self.kind == TraceKind::EventFired && &*self.instance == instance && &*self.port == port
    }
}

pub const CSV_HEADER: &str = "time_ms,kind,instance,port,value";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_csv_header(w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")
}

pub fn write_csv_rows(records: &[TraceRecord], w: &mut impl Write) -> io::Result<()> {
    for r in records {
        let value = r.value.as_ref().map(Value::trace_text).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            r.time_ms,
            r.kind.as_str(),
            csv_field(&r.instance),
            csv_field(&r.port),
            csv_field(&value)
        )?;
    }
    Ok(())
}

pub fn trace_to_csv(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_csv_header(&mut buf).expect("write to Vec");
    write_csv_rows(records, &mut buf).expect("write to Vec");
    String::from_utf8(buf).expect("trace text is UTF-8")
}
