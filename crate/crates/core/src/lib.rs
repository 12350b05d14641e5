//! A deterministic IEC 61499-style function-block runtime, an HVAC room
//! controller co-simulation, and an agent-based fault diagnostic engine that
//! instruments the running application through pass-through gates.

pub mod model;
pub mod runtime;
pub mod plant;
pub mod hvac;
pub mod fde;
pub mod scenario;
