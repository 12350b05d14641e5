//! Declarative description of a function-block system: types, devices,
//! sub-applications, connections and diagnostic-point annotations.

use serde::Serialize;

use super::ast::{Expr, Stmt};
use super::diag::Span;
use super::value::{Value, ValueType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    pub fn keyword(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PortKind {
    /// Event port with the data ports sampled or published alongside it.
    Event { with: Vec<String> },
    Data { ty: ValueType, initial: Value },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortDecl {
    pub name: String,
    pub direction: Direction,
    pub kind: PortKind,
    #[serde(skip)]
    pub span: Span,
}

impl PortDecl {
    pub fn is_event(&self) -> bool {
        matches!(self.kind, PortKind::Event { .. })
    }

    pub fn data_type(&self) -> Option<ValueType> {
        match &self.kind {
            PortKind::Data { ty, .. } => Some(*ty),
            PortKind::Event { .. } => None,
        }
    }

    pub fn with(&self) -> &[String] {
        match &self.kind {
            PortKind::Event { with } => with,
            PortKind::Data { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarDecl {
    pub name: String,
    pub ty: ValueType,
    pub initial: Value,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AlgorithmBody {
    Statements(Vec<Stmt>),
    /// Resolved against the host's builtin registry at instantiation.
    Builtin(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmDecl {
    pub name: String,
    pub body: AlgorithmBody,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcAction {
    pub algorithm: Option<String>,
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcState {
    pub name: String,
    pub actions: Vec<EcAction>,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcTransition {
    pub source: String,
    pub target: String,
    /// `None` marks an unconditional (event-less) transition.
    pub trigger: Option<String>,
    pub guard: Expr,
    #[serde(skip)]
    pub span: Span,
}

/// Execution control chart. The first state is the initial state and
/// transition priority is declaration order.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Ecc {
    pub states: Vec<EcState>,
    pub transitions: Vec<EcTransition>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FbBody {
    Basic { ecc: Ecc, algorithms: Vec<AlgorithmDecl> },
    Service { binding: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FbTypeDecl {
    pub name: String,
    pub interface: Vec<PortDecl>,
    pub vars: Vec<VarDecl>,
    pub body: FbBody,
    #[serde(skip)]
    pub span: Span,
}

impl FbTypeDecl {
    pub fn port(&self, name: &str) -> Option<&PortDecl> {
        self.interface.iter().find(|p| p.name == name)
    }

    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }

    /// Type of a data port or internal variable visible to algorithms.
    pub fn variable_type(&self, name: &str) -> Option<ValueType> {
        self.port(name)
            .and_then(PortDecl::data_type)
            .or_else(|| self.var(name).map(|v| v.ty))
    }

    pub fn is_basic(&self) -> bool {
        matches!(self.body, FbBody::Basic { .. })
    }

    pub fn ecc(&self) -> Option<&Ecc> {
        match &self.body {
            FbBody::Basic { ecc, .. } => Some(ecc),
            FbBody::Service { .. } => None,
        }
    }

    pub fn algorithms(&self) -> &[AlgorithmDecl] {
        match &self.body {
            FbBody::Basic { algorithms, .. } => algorithms,
            FbBody::Service { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceDecl {
    pub name: String,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceDecl {
    pub name: String,
    pub type_name: String,
    /// Instance parameters overriding initial values of inputs or variables.
    pub params: Vec<(String, Value)>,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubAppDecl {
    pub name: String,
    pub device: String,
    pub instances: Vec<InstanceDecl>,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ConnKind {
    Event,
    Data,
}

impl ConnKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ConnKind::Event => "event",
            ConnKind::Data => "data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Endpoint {
    pub instance: String,
    pub port: String,
}

impl Endpoint {
    pub fn new(instance: &str, port: &str) -> Self {
        Endpoint { instance: instance.into(), port: port.into() }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.instance, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Connection {
    pub kind: ConnKind,
    pub from: Endpoint,
    pub to: Endpoint,
    #[serde(skip)]
    pub span: Span,
}

impl Connection {
    pub fn same_link(&self, kind: ConnKind, from: &Endpoint, to: &Endpoint) -> bool {
        self.kind == kind && &self.from == from && &self.to == to
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum DpRole {
    Mainline,
    Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticPointDecl {
    pub id: u32,
    pub pathway: String,
    pub role: DpRole,
    pub order: u32,
    /// The annotated connection. A data location implies the event
    /// connection that carries it.
    pub kind: ConnKind,
    pub from: Endpoint,
    pub to: Endpoint,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SystemDescriptor {
    pub fb_types: Vec<FbTypeDecl>,
    pub devices: Vec<DeviceDecl>,
    pub subapps: Vec<SubAppDecl>,
    pub event_connections: Vec<Connection>,
    pub data_connections: Vec<Connection>,
    pub diagnostic_points: Vec<DiagnosticPointDecl>,
}

impl SystemDescriptor {
    pub fn fb_type(&self, name: &str) -> Option<&FbTypeDecl> {
        self.fb_types.iter().find(|t| t.name == name)
    }

    pub fn instances(&self) -> impl Iterator<Item = (&SubAppDecl, &InstanceDecl)> {
        self.subapps.iter().flat_map(|s| s.instances.iter().map(move |i| (s, i)))
    }

    pub fn instance(&self, name: &str) -> Option<&InstanceDecl> {
        self.instances().map(|(_, i)| i).find(|i| i.name == name)
    }

    pub fn instance_type(&self, name: &str) -> Option<&FbTypeDecl> {
        self.instance(name).and_then(|i| self.fb_type(&i.type_name))
    }

    pub fn subapp_of(&self, instance: &str) -> Option<&SubAppDecl> {
        self.instances().find(|(_, i)| i.name == instance).map(|(s, _)| s)
    }

    pub fn diagnostic_point(&self, id: u32) -> Option<&DiagnosticPointDecl> {
        self.diagnostic_points.iter().find(|d| d.id == id)
    }

    /// The event connection carrying a diagnostic point's traffic. For a
    /// data location this is the connection between the same two instances
    /// whose source and destination events are WITH-associated with the
    /// annotated data ports.
    pub fn dp_event_connection(&self, dp: &DiagnosticPointDecl) -> Option<&Connection> {
        match dp.kind {
            ConnKind::Event => self
                .event_connections
                .iter()
                .find(|c| c.from == dp.from && c.to == dp.to),
            ConnKind::Data => {
                let src_ty = self.instance_type(&dp.from.instance)?;
                let dst_ty = self.instance_type(&dp.to.instance)?;
                self.event_connections.iter().find(|c| {
                    c.from.instance == dp.from.instance
                        && c.to.instance == dp.to.instance
                        && src_ty.port(&c.from.port).is_some_and(|p| p.with().contains(&dp.from.port))
                        && dst_ty.port(&c.to.port).is_some_and(|p| p.with().contains(&dp.to.port))
                })
            }
        }
    }
}
