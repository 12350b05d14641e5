use std::fmt;

use serde::Serialize;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Source location attached to descriptor elements. Locations never take part
/// in equality, so a printed-and-reparsed descriptor compares equal.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Span(pub Option<Pos>);

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl From<Pos> for Span {
    fn from(p: Pos) -> Self {
        Span(Some(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum DiagnosticKind {
    Syntax,
    UnknownType,
    UnknownIdentifier,
    DanglingConnection,
    TypeMismatch,
    DuplicateName,
    MultipleDrivers,
    BadEcc,
    BadDiagnosticPoint,
    BadValue,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiagnosticKind::Syntax => "syntax error",
            DiagnosticKind::UnknownType => "unknown type",
            DiagnosticKind::UnknownIdentifier => "unknown identifier",
            DiagnosticKind::DanglingConnection => "dangling connection",
            DiagnosticKind::TypeMismatch => "type mismatch",
            DiagnosticKind::DuplicateName => "duplicate name",
            DiagnosticKind::MultipleDrivers => "multiple drivers",
            DiagnosticKind::BadEcc => "bad ECC",
            DiagnosticKind::BadDiagnosticPoint => "bad diagnostic point",
            DiagnosticKind::BadValue => "bad value",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub pos: Option<Pos>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, pos: impl Into<Span>, message: impl Into<String>) -> Self {
        Diagnostic { kind, pos: pos.into().0, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pos {
            Some(p) => write!(f, "{p}: {}: {}", self.kind, self.message),
            None => write!(f, "{}: {}", self.kind, self.message),
        }
    }
}

impl std::error::Error for Diagnostic {}

/// A non-empty list of diagnostics, returned when a document fails to parse
/// or validate.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn has(&self, kind: DiagnosticKind) -> bool {
        self.0.iter().any(|d| d.kind == kind)
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}
