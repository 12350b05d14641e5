//! Semantic checks over a parsed descriptor.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::ast::Expr;
use super::diag::{Diagnostic, DiagnosticKind as K, Span};
use super::system::*;
use super::typecheck::{check_statements, type_of, TypeIssue};
use super::value::ValueType;

/// Returns every invariant violation in the descriptor; empty means valid.
pub fn validate(sys: &SystemDescriptor) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut type_names = HashSet::new();
    for t in &sys.fb_types {
        if !type_names.insert(t.name.as_str()) {
            out.push(Diagnostic::new(K::DuplicateName, t.span, format!("duplicate fbtype `{}`", t.name)));
        }
        check_type(t, &mut out);
    }
    check_network(sys, &mut out);
    check_dps(sys, &mut out);
    out
}

fn issue(kind_default: K, span: Span, ctx: &str, i: TypeIssue) -> Diagnostic {
    match i {
        TypeIssue::Unknown(n) => Diagnostic::new(K::UnknownIdentifier, span, format!("{ctx}: unknown identifier `{n}`")),
        TypeIssue::Mismatch(m) => Diagnostic::new(kind_default, span, format!("{ctx}: {m}")),
    }
}

fn check_type(t: &FbTypeDecl, out: &mut Vec<Diagnostic>) {
    let mut names = HashSet::new();
    for (name, span) in t
        .interface
        .iter()
        .map(|p| (&p.name, p.span))
        .chain(t.vars.iter().map(|v| (&v.name, v.span)))
    {
        if !names.insert(name.as_str()) {
            out.push(Diagnostic::new(
                K::DuplicateName,
                span,
                format!("`{name}` declared twice in `{}`", t.name),
            ));
        }
    }
    for p in &t.interface {
        for w in p.with() {
            match t.port(w) {
                None => out.push(Diagnostic::new(
                    K::UnknownIdentifier,
                    p.span,
                    format!("event `{}` is associated with undeclared port `{w}`", p.name),
                )),
                Some(d) if d.is_event() || d.direction != p.direction => out.push(Diagnostic::new(
                    K::TypeMismatch,
                    p.span,
                    format!(
                        "event `{}` may only be associated with {} data ports; `{w}` is not one",
                        p.name,
                        p.direction.keyword()
                    ),
                )),
                _ => {}
            }
        }
    }

    let FbBody::Basic { ecc, algorithms } = &t.body else { return };
    let lookup = |n: &str| t.variable_type(n);

    let mut alg_names = HashSet::new();
    for a in algorithms {
        if !alg_names.insert(a.name.as_str()) {
            out.push(Diagnostic::new(K::DuplicateName, a.span, format!("duplicate algorithm `{}`", a.name)));
        }
        if let AlgorithmBody::Statements(stmts) = &a.body {
            for i in check_statements(stmts, &lookup) {
                out.push(issue(K::TypeMismatch, a.span, &format!("algorithm `{}`", a.name), i));
            }
        }
    }

    if ecc.states.is_empty() {
        out.push(Diagnostic::new(K::BadEcc, t.span, format!("basic type `{}` has no ECC states", t.name)));
    }
    let mut state_names = HashSet::new();
    for s in &ecc.states {
        if !state_names.insert(s.name.as_str()) {
            out.push(Diagnostic::new(K::DuplicateName, s.span, format!("duplicate state `{}`", s.name)));
        }
        for a in &s.actions {
            if let Some(alg) = &a.algorithm {
                if !alg_names.contains(alg.as_str()) {
                    out.push(Diagnostic::new(
                        K::BadEcc,
                        s.span,
                        format!("state `{}` runs undeclared algorithm `{alg}`", s.name),
                    ));
                }
            }
            if let Some(ev) = &a.output {
                let ok = t.port(ev).is_some_and(|p| p.is_event() && p.direction == Direction::Out);
                if !ok {
                    out.push(Diagnostic::new(
                        K::BadEcc,
                        s.span,
                        format!("state `{}` fires `{ev}`, which is not an output event", s.name),
                    ));
                }
            }
        }
    }
    for tr in &ecc.transitions {
        for st in [&tr.source, &tr.target] {
            if !state_names.contains(st.as_str()) {
                out.push(Diagnostic::new(K::BadEcc, tr.span, format!("transition names undeclared state `{st}`")));
            }
        }
        if let Some(trig) = &tr.trigger {
            let ok = t.port(trig).is_some_and(|p| p.is_event() && p.direction == Direction::In);
            if !ok {
                out.push(Diagnostic::new(
                    K::BadEcc,
                    tr.span,
                    format!("transition trigger `{trig}` is not an input event of `{}`", t.name),
                ));
            }
        }
        match type_of(&tr.guard, &lookup) {
            Ok(ValueType::Bool) => {}
            Ok(other) => out.push(Diagnostic::new(
                K::BadEcc,
                tr.span,
                format!("guard `{}` has type {other}, expected bool", tr.guard),
            )),
            Err(i) => out.push(issue(K::BadEcc, tr.span, "guard", i)),
        }
    }
}

fn check_network(sys: &SystemDescriptor, out: &mut Vec<Diagnostic>) {
    let mut devices = HashSet::new();
    for d in &sys.devices {
        if !devices.insert(d.name.as_str()) {
            out.push(Diagnostic::new(K::DuplicateName, d.span, format!("duplicate device `{}`", d.name)));
        }
    }
    let mut subapps = HashSet::new();
    let mut instances: HashMap<&str, &FbTypeDecl> = HashMap::new();
    let mut seen_instances = HashSet::new();
    for s in &sys.subapps {
        if !subapps.insert(s.name.as_str()) {
            out.push(Diagnostic::new(K::DuplicateName, s.span, format!("duplicate subapp `{}`", s.name)));
        }
        if !devices.contains(s.device.as_str()) {
            out.push(Diagnostic::new(
                K::UnknownIdentifier,
                s.span,
                format!("subapp `{}` placed on undeclared device `{}`", s.name, s.device),
            ));
        }
        for i in &s.instances {
            if !seen_instances.insert(i.name.as_str()) {
                out.push(Diagnostic::new(K::DuplicateName, i.span, format!("duplicate instance `{}`", i.name)));
                continue;
            }
            let Some(ty) = sys.fb_type(&i.type_name) else {
                out.push(Diagnostic::new(
                    K::UnknownType,
                    i.span,
                    format!("instance `{}` has unknown type `{}`", i.name, i.type_name),
                ));
                continue;
            };
            instances.insert(i.name.as_str(), ty);
            for (p, v) in &i.params {
                let slot = ty
                    .port(p)
                    .filter(|d| d.direction == Direction::In)
                    .and_then(PortDecl::data_type)
                    .or_else(|| ty.var(p).map(|v| v.ty));
                match slot {
                    None => out.push(Diagnostic::new(
                        K::UnknownIdentifier,
                        i.span,
                        format!("parameter `{p}` is not an input or variable of `{}`", ty.name),
                    )),
                    Some(st) if !st.accepts(v.value_type()) => out.push(Diagnostic::new(
                        K::TypeMismatch,
                        i.span,
                        format!("parameter `{p}` expects {st}, got {}", v.value_type()),
                    )),
                    _ => {}
                }
            }
        }
    }

    let resolve = |ep: &Endpoint| -> Option<&PortDecl> { instances.get(ep.instance.as_str())?.port(&ep.port) };

    for c in &sys.event_connections {
        let (Some(src), Some(dst)) = (resolve(&c.from), resolve(&c.to)) else {
            out.push(Diagnostic::new(
                K::DanglingConnection,
                c.span,
                format!("event connection {} -> {} names a missing endpoint", c.from, c.to),
            ));
            continue;
        };
        if !src.is_event() || !dst.is_event() {
            out.push(Diagnostic::new(
                K::TypeMismatch,
                c.span,
                format!("event connection {} -> {} joins non-event ports", c.from, c.to),
            ));
        } else if src.direction != Direction::Out || dst.direction != Direction::In {
            out.push(Diagnostic::new(
                K::TypeMismatch,
                c.span,
                format!("event connection {} -> {} must run from an output to an input", c.from, c.to),
            ));
        }
    }

    let mut drivers: HashMap<&Endpoint, usize> = HashMap::new();
    for c in &sys.data_connections {
        let (Some(src), Some(dst)) = (resolve(&c.from), resolve(&c.to)) else {
            out.push(Diagnostic::new(
                K::DanglingConnection,
                c.span,
                format!("data connection {} -> {} names a missing endpoint", c.from, c.to),
            ));
            continue;
        };
        match (src.data_type(), dst.data_type()) {
            (Some(st), Some(dt)) => {
                if src.direction != Direction::Out || dst.direction != Direction::In {
                    out.push(Diagnostic::new(
                        K::TypeMismatch,
                        c.span,
                        format!("data connection {} -> {} must run from an output to an input", c.from, c.to),
                    ));
                } else if st != dt {
                    out.push(Diagnostic::new(
                        K::TypeMismatch,
                        c.span,
                        format!("data connection {} ({st}) -> {} ({dt})", c.from, c.to),
                    ));
                }
            }
            _ => out.push(Diagnostic::new(
                K::TypeMismatch,
                c.span,
                format!("data connection {} -> {} joins non-data ports", c.from, c.to),
            )),
        }
        let n = drivers.entry(&c.to).or_default();
        *n += 1;
        if *n == 2 {
            out.push(Diagnostic::new(
                K::MultipleDrivers,
                c.span,
                format!("data input {} has more than one incoming connection", c.to),
            ));
        }
    }
}

fn check_dps(sys: &SystemDescriptor, out: &mut Vec<Diagnostic>) {
    let mut ids = HashSet::new();
    let mut orders: BTreeMap<(&str, u32), usize> = BTreeMap::new();
    for dp in &sys.diagnostic_points {
        if !ids.insert(dp.id) {
            out.push(Diagnostic::new(K::DuplicateName, dp.span, format!("duplicate diagnostic point {}", dp.id)));
        }
        let conns = match dp.kind {
            ConnKind::Event => &sys.event_connections,
            ConnKind::Data => &sys.data_connections,
        };
        if !conns.iter().any(|c| c.same_link(dp.kind, &dp.from, &dp.to)) {
            out.push(Diagnostic::new(
                K::BadDiagnosticPoint,
                dp.span,
                format!("DP {} refers to no {} connection {} -> {}", dp.id, dp.kind.keyword(), dp.from, dp.to),
            ));
        } else if sys.dp_event_connection(dp).is_none() {
            out.push(Diagnostic::new(
                K::BadDiagnosticPoint,
                dp.span,
                format!("DP {}: no event connection carries {} -> {}", dp.id, dp.from, dp.to),
            ));
        }
        if dp.role == DpRole::Mainline {
            let n = orders.entry((dp.pathway.as_str(), dp.order)).or_default();
            *n += 1;
            if *n == 2 {
                out.push(Diagnostic::new(
                    K::BadDiagnosticPoint,
                    dp.span,
                    format!("pathway `{}` repeats mainline order {}", dp.pathway, dp.order),
                ));
            }
        }
    }
}

/// True when the guard is the literal `TRUE`.
pub fn is_trivial_guard(e: &Expr) -> bool {
    matches!(e, Expr::Lit(super::value::Value::Bool(true)))
}
