//! Canonical text form of a descriptor. `parse_document(print(d)) == d`.

use std::fmt::Write as _;

use super::ast::{print_statements, Expr};
use super::system::*;
use super::value::Value;

pub fn print_system(sys: &SystemDescriptor) -> String {
    let mut out = String::new();
    for t in &sys.fb_types {
        print_fbtype(t, &mut out);
        out.push('\n');
    }
    for d in &sys.devices {
        let _ = writeln!(out, "device {}", d.name);
    }
    if !sys.devices.is_empty() {
        out.push('\n');
    }
    for s in &sys.subapps {
        let _ = writeln!(out, "subapp {} on {}", s.name, s.device);
        for i in &s.instances {
            let _ = write!(out, "  instance {} : {}", i.name, i.type_name);
            if !i.params.is_empty() {
                let ps: Vec<String> =
                    i.params.iter().map(|(n, v)| format!("{n} := {}", v.literal())).collect();
                let _ = write!(out, " ({})", ps.join(", "));
            }
            out.push('\n');
        }
        out.push_str("end_subapp\n\n");
    }
    for c in sys.event_connections.iter().chain(&sys.data_connections) {
        let _ = writeln!(out, "connect {} {} -> {}", c.kind.keyword(), c.from, c.to);
    }
    if !sys.diagnostic_points.is_empty() {
        out.push('\n');
    }
    for dp in &sys.diagnostic_points {
        let role = match dp.role {
            DpRole::Mainline => "mainline",
            DpRole::Branch => "branch",
        };
        let _ = writeln!(
            out,
            "dp {} pathway {} {} order {} on {} {} -> {}",
            dp.id,
            dp.pathway,
            role,
            dp.order,
            dp.kind.keyword(),
            dp.from,
            dp.to
        );
    }
    out
}

fn print_fbtype(t: &FbTypeDecl, out: &mut String) {
    match &t.body {
        FbBody::Basic { .. } => {
            let _ = writeln!(out, "fbtype {} basic", t.name);
        }
        FbBody::Service { binding } => {
            let _ = writeln!(out, "fbtype {} service builtin {}", t.name, binding);
        }
    }
    for p in &t.interface {
        match &p.kind {
            PortKind::Event { with } => {
                let _ = write!(out, "  event {} {}", p.direction.keyword(), p.name);
                if !with.is_empty() {
                    let _ = write!(out, " with {}", with.join(", "));
                }
                out.push('\n');
            }
            PortKind::Data { ty, initial } => {
                let _ = writeln!(
                    out,
                    "  data {} {} {} = {}",
                    p.direction.keyword(),
                    p.name,
                    ty,
                    initial.literal()
                );
            }
        }
    }
    for v in &t.vars {
        let _ = writeln!(out, "  var {} {} = {}", v.name, v.ty, v.initial.literal());
    }
    if let FbBody::Basic { ecc, algorithms } = &t.body {
        for a in algorithms {
            match &a.body {
                AlgorithmBody::Builtin(host) => {
                    let _ = writeln!(out, "  algorithm {} builtin {}", a.name, host);
                }
                AlgorithmBody::Statements(stmts) => {
                    let _ = writeln!(out, "  algorithm {}", a.name);
                    print_statements(stmts, 4, out);
                    out.push_str("  end_algorithm\n");
                }
            }
        }
        for s in &ecc.states {
            let _ = writeln!(out, "  state {}", s.name);
            for a in &s.actions {
                out.push_str("    action");
                if let Some(alg) = &a.algorithm {
                    let _ = write!(out, " {alg}");
                }
                if let Some(ev) = &a.output {
                    let _ = write!(out, " -> {ev}");
                }
                out.push('\n');
            }
        }
        for tr in &ecc.transitions {
            let _ = write!(out, "  transition {} -> {}", tr.source, tr.target);
            if let Some(trig) = &tr.trigger {
                let _ = write!(out, " on {trig}");
            }
            if tr.guard != Expr::Lit(Value::Bool(true)) {
                let _ = write!(out, " when {}", tr.guard);
            }
            out.push('\n');
        }
    }
    out.push_str("end_fbtype\n");
}
