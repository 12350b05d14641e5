//! Static typing of expressions and statements against an FB's variables.

use super::ast::{BinaryOp, Expr, Stmt, UnaryOp};
use super::value::ValueType;

#[derive(Debug, Clone, PartialEq)]
pub enum TypeIssue {
    Unknown(String),
    Mismatch(String),
}

/// Infers the type of `expr`, looking variables up through `lookup`.
pub fn type_of(
    expr: &Expr,
    lookup: &dyn Fn(&str) -> Option<ValueType>,
) -> Result<ValueType, TypeIssue> {
    use ValueType::*;
    match expr {
        Expr::Lit(v) => Ok(v.value_type()),
        Expr::Var(name) => lookup(name).ok_or_else(|| TypeIssue::Unknown(name.clone())),
        Expr::Unary(UnaryOp::Neg, e) => {
            let t = type_of(e, lookup)?;
            if t.is_numeric() {
                Ok(t)
            } else {
                Err(TypeIssue::Mismatch(format!("cannot negate {t}")))
            }
        }
        Expr::Unary(UnaryOp::Not, e) => match type_of(e, lookup)? {
            Bool => Ok(Bool),
            t => Err(TypeIssue::Mismatch(format!("NOT needs bool, found {t}"))),
        },
        Expr::Binary(op, l, r) => {
            let (lt, rt) = (type_of(l, lookup)?, type_of(r, lookup)?);
            binary_type(*op, lt, rt)
                .ok_or_else(|| TypeIssue::Mismatch(format!("`{}` not defined for {lt} and {rt}", op.symbol())))
        }
        Expr::Cond(c, a, b) => {
            let ct = type_of(c, lookup)?;
            if ct != Bool {
                return Err(TypeIssue::Mismatch(format!("SEL selector must be bool, found {ct}")));
            }
            let (at, bt) = (type_of(a, lookup)?, type_of(b, lookup)?);
            if at == bt {
                Ok(at)
            } else if at.is_numeric() && bt.is_numeric() {
                Ok(Real)
            } else {
                Err(TypeIssue::Mismatch(format!("SEL branches differ: {at} and {bt}")))
            }
        }
    }
}

/// Result type of a binary operator, or `None` when undefined.
pub fn binary_type(op: BinaryOp, lt: ValueType, rt: ValueType) -> Option<ValueType> {
    use ValueType::*;
    let numeric = lt.is_numeric() && rt.is_numeric();
    match op {
        BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => {
            if !numeric {
                None
            } else if lt == Real || rt == Real {
                Some(Real)
            } else {
                Some(Int)
            }
        }
        BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
            (numeric || (lt == String && rt == String)).then_some(Bool)
        }
        BinaryOp::Eq | BinaryOp::Ne => (numeric || lt == rt).then_some(Bool),
        BinaryOp::And | BinaryOp::Or => (lt == Bool && rt == Bool).then_some(Bool),
    }
}

/// Checks every statement, returning all issues found.
pub fn check_statements(stmts: &[Stmt], lookup: &dyn Fn(&str) -> Option<ValueType>) -> Vec<TypeIssue> {
    let mut issues = Vec::new();
    for s in stmts {
        match s {
            Stmt::Assign { target, value } => {
                let tt = lookup(target);
                match (tt, type_of(value, lookup)) {
                    (None, _) => issues.push(TypeIssue::Unknown(target.clone())),
                    (_, Err(e)) => issues.push(e),
                    (Some(tt), Ok(vt)) if !tt.accepts(vt) => issues.push(TypeIssue::Mismatch(format!(
                        "cannot assign {vt} to `{target}` of type {tt}"
                    ))),
                    _ => {}
                }
            }
            Stmt::If { cond, then_branch, else_branch } => {
                match type_of(cond, lookup) {
                    Ok(ValueType::Bool) => {}
                    Ok(t) => issues.push(TypeIssue::Mismatch(format!("IF condition must be bool, found {t}"))),
                    Err(e) => issues.push(e),
                }
                issues.extend(check_statements(then_branch, lookup));
                issues.extend(check_statements(else_branch, lookup));
            }
        }
    }
    issues
}
