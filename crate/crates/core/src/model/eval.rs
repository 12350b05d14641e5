//! Evaluation of expressions and statement lists.
//!
//! Both operands of a binary operator are always evaluated; `SEL` evaluates
//! only the selected branch. INT arithmetic wraps on overflow.

use std::collections::HashMap;

use thiserror::Error;

use super::ast::{BinaryOp, Expr, Stmt, UnaryOp};
use super::value::Value;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("type error: {0}")]
    TypeError(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
}

/// Read access to a variable store.
pub trait Env {
    fn get(&self, name: &str) -> Option<Value>;
}

/// Read-write access; `set` coerces to the slot's declared type.
pub trait EnvMut: Env {
    fn set(&mut self, name: &str, value: Value) -> Result<(), EvalError>;
}

impl Env for HashMap<String, Value> {
    fn get(&self, name: &str) -> Option<Value> {
        HashMap::get(self, name).cloned()
    }
}

impl EnvMut for HashMap<String, Value> {
    fn set(&mut self, name: &str, value: Value) -> Result<(), EvalError> {
        let v = match HashMap::get(self, name) {
            Some(old) => value
                .coerce(old.value_type())
                .ok_or_else(|| EvalError::TypeError(format!("cannot store into `{name}`")))?,
            None => value,
        };
        self.insert(name.to_string(), v);
        Ok(())
    }
}

pub fn eval_expression(expr: &Expr, env: &dyn Env) -> Result<Value, EvalError> {
    match expr {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Var(n) => env.get(n).ok_or_else(|| EvalError::Unbound(n.clone())),
        Expr::Unary(op, e) => {
            let v = eval_expression(e, env)?;
            match (op, v) {
                (UnaryOp::Neg, Value::Int(i)) => Ok(Value::Int(i.wrapping_neg())),
                (UnaryOp::Neg, Value::Real(r)) => Ok(Value::Real(-r)),
                (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                (op, v) => Err(EvalError::TypeError(format!("{op:?} applied to {}", v.value_type()))),
            }
        }
        Expr::Binary(op, l, r) => {
            let lv = eval_expression(l, env)?;
            let rv = eval_expression(r, env)?;
            apply_binary(*op, &lv, &rv)
        }
        Expr::Cond(c, t, e) => match eval_expression(c, env)? {
            Value::Bool(true) => promote_branch(eval_expression(t, env)?, e, env),
            Value::Bool(false) => promote_branch(eval_expression(e, env)?, t, env),
            v => Err(EvalError::TypeError(format!("SEL selector is {}", v.value_type()))),
        },
    }
}

// SEL over mixed INT/REAL branches yields REAL whichever branch is taken.
fn promote_branch(v: Value, other: &Expr, env: &dyn Env) -> Result<Value, EvalError> {
    if let Value::Int(i) = v {
        if static_is_real(other, env) {
            return Ok(Value::Real(i as f64));
        }
    }
    Ok(v)
}

fn static_is_real(e: &Expr, env: &dyn Env) -> bool {
    match e {
        Expr::Lit(v) => matches!(v, Value::Real(_)),
        Expr::Var(n) => matches!(env.get(n), Some(Value::Real(_))),
        Expr::Unary(_, e) => static_is_real(e, env),
        Expr::Binary(op, l, r) => {
            !op.is_comparison() && !op.is_logical() && (static_is_real(l, env) || static_is_real(r, env))
        }
        Expr::Cond(_, a, b) => static_is_real(a, env) || static_is_real(b, env),
    }
}

pub fn apply_binary(op: BinaryOp, l: &Value, r: &Value) -> Result<Value, EvalError> {
    use Value::*;
    let mismatch = || {
        EvalError::TypeError(format!("`{}` applied to {} and {}", op.symbol(), l.value_type(), r.value_type()))
    };
    match op {
        BinaryOp::And | BinaryOp::Or => match (l, r) {
            (Bool(a), Bool(b)) => Ok(Bool(if op == BinaryOp::And { *a && *b } else { *a || *b })),
            _ => Err(mismatch()),
        },
        BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => match (l, r) {
            (Int(a), Int(b)) => {
                let (a, b) = (*a, *b);
                Ok(Int(match op {
                    BinaryOp::Add => a.wrapping_add(b),
                    BinaryOp::Sub => a.wrapping_sub(b),
                    BinaryOp::Mul => a.wrapping_mul(b),
                    BinaryOp::Div if b == 0 => return Err(EvalError::DivisionByZero),
                    BinaryOp::Div => a.wrapping_div(b),
                    BinaryOp::Mod if b == 0 => return Err(EvalError::DivisionByZero),
                    _ => a.wrapping_rem(b),
                }))
            }
            _ => {
                let (a, b) = (l.as_f64().ok_or_else(mismatch)?, r.as_f64().ok_or_else(mismatch)?);
                Ok(Real(match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div if b == 0.0 => return Err(EvalError::DivisionByZero),
                    BinaryOp::Div => a / b,
                    BinaryOp::Mod if b == 0.0 => return Err(EvalError::DivisionByZero),
                    _ => a % b,
                }))
            }
        },
        _ => {
            let ord = match (l, r) {
                (Int(a), Int(b)) => a.partial_cmp(b),
                (Str(a), Str(b)) => a.partial_cmp(b),
                (Bool(a), Bool(b)) if matches!(op, BinaryOp::Eq | BinaryOp::Ne) => a.partial_cmp(b),
                _ => match (l.as_f64(), r.as_f64()) {
                    (Some(a), Some(b)) => a.partial_cmp(&b),
                    _ => return Err(mismatch()),
                },
            };
            let Some(ord) = ord else {
                // NaN compares unequal to everything.
                return Ok(Bool(op == BinaryOp::Ne));
            };
            use std::cmp::Ordering::*;
            Ok(Bool(match op {
                BinaryOp::Lt => ord == Less,
                BinaryOp::Le => ord != Greater,
                BinaryOp::Gt => ord == Greater,
                BinaryOp::Ge => ord != Less,
                BinaryOp::Eq => ord == Equal,
                _ => ord != Equal,
            }))
        }
    }
}

pub fn exec_statements(stmts: &[Stmt], env: &mut dyn EnvMut) -> Result<(), EvalError> {
    for s in stmts {
        match s {
            Stmt::Assign { target, value } => {
                let v = eval_expression(value, &*env)?;
                env.set(target, v)?;
            }
            Stmt::If { cond, then_branch, else_branch } => match eval_expression(cond, &*env)? {
                Value::Bool(true) => exec_statements(then_branch, env)?,
                Value::Bool(false) => exec_statements(else_branch, env)?,
                v => return Err(EvalError::TypeError(format!("IF condition is {}", v.value_type()))),
            },
        }
    }
    Ok(())
}
