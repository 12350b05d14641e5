//! Expression and statement trees for the algorithm language, with a
//! pretty-printer whose output re-parses to an equal tree.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinaryOp {
    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::Ne => 3,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => 6,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "MOD",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge | BinaryOp::Eq | BinaryOp::Ne
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinaryOp::And | BinaryOp::Or)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Lit(Value),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    /// `SEL(cond, if_false, if_true)` in source form.
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn real(x: f64) -> Expr {
        Expr::Lit(Value::Real(x))
    }

    pub fn int(x: i64) -> Expr {
        Expr::Lit(Value::Int(x))
    }

    pub fn bin(op: BinaryOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Calls `f` on every variable name referenced by the expression.
    pub fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(v) => f(v),
            Expr::Unary(_, e) => e.visit_vars(f),
            Expr::Binary(_, l, r) => {
                l.visit_vars(f);
                r.visit_vars(f);
            }
            Expr::Cond(c, a, b) => {
                c.visit_vars(f);
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    fn write_prec(&self, out: &mut String, min_prec: u8) {
        match self {
            Expr::Lit(v) => {
                // Negative literals print parenthesized so `a - -1` stays unambiguous.
                let needs = matches!(v, Value::Int(i) if *i < 0)
                    || matches!(v, Value::Real(r) if r.is_sign_negative());
                if needs {
                    let _ = write!(out, "({})", v.literal());
                } else {
                    out.push_str(&v.literal());
                }
            }
            Expr::Var(name) => out.push_str(name),
            Expr::Unary(UnaryOp::Neg, e) => {
                out.push('-');
                if matches!(**e, Expr::Lit(_)) {
                    // `-1.0` would re-parse as a negative literal.
                    out.push('(');
                    e.write_prec(out, 0);
                    out.push(')');
                } else {
                    e.write_prec(out, 7);
                }
            }
            Expr::Unary(UnaryOp::Not, e) => {
                out.push_str("NOT ");
                e.write_prec(out, 7);
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                let paren = p < min_prec;
                if paren {
                    out.push('(');
                }
                l.write_prec(out, p);
                let _ = write!(out, " {} ", op.symbol());
                // Left-associative: the right operand needs strictly tighter binding.
                r.write_prec(out, p + 1);
                if paren {
                    out.push(')');
                }
            }
            Expr::Cond(c, t, e) => {
                out.push_str("SEL(");
                c.write_prec(out, 0);
                out.push_str(", ");
                e.write_prec(out, 0);
                out.push_str(", ");
                t.write_prec(out, 0);
                out.push(')');
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_prec(&mut s, 0);
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stmt {
    Assign { target: String, value: Expr },
    If { cond: Expr, then_branch: Vec<Stmt>, else_branch: Vec<Stmt> },
}

impl Stmt {
    pub fn visit_exprs<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        match self {
            Stmt::Assign { value, .. } => f(value),
            Stmt::If { cond, then_branch, else_branch } => {
                f(cond);
                then_branch.iter().for_each(|s| s.visit_exprs(f));
                else_branch.iter().for_each(|s| s.visit_exprs(f));
            }
        }
    }
}

/// Writes statements one per line at the given indent.
pub fn print_statements(stmts: &[Stmt], indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    for s in stmts {
        match s {
            Stmt::Assign { target, value } => {
                let _ = writeln!(out, "{pad}{target} := {value};");
            }
            Stmt::If { cond, then_branch, else_branch } => {
                let _ = writeln!(out, "{pad}IF {cond} THEN");
                print_statements(then_branch, indent + 2, out);
                if !else_branch.is_empty() {
                    let _ = writeln!(out, "{pad}ELSE");
                    print_statements(else_branch, indent + 2, out);
                }
                let _ = writeln!(out, "{pad}END_IF;");
            }
        }
    }
}

pub fn statements_to_string(stmts: &[Stmt]) -> String {
    let mut s = String::new();
    print_statements(stmts, 0, &mut s);
    s
}
