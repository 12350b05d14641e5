//! Function-block system model: values, descriptor types, the algorithm
//! language, and the parsers, printer and validator that operate on them.

pub mod ast;
pub mod diag;
pub mod eval;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod system;
pub mod typecheck;
pub mod validate;
pub mod value;

pub use ast::{print_statements, BinaryOp, Expr, Stmt, UnaryOp};
pub use diag::{Diagnostic, DiagnosticKind, Diagnostics, Pos, Span};
pub use eval::{eval_expression, exec_statements, Env, EnvMut, EvalError};
pub use parser::{parse_algorithm, parse_document, parse_expression, parse_system};
pub use printer::print_system;
pub use system::*;
pub use validate::validate;
pub use value::{Value, ValueType};
