//! Independent expression generator, renderer and evaluator used as an
//! oracle for the interpreter.

use std::collections::HashMap;

use fbdiag::model::{eval_expression, parse_expression, EvalError, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Oracle values: the generator tracks static types, so no type errors arise.
#[derive(Debug, Clone, Copy)]
pub enum V {
    I(i64),
    R(f64),
    B(bool),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ty {
    I,
    R,
    B,
}

/// Independent expression tree with its own renderer and evaluator.
#[derive(Debug, Clone)]
pub enum G {
    Int(i64),
    Real(f64),
    Bool(bool),
    Var(&'static str),
    Neg(Box<G>),
    Not(Box<G>),
    Arith(char, Box<G>, Box<G>),
    Cmp(&'static str, Box<G>, Box<G>),
    Logic(&'static str, Box<G>, Box<G>),
    Sel(Box<G>, Box<G>, Box<G>),
}

pub const VARS: [(&str, Ty); 4] = [("x", Ty::I), ("n", Ty::I), ("y", Ty::R), ("b", Ty::B)];

pub fn env() -> HashMap<String, Value> {
    HashMap::from([
        ("x".to_string(), Value::Int(7)),
        ("n".to_string(), Value::Int(-3)),
        ("y".to_string(), Value::Real(2.5)),
        ("b".to_string(), Value::Bool(true)),
    ])
}

pub fn oracle_env(name: &str) -> V {
    match name {
        "x" => V::I(7),
        "n" => V::I(-3),
        "y" => V::R(2.5),
        _ => V::B(true),
    }
}

pub fn gen(rng: &mut ChaCha8Rng, ty: Ty, depth: u32) -> G {
    let leaf = depth == 0 || rng.gen_bool(0.25);
    if leaf {
        let vars: Vec<_> = VARS.iter().filter(|v| v.1 == ty).collect();
        if rng.gen_bool(0.3) {
            return G::Var(vars[rng.gen_range(0..vars.len())].0);
        }
        return match ty {
            Ty::I => G::Int(rng.gen_range(0..20)),
            Ty::R => G::Real(rng.gen_range(0..400) as f64 / 4.0),
            Ty::B => G::Bool(rng.gen()),
        };
    }
    let d = depth - 1;
    match ty {
        Ty::I => match rng.gen_range(0..3) {
            0 => G::Neg(Box::new(gen(rng, Ty::I, d))),
            1 => {
                let op = ['+', '-', '*', '/', '%'][rng.gen_range(0..5)];
                G::Arith(op, Box::new(gen(rng, Ty::I, d)), Box::new(gen(rng, Ty::I, d)))
            }
            _ => G::Sel(Box::new(gen(rng, Ty::B, d)), Box::new(gen(rng, Ty::I, d)), Box::new(gen(rng, Ty::I, d))),
        },
        Ty::R => match rng.gen_range(0..3) {
            0 => G::Neg(Box::new(gen(rng, Ty::R, d))),
            1 => {
                let op = ['+', '-', '*', '/', '%'][rng.gen_range(0..5)];
                // One side may be INT: mixed arithmetic widens to REAL.
                let (lt, rt) = match rng.gen_range(0..3) {
                    0 => (Ty::R, Ty::I),
                    1 => (Ty::I, Ty::R),
                    _ => (Ty::R, Ty::R),
                };
                G::Arith(op, Box::new(gen(rng, lt, d)), Box::new(gen(rng, rt, d)))
            }
            _ => G::Sel(Box::new(gen(rng, Ty::B, d)), Box::new(gen(rng, Ty::R, d)), Box::new(gen(rng, Ty::R, d))),
        },
        Ty::B => match rng.gen_range(0..4) {
            0 => G::Not(Box::new(gen(rng, Ty::B, d))),
            1 => {
                let op = ["<", "<=", ">", ">=", "=", "<>"][rng.gen_range(0..6)];
                let lt = if rng.gen() { Ty::I } else { Ty::R };
                let rt = if rng.gen() { Ty::I } else { Ty::R };
                G::Cmp(op, Box::new(gen(rng, lt, d)), Box::new(gen(rng, rt, d)))
            }
            2 => {
                let op = ["AND", "OR", "=", "<>"][rng.gen_range(0..4)];
                G::Logic(op, Box::new(gen(rng, Ty::B, d)), Box::new(gen(rng, Ty::B, d)))
            }
            _ => G::Sel(Box::new(gen(rng, Ty::B, d)), Box::new(gen(rng, Ty::B, d)), Box::new(gen(rng, Ty::B, d))),
        },
    }
}

/// Fully parenthesized source text.
pub fn render(g: &G) -> String {
    match g {
        G::Int(i) => i.to_string(),
        G::Real(r) => format!("{r:.2}"),
        G::Bool(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
        G::Var(v) => v.to_string(),
        G::Neg(e) => format!("(-{})", render(e)),
        G::Not(e) => format!("(NOT {})", render(e)),
        G::Arith(op, l, r) => {
            let sym = if *op == '%' { "MOD".to_string() } else { op.to_string() };
            format!("({} {sym} {})", render(l), render(r))
        }
        G::Cmp(op, l, r) | G::Logic(op, l, r) => format!("({} {op} {})", render(l), render(r)),
        G::Sel(c, f, t) => format!("SEL({}, {}, {})", render(c), render(f), render(t)),
    }
}

pub fn real(v: V) -> f64 {
    match v {
        V::I(i) => i as f64,
        V::R(r) => r,
        V::B(_) => unreachable!("boolean used as number"),
    }
}

/// None means division by zero.
pub fn eval(g: &G) -> Option<V> {
    Some(match g {
        G::Int(i) => V::I(*i),
        G::Real(r) => V::R(*r),
        G::Bool(b) => V::B(*b),
        G::Var(v) => oracle_env(v),
        G::Neg(e) => match eval(e)? {
            V::I(i) => V::I(i.wrapping_neg()),
            V::R(r) => V::R(-r),
            V::B(_) => unreachable!(),
        },
        G::Not(e) => match eval(e)? {
            V::B(b) => V::B(!b),
            _ => unreachable!(),
        },
        G::Arith(op, l, r) => match (eval(l)?, eval(r)?) {
            (V::I(a), V::I(b)) => V::I(match op {
                '+' => a.wrapping_add(b),
                '-' => a.wrapping_sub(b),
                '*' => a.wrapping_mul(b),
                '/' if b == 0 => return None,
                '/' => a.wrapping_div(b),
                _ if b == 0 => return None,
                _ => a.wrapping_rem(b),
            }),
            (a, b) => {
                let (a, b) = (real(a), real(b));
                V::R(match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    _ if b == 0.0 => return None,
                    '/' => a / b,
                    _ => a % b,
                })
            }
        },
        G::Cmp(op, l, r) => {
            let (a, b) = (eval(l)?, eval(r)?);
            let (x, y) = (real(a), real(b));
            let ints = match (a, b) {
                (V::I(p), V::I(q)) => Some((p, q)),
                _ => None,
            };
            V::B(match (*op, ints) {
                ("<", Some((p, q))) => p < q,
                ("<=", Some((p, q))) => p <= q,
                (">", Some((p, q))) => p > q,
                (">=", Some((p, q))) => p >= q,
                ("=", Some((p, q))) => p == q,
                ("<>", Some((p, q))) => p != q,
                ("<", None) => x < y,
                ("<=", None) => x <= y,
                (">", None) => x > y,
                (">=", None) => x >= y,
                ("=", None) => x == y,
                _ => x != y,
            })
        }
        G::Logic(op, l, r) => match (eval(l)?, eval(r)?) {
            (V::B(a), V::B(b)) => V::B(match *op {
                "AND" => a && b,
                "OR" => a || b,
                "=" => a == b,
                _ => a != b,
            }),
            _ => unreachable!(),
        },
        G::Sel(c, f, t) => match eval(c)? {
            V::B(true) => eval(t)?,
            V::B(false) => eval(f)?,
            _ => unreachable!(),
        },
    })
}

pub fn agrees(expected: Option<V>, got: &Result<Value, EvalError>) -> bool {
    match (expected, got) {
        (None, Err(EvalError::DivisionByZero)) => true,
        (Some(V::I(a)), Ok(Value::Int(b))) => a == *b,
        (Some(V::B(a)), Ok(Value::Bool(b))) => a == *b,
        (Some(V::R(a)), Ok(Value::Real(b))) => a == *b || (a.is_nan() && b.is_nan()),
        _ => false,
    }
}

/// Generates `count` expressions from fixed seeds and checks each against
/// the oracle, returning the first disagreement.
pub fn check_expressions(count: u64) -> Result<u64, String> {
    let env = env();
    for seed in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ty = [Ty::I, Ty::R, Ty::B][seed as usize % 3];
        let g = gen(&mut rng, ty, 5);
        let src = render(&g);
        let expr = parse_expression(&src).map_err(|e| format!("{src}: {e}"))?;
        let got = eval_expression(&expr, &env);
        let expected = eval(&g);
        if !agrees(expected, &got) {
            return Err(format!("seed {seed}: {src}: oracle {expected:?}, interpreter {got:?}"));
        }
    }
    Ok(count)
}
