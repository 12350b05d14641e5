//! Typed port and variable values.

use std::fmt;

use serde::{Deserialize, Serialize};

/// The value kinds a port or variable may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ValueType {
    Bool,
    Int,
    Real,
    String,
}

impl ValueType {
    pub fn keyword(self) -> &'static str {
        match self {
            ValueType::Bool => "bool",
            ValueType::Int => "int",
            ValueType::Real => "real",
            ValueType::String => "string",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bool" => Some(ValueType::Bool),
            "int" => Some(ValueType::Int),
            "real" => Some(ValueType::Real),
            "string" => Some(ValueType::String),
            _ => None,
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ValueType::Int | ValueType::Real)
    }

    /// Whether a value of type `from` may be stored in a slot of this type.
    /// INT widens to REAL; nothing else converts.
    pub fn accepts(self, from: ValueType) -> bool {
        self == from || (self == ValueType::Real && from == ValueType::Int)
    }

    pub fn default_value(self) -> Value {
        match self {
            ValueType::Bool => Value::Bool(false),
            ValueType::Int => Value::Int(0),
            ValueType::Real => Value::Real(0.0),
            ValueType::String => Value::Str(String::new()),
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Bool(_) => ValueType::Bool,
            Value::Int(_) => ValueType::Int,
            Value::Real(_) => ValueType::Real,
            Value::Str(_) => ValueType::String,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Real(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    /// Converts to the given slot type, widening INT to REAL when needed.
    pub fn coerce(self, ty: ValueType) -> Option<Value> {
        match (self, ty) {
            (Value::Int(i), ValueType::Real) => Some(Value::Real(i as f64)),
            (v, t) if v.value_type() == t => Some(v),
            _ => None,
        }
    }

    /// Literal form used by the descriptor and statement printers. REAL
    /// values always carry a decimal point or exponent so they re-parse as REAL.
    pub fn literal(&self) -> String {
        match self {
            Value::Bool(true) => "TRUE".into(),
            Value::Bool(false) => "FALSE".into(),
            Value::Int(i) => i.to_string(),
            Value::Real(r) => {
                let s = format!("{r:?}");
                if s.contains(['.', 'e', 'E']) {
                    s
                } else {
                    format!("{s}.0")
                }
            }
            Value::Str(s) => {
                let mut out = String::with_capacity(s.len() + 2);
                out.push('\'');
                for c in s.chars() {
                    match c {
                        '\'' => out.push_str("$'"),
                        '$' => out.push_str("$$"),
                        '\n' => out.push_str("$N"),
                        c => out.push(c),
                    }
                }
                out.push('\'');
                out
            }
        }
    }

    /// Text used in CSV traces: REAL with 9 significant digits.
    pub fn trace_text(&self) -> String {
        match self {
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Real(r) => format_sig(*r, 9),
            Value::Str(s) => s.clone(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.literal())
    }
}

/// Formats `x` with `digits` significant digits, trimming trailing zeros.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exp) {
        let s = format!("{:.*e}", digits.saturating_sub(1), x);
        return s;
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_literals_keep_a_decimal_point() {
        assert_eq!(Value::Real(3.0).literal(), "3.0");
        assert_eq!(Value::Real(-459.67).literal(), "-459.67");
        assert_eq!(Value::Real(1e300).literal(), "1e300");
    }

    #[test]
    fn int_widens_to_real_only() {
        assert_eq!(Value::Int(3).coerce(ValueType::Real), Some(Value::Real(3.0)));
        assert_eq!(Value::Real(3.0).coerce(ValueType::Int), None);
        assert_eq!(Value::Bool(true).coerce(ValueType::Int), None);
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig(21.111111111111, 9), "21.1111111");
        assert_eq!(format_sig(100.0, 9), "100");
        assert_eq!(format_sig(-0.000123456789123, 9), "-0.000123456789");
        assert_eq!(format_sig(0.0, 9), "0");
    }

    #[test]
    fn string_literal_escapes() {
        assert_eq!(Value::Str("a'b$".into()).literal(), "'a$'b$$'");
    }
}
