//! The value domain: OIDs, runtime scalars, and declared types.
//!
//! Serialization here is the single source of truth for the journal, the
//! snapshot, canonical statement text, and shell output. Floats render as the
//! shortest round-trip decimal with `.0` forced on integral values; strings
//! use exactly the four escapes `\\ \" \n \t`.

use std::fmt;

use crate::error::{Error, Result};

/// Stable 64-bit object identity. Allocated from 1, never reused, never
/// changed by PROGRESS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Oid(pub u64);

impl fmt::Display for Oid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Declared attribute / parameter / return type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeTag {
    Int,
    Float,
    Str,
    Bool,
    /// Reference to objects of the named class (or any subclass).
    Ref(String),
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeTag::Int => f.write_str("INT"),
            TypeTag::Float => f.write_str("FLOAT"),
            TypeTag::Str => f.write_str("STRING"),
            TypeTag::Bool => f.write_str("BOOL"),
            TypeTag::Ref(target) => write!(f, "REF<{target}>"),
        }
    }
}

/// Runtime scalar. NULL exists only inside `Ref`.
#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Ref(Option<Oid>),
}

// Bit-level float equality: state comparisons must distinguish 0.0 from -0.0.
// The expression evaluator implements IEEE comparison separately.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Ref(a), Value::Ref(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Value {
    /// True when the runtime tag matches the declared type kind. REF target
    /// class compatibility needs the store and is checked separately.
    pub fn matches_kind(&self, tag: &TypeTag) -> bool {
        matches!(
            (self, tag),
            (Value::Int(_), TypeTag::Int)
                | (Value::Float(_), TypeTag::Float)
                | (Value::Str(_), TypeTag::Str)
                | (Value::Bool(_), TypeTag::Bool)
                | (Value::Ref(_), TypeTag::Ref(_))
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "INT",
            Value::Float(_) => "FLOAT",
            Value::Str(_) => "STRING",
            Value::Bool(_) => "BOOL",
            Value::Ref(_) => "REF",
        }
    }

    /// Canonical textual form, bijective on the value domain.
    pub fn render(&self) -> String {
        match self {
            Value::Int(n) => n.to_string(),
            Value::Float(x) => render_float(*x),
            Value::Str(s) => render_string(s),
            Value::Bool(b) => b.to_string(),
            Value::Ref(None) => "NULL".to_string(),
            Value::Ref(Some(oid)) => oid.to_string(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Shortest round-trip decimal; `.0` appended when the rendering carries no
/// fractional part (Rust's Display never emits an exponent for f64).
pub fn render_float(x: f64) -> String {
    let mut s = format!("{x}");
    if !s.contains('.') {
        s.push_str(".0");
    }
    s
}

pub fn render_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}

/// Reject NaN and infinities; the serialization above is only bijective on
/// finite floats.
pub fn check_finite(x: f64, context: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::FloatOverflow(context.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_rendering_forces_fraction() {
        assert_eq!(render_float(2.0), "2.0");
        assert_eq!(render_float(-0.0), "-0.0");
        assert_eq!(render_float(2.5), "2.5");
        assert_eq!(render_float(1e300), format!("{}", 1e300) + ".0");
    }

    #[test]
    fn float_rendering_round_trips() {
        for x in [0.1, -1.5, 1e-300, 123456789.123456, f64::MAX, 5e-324] {
            let s = render_float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn string_rendering_escapes() {
        assert_eq!(render_string("a\nb\t\"\\"), r#""a\nb\t\"\\""#);
        assert_eq!(render_string("π|x"), "\"π|x\"");
    }

    #[test]
    fn value_equality_is_bit_exact_for_floats() {
        assert_ne!(Value::Float(0.0), Value::Float(-0.0));
        assert_eq!(Value::Float(1.5), Value::Float(1.5));
    }
}
