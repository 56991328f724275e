//! Record payload variants and quality flags.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Payload of one record.
///
/// Serialized untagged: flags as JSON booleans, counts as non-negative
/// integers, scalars as decimal numbers (always carrying a fraction part when
/// written by this crate), tokens as strings. Variant order matters for
/// deserialization: integer literals become counts, fractional or negative
/// literals become scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Flag(bool),
    Count(u64),
    Scalar(f64),
    Token(String),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Scalar(_) => ValueKind::Scalar,
            Value::Count(_) => ValueKind::Count,
            Value::Flag(_) => ValueKind::Flag,
            Value::Token(_) => ValueKind::Token,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_count(&self) -> Option<u64> {
        match self {
            Value::Count(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_flag(&self) -> Option<bool> {
        match self {
            Value::Flag(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_token(&self) -> Option<&str> {
        match self {
            Value::Token(t) => Some(t),
            _ => None,
        }
    }
}

/// Declared payload kind of a dictionary entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Scalar,
    Count,
    Flag,
    Token,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::Scalar => "scalar",
            ValueKind::Count => "count",
            ValueKind::Flag => "flag",
            ValueKind::Token => "token",
        };
        f.write_str(s)
    }
}

/// Provenance of a record's value.
///
/// Source stations emit only `measured`; the preparation stage is the only
/// producer of the other three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityFlag {
    Measured,
    Interpolated,
    Extrapolated,
    Missing,
}

impl QualityFlag {
    pub fn is_missing(self) -> bool {
        self == QualityFlag::Missing
    }
}

impl fmt::Display for QualityFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            QualityFlag::Measured => "measured",
            QualityFlag::Interpolated => "interpolated",
            QualityFlag::Extrapolated => "extrapolated",
            QualityFlag::Missing => "missing",
        };
        f.write_str(s)
    }
}
