use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use chrono::NaiveDate;
use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column domain of an attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Integer,
    Float,
    String,
    Date,
}

impl DomainKind {
    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Integer => "int",
            DomainKind::Float => "float",
            DomainKind::String => "string",
            DomainKind::Date => "date",
        }
    }

    pub fn parse_name(s: &str) -> Option<DomainKind> {
        match s {
            "int" | "integer" => Some(DomainKind::Integer),
            "float" | "double" | "real" => Some(DomainKind::Float),
            "string" | "str" | "text" => Some(DomainKind::String),
            "date" => Some(DomainKind::Date),
            _ => None,
        }
    }

    /// Least kind able to hold values of both kinds, if any.
    pub fn unify(self, other: DomainKind) -> Option<DomainKind> {
        use DomainKind::*;
        match (self, other) {
            (a, b) if a == b => Some(a),
            (Integer, Float) | (Float, Integer) => Some(Float),
            _ => None,
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single cell value. NULL has no representation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Float(OrderedFloat<f64>),
    Str(Arc<str>),
    Date(NaiveDate),
}

const DATE_FORMAT: &str = "%Y-%m-%d";

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(Arc::from(s))
    }

    pub fn float(x: f64) -> Value {
        Value::Float(OrderedFloat(x))
    }

    pub fn kind(&self) -> DomainKind {
        match self {
            Value::Int(_) => DomainKind::Integer,
            Value::Float(_) => DomainKind::Float,
            Value::Str(_) => DomainKind::String,
            Value::Date(_) => DomainKind::Date,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(x.0),
            _ => None,
        }
    }

    /// Parses a raw field as `kind`. Empty fields are NULLs and rejected.
    pub fn parse(raw: &str, kind: DomainKind) -> Result<Value> {
        let s = raw.trim();
        let bad = |detail: &str| Error::DomainMismatch {
            attr: s.to_string(),
            detail: detail.to_string(),
        };
        if s.is_empty() {
            return Err(bad("empty field (NULL values are not supported)"));
        }
        Ok(match kind {
            DomainKind::Integer => Value::Int(s.parse().map_err(|_| bad("expected integer"))?),
            DomainKind::Float => Value::float(s.parse().map_err(|_| bad("expected float"))?),
            DomainKind::String => Value::str(s),
            DomainKind::Date => Value::Date(
                NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|_| bad("expected YYYY-MM-DD"))?,
            ),
        })
    }

    /// Narrowest kind that parses `raw`.
    pub fn infer_kind(raw: &str) -> DomainKind {
        let s = raw.trim();
        if s.parse::<i64>().is_ok() {
            DomainKind::Integer
        } else if s.parse::<f64>().is_ok() {
            DomainKind::Float
        } else if NaiveDate::parse_from_str(s, DATE_FORMAT).is_ok() {
            DomainKind::Date
        } else {
            DomainKind::String
        }
    }

    /// Converts to `kind` where lossless enough (int to float).
    pub fn coerce(self, kind: DomainKind) -> Option<Value> {
        match (self, kind) {
            (v, k) if v.kind() == k => Some(v),
            (Value::Int(i), DomainKind::Float) => Some(Value::float(i as f64)),
            _ => None,
        }
    }

    /// Ordering used by predicates: numbers compare numerically across
    /// int/float, other kinds only with themselves.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            (Value::Date(a), Value::Date(b)) => Some(a.cmp(b)),
            (a, b) => a.as_f64()?.partial_cmp(&b.as_f64()?),
        }
    }

    /// SQL literal text.
    pub fn sql_literal(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Float(x) => format!("{:?}", x.0),
            Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
            Value::Date(d) => format!("DATE '{}'", d.format(DATE_FORMAT)),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{}", x.0),
            Value::Str(s) => f.write_str(s),
            Value::Date(d) => write!(f, "{}", d.format(DATE_FORMAT)),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::str(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::float(v)
    }
}
