//! Operation identifiers, method names, values and operation labels.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeTuple, Serializer};
use serde::{Deserialize, Serialize};

/// Numeric operation identifier, unique within one trace or history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpId(pub u32);

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

impl FromStr for OpId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim_start_matches('o').parse().map(OpId)
    }
}

pub type OpSet = BTreeSet<OpId>;

/// Method names of the shipped abstract data types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Put,
    Rem,
    Get,
    Has,
    Push,
    Pop,
    Size,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Put,
        Method::Rem,
        Method::Get,
        Method::Has,
        Method::Push,
        Method::Pop,
        Method::Size,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Put => "put",
            Method::Rem => "rem",
            Method::Get => "get",
            Method::Has => "has",
            Method::Push => "push",
            Method::Pop => "pop",
            Method::Size => "size",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown method `{0}`")]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

/// Argument and return values.
///
/// The JSON encoding is `null` for [`Value::Nil`], `true`/`false` for booleans,
/// numbers for integers, `[k, v]` for pairs and the string `"empty"` for
/// [`Value::Empty`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    /// Absent value: a missing map entry, or the unit argument of `pop`/`size`.
    Nil,
    Bool(bool),
    Int(i64),
    Pair(i64, i64),
    /// Return value of `pop` on the empty queue.
    Empty,
}

impl Value {
    pub const TOP: Value = Value::Bool(true);
    pub const BOT: Value = Value::Bool(false);

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_pair(&self) -> Option<(i64, i64)> {
        match self {
            Value::Pair(k, v) => Some((*k, *v)),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nil => f.write_str("null"),
            Value::Bool(true) => f.write_str("⊤"),
            Value::Bool(false) => f.write_str("⊥"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Pair(k, v) => write!(f, "({k},{v})"),
            Value::Empty => f.write_str("EMPTY"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Nil => s.serialize_none(),
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Int(i) => s.serialize_i64(*i),
            Value::Pair(k, v) => {
                let mut t = s.serialize_tuple(2)?;
                t.serialize_element(k)?;
                t.serialize_element(v)?;
                t.end()
            }
            Value::Empty => s.serialize_str("empty"),
        }
    }
}

struct ValueVisitor;

impl<'de> Visitor<'de> for ValueVisitor {
    type Value = Value;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("null, a boolean, an integer, a [key, value] pair or \"empty\"")
    }

    fn visit_unit<E: de::Error>(self) -> Result<Value, E> {
        Ok(Value::Nil)
    }

    fn visit_none<E: de::Error>(self) -> Result<Value, E> {
        Ok(Value::Nil)
    }

    fn visit_some<D: Deserializer<'de>>(self, d: D) -> Result<Value, D::Error> {
        d.deserialize_any(ValueVisitor)
    }

    fn visit_bool<E: de::Error>(self, b: bool) -> Result<Value, E> {
        Ok(Value::Bool(b))
    }

    fn visit_i64<E: de::Error>(self, i: i64) -> Result<Value, E> {
        Ok(Value::Int(i))
    }

    fn visit_u64<E: de::Error>(self, u: u64) -> Result<Value, E> {
        i64::try_from(u)
            .map(Value::Int)
            .map_err(|_| E::custom("integer out of range"))
    }

    fn visit_str<E: de::Error>(self, s: &str) -> Result<Value, E> {
        match s {
            "empty" => Ok(Value::Empty),
            other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
        }
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Value, A::Error> {
        let k: i64 = seq
            .next_element()?
            .ok_or_else(|| de::Error::invalid_length(0, &self))?;
        let v: i64 = seq
            .next_element()?
            .ok_or_else(|| de::Error::invalid_length(1, &self))?;
        if seq.next_element::<de::IgnoredAny>()?.is_some() {
            return Err(de::Error::invalid_length(3, &self));
        }
        Ok(Value::Pair(k, v))
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(ValueVisitor)
    }
}

/// An operation label `⟨m, x, y⟩`: method, argument and return value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OperationLabel {
    #[serde(rename = "m")]
    pub method: Method,
    #[serde(rename = "x")]
    pub arg: Value,
    #[serde(rename = "y")]
    pub ret: Value,
}

impl OperationLabel {
    pub fn new(method: Method, arg: Value, ret: Value) -> Self {
        OperationLabel { method, arg, ret }
    }
}

impl fmt::Display for OperationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{},{},{}⟩", self.method, self.arg, self.ret)
    }
}
