use std::collections::BTreeMap;

use super::{Expected, SequentialSpec, SpecError};
use crate::value::{Method, OperationLabel, Value};

/// Key-value map with `put`, `rem`, `get` and contains-value `has`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MapSpec;

pub type MapState = BTreeMap<i64, i64>;

fn key(m: Method, x: Value) -> Result<i64, SpecError> {
    x.as_int().ok_or(SpecError::BadArgument(m, x))
}

impl SequentialSpec for MapSpec {
    type State = MapState;

    fn name(&self) -> &'static str {
        "map"
    }

    fn methods(&self) -> &'static [Method] {
        &[Method::Put, Method::Rem, Method::Get, Method::Has]
    }

    fn expected(&self, st: &MapState, m: Method, x: Value) -> Result<Expected, SpecError> {
        let y = match m {
            Method::Put => {
                let (k, _) = x.as_pair().ok_or(SpecError::BadArgument(m, x))?;
                Value::Bool(!st.contains_key(&k))
            }
            Method::Rem => Value::Bool(st.contains_key(&key(m, x)?)),
            Method::Get => st.get(&key(m, x)?).map_or(Value::Nil, |&v| Value::Int(v)),
            Method::Has => {
                let v = key(m, x)?;
                Value::Bool(st.values().any(|&w| w == v))
            }
            other => return Err(SpecError::UnknownMethod(other.name().into(), "map")),
        };
        Ok(Expected::Value(y))
    }

    fn apply(&self, st: &mut MapState, l: &OperationLabel) -> Result<bool, SpecError> {
        let Expected::Value(y) = self.expected(st, l.method, l.arg)? else {
            unreachable!("map returns are deterministic")
        };
        match (l.method, l.arg) {
            (Method::Put, Value::Pair(k, v)) => {
                st.insert(k, v);
            }
            (Method::Rem, Value::Int(k)) => {
                st.remove(&k);
            }
            _ => {}
        }
        Ok(y == l.ret)
    }

    /// `get`, `has` and unsuccessful `rem`. A `put` overwrites, so it is never
    /// read-only even when it reports the key as already mapped.
    fn readonly(&self, l: &OperationLabel) -> bool {
        match l.method {
            Method::Get | Method::Has => true,
            Method::Rem => l.ret == Value::BOT,
            _ => false,
        }
    }
}
