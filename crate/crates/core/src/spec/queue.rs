use std::collections::VecDeque;

use super::{Expected, SequentialSpec, SpecError};
use crate::value::{Method, OperationLabel, Value};

/// FIFO queue with a total `pop` returning `EMPTY` on the empty queue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueueSpec;

pub type QueueState = VecDeque<i64>;

impl SequentialSpec for QueueSpec {
    type State = QueueState;

    fn name(&self) -> &'static str {
        "queue"
    }

    fn methods(&self) -> &'static [Method] {
        &[Method::Push, Method::Pop, Method::Size]
    }

    fn expected(&self, st: &QueueState, m: Method, x: Value) -> Result<Expected, SpecError> {
        let y = match m {
            Method::Push => {
                x.as_int().ok_or(SpecError::BadArgument(m, x))?;
                Value::TOP
            }
            Method::Pop | Method::Size if x != Value::Nil => {
                return Err(SpecError::BadArgument(m, x))
            }
            Method::Pop => st.front().map_or(Value::Empty, |&v| Value::Int(v)),
            Method::Size => Value::Int(st.len() as i64),
            other => return Err(SpecError::UnknownMethod(other.name().into(), "queue")),
        };
        Ok(Expected::Value(y))
    }

    fn apply(&self, st: &mut QueueState, l: &OperationLabel) -> Result<bool, SpecError> {
        let Expected::Value(y) = self.expected(st, l.method, l.arg)? else {
            unreachable!("queue returns are deterministic")
        };
        match (l.method, l.arg) {
            (Method::Push, Value::Int(v)) => st.push_back(v),
            (Method::Pop, _) => {
                st.pop_front();
            }
            _ => {}
        }
        Ok(y == l.ret)
    }

    fn readonly(&self, l: &OperationLabel) -> bool {
        match l.method {
            Method::Size => true,
            Method::Pop => l.ret == Value::Empty,
            _ => false,
        }
    }
}
