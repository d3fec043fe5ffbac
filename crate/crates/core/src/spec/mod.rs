//! Sequential specifications, read-only predicates and visibility annotations.

mod map;
mod queue;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use map::{MapSpec, MapState};
pub use queue::{QueueSpec, QueueState};

use crate::value::{Method, OperationLabel, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("method `{0}` does not belong to the {1} specification")]
    UnknownMethod(String, &'static str),
    #[error("bad argument {1} for method {0}")]
    BadArgument(Method, Value),
    #[error("prefix is not admitted by the specification")]
    InadmissiblePrefix,
    #[error("unknown specification `{0}` (expected `map` or `queue`)")]
    UnknownAdt(String),
    #[error("bad visibility override `{0}` (expected `method=absolute|monotonic`)")]
    BadOverride(String),
}

/// The return a specification prescribes for an invocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expected {
    Value(Value),
    /// Several returns are admitted. Neither shipped specification uses this.
    Nondet,
}

/// An executable sequential specification over a replayable state.
pub trait SequentialSpec {
    type State: Clone + Default + fmt::Debug;

    fn name(&self) -> &'static str;

    fn methods(&self) -> &'static [Method];

    /// The return prescribed for `(m, x)` in state `st`.
    fn expected(&self, st: &Self::State, m: Method, x: Value) -> Result<Expected, SpecError>;

    /// Applies the label's effect; returns whether its return was admitted.
    fn apply(&self, st: &mut Self::State, l: &OperationLabel) -> Result<bool, SpecError>;

    fn readonly(&self, l: &OperationLabel) -> bool;

    /// Membership of a label sequence in `S`.
    fn admits(&self, s: &[OperationLabel]) -> Result<bool, SpecError> {
        let mut st = Self::State::default();
        for l in s {
            if !self.apply(&mut st, l)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// The unique completion of `prefix` by `(m, x)`.
    fn return_of(
        &self,
        prefix: &[OperationLabel],
        m: Method,
        x: Value,
    ) -> Result<Expected, SpecError> {
        let mut st = Self::State::default();
        for l in prefix {
            if !self.apply(&mut st, l)? {
                return Err(SpecError::InadmissiblePrefix);
            }
        }
        self.expected(&st, m, x)
    }
}

/// The shipped abstract data types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adt {
    Map,
    Queue,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AdtState {
    Map(MapState),
    Queue(QueueState),
}

impl Default for AdtState {
    fn default() -> Self {
        AdtState::Map(MapState::default())
    }
}

impl Adt {
    pub fn initial(self) -> AdtState {
        match self {
            Adt::Map => AdtState::Map(MapState::default()),
            Adt::Queue => AdtState::Queue(QueueState::default()),
        }
    }

    pub fn has_method(self, m: Method) -> bool {
        self.methods().contains(&m)
    }

    pub fn methods(self) -> &'static [Method] {
        match self {
            Adt::Map => MapSpec.methods(),
            Adt::Queue => QueueSpec.methods(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Adt::Map => "map",
            Adt::Queue => "queue",
        }
    }

    pub fn expected_in(self, st: &AdtState, m: Method, x: Value) -> Result<Expected, SpecError> {
        match (self, st) {
            (Adt::Map, AdtState::Map(s)) => MapSpec.expected(s, m, x),
            (Adt::Queue, AdtState::Queue(s)) => QueueSpec.expected(s, m, x),
            _ => unreachable!("state of another ADT"),
        }
    }

    pub fn apply_in(self, st: &mut AdtState, l: &OperationLabel) -> Result<bool, SpecError> {
        match (self, st) {
            (Adt::Map, AdtState::Map(s)) => MapSpec.apply(s, l),
            (Adt::Queue, AdtState::Queue(s)) => QueueSpec.apply(s, l),
            _ => unreachable!("state of another ADT"),
        }
    }

    pub fn readonly(self, l: &OperationLabel) -> bool {
        match self {
            Adt::Map => MapSpec.readonly(l),
            Adt::Queue => QueueSpec.readonly(l),
        }
    }

    pub fn admits(self, s: &[OperationLabel]) -> Result<bool, SpecError> {
        match self {
            Adt::Map => MapSpec.admits(s),
            Adt::Queue => QueueSpec.admits(s),
        }
    }

    pub fn return_of(
        self,
        prefix: &[OperationLabel],
        m: Method,
        x: Value,
    ) -> Result<Expected, SpecError> {
        match self {
            Adt::Map => MapSpec.return_of(prefix, m, x),
            Adt::Queue => QueueSpec.return_of(prefix, m, x),
        }
    }

    /// Candidate returns of `m` over a value domain, for `n` operations.
    pub fn return_candidates(self, m: Method, domain: &[i64], n: usize) -> Vec<Value> {
        match m {
            Method::Put | Method::Rem | Method::Has => vec![Value::TOP, Value::BOT],
            Method::Push => vec![Value::TOP],
            Method::Get => std::iter::once(Value::Nil)
                .chain(domain.iter().map(|&v| Value::Int(v)))
                .collect(),
            Method::Pop => std::iter::once(Value::Empty)
                .chain(domain.iter().map(|&v| Value::Int(v)))
                .collect(),
            Method::Size => (0..=n as i64).map(Value::Int).collect(),
        }
    }

    /// Argument values of `m` over a key/value domain.
    pub fn arguments(self, m: Method, domain: &[i64]) -> Vec<Value> {
        match m {
            Method::Put => domain
                .iter()
                .flat_map(|&k| domain.iter().map(move |&v| Value::Pair(k, v)))
                .collect(),
            Method::Rem | Method::Get | Method::Has | Method::Push => {
                domain.iter().map(|&v| Value::Int(v)).collect()
            }
            Method::Pop | Method::Size => vec![Value::Nil],
        }
    }
}

impl FromStr for Adt {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "map" => Ok(Adt::Map),
            "queue" => Ok(Adt::Queue),
            other => Err(SpecError::UnknownAdt(other.to_string())),
        }
    }
}

impl fmt::Display for Adt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisibilityKind {
    Absolute,
    Monotonic,
}

impl FromStr for VisibilityKind {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "absolute" => Ok(VisibilityKind::Absolute),
            "monotonic" => Ok(VisibilityKind::Monotonic),
            other => Err(SpecError::BadOverride(other.to_string())),
        }
    }
}

pub type VisibilityAnnotation = BTreeMap<Method, VisibilityKind>;

/// A weak-visibility specification: sequential spec, read-only predicate
/// (both from the ADT) and a visibility annotation total on its methods.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WeakVisibilitySpec {
    pub adt: Adt,
    pub vis: VisibilityAnnotation,
}

impl WeakVisibilitySpec {
    pub fn kind(&self, m: Method) -> VisibilityKind {
        self.vis
            .get(&m)
            .copied()
            .unwrap_or(VisibilityKind::Absolute)
    }

    pub fn readonly(&self, l: &OperationLabel) -> bool {
        self.adt.readonly(l)
    }

    pub fn all_absolute(&self) -> bool {
        self.vis.values().all(|k| *k == VisibilityKind::Absolute)
    }

    /// The all-absolute variant, i.e. linearizability.
    pub fn absolute(adt: Adt) -> Self {
        let vis = adt
            .methods()
            .iter()
            .map(|&m| (m, VisibilityKind::Absolute))
            .collect();
        WeakVisibilitySpec { adt, vis }
    }
}

/// Defaults: map `has` and queue `size` are monotonic, the rest absolute.
pub fn make_weak_spec(
    adt: Adt,
    overrides: &[(Method, VisibilityKind)],
) -> Result<WeakVisibilitySpec, SpecError> {
    let mut w = WeakVisibilitySpec::absolute(adt);
    let weak = match adt {
        Adt::Map => Method::Has,
        Adt::Queue => Method::Size,
    };
    w.vis.insert(weak, VisibilityKind::Monotonic);
    for &(m, k) in overrides {
        if !adt.has_method(m) {
            return Err(SpecError::UnknownMethod(m.name().to_string(), adt.name()));
        }
        w.vis.insert(m, k);
    }
    Ok(w)
}

/// Parses `method=absolute|monotonic`.
pub fn parse_override(s: &str) -> Result<(Method, VisibilityKind), SpecError> {
    let (m, k) = s
        .split_once('=')
        .ok_or_else(|| SpecError::BadOverride(s.to_string()))?;
    let m: Method = m
        .trim()
        .parse()
        .map_err(|_| SpecError::BadOverride(s.to_string()))?;
    let k = k
        .trim()
        .parse()
        .map_err(|_| SpecError::BadOverride(s.to_string()))?;
    Ok((m, k))
}
