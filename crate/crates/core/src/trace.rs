//! Actions and traces, with the per-operation well-formedness rules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::value::{Method, OpId, Value};

/// One abstract-execution action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "a", rename_all = "lowercase")]
pub enum Action {
    Call {
        op: OpId,
        m: Method,
        x: Value,
    },
    Ret {
        op: OpId,
        y: Value,
    },
    /// `op` happens before `op2`.
    Hb {
        op: OpId,
        op2: OpId,
    },
    Lin {
        op: OpId,
    },
    /// `op2` becomes visible to `op`.
    Vis {
        op: OpId,
        op2: OpId,
    },
    Silent,
}

impl Action {
    /// The operation this action belongs to (the first one for `hb`/`vis`).
    pub fn op(&self) -> Option<OpId> {
        match *self {
            Action::Call { op, .. }
            | Action::Ret { op, .. }
            | Action::Hb { op, .. }
            | Action::Lin { op }
            | Action::Vis { op, .. } => Some(op),
            Action::Silent => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Call { op, m, x } => write!(f, "call({op},{m},{x})"),
            Action::Ret { op, y } => write!(f, "ret({op},{y})"),
            Action::Hb { op, op2 } => write!(f, "hb({op},{op2})"),
            Action::Lin { op } => write!(f, "lin({op})"),
            Action::Vis { op, op2 } => write!(f, "vis({op},{op2})"),
            Action::Silent => f.write_str("ε"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("action {index} ({action}): {kind}")]
    IllFormed {
        index: usize,
        action: Action,
        kind: IllFormedKind,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IllFormedKind {
    DuplicateCall,
    DuplicateRet,
    DuplicateLin,
    BeforeCall(OpId),
    HbCycle,
}

impl fmt::Display for IllFormedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IllFormedKind::DuplicateCall => f.write_str("operation called twice"),
            IllFormedKind::DuplicateRet => f.write_str("operation returned twice"),
            IllFormedKind::DuplicateLin => f.write_str("operation linearized twice"),
            IllFormedKind::BeforeCall(o) => write!(f, "{o} is used before its call"),
            IllFormedKind::HbCycle => f.write_str("happens-before cycle"),
        }
    }
}

/// A sequence of actions. The external format is JSON lines.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace {
    pub actions: Vec<Action>,
}

impl Trace {
    pub fn new(actions: Vec<Action>) -> Self {
        Trace { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn prefix(&self, n: usize) -> Trace {
        Trace::new(self.actions[..n].to_vec())
    }

    /// Parses one JSON action per line; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut actions = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let a = serde_json::from_str(line).map_err(|e| TraceError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            actions.push(a);
        }
        Ok(Trace { actions })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.actions {
            out.push_str(&serde_json::to_string(a).expect("actions serialize"));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.actions.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Incremental well-formedness checker, shared by the folds and the monitor.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct WellFormedness {
    called: BTreeSet<OpId>,
    returned: BTreeSet<OpId>,
    linearized: BTreeSet<OpId>,
}

impl WellFormedness {
    pub fn step(&mut self, a: &Action) -> Result<(), IllFormedKind> {
        let need = |o: OpId, called: &BTreeSet<OpId>| {
            if called.contains(&o) {
                Ok(())
            } else {
                Err(IllFormedKind::BeforeCall(o))
            }
        };
        match *a {
            Action::Call { op, .. } => {
                if !self.called.insert(op) {
                    return Err(IllFormedKind::DuplicateCall);
                }
            }
            Action::Ret { op, .. } => {
                need(op, &self.called)?;
                if !self.returned.insert(op) {
                    return Err(IllFormedKind::DuplicateRet);
                }
            }
            Action::Lin { op } => {
                need(op, &self.called)?;
                if !self.linearized.insert(op) {
                    return Err(IllFormedKind::DuplicateLin);
                }
            }
            Action::Hb { op, op2 } | Action::Vis { op, op2 } => {
                need(op, &self.called)?;
                need(op2, &self.called)?;
            }
            Action::Silent => {}
        }
        Ok(())
    }

    pub fn returned(&self, o: OpId) -> bool {
        self.returned.contains(&o)
    }
}

/// Checks the per-operation rules: at most one call, ret and lin, and no
/// action on an operation before its call.
pub fn check_well_formed(trace: &Trace) -> Result<(), TraceError> {
    let mut wf = WellFormedness::default();
    for (index, a) in trace.actions.iter().enumerate() {
        wf.step(a).map_err(|kind| TraceError::IllFormed {
            index,
            action: *a,
            kind,
        })?;
    }
    Ok(())
}

pub fn well_formed(trace: &Trace) -> bool {
    check_well_formed(trace).is_ok()
}

/// Non-fatal observations about a trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// `vis(op, op2)` names an operation that was not linearized at that point.
    VisBeforeLin { index: usize, op: OpId, op2: OpId },
    /// `hb(op, op2)` where `op` had not returned (not returns-before).
    HbFromPending { index: usize, op: OpId, op2: OpId },
}

/// Diagnostics for a well-formed trace.
pub fn diagnostics(trace: &Trace) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut returned = BTreeSet::new();
    let mut linearized = BTreeSet::new();
    for (index, a) in trace.actions.iter().enumerate() {
        match *a {
            Action::Ret { op, .. } => {
                returned.insert(op);
            }
            Action::Lin { op } => {
                linearized.insert(op);
            }
            Action::Hb { op, op2 } if !returned.contains(&op) => {
                out.push(Diagnostic::HbFromPending { index, op, op2 });
            }
            Action::Vis { op, op2 } if !linearized.contains(&op2) => {
                out.push(Diagnostic::VisBeforeLin { index, op, op2 });
            }
            _ => {}
        }
    }
    out
}

/// Per-operation action counts, used by tests and reports.
pub fn action_counts(trace: &Trace) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    for a in &trace.actions {
        let k = match a {
            Action::Call { .. } => "call",
            Action::Ret { .. } => "ret",
            Action::Hb { .. } => "hb",
            Action::Lin { .. } => "lin",
            Action::Vis { .. } => "vis",
            Action::Silent => "silent",
        };
        *m.entry(k).or_insert(0) += 1;
    }
    m
}
