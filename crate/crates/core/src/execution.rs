//! Abstract executions and the folds from traces to histories and executions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::history::{History, HistoryError};
use crate::trace::{Action, IllFormedKind, Trace, TraceError, WellFormedness};
use crate::value::{OpId, OpSet};

/// An abstract execution `⟨h, lin, vis⟩`. `lin` lists linearized operations
/// in order; operations absent from `vis` have empty visibility.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AbstractExecution {
    pub history: History,
    pub lin: Vec<OpId>,
    #[serde(default)]
    pub vis: BTreeMap<OpId, OpSet>,
}

impl AbstractExecution {
    pub fn new(history: History) -> Self {
        AbstractExecution {
            history,
            lin: Vec::new(),
            vis: BTreeMap::new(),
        }
    }

    pub fn lin_index(&self, o: OpId) -> Option<usize> {
        self.lin.iter().position(|&p| p == o)
    }

    pub fn is_linearized(&self, o: OpId) -> bool {
        self.lin.contains(&o)
    }

    /// `lin⁻¹(o)`: the operations linearized before `o`.
    pub fn lin_preds(&self, o: OpId) -> OpSet {
        match self.lin_index(o) {
            Some(i) => self.lin[..i].iter().copied().collect(),
            None => OpSet::new(),
        }
    }

    pub fn vis_of(&self, o: OpId) -> OpSet {
        self.vis.get(&o).cloned().unwrap_or_default()
    }

    pub fn set_vis(&mut self, o: OpId, s: OpSet) {
        if s.is_empty() {
            self.vis.remove(&o);
        } else {
            self.vis.insert(o, s);
        }
    }

    /// Applies one action of the `f_e` fold. The caller is responsible for
    /// well-formedness.
    pub fn apply(&mut self, a: &Action) -> Result<(), HistoryError> {
        match *a {
            Action::Call { op, m, x } => self.history.add_op(op, m, x)?,
            Action::Ret { op, y } => self.history.set_ret(op, y)?,
            Action::Hb { op, op2 } => self.history.add_hb(op, op2)?,
            Action::Lin { op } => self.lin.push(op),
            Action::Vis { op, op2 } => {
                self.vis.entry(op).or_default().insert(op2);
            }
            Action::Silent => {}
        }
        Ok(())
    }

    pub fn relabel(&self, f: impl Fn(OpId) -> OpId) -> AbstractExecution {
        AbstractExecution {
            history: self.history.relabel(&f),
            lin: self.lin.iter().map(|&o| f(o)).collect(),
            vis: self
                .vis
                .iter()
                .map(|(o, s)| (f(*o), s.iter().map(|&p| f(p)).collect()))
                .collect(),
        }
    }
}

fn ill_formed(index: usize, action: Action, kind: IllFormedKind) -> TraceError {
    TraceError::IllFormed {
        index,
        action,
        kind,
    }
}

fn fold<T>(
    trace: &Trace,
    mut acc: T,
    mut apply: impl FnMut(&mut T, &Action) -> Result<(), HistoryError>,
) -> Result<T, TraceError> {
    let mut wf = WellFormedness::default();
    for (i, a) in trace.actions.iter().enumerate() {
        wf.step(a).map_err(|k| ill_formed(i, *a, k))?;
        apply(&mut acc, a).map_err(|e| match e {
            HistoryError::HbCycle(..) => ill_formed(i, *a, IllFormedKind::HbCycle),
            other => unreachable!("well-formedness admits {a}: {other}"),
        })?;
    }
    Ok(acc)
}

/// The history fold `f_h`; lin, vis and silent actions are skipped.
pub fn history_of_trace(trace: &Trace) -> Result<History, TraceError> {
    fold(trace, History::new(), |h, a| match *a {
        Action::Call { op, m, x } => h.add_op(op, m, x),
        Action::Ret { op, y } => h.set_ret(op, y),
        Action::Hb { op, op2 } => h.add_hb(op, op2),
        _ => Ok(()),
    })
}

/// The execution fold `f_e`.
pub fn execution_of_trace(trace: &Trace) -> Result<AbstractExecution, TraceError> {
    fold(trace, AbstractExecution::default(), |e, a| e.apply(a))
}
