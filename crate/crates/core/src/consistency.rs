//! Consistency of abstract executions and the specification monitors.
//!
//! An operation `o` linearized at position `i` is checked for:
//! `vis(o) ⊆ lin[..i]`, hb-predecessors linearized before it, its visibility
//! kind, and admission of `lin | (vis(o) ∪ {o})` by the sequential spec. The
//! sequence replayed for `o` omits read-only labels other than `o` itself;
//! for specs whose read-only predicate is compatible this is the same check.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::execution::AbstractExecution;
use crate::spec::{Adt, Expected, VisibilityKind, WeakVisibilitySpec};
use crate::trace::{Action, IllFormedKind, Trace, TraceError, WellFormedness};
use crate::value::{OpId, OpSet, OperationLabel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    NotMonotonic,
    NotAbsolute,
    ReturnNotInS,
    VisNotLinPredecessor,
    LinNotExtendingHb,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("reason serializes");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub op: OpId,
    pub reason: Reason,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prefix_len: Option<usize>,
}

/// A monotonic check skipped an hb-predecessor whose label is unknown.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PendingPredecessor {
    pub op: OpId,
    pub pred: OpId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub ok: bool,
    pub violations: Vec<Violation>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<PendingPredecessor>,
}

impl ConsistencyVerdict {
    fn from_parts(mut violations: Vec<Violation>, warnings: BTreeSet<PendingPredecessor>) -> Self {
        violations.sort();
        violations.dedup();
        ConsistencyVerdict {
            ok: violations.is_empty(),
            violations,
            warnings: warnings.into_iter().collect(),
        }
    }

    pub fn ok() -> Self {
        ConsistencyVerdict {
            ok: true,
            ..Default::default()
        }
    }

    pub fn has(&self, op: OpId, reason: Reason) -> bool {
        self.violations
            .iter()
            .any(|v| v.op == op && v.reason == reason)
    }

    fn at_prefix(mut self, n: usize) -> Self {
        for v in &mut self.violations {
            v.prefix_len = Some(n);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("operation {0} is not linearized")]
pub struct NotLinearized(pub OpId);

/// Labels of complete operations, plus the completion of every linearized
/// pending operation (the return its own projection prescribes).
pub fn effective_labels(e: &AbstractExecution, adt: Adt) -> BTreeMap<OpId, OperationLabel> {
    let h = &e.history;
    let mut labels: BTreeMap<OpId, OperationLabel> = h
        .ops()
        .filter_map(|o| h.label_of(o).ok().map(|l| (o, l)))
        .collect();
    for (i, &o) in e.lin.iter().enumerate() {
        if labels.contains_key(&o) {
            continue;
        }
        let Some((m, x)) = h.inv(o) else { continue };
        let mut st = adt.initial();
        for l in projection(e, adt, &labels, i, &e.vis_of(o)) {
            let _ = adt.apply_in(&mut st, &l);
        }
        if let Ok(Expected::Value(y)) = adt.expected_in(&st, m, x) {
            labels.insert(o, OperationLabel::new(m, x, y));
        }
    }
    labels
}

/// Non-read-only labels of `lin[..i] ∩ vis`, in linearization order.
fn projection(
    e: &AbstractExecution,
    adt: Adt,
    labels: &BTreeMap<OpId, OperationLabel>,
    i: usize,
    vis: &OpSet,
) -> Vec<OperationLabel> {
    e.lin[..i]
        .iter()
        .filter(|p| vis.contains(p))
        .filter_map(|p| labels.get(p))
        .filter(|l| !adt.readonly(l))
        .copied()
        .collect()
}

/// `vis(o) = lin⁻¹(o)`.
pub fn visibility_absolute_ok(e: &AbstractExecution, o: OpId) -> Result<bool, NotLinearized> {
    if !e.is_linearized(o) {
        return Err(NotLinearized(o));
    }
    Ok(e.vis_of(o) == e.lin_preds(o))
}

/// Non-read-only members of `hb⁻¹(o) ∪ vis(hb⁻¹(o))`, and the predecessors
/// skipped because their label is unknown.
fn mandated(
    e: &AbstractExecution,
    w: &WeakVisibilitySpec,
    labels: &BTreeMap<OpId, OperationLabel>,
    o: OpId,
) -> (OpSet, Vec<OpId>) {
    let mut need = OpSet::new();
    let mut unknown = Vec::new();
    for p in e.history.hb_preds(o) {
        if !labels.contains_key(&p) {
            unknown.push(p);
            continue;
        }
        for q in std::iter::once(p).chain(e.vis_of(p)) {
            if let Some(l) = labels.get(&q) {
                if !w.readonly(l) {
                    need.insert(q);
                }
            }
        }
    }
    (need, unknown)
}

/// `vis(o) ⊇ (hb⁻¹(o) ∪ vis(hb⁻¹(o))) | R̄`.
pub fn visibility_monotonic_ok(
    e: &AbstractExecution,
    w: &WeakVisibilitySpec,
    o: OpId,
) -> Result<bool, NotLinearized> {
    if !e.is_linearized(o) {
        return Err(NotLinearized(o));
    }
    let labels = effective_labels(e, w.adt);
    let (need, _) = mandated(e, w, &labels, o);
    Ok(need.is_subset(&e.vis_of(o)))
}

fn check_op(
    e: &AbstractExecution,
    w: &WeakVisibilitySpec,
    labels: &BTreeMap<OpId, OperationLabel>,
    o: OpId,
    out: &mut Vec<Violation>,
    warnings: &mut BTreeSet<PendingPredecessor>,
) {
    let Some(i) = e.lin_index(o) else { return };
    let mut flag = |reason| {
        out.push(Violation {
            op: o,
            reason,
            prefix_len: None,
        })
    };
    let vis = e.vis_of(o);
    let preds: OpSet = e.lin[..i].iter().copied().collect();
    if !vis.is_subset(&preds) {
        flag(Reason::VisNotLinPredecessor);
    }
    if !e.history.hb_preds(o).is_subset(&preds) {
        flag(Reason::LinNotExtendingHb);
    }
    let Some((m, x)) = e.history.inv(o) else {
        return;
    };
    match w.kind(m) {
        VisibilityKind::Absolute => {
            if vis != preds {
                flag(Reason::NotAbsolute);
            }
        }
        VisibilityKind::Monotonic => {
            let (need, unknown) = mandated(e, w, labels, o);
            warnings.extend(
                unknown
                    .into_iter()
                    .map(|pred| PendingPredecessor { op: o, pred }),
            );
            if !need.is_subset(&vis) {
                flag(Reason::NotMonotonic);
            }
        }
    }
    let mut st = w.adt.initial();
    let mut admitted = true;
    for l in projection(e, w.adt, labels, i, &vis) {
        admitted &= matches!(w.adt.apply_in(&mut st, &l), Ok(true));
    }
    if admitted {
        if let Some(y) = e.history.ret(o) {
            admitted = matches!(
                w.adt.apply_in(&mut st, &OperationLabel::new(m, x, y)),
                Ok(true)
            );
        } else {
            admitted = w.adt.expected_in(&st, m, x).is_ok();
        }
    }
    if !admitted {
        flag(Reason::ReturnNotInS);
    }
}

fn check_ops(
    e: &AbstractExecution,
    w: &WeakVisibilitySpec,
    ops: impl IntoIterator<Item = OpId>,
) -> ConsistencyVerdict {
    let labels = effective_labels(e, w.adt);
    let mut violations = Vec::new();
    let mut warnings = BTreeSet::new();
    for o in ops {
        check_op(e, w, &labels, o, &mut violations, &mut warnings);
    }
    ConsistencyVerdict::from_parts(violations, warnings)
}

/// Checks every linearized operation of `e` against `w`. Linearized pending
/// operations are completed existentially; unlinearized ones are unchecked.
pub fn execution_consistent(e: &AbstractExecution, w: &WeakVisibilitySpec) -> ConsistencyVerdict {
    check_ops(e, w, e.lin.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MonitorMode {
    /// Any action chunk is a step.
    General,
    /// Steps must be a single call, ret or hb, or `vis(o,_)* lin(o)`.
    Atomic,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MonitorError {
    #[error("inconsistent after {index} actions: {violations:?}", violations = verdict.violations)]
    Inconsistent {
        verdict: ConsistencyVerdict,
        index: usize,
    },
    #[error("action {index} does not fit an atomic step shape")]
    Shape { index: usize },
    #[error(transparent)]
    IllFormed(#[from] TraceError),
}

impl MonitorError {
    pub fn verdict(&self) -> Option<&ConsistencyVerdict> {
        match self {
            MonitorError::Inconsistent { verdict, .. } => Some(verdict),
            _ => None,
        }
    }
}

/// A state of the specification transition system: an abstract execution
/// consistent with the specification.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MonitorState {
    pub exec: AbstractExecution,
    pub spec: Arc<WeakVisibilitySpec>,
    pub mode: MonitorMode,
    wf: WellFormedness,
    consumed: usize,
}

impl MonitorState {
    pub fn new(spec: WeakVisibilitySpec, mode: MonitorMode) -> Self {
        Self::with_spec(Arc::new(spec), mode)
    }

    pub fn with_spec(spec: Arc<WeakVisibilitySpec>, mode: MonitorMode) -> Self {
        MonitorState {
            exec: AbstractExecution::default(),
            spec,
            mode,
            wf: WellFormedness::default(),
            consumed: 0,
        }
    }

    /// Number of actions consumed so far.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Advances by one step in place. On error the state is unspecified and
    /// must be discarded; see [`monitor_step`] for the value-returning form.
    pub fn step(&mut self, actions: &[Action]) -> Result<(), MonitorError> {
        let start = self.consumed;
        if self.mode == MonitorMode::Atomic && !is_atomic_shape(actions) {
            return Err(MonitorError::Shape { index: start });
        }
        let mut touched = OpSet::new();
        let mut full = false;
        for (k, a) in actions.iter().enumerate() {
            let index = start + k;
            self.wf.step(a).map_err(|kind| TraceError::IllFormed {
                index,
                action: *a,
                kind,
            })?;
            let e = &mut self.exec;
            match *a {
                Action::Lin { op } => {
                    touched.insert(op);
                }
                Action::Ret { op, .. } | Action::Vis { op, .. } if e.is_linearized(op) => {
                    if matches!(a, Action::Vis { .. }) {
                        full = true;
                    }
                    touched.insert(op);
                }
                Action::Hb { op2, .. }
                    if e.is_linearized(op2)
                        || e.history.hb_succs(op2).iter().any(|&s| e.is_linearized(s)) =>
                {
                    full = true
                }
                _ => {}
            }
            e.apply(a).map_err(|_| TraceError::IllFormed {
                index,
                action: *a,
                kind: IllFormedKind::HbCycle,
            })?;
        }
        self.consumed += actions.len();
        let verdict = if full {
            execution_consistent(&self.exec, &self.spec)
        } else {
            check_ops(&self.exec, &self.spec, touched)
        };
        if verdict.ok {
            Ok(())
        } else {
            Err(MonitorError::Inconsistent {
                verdict: verdict.at_prefix(self.consumed),
                index: start,
            })
        }
    }
}

/// One transition of the monitor: `f_e` over `actions`, then a consistency
/// check of the operations the step touched.
pub fn monitor_step(
    state: &MonitorState,
    actions: &[Action],
) -> Result<MonitorState, MonitorError> {
    let mut next = state.clone();
    next.step(actions)?;
    Ok(next)
}

/// A single call, ret, hb or silent action, or `vis(o,_)* lin(o)`.
pub fn is_atomic_shape(actions: &[Action]) -> bool {
    match actions {
        [] | [Action::Silent] => true,
        [Action::Call { .. } | Action::Ret { .. } | Action::Hb { .. }] => true,
        [init @ .., Action::Lin { op }] => init
            .iter()
            .all(|a| matches!(a, Action::Vis { op: v, .. } if v == op)),
        _ => false,
    }
}

/// Splits an implementation step into atomic steps. Visibility actions of
/// operations not linearized in the same step are held in `deferred` and
/// released just before the operation's `lin`.
pub fn split_atomic(
    actions: &[Action],
    deferred: &mut BTreeMap<OpId, Vec<OpId>>,
) -> Vec<Vec<Action>> {
    let mut out = Vec::new();
    for a in actions {
        match *a {
            Action::Vis { op, op2 } => deferred.entry(op).or_default().push(op2),
            Action::Lin { op } => {
                let mut step: Vec<Action> = deferred
                    .remove(&op)
                    .unwrap_or_default()
                    .into_iter()
                    .map(|op2| Action::Vis { op, op2 })
                    .collect();
                step.push(*a);
                out.push(step);
            }
            Action::Silent => {}
            other => out.push(vec![other]),
        }
    }
    out
}

/// Groups a raw trace into atomic steps, or reports the first action that
/// cannot start or continue a step.
pub fn group_atomic(trace: &Trace) -> Result<Vec<Vec<Action>>, MonitorError> {
    let mut out = Vec::new();
    let mut open: Option<(OpId, Vec<Action>)> = None;
    for (index, a) in trace.actions.iter().enumerate() {
        match (&mut open, *a) {
            (Some((o, buf)), Action::Vis { op, .. }) if *o == op => buf.push(*a),
            (Some((o, buf)), Action::Lin { op }) if *o == op => {
                buf.push(*a);
                out.push(std::mem::take(buf));
                open = None;
            }
            (Some(_), _) => return Err(MonitorError::Shape { index }),
            (None, Action::Vis { op, .. }) => open = Some((op, vec![*a])),
            (None, Action::Silent) => {}
            (None, other) => out.push(vec![other]),
        }
    }
    match open {
        Some(_) => Err(MonitorError::Shape { index: trace.len() }),
        None => Ok(out),
    }
}

/// Runs the monitor over a trace: one action per step in general mode, and
/// the atomic step grouping in atomic mode.
pub fn product_check(
    trace: &Trace,
    w: &WeakVisibilitySpec,
    mode: MonitorMode,
) -> Result<(), MonitorError> {
    let steps = match mode {
        MonitorMode::General => trace.actions.iter().map(|a| vec![*a]).collect(),
        MonitorMode::Atomic => group_atomic(trace)?,
    };
    product_check_steps(&steps, w, mode)
}

/// Runs the monitor over pre-chunked steps.
pub fn product_check_steps(
    steps: &[Vec<Action>],
    w: &WeakVisibilitySpec,
    mode: MonitorMode,
) -> Result<(), MonitorError> {
    let mut m = MonitorState::new(w.clone(), mode);
    for s in steps {
        m.step(s)?;
    }
    Ok(())
}

/// The verdict of a product check, with the prefix length of a failure.
pub fn product_verdict(
    trace: &Trace,
    w: &WeakVisibilitySpec,
    mode: MonitorMode,
) -> Result<ConsistencyVerdict, MonitorError> {
    match product_check(trace, w, mode) {
        Ok(()) => Ok(ConsistencyVerdict::ok()),
        Err(MonitorError::Inconsistent { verdict, .. }) => Ok(verdict),
        Err(e) => Err(e),
    }
}
