//! Histories: invocations, returns and a strict happens-before order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::value::{Method, OpId, OpSet, OperationLabel, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HistoryError {
    #[error("operation {0} is not part of the history")]
    UnknownOp(OpId),
    #[error("operation {0} is already invoked")]
    DuplicateOp(OpId),
    #[error("operation {0} already returned")]
    DuplicateRet(OpId),
    #[error("happens-before edge ({0}, {1}) would create a cycle")]
    HbCycle(OpId, OpId),
    #[error("operation {0} is incomplete")]
    Incomplete(OpId),
}

/// A history `⟨O, inv, ret, hb⟩`. The happens-before relation is kept
/// transitively closed; `ops` is the key set of `inv`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "HistoryRepr", into = "HistoryRepr")]
pub struct History {
    inv: BTreeMap<OpId, (Method, Value)>,
    ret: BTreeMap<OpId, Value>,
    hb: BTreeSet<(OpId, OpId)>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a complete history from labels and happens-before generators.
    pub fn from_labels(
        labels: &[(OpId, OperationLabel)],
        hb: &[(OpId, OpId)],
    ) -> Result<Self, HistoryError> {
        let mut h = History::new();
        for (o, l) in labels {
            h.add_op(*o, l.method, l.arg)?;
            h.set_ret(*o, l.ret)?;
        }
        for &(a, b) in hb {
            h.add_hb(a, b)?;
        }
        Ok(h)
    }

    pub fn add_op(&mut self, o: OpId, m: Method, x: Value) -> Result<(), HistoryError> {
        if self.inv.contains_key(&o) {
            return Err(HistoryError::DuplicateOp(o));
        }
        self.inv.insert(o, (m, x));
        Ok(())
    }

    pub fn set_ret(&mut self, o: OpId, y: Value) -> Result<(), HistoryError> {
        if !self.inv.contains_key(&o) {
            return Err(HistoryError::UnknownOp(o));
        }
        if self.ret.insert(o, y).is_some() {
            return Err(HistoryError::DuplicateRet(o));
        }
        Ok(())
    }

    /// Adds `a hb b` and closes the relation transitively.
    pub fn add_hb(&mut self, a: OpId, b: OpId) -> Result<(), HistoryError> {
        for o in [a, b] {
            if !self.inv.contains_key(&o) {
                return Err(HistoryError::UnknownOp(o));
            }
        }
        if a == b || self.hb.contains(&(b, a)) {
            return Err(HistoryError::HbCycle(a, b));
        }
        if self.hb.contains(&(a, b)) {
            return Ok(());
        }
        let mut before = self.hb_preds(a);
        before.insert(a);
        let mut after = self.hb_succs(b);
        after.insert(b);
        for &x in &before {
            for &y in &after {
                self.hb.insert((x, y));
            }
        }
        Ok(())
    }

    pub fn ops(&self) -> impl Iterator<Item = OpId> + '_ {
        self.inv.keys().copied()
    }

    pub fn op_set(&self) -> OpSet {
        self.inv.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.inv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv.is_empty()
    }

    pub fn contains(&self, o: OpId) -> bool {
        self.inv.contains_key(&o)
    }

    pub fn inv(&self, o: OpId) -> Option<(Method, Value)> {
        self.inv.get(&o).copied()
    }

    pub fn ret(&self, o: OpId) -> Option<Value> {
        self.ret.get(&o).copied()
    }

    pub fn hb(&self) -> &BTreeSet<(OpId, OpId)> {
        &self.hb
    }

    pub fn happens_before(&self, a: OpId, b: OpId) -> bool {
        self.hb.contains(&(a, b))
    }

    pub fn hb_preds(&self, o: OpId) -> OpSet {
        self.hb.iter().filter(|e| e.1 == o).map(|e| e.0).collect()
    }

    pub fn hb_succs(&self, o: OpId) -> OpSet {
        self.hb.iter().filter(|e| e.0 == o).map(|e| e.1).collect()
    }

    pub fn is_op_complete(&self, o: OpId) -> bool {
        self.ret.contains_key(&o)
    }

    pub fn is_complete(&self) -> bool {
        self.ret.len() == self.inv.len()
    }

    pub fn pending(&self) -> OpSet {
        self.ops().filter(|o| !self.ret.contains_key(o)).collect()
    }

    /// The label `⟨m, x, y⟩` of a complete operation.
    pub fn label_of(&self, o: OpId) -> Result<OperationLabel, HistoryError> {
        let (m, x) = self.inv(o).ok_or(HistoryError::UnknownOp(o))?;
        let y = self.ret(o).ok_or(HistoryError::Incomplete(o))?;
        Ok(OperationLabel::new(m, x, y))
    }

    /// Sub-history on `keep`, restricting every component.
    pub fn restrict(&self, keep: &OpSet) -> History {
        History {
            inv: self
                .inv
                .iter()
                .filter(|(o, _)| keep.contains(o))
                .map(|(o, v)| (*o, *v))
                .collect(),
            ret: self
                .ret
                .iter()
                .filter(|(o, _)| keep.contains(o))
                .map(|(o, v)| (*o, *v))
                .collect(),
            hb: self
                .hb
                .iter()
                .filter(|(a, b)| keep.contains(a) && keep.contains(b))
                .copied()
                .collect(),
        }
    }

    /// True when `self` is obtained from `other` by restriction to a subset of
    /// operations and of returns.
    pub fn is_subhistory_of(&self, other: &History) -> bool {
        self.inv.iter().all(|(o, v)| other.inv.get(o) == Some(v))
            && self.ret.iter().all(|(o, v)| other.ret.get(o) == Some(v))
            && self.hb.is_subset(&other.hb)
            && other
                .hb
                .iter()
                .filter(|(a, b)| self.contains(*a) && self.contains(*b))
                .all(|e| self.hb.contains(e))
    }

    /// Replaces happens-before by the closure of `edges`.
    pub fn with_hb<I>(&self, edges: I) -> Result<History, HistoryError>
    where
        I: IntoIterator<Item = (OpId, OpId)>,
    {
        let mut h = History {
            inv: self.inv.clone(),
            ret: self.ret.clone(),
            hb: BTreeSet::new(),
        };
        for (a, b) in edges {
            h.add_hb(a, b)?;
        }
        Ok(h)
    }

    /// Replaces the return of a complete or pending operation; `None` drops it.
    pub fn with_ret(&self, o: OpId, y: Option<Value>) -> History {
        let mut h = self.clone();
        match y {
            Some(y) => {
                h.ret.insert(o, y);
            }
            None => {
                h.ret.remove(&o);
            }
        }
        h
    }

    /// Renames every identifier through `f`, which must be injective on `ops`.
    pub fn relabel(&self, f: impl Fn(OpId) -> OpId) -> History {
        History {
            inv: self.inv.iter().map(|(o, v)| (f(*o), *v)).collect(),
            ret: self.ret.iter().map(|(o, v)| (f(*o), *v)).collect(),
            hb: self.hb.iter().map(|(a, b)| (f(*a), f(*b))).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HistoryRepr {
    ops: Vec<OpId>,
    inv: BTreeMap<OpId, (Method, Value)>,
    #[serde(default)]
    ret: BTreeMap<OpId, Value>,
    #[serde(default)]
    hb: Vec<(OpId, OpId)>,
}

impl From<History> for HistoryRepr {
    fn from(h: History) -> Self {
        HistoryRepr {
            ops: h.ops().collect(),
            hb: h.hb.iter().copied().collect(),
            inv: h.inv,
            ret: h.ret,
        }
    }
}

impl TryFrom<HistoryRepr> for History {
    type Error = HistoryError;

    fn try_from(r: HistoryRepr) -> Result<Self, Self::Error> {
        let mut h = History::new();
        for o in &r.ops {
            let (m, x) = *r.inv.get(o).ok_or(HistoryError::UnknownOp(*o))?;
            h.add_op(*o, m, x)?;
        }
        if let Some(o) = r.inv.keys().find(|o| !h.contains(**o)) {
            return Err(HistoryError::UnknownOp(*o));
        }
        for (o, y) in r.ret {
            h.set_ret(o, y)?;
        }
        for (a, b) in r.hb {
            h.add_hb(a, b)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lbl(m: Method, x: Value, y: Value) -> OperationLabel {
        OperationLabel::new(m, x, y)
    }

    #[test]
    fn hb_is_closed_and_acyclic() {
        let mut h = History::new();
        for i in 1..=3 {
            h.add_op(OpId(i), Method::Get, Value::Int(1)).unwrap();
        }
        h.add_hb(OpId(2), OpId(3)).unwrap();
        h.add_hb(OpId(1), OpId(2)).unwrap();
        assert!(h.happens_before(OpId(1), OpId(3)));
        assert_eq!(
            h.add_hb(OpId(3), OpId(1)),
            Err(HistoryError::HbCycle(OpId(3), OpId(1)))
        );
        assert_eq!(
            h.add_hb(OpId(1), OpId(1)),
            Err(HistoryError::HbCycle(OpId(1), OpId(1)))
        );
        assert_eq!(
            h.add_hb(OpId(1), OpId(9)),
            Err(HistoryError::UnknownOp(OpId(9)))
        );
    }

    #[test]
    fn label_of_complete_and_incomplete() {
        let mut h = History::new();
        h.add_op(OpId(3), Method::Get, Value::Int(1)).unwrap();
        assert_eq!(h.label_of(OpId(3)), Err(HistoryError::Incomplete(OpId(3))));
        h.set_ret(OpId(3), Value::Int(1)).unwrap();
        assert_eq!(
            h.label_of(OpId(3)).unwrap(),
            lbl(Method::Get, Value::Int(1), Value::Int(1))
        );
        assert!(h.is_complete());
    }

    #[test]
    fn json_round_trip_and_format() {
        let h = History::from_labels(
            &[
                (OpId(1), lbl(Method::Put, Value::Pair(1, 1), Value::TOP)),
                (OpId(2), lbl(Method::Get, Value::Int(1), Value::Int(1))),
            ],
            &[(OpId(1), OpId(2))],
        )
        .unwrap();
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(
            json,
            r#"{"ops":[1,2],"inv":{"1":["put",[1,1]],"2":["get",1]},"ret":{"1":true,"2":1},"hb":[[1,2]]}"#
        );
        assert_eq!(serde_json::from_str::<History>(&json).unwrap(), h);
        let bad = r#"{"ops":[1],"inv":{"1":["get",1]},"ret":{"2":1},"hb":[]}"#;
        assert!(serde_json::from_str::<History>(bad).is_err());
    }

    #[test]
    fn restriction_is_a_subhistory() {
        let mut h = History::new();
        for i in 1..=3 {
            h.add_op(OpId(i), Method::Has, Value::Int(0)).unwrap();
        }
        h.add_hb(OpId(1), OpId(2)).unwrap();
        h.add_hb(OpId(2), OpId(3)).unwrap();
        let keep: OpSet = [OpId(1), OpId(3)].into();
        let r = h.restrict(&keep);
        assert!(r.happens_before(OpId(1), OpId(3)));
        assert!(r.is_subhistory_of(&h));
        assert!(!h.is_subhistory_of(&r));
    }
}
