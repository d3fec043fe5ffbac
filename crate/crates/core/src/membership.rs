//! Offline history membership by witness search, and the generative closure
//! of specification executions used to cross-check it.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::consistency::execution_consistent;
use crate::execution::AbstractExecution;
use crate::history::History;
use crate::spec::{Adt, Expected, VisibilityKind, WeakVisibilitySpec};
use crate::value::{Method, OpId, OpSet, OperationLabel, Value};

/// Linearization and visibility completing a history to a consistent
/// execution. Pending operations that were completed carry their chosen
/// return in `ret`; pending operations absent from `lin` were dropped.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub lin: Vec<OpId>,
    pub vis: BTreeMap<OpId, OpSet>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ret: BTreeMap<OpId, Value>,
}

impl Witness {
    /// The execution this witness builds over `h`.
    pub fn execution(&self, h: &History) -> AbstractExecution {
        let kept: OpSet = self.lin.iter().copied().collect();
        let mut hist = h.restrict(&kept);
        for (&o, &y) in &self.ret {
            hist = hist.with_ret(o, Some(y));
        }
        AbstractExecution {
            history: hist,
            lin: self.lin.clone(),
            vis: self.vis.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub max_ops: usize,
    /// Largest number of visibility sets tried for one operation.
    pub max_vis_candidates: usize,
    pub timeout: Option<Duration>,
    /// Offer read-only predecessors to monotonic operations as well.
    pub unpruned: bool,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds {
            max_ops: 8,
            max_vis_candidates: 1 << 12,
            timeout: None,
            unpruned: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MembershipError {
    #[error("history has {ops} operations, bound is {max}")]
    TooManyOps { ops: usize, max: usize },
    #[error("operation {op} has {count} visibility candidates, bound is {max}")]
    TooManyCandidates { op: OpId, count: usize, max: usize },
    #[error("search timed out")]
    Timeout,
    #[error("closure over {n} operations is not supported (at most {max})")]
    ClosureTooLarge { n: usize, max: usize },
}

/// Linear extensions of a strict partial order, in lexicographic order of
/// operation ids.
pub struct LinearExtensions {
    preds: BTreeMap<OpId, OpSet>,
    stack: Vec<(Vec<OpId>, Vec<OpId>)>,
}

impl LinearExtensions {
    pub fn new(h: &History) -> Self {
        let ops: Vec<OpId> = h.ops().collect();
        let preds = ops.iter().map(|&o| (o, h.hb_preds(o))).collect();
        LinearExtensions {
            stack: vec![(Vec::new(), ops)],
            preds,
        }
    }
}

impl Iterator for LinearExtensions {
    type Item = Vec<OpId>;

    fn next(&mut self) -> Option<Vec<OpId>> {
        while let Some((prefix, rest)) = self.stack.pop() {
            if rest.is_empty() {
                return Some(prefix);
            }
            let placed: OpSet = prefix.iter().copied().collect();
            let ready: Vec<OpId> = rest
                .iter()
                .copied()
                .filter(|o| self.preds[o].is_subset(&placed))
                .collect();
            for &o in ready.iter().rev() {
                let mut p = prefix.clone();
                p.push(o);
                self.stack
                    .push((p, rest.iter().copied().filter(|&r| r != o).collect()));
            }
        }
        None
    }
}

/// Sequence admitted after applying `prefix` then `l`.
fn admitted(adt: Adt, prefix: &[OperationLabel], l: &OperationLabel) -> bool {
    let mut st = adt.initial();
    for p in prefix {
        match adt.apply_in(&mut st, p) {
            Ok(true) => {}
            _ => return false,
        }
    }
    matches!(adt.apply_in(&mut st, l), Ok(true))
}

/// Subsets of `pool` in order of size, then lexicographically.
fn subsets_by_size(pool: &[OpId]) -> Vec<OpSet> {
    let n = pool.len();
    let mut masks: Vec<u32> = (0..1u32 << n).collect();
    masks.sort_by_key(|m| (m.count_ones(), m.reverse_bits()));
    masks
        .into_iter()
        .map(|m| {
            (0..n)
                .filter(|i| m >> i & 1 == 1)
                .map(|i| pool[i])
                .collect()
        })
        .collect()
}

struct Search<'a> {
    w: &'a WeakVisibilitySpec,
    labels: BTreeMap<OpId, OperationLabel>,
    preds: BTreeMap<OpId, OpSet>,
    bounds: &'a SearchBounds,
    deadline: Option<Instant>,
    lin: Vec<OpId>,
    vis: BTreeMap<OpId, OpSet>,
    failed: HashSet<(Vec<OpId>, Vec<(OpId, OpSet)>)>,
}

impl Search<'_> {
    fn readonly(&self, o: OpId) -> bool {
        self.w.readonly(&self.labels[&o])
    }

    fn consistent_with(&self, o: OpId, vis: &OpSet) -> bool {
        let proj: Vec<OperationLabel> = self
            .lin
            .iter()
            .filter(|p| vis.contains(p) && !self.readonly(**p))
            .map(|p| self.labels[p])
            .collect();
        admitted(self.w.adt, &proj, &self.labels[&o])
    }

    fn candidates(&self, o: OpId) -> Result<Vec<OpSet>, MembershipError> {
        let placed: OpSet = self.lin.iter().copied().collect();
        match self.w.kind(self.labels[&o].method) {
            VisibilityKind::Absolute => Ok(vec![placed]),
            VisibilityKind::Monotonic => {
                let mut mandated = OpSet::new();
                for p in &self.preds[&o] {
                    if !self.readonly(*p) {
                        mandated.insert(*p);
                    }
                    mandated.extend(self.vis[p].iter().filter(|v| !self.readonly(**v)));
                }
                let optional: Vec<OpId> = placed
                    .iter()
                    .copied()
                    .filter(|p| {
                        !mandated.contains(p) && (self.bounds.unpruned || !self.readonly(*p))
                    })
                    .collect();
                let count = 1usize
                    .checked_shl(optional.len() as u32)
                    .unwrap_or(usize::MAX);
                if count > self.bounds.max_vis_candidates {
                    return Err(MembershipError::TooManyCandidates {
                        op: o,
                        count,
                        max: self.bounds.max_vis_candidates,
                    });
                }
                Ok(subsets_by_size(&optional)
                    .into_iter()
                    .map(|s| s.union(&mandated).copied().collect())
                    .collect())
            }
        }
    }

    /// Memo key: the placed operations with the visibility facts later
    /// checks can observe.
    fn key(&self) -> (Vec<OpId>, Vec<(OpId, OpSet)>) {
        let mut placed = self.lin.clone();
        placed.sort();
        let modifiers: Vec<OpId> = self
            .lin
            .iter()
            .copied()
            .filter(|o| !self.readonly(*o))
            .collect();
        let vis = self
            .vis
            .iter()
            .map(|(o, s)| {
                (
                    *o,
                    s.iter().copied().filter(|v| !self.readonly(*v)).collect(),
                )
            })
            .collect();
        let mut k = modifiers;
        k.push(OpId(u32::MAX));
        k.extend(placed);
        (k, vis)
    }

    fn dfs(&mut self) -> Result<bool, MembershipError> {
        if self.deadline.is_some_and(|d| Instant::now() > d) {
            return Err(MembershipError::Timeout);
        }
        if self.lin.len() == self.labels.len() {
            return Ok(true);
        }
        let key = self.key();
        if self.failed.contains(&key) {
            return Ok(false);
        }
        let placed: OpSet = self.lin.iter().copied().collect();
        let ready: Vec<OpId> = self
            .labels
            .keys()
            .copied()
            .filter(|o| !placed.contains(o) && self.preds[o].is_subset(&placed))
            .collect();
        for o in ready {
            for vis in self.candidates(o)? {
                if !self.consistent_with(o, &vis) {
                    continue;
                }
                self.lin.push(o);
                self.vis.insert(o, vis);
                if self.dfs()? {
                    return Ok(true);
                }
                self.lin.pop();
                self.vis.remove(&o);
            }
        }
        self.failed.insert(key);
        Ok(false)
    }
}

fn search_complete(
    h: &History,
    w: &WeakVisibilitySpec,
    bounds: &SearchBounds,
    deadline: Option<Instant>,
) -> Result<Option<(Vec<OpId>, BTreeMap<OpId, OpSet>)>, MembershipError> {
    let labels = h
        .ops()
        .map(|o| (o, h.label_of(o).expect("complete history")))
        .collect();
    let preds = h.ops().map(|o| (o, h.hb_preds(o))).collect();
    let mut s = Search {
        w,
        labels,
        preds,
        bounds,
        deadline,
        lin: Vec::new(),
        vis: BTreeMap::new(),
        failed: HashSet::new(),
    };
    if s.dfs()? {
        Ok(Some((s.lin, s.vis)))
    } else {
        Ok(None)
    }
}

/// Values occurring in a history, plus 0.
fn history_domain(h: &History) -> Vec<i64> {
    let mut d = BTreeSet::from([0]);
    for o in h.ops() {
        let (_, x) = h.inv(o).expect("op in history");
        for v in [Some(x), h.ret(o)].into_iter().flatten() {
            match v {
                Value::Int(i) => {
                    d.insert(i);
                }
                Value::Pair(k, v) => {
                    d.extend([k, v]);
                }
                _ => {}
            }
        }
    }
    d.into_iter().collect()
}

/// Searches for a witness that `h` belongs to the histories of `w`. Each
/// pending operation is either dropped or completed with a return value
/// over the values occurring in `h`.
pub fn history_in_spec(
    h: &History,
    w: &WeakVisibilitySpec,
    bounds: &SearchBounds,
) -> Result<Option<Witness>, MembershipError> {
    if h.len() > bounds.max_ops {
        return Err(MembershipError::TooManyOps {
            ops: h.len(),
            max: bounds.max_ops,
        });
    }
    let deadline = bounds.timeout.map(|t| Instant::now() + t);
    let pending: Vec<OpId> = h.pending().into_iter().collect();
    let domain = history_domain(h);
    let choices: Vec<Vec<Option<Value>>> = pending
        .iter()
        .map(|&o| {
            let (m, _) = h.inv(o).expect("op in history");
            std::iter::once(None)
                .chain(
                    w.adt
                        .return_candidates(m, &domain, h.len())
                        .into_iter()
                        .map(Some),
                )
                .collect()
        })
        .collect();
    let mut pick = vec![0usize; pending.len()];
    loop {
        let mut cur = h.clone();
        let mut ret = BTreeMap::new();
        let mut dropped = OpSet::new();
        for (i, &o) in pending.iter().enumerate() {
            match choices[i][pick[i]] {
                Some(y) => {
                    cur = cur.with_ret(o, Some(y));
                    ret.insert(o, y);
                }
                None => {
                    dropped.insert(o);
                }
            }
        }
        if !dropped.is_empty() {
            let keep = cur.op_set().difference(&dropped).copied().collect();
            cur = cur.restrict(&keep);
        }
        if let Some((lin, vis)) = search_complete(&cur, w, bounds, deadline)? {
            let witness = Witness { lin, vis, ret };
            debug_assert!(execution_consistent(&witness.execution(h), w).ok);
            return Ok(Some(witness));
        }
        // Odometer over the completion choices.
        let mut i = 0;
        loop {
            if i == pick.len() {
                return Ok(None);
            }
            pick[i] += 1;
            if pick[i] < choices[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

/// Largest operation count accepted by the generative closure.
pub const MAX_CLOSURE_OPS: usize = 4;

/// Sequences of at most `n` admitted labels over `domain`.
pub fn admitted_sequences(adt: Adt, n: usize, domain: &[i64]) -> Vec<Vec<OperationLabel>> {
    let invocations: Vec<(Method, Value)> = adt
        .methods()
        .iter()
        .flat_map(|&m| adt.arguments(m, domain).into_iter().map(move |x| (m, x)))
        .collect();
    let mut out = vec![Vec::new()];
    let mut frontier = vec![(Vec::new(), adt.initial())];
    for _ in 0..n {
        let mut next = Vec::new();
        for (seq, st) in &frontier {
            for &(m, x) in &invocations {
                let Ok(Expected::Value(y)) = adt.expected_in(st, m, x) else {
                    continue;
                };
                let l = OperationLabel::new(m, x, y);
                let mut st2 = st.clone();
                if adt.apply_in(&mut st2, &l) == Ok(true) {
                    let mut s2: Vec<OperationLabel> = seq.clone();
                    s2.push(l);
                    out.push(s2.clone());
                    next.push((s2, st2));
                }
            }
        }
        frontier = next;
    }
    out
}

/// The sequential, absolute execution of a label sequence.
pub fn seed_execution(seq: &[OperationLabel]) -> AbstractExecution {
    let ids: Vec<(OpId, OperationLabel)> = seq
        .iter()
        .enumerate()
        .map(|(i, l)| (OpId(i as u32 + 1), *l))
        .collect();
    let hb: Vec<(OpId, OpId)> = ids
        .iter()
        .flat_map(|a| {
            ids.iter()
                .filter(move |b| a.0 < b.0)
                .map(move |b| (a.0, b.0))
        })
        .collect();
    let h = History::from_labels(&ids, &hb).expect("total order");
    let lin: Vec<OpId> = ids.iter().map(|p| p.0).collect();
    let mut e = AbstractExecution {
        history: h,
        lin: lin.clone(),
        vis: BTreeMap::new(),
    };
    for &o in &lin {
        e.set_vis(o, lin.iter().copied().filter(|&p| p < o).collect());
    }
    e
}

/// Transitively closed subsets of a strict order.
fn sub_orders(hb: &BTreeSet<(OpId, OpId)>) -> Vec<BTreeSet<(OpId, OpId)>> {
    let edges: Vec<(OpId, OpId)> = hb.iter().copied().collect();
    (0..1u64 << edges.len())
        .map(|m| {
            (0..edges.len())
                .filter(|i| m >> i & 1 == 1)
                .map(|i| edges[i])
                .collect::<BTreeSet<_>>()
        })
        .filter(|s| {
            s.iter().all(|&(a, b)| {
                s.iter()
                    .filter(|&&(c, _)| c == b)
                    .all(|&(_, d)| s.contains(&(a, d)))
            })
        })
        .collect()
}

/// Returns recomputed in linearization order from each operation's view.
fn recompute_returns(e: &AbstractExecution, adt: Adt) -> Option<AbstractExecution> {
    let mut out = e.clone();
    let mut labels: BTreeMap<OpId, OperationLabel> = BTreeMap::new();
    for &o in &e.lin {
        let (m, x) = e.history.inv(o)?;
        let proj: Vec<OperationLabel> = e
            .lin
            .iter()
            .filter(|p| e.vis_of(o).contains(p))
            .map(|p| labels[p])
            .filter(|l| !adt.readonly(l))
            .collect();
        let y = match adt.return_of(&proj, m, x).ok()? {
            Expected::Value(y) => y,
            Expected::Nondet => e.history.ret(o)?,
        };
        labels.insert(o, OperationLabel::new(m, x, y));
        out.history = out.history.with_ret(o, Some(y));
    }
    Some(out)
}

/// The closure of seed executions over at most `n` operations under
/// happens-before weakening and consistent visibility weakening.
pub fn enumerate_executions(
    w: &WeakVisibilitySpec,
    n: usize,
    domain: &[i64],
) -> Result<HashSet<AbstractExecution>, MembershipError> {
    if n > MAX_CLOSURE_OPS {
        return Err(MembershipError::ClosureTooLarge {
            n,
            max: MAX_CLOSURE_OPS,
        });
    }
    let mut seen: HashSet<AbstractExecution> = HashSet::new();
    let mut work: VecDeque<AbstractExecution> = VecDeque::new();
    for seq in admitted_sequences(w.adt, n, domain) {
        let e = seed_execution(&seq);
        if seen.insert(e.clone()) {
            work.push_back(e);
        }
    }
    while let Some(e) = work.pop_front() {
        let mut next = Vec::new();
        for hb in sub_orders(e.history.hb()) {
            let h = e.history.with_hb(hb).expect("sub-order of an order");
            next.push(AbstractExecution {
                history: h,
                ..e.clone()
            });
        }
        let vis_choices: Vec<Vec<OpSet>> = e
            .lin
            .iter()
            .map(|o| {
                let pool: Vec<OpId> = e.vis_of(*o).into_iter().collect();
                subsets_by_size(&pool)
            })
            .collect();
        let mut pick = vec![0usize; e.lin.len()];
        'outer: loop {
            let mut cand = e.clone();
            for (i, &o) in e.lin.iter().enumerate() {
                cand.set_vis(o, vis_choices[i][pick[i]].clone());
            }
            if let Some(c) = recompute_returns(&cand, w.adt) {
                if execution_consistent(&c, w).ok {
                    next.push(c);
                }
            }
            let mut i = 0;
            loop {
                if i == pick.len() {
                    break 'outer;
                }
                pick[i] += 1;
                if pick[i] < vis_choices[i].len() {
                    break;
                }
                pick[i] = 0;
                i += 1;
            }
        }
        for c in next {
            if !seen.contains(&c) {
                seen.insert(c.clone());
                work.push_back(c);
            }
        }
    }
    Ok(seen)
}

type CanonicalHistory = (Vec<(Method, Value, Option<Value>)>, Vec<(u32, u32)>);

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// A representative of a history up to renaming of operations.
pub fn canonical_history(h: &History) -> CanonicalHistory {
    let ops: Vec<OpId> = h.ops().collect();
    permutations(ops.len())
        .into_iter()
        .map(|perm| {
            let pos = |o: OpId| perm[ops.iter().position(|&p| p == o).expect("op")] as u32;
            let mut by_pos = vec![(Method::Get, Value::Nil, None); ops.len()];
            for &o in &ops {
                let (m, x) = h.inv(o).expect("op");
                by_pos[pos(o) as usize] = (m, x, h.ret(o));
            }
            let mut hb: Vec<(u32, u32)> = h.hb().iter().map(|&(a, b)| (pos(a), pos(b))).collect();
            hb.sort();
            (by_pos, hb)
        })
        .min()
        .expect("at least one permutation")
}

/// Every complete history over at most `n` operations whose labels draw
/// arguments and returns from `domain`, one per isomorphism class.
pub fn enumerate_histories(adt: Adt, n: usize, domain: &[i64]) -> Vec<History> {
    let labels: Vec<OperationLabel> = adt
        .methods()
        .iter()
        .flat_map(|&m| {
            adt.arguments(m, domain).into_iter().flat_map(move |x| {
                adt.return_candidates(m, domain, n)
                    .into_iter()
                    .map(move |y| OperationLabel::new(m, x, y))
            })
        })
        .collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for k in 0..=n {
        let ids: Vec<OpId> = (1..=k as u32).map(OpId).collect();
        let total: BTreeSet<(OpId, OpId)> = ids
            .iter()
            .flat_map(|&a| ids.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect();
        // Every strict order is isomorphic to a sub-order of the id order.
        let orders = sub_orders(&total);
        let mut pick = vec![0usize; k];
        loop {
            let ls: Vec<(OpId, OperationLabel)> = ids
                .iter()
                .zip(&pick)
                .map(|(&o, &i)| (o, labels[i]))
                .collect();
            for hb in &orders {
                let edges: Vec<(OpId, OpId)> = hb.iter().copied().collect();
                let h = History::from_labels(&ls, &edges).expect("acyclic");
                if seen.insert(canonical_history(&h)) {
                    out.push(h);
                }
            }
            let mut i = 0;
            loop {
                if i == k {
                    break;
                }
                pick[i] += 1;
                if pick[i] < labels.len() {
                    break;
                }
                pick[i] = 0;
                i += 1;
            }
            if i == k {
                break;
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub histories: usize,
    pub members: usize,
    pub closure_executions: usize,
    /// Histories produced by the closure but rejected by the search.
    pub generated_not_found: Vec<History>,
    /// Histories accepted by the search but never produced by the closure.
    pub found_not_generated: Vec<History>,
}

impl CrossValidation {
    pub fn ok(&self) -> bool {
        self.generated_not_found.is_empty() && self.found_not_generated.is_empty()
    }
}

/// Compares the generative closure with the witness search on every history
/// of at most `n` operations over `domain`.
pub fn cross_validate(
    w: &WeakVisibilitySpec,
    n: usize,
    domain: &[i64],
) -> Result<CrossValidation, MembershipError> {
    let closure = enumerate_executions(w, n, domain)?;
    let generated: HashSet<CanonicalHistory> = closure
        .iter()
        .map(|e| canonical_history(&e.history))
        .collect();
    let bounds = SearchBounds {
        max_ops: n.max(1),
        ..SearchBounds::default()
    };
    let mut report = CrossValidation {
        closure_executions: closure.len(),
        ..Default::default()
    };
    let mut found = HashSet::new();
    for h in enumerate_histories(w.adt, n, domain) {
        report.histories += 1;
        let member = history_in_spec(&h, w, &bounds)?.is_some();
        let key = canonical_history(&h);
        if member {
            report.members += 1;
            found.insert(key.clone());
        }
        if member != generated.contains(&key) {
            if member {
                report.found_not_generated.push(h);
            } else {
                report.generated_not_found.push(h);
            }
        }
    }
    // Closure histories outside the enumerated label space.
    for e in &closure {
        let key = canonical_history(&e.history);
        if !found.contains(&key) && history_in_spec(&e.history, w, &bounds)?.is_none() {
            report.generated_not_found.push(e.history.clone());
            found.insert(key);
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplementationVerdict {
    pub checked: usize,
    pub failing: Vec<History>,
}

impl ImplementationVerdict {
    pub fn ok(&self) -> bool {
        self.failing.is_empty()
    }
}

/// Whether every history has a witness.
pub fn implementation_consistent<'a>(
    histories: impl IntoIterator<Item = &'a History>,
    w: &WeakVisibilitySpec,
    bounds: &SearchBounds,
) -> Result<ImplementationVerdict, MembershipError> {
    let mut v = ImplementationVerdict::default();
    for h in histories {
        v.checked += 1;
        if history_in_spec(h, w, bounds)?.is_none() {
            v.failing.push(h.clone());
        }
    }
    Ok(v)
}
