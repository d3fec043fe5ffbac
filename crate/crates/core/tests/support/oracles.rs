//! Independent reference implementations used as test oracles. Nothing here
//! calls into the crate's sequential specifications or checkers.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::Rng;
use weakvis_core::{Adt, History, Method, OpId, OperationLabel, Value};

/// Sequential map or queue state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Model {
    map: BTreeMap<i64, i64>,
    queue: VecDeque<i64>,
}

impl Model {
    /// Applies an invocation and returns its result.
    pub fn call(&mut self, m: Method, x: Value) -> Value {
        match (m, x) {
            (Method::Put, Value::Pair(k, v)) => Value::Bool(self.map.insert(k, v).is_none()),
            (Method::Rem, Value::Int(k)) => Value::Bool(self.map.remove(&k).is_some()),
            (Method::Get, Value::Int(k)) => self.map.get(&k).map_or(Value::Nil, |v| Value::Int(*v)),
            (Method::Has, Value::Int(v)) => Value::Bool(self.map.values().any(|w| *w == v)),
            (Method::Push, Value::Int(v)) => {
                self.queue.push_back(v);
                Value::Bool(true)
            }
            (Method::Pop, Value::Nil) => self.queue.pop_front().map_or(Value::Empty, Value::Int),
            (Method::Size, Value::Nil) => Value::Int(self.queue.len() as i64),
            _ => panic!("ill-typed invocation {m:?}({x:?})"),
        }
    }

    pub fn lookup(&self, k: i64) -> Option<i64> {
        self.map.get(&k).copied()
    }

    pub fn contents(&self) -> Vec<i64> {
        self.queue.iter().copied().collect()
    }

    /// Whether a label is accepted, advancing the state if so.
    pub fn accept(&mut self, l: &OperationLabel) -> bool {
        let mut next = self.clone();
        if next.call(l.method, l.arg) == l.ret {
            *self = next;
            true
        } else {
            false
        }
    }
}

/// Rule-based recognizer: every label returns what the model computes.
pub fn admits(seq: &[OperationLabel]) -> bool {
    let mut m = Model::default();
    seq.iter().all(|l| m.accept(l))
}

/// Textbook linearizability check for complete histories: depth-first
/// search over minimal operations with memoization of failed
/// (remaining, state) pairs.
pub fn linearizable(h: &History) -> bool {
    let ops: Vec<OpId> = h.ops().collect();
    assert!(ops.len() <= 16);
    let labels: Vec<OperationLabel> = ops.iter().map(|&o| h.label_of(o).unwrap()).collect();
    let preds: Vec<u32> = ops
        .iter()
        .map(|&b| {
            ops.iter()
                .enumerate()
                .filter(|(_, &a)| h.happens_before(a, b))
                .fold(0, |acc, (i, _)| acc | 1 << i)
        })
        .collect();
    fn go(
        done: u32,
        state: &Model,
        labels: &[OperationLabel],
        preds: &[u32],
        failed: &mut HashSet<(u32, Model)>,
    ) -> bool {
        if done.count_ones() as usize == labels.len() {
            return true;
        }
        if failed.contains(&(done, state.clone())) {
            return false;
        }
        for i in 0..labels.len() {
            if done >> i & 1 == 0 && preds[i] & !done == 0 {
                let mut s = state.clone();
                if s.accept(&labels[i]) && go(done | 1 << i, &s, labels, preds, failed) {
                    return true;
                }
            }
        }
        failed.insert((done, state.clone()));
        false
    }
    go(0, &Model::default(), &labels, &preds, &mut HashSet::new())
}

fn random_invocation(rng: &mut impl Rng, adt: Adt, domain: &[i64]) -> (Method, Value) {
    let pick = |rng: &mut dyn rand::RngCore| domain[rng.random_range(0..domain.len())];
    match adt {
        Adt::Map => match rng.random_range(0..4) {
            0 => (Method::Put, Value::Pair(pick(rng), pick(rng))),
            1 => (Method::Rem, Value::Int(pick(rng))),
            2 => (Method::Get, Value::Int(pick(rng))),
            _ => (Method::Has, Value::Int(pick(rng))),
        },
        Adt::Queue => match rng.random_range(0..3) {
            0 => (Method::Push, Value::Int(pick(rng))),
            1 => (Method::Pop, Value::Nil),
            _ => (Method::Size, Value::Nil),
        },
    }
}

fn random_return(rng: &mut impl Rng, m: Method, domain: &[i64], n: usize) -> Value {
    match m {
        Method::Put | Method::Rem | Method::Has => Value::Bool(rng.random()),
        Method::Push => Value::Bool(true),
        Method::Get if rng.random_bool(0.3) => Value::Nil,
        Method::Pop if rng.random_bool(0.3) => Value::Empty,
        Method::Get | Method::Pop => Value::Int(domain[rng.random_range(0..domain.len())]),
        Method::Size => Value::Int(rng.random_range(0..=n as i64)),
    }
}

/// A random complete history with real-time (interval) happens-before.
/// Returns come from a random sequential run, each replaced by a random
/// value with probability `noise`.
pub fn random_history(
    rng: &mut impl Rng,
    adt: Adt,
    n: usize,
    domain: &[i64],
    noise: f64,
) -> History {
    let mut bounds: Vec<(u32, u32)> = (0..n)
        .map(|_| {
            let a = rng.random_range(0..4 * n as u32);
            let b = rng.random_range(a + 1..=4 * n as u32 + 1);
            (a, b)
        })
        .collect();
    bounds.sort();
    let mut model = Model::default();
    let mut labels = Vec::new();
    for i in 0..n {
        let (m, x) = random_invocation(rng, adt, domain);
        let mut y = model.call(m, x);
        if rng.random_bool(noise) {
            y = random_return(rng, m, domain, n);
        }
        labels.push((OpId(i as u32 + 1), OperationLabel::new(m, x, y)));
    }
    let mut hb = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if bounds[i].1 < bounds[j].0 {
                hb.push((OpId(i as u32 + 1), OpId(j as u32 + 1)));
            }
        }
    }
    History::from_labels(&labels, &hb).unwrap()
}
