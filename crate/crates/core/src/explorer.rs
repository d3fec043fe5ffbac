//! Deterministic scheduling of client programs over object models.
//!
//! A scheduled step of a thread either starts its next invocation (emitting
//! `call` and a `hb` edge from every operation returned so far) or runs the
//! current operation until it is outside an atomic section again. Purely
//! local commands are folded into the step that precedes them.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consistency::{split_atomic, MonitorError, MonitorMode, MonitorState};
use crate::execution::AbstractExecution;
use crate::history::History;
use crate::memory::{Addr, TaggedMemory};
use crate::program::{Ctx, ExecError, LinState, LocalState, ObjectProgram};
use crate::spec::{Adt, VisibilityKind, WeakVisibilitySpec};
use crate::trace::{Action, Trace};
use crate::value::{Method, OpId, OpSet, Value};

/// Upper bound on commands executed inside one scheduled step.
const MICRO_LIMIT: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Invocation {
    pub method: Method,
    pub arg: Value,
}

impl Invocation {
    pub fn new(method: Method, arg: Value) -> Self {
        Invocation { method, arg }
    }
}

impl fmt::Display for Invocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.arg {
            Value::Nil => write!(f, "{}()", self.method),
            Value::Pair(k, v) => write!(f, "{}({k},{v})", self.method),
            x => write!(f, "{}({x})", self.method),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientParseError {
    #[error("empty client program")]
    Empty,
    #[error("cannot parse invocation `{0}`")]
    Invocation(String),
}

impl FromStr for Invocation {
    type Err = ClientParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ClientParseError::Invocation(s.to_string());
        let s = s.trim();
        let open = s.find('(').ok_or_else(bad)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let method: Method = s[..open].trim().parse().map_err(|_| bad())?;
        let args = inner
            .split(',')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(|a| a.parse::<i64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?;
        let arg = match (method, args.as_slice()) {
            (Method::Put, [k, v]) => Value::Pair(*k, *v),
            (Method::Rem | Method::Get | Method::Has | Method::Push, [x]) => Value::Int(*x),
            (Method::Pop | Method::Size, []) => Value::Nil,
            _ => return Err(bad()),
        };
        Ok(Invocation { method, arg })
    }
}

/// Threads of invocations. Text form: threads separated by newlines or
/// `||`, invocations by `;`, optional braces around each thread.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClientProgram {
    pub threads: Vec<Vec<Invocation>>,
}

impl ClientProgram {
    pub fn new(threads: Vec<Vec<Invocation>>) -> Self {
        ClientProgram { threads }
    }

    pub fn total_ops(&self) -> usize {
        self.threads.iter().map(Vec::len).sum()
    }
}

impl FromStr for ClientProgram {
    type Err = ClientParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut threads = Vec::new();
        for part in s.split(['\n', '|']) {
            let part = part
                .trim()
                .trim_start_matches('{')
                .trim_end_matches('}')
                .trim();
            if part.is_empty() {
                continue;
            }
            let ops = part
                .split(';')
                .filter(|i| !i.trim().is_empty())
                .map(str::parse)
                .collect::<Result<Vec<Invocation>, _>>()?;
            threads.push(ops);
        }
        if threads.iter().all(Vec::is_empty) {
            return Err(ClientParseError::Empty);
        }
        Ok(ClientProgram { threads })
    }
}

impl fmt::Display for ClientProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.threads.iter().enumerate() {
            if i > 0 {
                f.write_str(" || ")?;
            }
            f.write_str("{")?;
            for (j, inv) in t.iter().enumerate() {
                if j > 0 {
                    f.write_str("; ")?;
                }
                write!(f, "{inv}")?;
            }
            f.write_str("}")?;
        }
        Ok(())
    }
}

/// Thread indices, one per scheduled step.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<usize>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ExplorerMode {
    Exhaustive,
    Random { seed: u64, count: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorerConfig {
    /// Scheduled steps one operation may take before it is left pending.
    pub step_budget: usize,
    pub mode: ExplorerMode,
    pub table_size: usize,
    pub values: Vec<i64>,
    /// Stop enumerating after this many schedules.
    pub max_schedules: Option<usize>,
    pub stop_at_first_violation: bool,
}

impl Default for ExplorerConfig {
    fn default() -> Self {
        ExplorerConfig {
            step_budget: 64,
            mode: ExplorerMode::Exhaustive,
            table_size: crate::models::DEFAULT_TABLE_SIZE,
            values: vec![0, 1],
            max_schedules: None,
            stop_at_first_violation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExplorerError {
    #[error("schedule position {index}: thread {thread} cannot take a step")]
    InvalidSchedule { index: usize, thread: usize },
    #[error("thread {thread}: {source}")]
    Exec {
        thread: usize,
        #[source]
        source: ExecError,
    },
    #[error("client invocation {inv}: {source}")]
    Client {
        inv: Invocation,
        #[source]
        source: ExecError,
    },
}

/// How operation identifiers are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IdPolicy {
    /// Sequential in call order, starting at 1.
    CallOrder,
    /// Derived from thread and invocation index, so that states reached by
    /// different interleavings coincide.
    PerThread,
}

impl IdPolicy {
    pub fn per_thread_id(thread: usize, index: usize) -> OpId {
        OpId(((thread as u32 + 1) << 8) | index as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Active {
    op: OpId,
    local: LocalState,
    steps: usize,
    seen: OpSet,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
struct ThreadState {
    issued: usize,
    active: Option<Active>,
}

/// Shared memory, linearization history and thread states of one run.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct World {
    mem: TaggedMemory,
    globals: Vec<Addr>,
    lin: LinState,
    threads: Vec<ThreadState>,
    returned: OpSet,
    next_id: u32,
    policy: IdPolicy,
    count_steps: bool,
}

impl World {
    pub fn new(prog: &ObjectProgram, nthreads: usize, policy: IdPolicy) -> Self {
        let mut mem = TaggedMemory::new();
        let globals = prog.setup(&mut mem);
        World {
            mem,
            globals,
            lin: LinState::default(),
            threads: vec![ThreadState::default(); nthreads],
            returned: OpSet::new(),
            next_id: 1,
            policy,
            count_steps: policy == IdPolicy::CallOrder,
        }
    }

    pub fn memory(&self) -> &TaggedMemory {
        &self.mem
    }

    pub fn globals(&self) -> &[Addr] {
        &self.globals
    }

    pub fn lin_state(&self) -> &LinState {
        &self.lin
    }

    /// Operations currently in progress, with their thread.
    pub fn active_ops(&self) -> Vec<(usize, OpId)> {
        self.threads
            .iter()
            .enumerate()
            .filter_map(|(t, s)| s.active.as_ref().map(|a| (t, a.op)))
            .collect()
    }

    /// Whether thread `t` is inside an operation.
    pub fn in_operation(&self, t: usize) -> bool {
        self.threads[t].active.is_some()
    }

    /// Invocations issued so far by thread `t`.
    pub fn issued(&self, t: usize) -> usize {
        self.threads[t].issued
    }

    /// Whether `t` can take a step, given how many invocations it has.
    pub fn enabled(&self, t: usize, available: usize, budget: usize) -> bool {
        let th = &self.threads[t];
        match &th.active {
            Some(a) => !self.count_steps || a.steps < budget,
            None => th.issued < available,
        }
    }

    /// One scheduled step of thread `t`; `next` is the invocation to start
    /// when the thread is between operations.
    pub fn step(
        &mut self,
        prog: &ObjectProgram,
        t: usize,
        next: Option<Invocation>,
        out: &mut Vec<Action>,
    ) -> Result<(), ExplorerError> {
        let exec_err = |source| ExplorerError::Exec { thread: t, source };
        let (mut active, call_step) = match self.threads[t].active.take() {
            Some(a) => (a, false),
            None => {
                let inv = next.expect("an invocation to start");
                let local = prog
                    .init(inv.method, inv.arg)
                    .map_err(|source| ExplorerError::Client { inv, source })?;
                let op = match self.policy {
                    IdPolicy::CallOrder => {
                        self.next_id += 1;
                        OpId(self.next_id - 1)
                    }
                    IdPolicy::PerThread => IdPolicy::per_thread_id(t, self.threads[t].issued),
                };
                self.threads[t].issued += 1;
                out.push(Action::Call {
                    op,
                    m: inv.method,
                    x: inv.arg,
                });
                out.extend(self.returned.iter().map(|&p| Action::Hb { op: p, op2: op }));
                let a = Active {
                    op,
                    local,
                    steps: 0,
                    seen: OpSet::new(),
                };
                (a, true)
            }
        };
        let mut ctx = Ctx {
            mem: &mut self.mem,
            lin: &mut self.lin,
            globals: &self.globals,
            adt: prog.adt,
            op: active.op,
            seen: &mut active.seen,
            out,
        };
        prog.run_step(&mut active.local, &mut ctx, call_step, MICRO_LIMIT)
            .map_err(exec_err)?;
        if self.count_steps {
            active.steps += 1;
        }
        if prog.done(&active.local) {
            self.returned.insert(active.op);
        } else {
            self.threads[t].active = Some(active);
        }
        Ok(())
    }
}

/// The outcome of replaying one schedule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Run {
    pub schedule: Schedule,
    pub trace: Trace,
    /// Trace length after each scheduled step.
    pub step_ends: Vec<usize>,
    /// Operations left without a return.
    pub pending: OpSet,
}

impl Run {
    /// The trace cut into scheduled steps.
    pub fn steps(&self) -> Vec<Vec<Action>> {
        let mut start = 0;
        self.step_ends
            .iter()
            .map(|&end| {
                let s = self.trace.actions[start..end].to_vec();
                start = end;
                s
            })
            .collect()
    }
}

fn client_next(client: &ClientProgram, w: &World, t: usize) -> Option<Invocation> {
    client.threads[t].get(w.issued(t)).copied()
}

fn enabled_threads(client: &ClientProgram, w: &World, cfg: &ExplorerConfig) -> Vec<usize> {
    (0..client.threads.len())
        .filter(|&t| w.enabled(t, client.threads[t].len(), cfg.step_budget))
        .collect()
}

fn validate(prog: &ObjectProgram, client: &ClientProgram) -> Result<(), ExplorerError> {
    for inv in client.threads.iter().flatten() {
        prog.check_invocation(inv.method, inv.arg)
            .map_err(|source| ExplorerError::Client { inv: *inv, source })?;
    }
    Ok(())
}

fn finish_run(w: &World, schedule: Schedule, trace: Vec<Action>, step_ends: Vec<usize>) -> Run {
    Run {
        schedule,
        trace: Trace::new(trace),
        step_ends,
        pending: w.active_ops().into_iter().map(|(_, o)| o).collect(),
    }
}

/// Deterministically replays a schedule.
pub fn run_schedule(
    prog: &ObjectProgram,
    client: &ClientProgram,
    sched: &Schedule,
    cfg: &ExplorerConfig,
) -> Result<Run, ExplorerError> {
    validate(prog, client)?;
    let mut w = World::new(prog, client.threads.len(), IdPolicy::CallOrder);
    let mut trace = Vec::new();
    let mut ends = Vec::new();
    for (index, &t) in sched.0.iter().enumerate() {
        if t >= client.threads.len() || !w.enabled(t, client.threads[t].len(), cfg.step_budget) {
            return Err(ExplorerError::InvalidSchedule { index, thread: t });
        }
        let next = client_next(client, &w, t);
        w.step(prog, t, next, &mut trace)?;
        ends.push(trace.len());
    }
    Ok(finish_run(&w, sched.clone(), trace, ends))
}

/// Extends `prefix` by always scheduling the lowest enabled thread.
pub fn complete_schedule(
    prog: &ObjectProgram,
    client: &ClientProgram,
    prefix: &[usize],
    cfg: &ExplorerConfig,
) -> Result<Run, ExplorerError> {
    let mut run = run_schedule(prog, client, &Schedule(prefix.to_vec()), cfg)?;
    let mut w = World::new(prog, client.threads.len(), IdPolicy::CallOrder);
    let mut trace = Vec::new();
    for &t in prefix {
        let next = client_next(client, &w, t);
        w.step(prog, t, next, &mut trace)?;
    }
    while let Some(&t) = enabled_threads(client, &w, cfg).first() {
        let next = client_next(client, &w, t);
        w.step(prog, t, next, &mut trace)?;
        run.schedule.0.push(t);
        run.step_ends.push(trace.len());
    }
    Ok(finish_run(&w, run.schedule, trace, run.step_ends))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreStats {
    pub schedules: usize,
    pub distinct_histories: usize,
    pub violations: usize,
    /// Enumeration stopped before covering every schedule.
    pub truncated: bool,
    pub first_violation: Option<Schedule>,
}

struct Enumerator<'a, F> {
    prog: &'a ObjectProgram,
    client: &'a ClientProgram,
    cfg: &'a ExplorerConfig,
    consumer: F,
    stats: ExploreStats,
    histories: HashSet<History>,
    stop: bool,
}

impl<F: FnMut(&Run) -> bool> Enumerator<'_, F> {
    fn visit(&mut self, run: Run, w: &World) {
        if let Ok(h) = crate::execution::history_of_trace(&run.trace) {
            self.histories.insert(h);
        }
        let _ = w;
        self.stats.schedules += 1;
        if (self.consumer)(&run) {
            self.stats.violations += 1;
            if self.stats.first_violation.is_none() {
                self.stats.first_violation = Some(run.schedule.clone());
            }
            if self.cfg.stop_at_first_violation {
                self.stop = true;
            }
        }
        if self
            .cfg
            .max_schedules
            .is_some_and(|m| self.stats.schedules >= m)
        {
            self.stop = true;
        }
    }

    fn dfs(
        &mut self,
        w: World,
        sched: &mut Vec<usize>,
        trace: &mut Vec<Action>,
        ends: &mut Vec<usize>,
    ) -> Result<(), ExplorerError> {
        let enabled = enabled_threads(self.client, &w, self.cfg);
        if enabled.is_empty() {
            let run = finish_run(&w, Schedule(sched.clone()), trace.clone(), ends.clone());
            self.visit(run, &w);
            return Ok(());
        }
        for t in enabled {
            if self.stop {
                if !self.stats.truncated && self.cfg.max_schedules.is_some() {
                    self.stats.truncated = true;
                }
                return Ok(());
            }
            let mut next = w.clone();
            let len = trace.len();
            next.step(self.prog, t, client_next(self.client, &w, t), trace)?;
            sched.push(t);
            ends.push(trace.len());
            self.dfs(next, sched, trace, ends)?;
            sched.pop();
            ends.pop();
            trace.truncate(len);
        }
        Ok(())
    }
}

/// Depth-first enumeration of every maximal schedule within the step
/// budget. The consumer returns `true` for a violating run.
pub fn enumerate_schedules(
    prog: &ObjectProgram,
    client: &ClientProgram,
    cfg: &ExplorerConfig,
    consumer: impl FnMut(&Run) -> bool,
) -> Result<ExploreStats, ExplorerError> {
    validate(prog, client)?;
    let mut e = Enumerator {
        prog,
        client,
        cfg,
        consumer,
        stats: ExploreStats::default(),
        histories: HashSet::new(),
        stop: false,
    };
    let w = World::new(prog, client.threads.len(), IdPolicy::CallOrder);
    e.dfs(w, &mut Vec::new(), &mut Vec::new(), &mut Vec::new())?;
    e.stats.distinct_histories = e.histories.len();
    Ok(e.stats)
}

/// Reproducible random schedules: each step picks an enabled thread
/// uniformly with a seeded generator.
pub fn random_schedules(
    prog: &ObjectProgram,
    client: &ClientProgram,
    cfg: &ExplorerConfig,
    seed: u64,
    count: usize,
    mut consumer: impl FnMut(&Run) -> bool,
) -> Result<ExploreStats, ExplorerError> {
    validate(prog, client)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = ExploreStats::default();
    let mut histories = HashSet::new();
    for _ in 0..count {
        let mut w = World::new(prog, client.threads.len(), IdPolicy::CallOrder);
        let mut trace = Vec::new();
        let mut ends = Vec::new();
        let mut sched = Vec::new();
        loop {
            let enabled = enabled_threads(client, &w, cfg);
            if enabled.is_empty() {
                break;
            }
            let t = enabled[rng.random_range(0..enabled.len())];
            w.step(prog, t, client_next(client, &w, t), &mut trace)?;
            sched.push(t);
            ends.push(trace.len());
        }
        let run = finish_run(&w, Schedule(sched), trace, ends);
        if let Ok(h) = crate::execution::history_of_trace(&run.trace) {
            histories.insert(h);
        }
        stats.schedules += 1;
        if consumer(&run) {
            stats.violations += 1;
            stats.first_violation.get_or_insert(run.schedule.clone());
            if cfg.stop_at_first_violation {
                break;
            }
        }
    }
    stats.distinct_histories = histories.len();
    Ok(stats)
}

/// Runs the monitor over a run's steps: action by action in general mode,
/// and split into atomic-shaped transitions in atomic mode.
pub fn check_run(
    run: &Run,
    spec: &WeakVisibilitySpec,
    mode: MonitorMode,
) -> Result<(), MonitorError> {
    let mut m = MonitorState::new(spec.clone(), mode);
    let mut deferred = BTreeMap::new();
    for step in run.steps() {
        monitor_scheduled_step(&mut m, &mut deferred, &step, mode)?;
    }
    Ok(())
}

/// Where a thread's invocations come from during product exploration.
#[derive(Clone, Debug)]
pub enum ThreadSource {
    /// A fixed client program.
    Client(ClientProgram),
    /// `threads` threads each issuing `ops` invocations drawn freely from
    /// `menu`: every client of that shape at once.
    Menu {
        threads: usize,
        ops: usize,
        menu: Vec<Invocation>,
    },
}

impl ThreadSource {
    fn threads(&self) -> usize {
        match self {
            ThreadSource::Client(c) => c.threads.len(),
            ThreadSource::Menu { threads, .. } => *threads,
        }
    }

    fn available(&self, t: usize) -> usize {
        match self {
            ThreadSource::Client(c) => c.threads[t].len(),
            ThreadSource::Menu { ops, .. } => *ops,
        }
    }

    fn choices(&self, w: &World, t: usize) -> Vec<Option<Invocation>> {
        if w.in_operation(t) {
            return vec![None];
        }
        match self {
            ThreadSource::Client(c) => vec![client_next(c, w, t)],
            ThreadSource::Menu { menu, .. } => menu.iter().copied().map(Some).collect(),
        }
    }
}

/// All invocations of a model over a key range and value domain.
pub fn invocation_menu(prog: &ObjectProgram, keys: &[i64], values: &[i64]) -> Vec<Invocation> {
    let mut out = Vec::new();
    for m in prog.methods() {
        let args: Vec<Value> = match m {
            Method::Put => keys
                .iter()
                .flat_map(|&k| values.iter().map(move |&v| Value::Pair(k, v)))
                .collect(),
            Method::Rem | Method::Get => keys.iter().map(|&k| Value::Int(k)).collect(),
            Method::Has | Method::Push => values.iter().map(|&v| Value::Int(v)).collect(),
            Method::Pop | Method::Size => vec![Value::Nil],
        };
        out.extend(
            args.into_iter()
                .map(|a| Invocation::new(m, a))
                .filter(|i| prog.check_invocation(i.method, i.arg).is_ok()),
        );
    }
    out
}

/// Every client with `threads` threads of exactly `ops` invocations each.
pub fn enumerate_clients(menu: &[Invocation], threads: usize, ops: usize) -> Vec<ClientProgram> {
    let mut seqs: Vec<Vec<Invocation>> = vec![Vec::new()];
    for _ in 0..ops {
        seqs = seqs
            .into_iter()
            .flat_map(|s| {
                menu.iter().map(move |&i| {
                    let mut s = s.clone();
                    s.push(i);
                    s
                })
            })
            .collect();
    }
    let mut clients: Vec<Vec<Vec<Invocation>>> = vec![Vec::new()];
    for _ in 0..threads {
        clients = clients
            .into_iter()
            .flat_map(|c| {
                seqs.iter().map(move |s| {
                    let mut c = c.clone();
                    c.push(s.clone());
                    c
                })
            })
            .collect();
    }
    clients.into_iter().map(ClientProgram::new).collect()
}

/// A violation found by product exploration, replayed with call-order ids.
#[derive(Clone, Debug)]
pub struct Counterexample {
    pub client: ClientProgram,
    pub run: Run,
    pub error: MonitorError,
}

#[derive(Clone, Debug, Default)]
pub struct ProductStats {
    pub states: usize,
    pub transitions: usize,
    pub counterexample: Option<Counterexample>,
}

/// Product states are compared up to their settled prefix: the longest
/// prefix of the linearization made of operations that returned before every
/// active monotonic operation was called. Active absolute operations see the
/// whole prefix when they linearize, and every later operation must see all
/// of its modifiers, so checks depend on that prefix only through the
/// specification state it reaches, its identifiers and which of them are
/// modifiers. Labels of settled operations are therefore left out of the key,
/// and their identifiers are replaced by the places they occur in. With
/// interchangeable threads the key is also minimized over thread orders.
struct ProductKey<'a> {
    world: &'a World,
    exec: &'a AbstractExecution,
    deferred: &'a BTreeMap<OpId, Vec<OpId>>,
    spec: &'a WeakVisibilitySpec,
    symmetric: bool,
}

/// Where a settled identifier occurs in the rest of the state.
#[derive(PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Occurrence {
    Tag(Addr),
    TagReg(usize, usize),
    Seen(usize),
    Vis(OpId),
    Deferred(OpId, usize),
}

#[derive(Hash)]
struct ActiveKey {
    op: OpId,
    steps: usize,
    seen: Vec<OpId>,
    local: (
        Method,
        Value,
        u16,
        Vec<crate::memory::Word>,
        bool,
        Option<Value>,
    ),
    tregs: Vec<Vec<OpId>>,
}

#[derive(Hash)]
struct EncodedKey {
    sigma: crate::spec::AdtState,
    rest: Vec<OpId>,
    ops: Vec<(OpId, Option<(Method, Value)>, Option<Value>, Vec<OpId>)>,
    hb: Vec<(OpId, OpId)>,
    deferred: Vec<(OpId, Vec<OpId>)>,
    cells: Vec<(crate::memory::Word, Vec<OpId>)>,
    lin: Vec<(OpId, crate::value::OperationLabel)>,
    threads: Vec<(usize, Option<ActiveKey>)>,
    returned: Vec<OpId>,
    classes: Vec<(bool, Vec<Occurrence>)>,
}

struct Settled {
    sigma: crate::spec::AdtState,
    len: usize,
    ops: OpSet,
    modifiers: OpSet,
}

impl ProductKey<'_> {
    fn settled(&self) -> Settled {
        let (w, e) = (self.world, self.exec);
        let h = &e.history;
        let adt = self.spec.adt;
        let mut pool = w.returned.clone();
        for (_, a) in w.active_ops() {
            let (m, _) = h.inv(a).expect("active operations were called");
            if self.spec.kind(m) == VisibilityKind::Monotonic {
                pool.retain(|o| h.happens_before(*o, a));
            }
        }
        let len = e.lin.iter().take_while(|o| pool.contains(o)).count();
        let mut sigma = adt.initial();
        let mut modifiers = OpSet::new();
        for &o in &e.lin[..len] {
            let l = h.label_of(o).expect("settled operations are complete");
            if !adt.readonly(&l) {
                adt.apply_in(&mut sigma, &l)
                    .expect("settled prefix is admitted");
                modifiers.insert(o);
            }
        }
        Settled {
            sigma,
            len,
            ops: e.lin[..len].iter().copied().collect(),
            modifiers,
        }
    }

    fn encode(&self, st: &Settled, perm: &[usize]) -> EncodedKey {
        let (w, e) = (self.world, self.exec);
        let h = &e.history;
        let map = |o: OpId| -> OpId {
            match (o.0 >> 8) as usize {
                0 => o,
                t => IdPolicy::per_thread_id(perm[t - 1], (o.0 & 0xff) as usize),
            }
        };
        let live = |o: &OpId| !st.ops.contains(o);
        let strip = |set: &OpSet| -> Vec<OpId> {
            let mut v: Vec<OpId> = set.iter().copied().filter(live).map(map).collect();
            v.sort();
            v
        };

        let mut ops: Vec<_> = h
            .ops()
            .filter(live)
            .map(|o| {
                (
                    map(o),
                    h.inv(o),
                    h.ret(o),
                    e.vis.get(&o).map(strip).unwrap_or_default(),
                )
            })
            .collect();
        ops.sort();
        let mut hb: Vec<(OpId, OpId)> = h
            .hb()
            .iter()
            .filter(|(a, b)| live(a) && live(b))
            .map(|&(a, b)| (map(a), map(b)))
            .collect();
        hb.sort();
        let mut deferred: Vec<(OpId, Vec<OpId>)> = self
            .deferred
            .iter()
            .map(|(o, p)| (map(*o), p.iter().copied().filter(live).map(map).collect()))
            .collect();
        deferred.sort();
        let cells = w
            .mem
            .cells()
            .map(|(_, c)| (c.value, strip(&c.tags)))
            .collect();
        let lin = w
            .lin
            .entries()
            .iter()
            .filter(|(o, _)| live(o))
            .map(|(o, l)| (map(*o), *l))
            .collect();
        let mut threads: Vec<(usize, Option<ActiveKey>)> = Vec::new();
        threads.resize_with(w.threads.len(), || (0, None));
        for (t, th) in w.threads.iter().enumerate() {
            threads[perm[t]] = (
                th.issued,
                th.active.as_ref().map(|a| {
                    let l = &a.local;
                    ActiveKey {
                        op: map(a.op),
                        steps: a.steps,
                        seen: strip(&a.seen),
                        local: (l.method, l.arg, l.pc, l.regs.clone(), l.lock, l.ret),
                        tregs: l.tregs.iter().map(strip).collect(),
                    }
                }),
            );
        }

        let mut signature: BTreeMap<OpId, (bool, Vec<Occurrence>)> = st
            .ops
            .iter()
            .map(|&o| (o, (st.modifiers.contains(&o), Vec::new())))
            .collect();
        let mut note = |o: &OpId, occ: Occurrence| {
            if let Some(sig) = signature.get_mut(o) {
                sig.1.push(occ);
            }
        };
        for (addr, cell) in w.mem.cells() {
            cell.tags
                .iter()
                .for_each(|o| note(o, Occurrence::Tag(addr)));
        }
        for (t, th) in w.threads.iter().enumerate() {
            if let Some(a) = &th.active {
                a.seen
                    .iter()
                    .for_each(|o| note(o, Occurrence::Seen(perm[t])));
                for (r, tags) in a.local.tregs.iter().enumerate() {
                    tags.iter()
                        .for_each(|o| note(o, Occurrence::TagReg(perm[t], r)));
                }
            }
        }
        for (&v, set) in &e.vis {
            if live(&v) {
                set.iter().for_each(|o| note(o, Occurrence::Vis(map(v))));
            }
        }
        for (&o, pending) in self.deferred {
            for (i, p) in pending.iter().enumerate() {
                note(p, Occurrence::Deferred(map(o), i));
            }
        }
        let mut classes: Vec<(bool, Vec<Occurrence>)> = signature
            .into_values()
            .map(|(m, mut occ)| {
                occ.sort();
                (m, occ)
            })
            .collect();
        classes.sort();

        EncodedKey {
            sigma: st.sigma.clone(),
            rest: e.lin[st.len..].iter().copied().map(map).collect(),
            ops,
            hb,
            deferred,
            cells,
            lin,
            threads,
            returned: strip(&w.returned),
            classes,
        }
    }

    fn fingerprint(&self) -> u128 {
        let st = self.settled();
        let n = self.world.threads.len();
        let identity: Vec<usize> = (0..n).collect();
        if !self.symmetric || n < 2 {
            return fingerprint(&(&self.world.globals, self.encode(&st, &identity)));
        }
        permutations(n)
            .into_iter()
            .map(|p| fingerprint(&(&self.world.globals, self.encode(&st, &p))))
            .min()
            .expect("at least one permutation")
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn fingerprint<T: Hash>(x: &T) -> u128 {
    let mut a = DefaultHasher::new();
    x.hash(&mut a);
    let mut b = DefaultHasher::new();
    0x9e37_79b9_7f4a_7c15_u64.hash(&mut b);
    x.hash(&mut b);
    ((a.finish() as u128) << 64) | b.finish() as u128
}

struct Product<'a> {
    prog: &'a ObjectProgram,
    source: &'a ThreadSource,
    spec: &'a WeakVisibilitySpec,
    mode: MonitorMode,
    visited: HashSet<u128>,
    stats: ProductStats,
    path: Vec<(usize, Option<Invocation>)>,
}

/// Feeds one scheduled step to the monitor: action by action in general
/// mode, as atomic-shaped transitions otherwise.
fn monitor_scheduled_step(
    m: &mut MonitorState,
    deferred: &mut BTreeMap<OpId, Vec<OpId>>,
    actions: &[Action],
    mode: MonitorMode,
) -> Result<(), MonitorError> {
    match mode {
        MonitorMode::General => actions
            .iter()
            .try_for_each(|a| m.step(std::slice::from_ref(a))),
        MonitorMode::Atomic => split_atomic(actions, deferred)
            .iter()
            .try_for_each(|s| m.step(s)),
    }
}

impl Product<'_> {
    fn dfs(
        &mut self,
        world: &World,
        monitor: &MonitorState,
        deferred: &BTreeMap<OpId, Vec<OpId>>,
    ) -> Result<bool, ExplorerError> {
        let symmetric = matches!(self.source, ThreadSource::Menu { .. });
        for t in 0..self.source.threads() {
            if !world.enabled(t, self.source.available(t), usize::MAX) {
                continue;
            }
            for inv in self.source.choices(world, t) {
                self.stats.transitions += 1;
                let mut w = world.clone();
                let mut actions = Vec::new();
                w.step(self.prog, t, inv, &mut actions)?;
                self.path.push((t, inv));
                let stepped;
                let (m, d) = if actions.is_empty() {
                    (monitor, deferred)
                } else {
                    let mut m = monitor.clone();
                    let mut d = deferred.clone();
                    if monitor_scheduled_step(&mut m, &mut d, &actions, self.mode).is_err() {
                        return Ok(true);
                    }
                    stepped = (m, d);
                    (&stepped.0, &stepped.1)
                };
                let key = ProductKey {
                    world: &w,
                    exec: &m.exec,
                    deferred: d,
                    spec: self.spec,
                    symmetric,
                };
                if self.visited.insert(key.fingerprint()) {
                    self.stats.states += 1;
                    if self.dfs(&w, m, d)? {
                        return Ok(true);
                    }
                }
                self.path.pop();
            }
        }
        Ok(false)
    }
}

/// Explores the synchronized product of a model and the specification
/// monitor, merging states reached along different interleavings. Every
/// state is checked, so spinning operations need no step budget. Stops at
/// the first violation, which is replayed with call-order ids.
pub fn explore_product(
    prog: &ObjectProgram,
    source: &ThreadSource,
    spec: &WeakVisibilitySpec,
    mode: MonitorMode,
) -> Result<ProductStats, ExplorerError> {
    if let ThreadSource::Client(c) = source {
        validate(prog, c)?;
    }
    let spec = Arc::new(spec.clone());
    let world = World::new(prog, source.threads(), IdPolicy::PerThread);
    let monitor = MonitorState::with_spec(spec.clone(), mode);
    let mut p = Product {
        prog,
        source,
        spec: &spec,
        mode,
        visited: HashSet::new(),
        stats: ProductStats {
            states: 1,
            ..Default::default()
        },
        path: Vec::new(),
    };
    if p.dfs(&world, &monitor, &BTreeMap::new())? {
        let mut threads = vec![Vec::new(); source.threads()];
        for &(t, inv) in &p.path {
            if let Some(i) = inv {
                threads[t].push(i);
            }
        }
        let client = ClientProgram::new(threads);
        let sched = Schedule(p.path.iter().map(|s| s.0).collect());
        let cfg = ExplorerConfig {
            step_budget: usize::MAX,
            ..Default::default()
        };
        let run = run_schedule(prog, &client, &sched, &cfg)?;
        let error = check_run(&run, &spec, mode).expect_err("replay reproduces the violation");
        p.stats.counterexample = Some(Counterexample { client, run, error });
    }
    Ok(p.stats)
}

/// Keys accepted by a model: the table range for maps.
pub fn model_keys(prog: &ObjectProgram, table_size: usize) -> Vec<i64> {
    match prog.adt {
        Adt::Map => (0..table_size as i64).collect(),
        Adt::Queue => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{chm_program, msq_program};

    #[test]
    fn client_text_format() {
        let c: ClientProgram = "{get(1);has(1)} || {put(1,1);put(0,1);put(1,0)}"
            .parse()
            .unwrap();
        assert_eq!(c.threads.len(), 2);
        assert_eq!(
            c.threads[1][2],
            Invocation::new(Method::Put, Value::Pair(1, 0))
        );
        assert_eq!(c.to_string().parse::<ClientProgram>().unwrap(), c);
        let lines: ClientProgram = "get(1); has(1)\nput(1,1); put(0,1); put(1,0)"
            .parse()
            .unwrap();
        assert_eq!(lines, c);
        assert_eq!(
            "pop(); size()"
                .parse::<ClientProgram>()
                .unwrap()
                .total_ops(),
            2
        );
        assert!("put(1)".parse::<ClientProgram>().is_err());
        assert!("".parse::<ClientProgram>().is_err());
        assert!("frob(1)".parse::<ClientProgram>().is_err());
    }

    #[test]
    fn single_put_trace_shape() {
        let p = chm_program(2);
        let c: ClientProgram = "put(1,1)".parse().unwrap();
        let run = complete_schedule(&p, &c, &[], &ExplorerConfig::default()).unwrap();
        assert_eq!(
            run.trace.actions,
            vec![
                Action::Call {
                    op: OpId(1),
                    m: Method::Put,
                    x: Value::Pair(1, 1)
                },
                Action::Lin { op: OpId(1) },
                Action::Ret {
                    op: OpId(1),
                    y: Value::TOP
                },
            ]
        );
        assert_eq!(run.schedule, Schedule(vec![0, 0, 0]));
    }

    #[test]
    fn replay_is_deterministic_and_validated() {
        let p = chm_program(2);
        let c: ClientProgram = "put(1,1) || has(1)".parse().unwrap();
        let cfg = ExplorerConfig::default();
        let s = Schedule(vec![1, 0, 1, 0, 1, 1, 0]);
        let a = run_schedule(&p, &c, &s, &cfg).unwrap();
        let b = run_schedule(&p, &c, &s, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            run_schedule(&p, &c, &Schedule(vec![0, 0, 0, 0]), &cfg),
            Err(ExplorerError::InvalidSchedule {
                index: 3,
                thread: 0
            })
        ));
        let bad: ClientProgram = "put(7,1)".parse().unwrap();
        assert!(matches!(
            run_schedule(&p, &bad, &Schedule(vec![0]), &cfg),
            Err(ExplorerError::Client { .. })
        ));
    }

    #[test]
    fn spinning_pop_stays_pending() {
        let p = msq_program();
        let c: ClientProgram = "pop()".parse().unwrap();
        let cfg = ExplorerConfig {
            step_budget: 5,
            ..Default::default()
        };
        let run = complete_schedule(&p, &c, &[], &cfg).unwrap();
        assert_eq!(run.pending, [OpId(1)].into());
        assert_eq!(run.schedule.0.len(), 5);
    }

    #[test]
    fn random_mode_is_reproducible() {
        let p = chm_program(2);
        let c: ClientProgram = "put(1,1); get(1) || has(1); put(0,1)".parse().unwrap();
        let cfg = ExplorerConfig::default();
        let mut a = Vec::new();
        let mut b = Vec::new();
        random_schedules(&p, &c, &cfg, 7, 20, |r| {
            a.push(r.schedule.clone());
            false
        })
        .unwrap();
        random_schedules(&p, &c, &cfg, 7, 20, |r| {
            b.push(r.schedule.clone());
            false
        })
        .unwrap();
        assert_eq!(a, b);
        let s = random_schedules(&p, &c, &cfg, 7, 0, |_| false).unwrap();
        assert_eq!(s.schedules, 0);
    }

    #[test]
    fn client_enumeration_counts() {
        let p = chm_program(2);
        let menu = invocation_menu(&p, &[0, 1], &[0, 1]);
        assert_eq!(menu.len(), 8);
        assert_eq!(enumerate_clients(&menu[..2], 2, 2).len(), 16);
    }
}
