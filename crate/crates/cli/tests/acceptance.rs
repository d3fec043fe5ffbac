//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails or exceeds its time limit.

#[path = "../../core/tests/support/oracles.rs"]
mod oracles;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weakvis_core::explorer::{
    enumerate_schedules, explore_product, invocation_menu, model_keys, random_schedules,
    ClientProgram, ExplorerConfig, Invocation, Run, ThreadSource,
};
use weakvis_core::membership::{
    cross_validate, enumerate_histories, history_in_spec, SearchBounds,
};
use weakvis_core::memory::{TaggedMemory, Word};
use weakvis_core::models::{chm_program, msq_program, mutant_programs};
use weakvis_core::program::ObjectProgram;
use weakvis_core::{
    execution_consistent, execution_of_trace, history_of_trace, make_weak_spec, AbstractExecution,
    Adt, History, Method, MonitorMode, OpId, OpSet, OperationLabel, Value, VisibilityKind,
    WeakVisibilitySpec,
};

type Outcome = Result<String, String>;

const EXAMPLE_CLIENT: &str = "{get(1); has(1)} || {put(1,1); put(0,1); put(1,0)}";

fn wm() -> WeakVisibilitySpec {
    make_weak_spec(Adt::Map, &[]).unwrap()
}

fn wq() -> WeakVisibilitySpec {
    make_weak_spec(Adt::Queue, &[]).unwrap()
}

fn labels(h: &History) -> BTreeMap<OpId, OperationLabel> {
    h.ops().map(|o| (o, h.label_of(o).unwrap())).collect()
}

fn find_op(h: &History, m: Method) -> OpId {
    h.ops().find(|&o| h.inv(o).unwrap().0 == m).unwrap()
}

/// The first complete history of the example client with get(1)=1 and
/// has(1)=⊥, and the number of schedules and distinct histories explored.
fn example_history() -> Result<(History, usize, usize), String> {
    let prog = chm_program(2);
    let client: ClientProgram = EXAMPLE_CLIENT.parse().map_err(|e| format!("{e}"))?;
    let mut found = None;
    let stats = enumerate_schedules(&prog, &client, &ExplorerConfig::default(), |run: &Run| {
        if found.is_none() && run.pending.is_empty() {
            let h = history_of_trace(&run.trace).unwrap();
            let ls = labels(&h);
            let get = ls
                .values()
                .any(|l| l.method == Method::Get && l.ret == Value::Int(1));
            let has = ls
                .values()
                .any(|l| l.method == Method::Has && l.ret == Value::Bool(false));
            if get && has {
                found = Some(h);
            }
        }
        false
    })
    .map_err(|e| e.to_string())?;
    let h = found.ok_or("no schedule with get(1)=1 and has(1)=⊥")?;
    Ok((h, stats.schedules, stats.distinct_histories))
}

fn criterion_1() -> Outcome {
    let (_, schedules, histories) = example_history()?;
    Ok(format!("{schedules} schedules, {histories} histories"))
}

/// Every visibility choice over every linear extension, judged by the
/// consistency checker. Returns the non-read-only has-visibility label sets
/// of all consistent executions.
fn all_has_visibilities(h: &History, w: &WeakVisibilitySpec) -> BTreeSet<BTreeSet<OperationLabel>> {
    fn extensions(h: &History, prefix: &mut Vec<OpId>, out: &mut Vec<Vec<OpId>>) {
        if prefix.len() == h.len() {
            out.push(prefix.clone());
            return;
        }
        for o in h.ops() {
            if !prefix.contains(&o) && h.hb_preds(o).iter().all(|p| prefix.contains(p)) {
                prefix.push(o);
                extensions(h, prefix, out);
                prefix.pop();
            }
        }
    }
    fn subsets(s: &[OpId]) -> Vec<OpSet> {
        (0..1u32 << s.len())
            .map(|m| {
                (0..s.len())
                    .filter(|i| m >> i & 1 == 1)
                    .map(|i| s[i])
                    .collect()
            })
            .collect()
    }
    let mut lins = Vec::new();
    extensions(h, &mut Vec::new(), &mut lins);
    let has = find_op(h, Method::Has);
    let mut out = BTreeSet::new();
    for lin in lins {
        let choices: Vec<Vec<OpSet>> = lin
            .iter()
            .enumerate()
            .map(|(i, &o)| match w.kind(h.inv(o).unwrap().0) {
                VisibilityKind::Absolute => vec![lin[..i].iter().copied().collect()],
                VisibilityKind::Monotonic => subsets(&lin[..i]),
            })
            .collect();
        let mut idx = vec![0usize; lin.len()];
        loop {
            let mut e = AbstractExecution::new(h.clone());
            e.lin = lin.clone();
            for (i, &o) in lin.iter().enumerate() {
                e.set_vis(o, choices[i][idx[i]].clone());
            }
            if execution_consistent(&e, w).ok {
                let seen = e
                    .vis_of(has)
                    .iter()
                    .map(|&o| h.label_of(o).unwrap())
                    .filter(|l| !w.readonly(l))
                    .collect();
                out.insert(seen);
            }
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < choices[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
    }
    out
}

fn criterion_2() -> Outcome {
    let (h, _, _) = example_history()?;
    // put(1,1) inserts the key; put(1,0) then overwrites it.
    let expected: BTreeSet<OperationLabel> = [(1, 1, true), (1, 0, false)]
        .into_iter()
        .map(|(k, v, y)| OperationLabel::new(Method::Put, Value::Pair(k, v), Value::Bool(y)))
        .collect();
    let w = wm();
    let wit = history_in_spec(&h, &w, &SearchBounds::default())
        .map_err(|e| e.to_string())?
        .ok_or("no witness against the weak map spec")?;
    let has = find_op(&h, Method::Has);
    let seen: BTreeSet<OperationLabel> = wit
        .vis
        .get(&has)
        .cloned()
        .unwrap_or_default()
        .iter()
        .map(|&o| h.label_of(o).unwrap())
        .filter(|l| !w.readonly(l))
        .collect();
    if seen != expected {
        return Err(format!("witness has-visibility {seen:?}"));
    }
    let all = all_has_visibilities(&h, &w);
    if all.len() != 1 || !all.contains(&expected) {
        return Err(format!("consistent has-visibilities {all:?}"));
    }
    let strong = make_weak_spec(Adt::Map, &[(Method::Has, VisibilityKind::Absolute)]).unwrap();
    if history_in_spec(&h, &strong, &SearchBounds::default())
        .map_err(|e| e.to_string())?
        .is_some()
    {
        return Err("the all-absolute spec admits the history".into());
    }
    Ok("unique has-visibility {put(1,1), put(1,0)}; all-absolute: NONE".into())
}

fn product(prog: &ObjectProgram, keys: &[i64], values: &[i64], w: &WeakVisibilitySpec) -> Outcome {
    let menu = invocation_menu(prog, keys, values);
    let clients = menu.len().pow(6);
    let source = ThreadSource::Menu {
        threads: 2,
        ops: 3,
        menu,
    };
    let stats =
        explore_product(prog, &source, w, MonitorMode::General).map_err(|e| e.to_string())?;
    match stats.counterexample {
        None => Ok(format!(
            "{clients} clients, {} states, 0 violations",
            stats.states
        )),
        Some(c) => Err(format!("violation on {}: {}", c.client, c.error)),
    }
}

fn criterion_3() -> Outcome {
    let prog = chm_program(2);
    product(&prog, &model_keys(&prog, 2), &[0, 1], &wm())
}

fn criterion_4() -> Outcome {
    product(&msq_program(), &[], &[1, 2], &wq())
}

fn criterion_5() -> Outcome {
    let mut found = Vec::new();
    for m in mutant_programs(2) {
        let (w, keys, values) = match m.program.adt {
            Adt::Map => (wm(), model_keys(&m.program, 2), vec![0, 1]),
            Adt::Queue => (wq(), vec![], vec![1, 2]),
        };
        let menu = invocation_menu(&m.program, &keys, &values);
        let source = ThreadSource::Menu {
            threads: 2,
            ops: 3,
            menu,
        };
        let stats = explore_product(&m.program, &source, &w, MonitorMode::General)
            .map_err(|e| e.to_string())?;
        let c = stats.counterexample.ok_or(format!("{} survives", m.name))?;
        if m.changes_histories {
            let h = history_of_trace(&c.run.trace).map_err(|e| e.to_string())?;
            if history_in_spec(&h, &w, &SearchBounds::default())
                .map_err(|e| e.to_string())?
                .is_some()
            {
                return Err(format!("{}: counterexample history has a witness", m.name));
            }
        }
        found.push(format!("{} on {}", m.name, c.client));
    }
    Ok(format!("{} mutants killed", found.len()))
}

fn criterion_6() -> Outcome {
    let mut parts = Vec::new();
    for (w, domain) in [(wm(), [0, 1]), (wq(), [1, 2])] {
        let started = Instant::now();
        let r = cross_validate(&w, 3, &domain).map_err(|e| e.to_string())?;
        if !r.ok() {
            return Err(format!(
                "{}: {} generated but not found, {} found but not generated",
                w.adt,
                r.generated_not_found.len(),
                r.found_not_generated.len()
            ));
        }
        if started.elapsed() > Duration::from_secs(120) {
            return Err(format!("{} took {:.1?}", w.adt, started.elapsed()));
        }
        parts.push(format!(
            "{}: {} histories, {} members",
            w.adt, r.histories, r.members
        ));
    }
    Ok(parts.join("; "))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut members = 0;
    for i in 0..1000 {
        let adt = if i % 2 == 0 { Adt::Map } else { Adt::Queue };
        let n = rng.random_range(1..=5);
        let h = oracles::random_history(&mut rng, adt, n, &[0, 1], 0.3);
        let ours = history_in_spec(
            &h,
            &WeakVisibilitySpec::absolute(adt),
            &SearchBounds::default(),
        )
        .map_err(|e| e.to_string())?
        .is_some();
        if ours != oracles::linearizable(&h) {
            return Err(format!(
                "disagreement on {}",
                serde_json::to_string(&h).unwrap()
            ));
        }
        members += ours as usize;
    }
    Ok(format!("1000 histories agree ({members} linearizable)"))
}

fn random_client(rng: &mut ChaCha8Rng, menu: &[Invocation]) -> ClientProgram {
    let threads = (0..2)
        .map(|_| {
            (0..rng.random_range(1..=3))
                .map(|_| menu[rng.random_range(0..menu.len())])
                .collect()
        })
        .collect();
    ClientProgram::new(threads)
}

fn fold_projection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut prefixes = 0;
    for prog in [chm_program(2), msq_program()] {
        let menu = invocation_menu(&prog, &model_keys(&prog, 2), &[1, 2]);
        for _ in 0..50 {
            let client = random_client(&mut rng, &menu);
            let mut bad = None;
            random_schedules(
                &prog,
                &client,
                &ExplorerConfig::default(),
                rng.random(),
                10,
                |run: &Run| {
                    for n in 0..=run.trace.len() {
                        let p = run.trace.prefix(n);
                        prefixes += 1;
                        if execution_of_trace(&p).unwrap().history != history_of_trace(&p).unwrap()
                        {
                            bad = Some(p.to_jsonl());
                            return true;
                        }
                    }
                    false
                },
            )
            .map_err(|e| e.to_string())?;
            if let Some(t) = bad {
                return Err(format!("projection differs on\n{t}"));
            }
        }
    }
    Ok(format!("fold projection on {prefixes} prefixes"))
}

/// hb edges whose removal leaves a strict partial order.
fn covers(h: &History) -> Vec<(OpId, OpId)> {
    h.hb()
        .iter()
        .copied()
        .filter(|&(a, b)| {
            !h.ops()
                .any(|c| h.happens_before(a, c) && h.happens_before(c, b))
        })
        .collect()
}

fn hb_weakening() -> Outcome {
    let mut checked = 0;
    let bounds = SearchBounds::default();
    let spaces: [(WeakVisibilitySpec, usize, &[i64]); 4] = [
        (wm(), 3, &[0, 1]),
        (wm(), 4, &[1]),
        (wq(), 3, &[1, 2]),
        (wq(), 4, &[1, 2]),
    ];
    for (w, n, domain) in spaces {
        let mut member_cache: HashSet<History> = HashSet::new();
        for h in enumerate_histories(w.adt, n, domain) {
            if h.hb().is_empty()
                || history_in_spec(&h, &w, &bounds)
                    .map_err(|e| e.to_string())?
                    .is_none()
            {
                continue;
            }
            for (a, b) in covers(&h) {
                let weaker = History::from_labels(
                    &labels(&h).into_iter().collect::<Vec<_>>(),
                    &h.hb()
                        .iter()
                        .copied()
                        .filter(|&e| e != (a, b))
                        .collect::<Vec<_>>(),
                )
                .unwrap();
                checked += 1;
                if member_cache.contains(&weaker) {
                    continue;
                }
                if history_in_spec(&weaker, &w, &bounds)
                    .map_err(|e| e.to_string())?
                    .is_none()
                {
                    return Err(format!(
                        "weakening loses membership: {}",
                        serde_json::to_string(&h).unwrap()
                    ));
                }
                member_cache.insert(weaker);
            }
        }
    }
    Ok(format!("hb-weakening on {checked} edge removals"))
}

fn tag_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut steps = 0;
    for _ in 0..200 {
        let mut mem = TaggedMemory::new();
        let mut shadow: Vec<(Word, OpSet)> = Vec::new();
        for _ in 0..rng.random_range(1..4) {
            let init: Vec<Word> = (0..rng.random_range(1..4))
                .map(|_| Word::Int(rng.random_range(0..3)))
                .collect();
            let base = mem.alloc(&init);
            if base.0 as usize != shadow.len() {
                return Err("allocation reused an address".into());
            }
            shadow.extend(init.into_iter().map(|w| (w, OpSet::new())));
        }
        for _ in 0..50 {
            let x = rng.random_range(0..shadow.len());
            let addr = weakvis_core::memory::Addr(x as u32);
            let o = OpId(rng.random_range(1..6));
            let y = Word::Int(rng.random_range(0..3));
            if rng.random_bool(0.5) {
                mem.store(addr, y, o).unwrap();
                shadow[x] = (y, &shadow[x].1 | &OpSet::from([o]));
            } else {
                let expect = Word::Int(rng.random_range(0..3));
                let r = mem.cas(addr, expect, y, o).unwrap();
                let ok = shadow[x].0 == expect;
                if ok {
                    shadow[x] = (y, &shadow[x].1 | &OpSet::from([o]));
                }
                if r.cas_ok != ok {
                    return Err("cas success differs from the shadow".into());
                }
            }
            steps += 1;
            for (a, c) in mem.cells() {
                if (c.value, &c.tags) != (shadow[a.0 as usize].0, &shadow[a.0 as usize].1) {
                    return Err(format!("cell {a} diverges from the shadow"));
                }
            }
        }
    }
    Ok(format!("tags exact over {steps} writes"))
}

fn r_compatibility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut deletions = 0;
    for i in 0..4000 {
        let adt = if i % 2 == 0 { Adt::Map } else { Adt::Queue };
        let n = rng.random_range(1..=5);
        let h = oracles::random_history(&mut rng, adt, n, &[0, 1], 0.0);
        let seq: Vec<OperationLabel> = labels(&h).into_values().collect();
        if !adt.admits(&seq).unwrap() {
            return Err(format!("sequential run rejected: {seq:?}"));
        }
        for j in 0..seq.len() {
            if adt.readonly(&seq[j]) {
                let mut s = seq.clone();
                s.remove(j);
                deletions += 1;
                if !adt.admits(&s).unwrap() || !oracles::admits(&s) {
                    return Err(format!("deleting read-only {} breaks {seq:?}", seq[j]));
                }
            }
        }
    }
    Ok(format!("R-compatibility over {deletions} deletions"))
}

fn criterion_8() -> Outcome {
    let parts = [
        fold_projection()?,
        hb_weakening()?,
        tag_exactness()?,
        r_compatibility()?,
    ];
    Ok(parts.join("; "))
}

fn criterion_9() -> Outcome {
    let trace = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/ex_execution.jsonl");
    let run = |extra: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_weakvis"))
            .args(["check-trace", trace, "--spec", "map"])
            .args(extra)
            .output()
            .map(|o| o.status.code())
            .map_err(|e| e.to_string())
    };
    let weak = run(&[])?;
    let strong = run(&["--vis", "has=absolute"])?;
    match (weak, strong) {
        (Some(0), Some(1)) => Ok("weak spec: exit 0; has=absolute: exit 1".into()),
        other => Err(format!("exit codes {other:?}")),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        (
            "counterexample reproduction",
            Duration::from_secs(10),
            criterion_1,
        ),
        ("unique weak witness", Duration::from_secs(10), criterion_2),
        (
            "map model, all 2x3 clients",
            Duration::from_secs(300),
            criterion_3,
        ),
        (
            "queue model, all 2x3 clients",
            Duration::from_secs(300),
            criterion_4,
        ),
        ("mutant detection", Duration::from_secs(300), criterion_5),
        (
            "closure and search agree",
            Duration::from_secs(240),
            criterion_6,
        ),
        (
            "linearizability degeneration",
            Duration::from_secs(120),
            criterion_7,
        ),
        (
            "structural invariants",
            Duration::from_secs(120),
            criterion_8,
        ),
        ("golden example trace", Duration::from_secs(1), criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let outcome = f();
        let took = started.elapsed();
        let verdict = match outcome {
            Ok(detail) if took <= limit => format!("PASS  {detail}"),
            Ok(detail) => format!("FAIL  {detail}; over the {limit:?} limit"),
            Err(e) => format!("FAIL  {e}"),
        };
        if verdict.starts_with("FAIL") {
            failed += 1;
        }
        println!("[{}] {name} ({:.2?}): {verdict}", i + 1, took);
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
