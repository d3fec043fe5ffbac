use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use weakvis_core::{History, Method, OpId, OperationLabel, Value as V};

const EXAMPLE_CLIENT: &str = "{get(1); has(1)} || {put(1,1); put(0,1); put(1,0)}";

fn weakvis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weakvis"))
        .args(args)
        .output()
        .unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("weakvis-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

/// get(1)=1 and has(1)=⊥ alongside three puts, with program order.
fn example_history() -> History {
    let l = |m, x, y| OperationLabel::new(m, x, y);
    let labels = [
        (OpId(1), l(Method::Get, V::Int(1), V::Int(1))),
        (OpId(2), l(Method::Put, V::Pair(1, 1), V::TOP)),
        (OpId(3), l(Method::Has, V::Int(1), V::BOT)),
        (OpId(4), l(Method::Put, V::Pair(0, 1), V::TOP)),
        (OpId(5), l(Method::Put, V::Pair(1, 0), V::BOT)),
    ];
    History::from_labels(
        &labels,
        &[(OpId(1), OpId(3)), (OpId(2), OpId(4)), (OpId(4), OpId(5))],
    )
    .unwrap()
}

#[test]
fn explore_passes_on_the_correct_map() {
    let out = weakvis(&[
        "explore",
        "--model",
        "chm",
        "--client",
        EXAMPLE_CLIENT,
        "--table-size",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["schema"], "weakvis/1");
    assert_eq!(r["ok"], true);
    assert!(r["statistics"]["schedules"].as_u64().unwrap() > 1000);
}

#[test]
fn explore_fails_under_absolute_has() {
    let out = weakvis(&[
        "explore",
        "--model",
        "chm",
        "--client",
        EXAMPLE_CLIENT,
        "--vis",
        "has=absolute",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert!(r["counterexample"]["schedule"].is_array());
    assert!(r["counterexample"]["error"].is_string());
}

#[test]
fn stateful_exploration_catches_a_mutant() {
    let out = weakvis(&[
        "explore",
        "--model",
        "chm-mutant-b",
        "--all-clients",
        "2",
        "--table-size",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["ok"], false);
}

#[test]
fn explore_reads_clients_from_files_and_writes_reports() {
    let client = scratch("client.txt");
    std::fs::write(&client, "push(1); push(2)\nsize()\n").unwrap();
    let dest = scratch("report.json");
    let out = weakvis(&[
        "explore",
        "--model",
        "msq",
        "--client",
        client.to_str().unwrap(),
        "--out",
        dest.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&dest).unwrap()).unwrap();
    assert_eq!(r["config"]["client"], "{push(1); push(2)} || {size()}");
}

#[test]
fn random_mode_is_reproducible() {
    let args = [
        "explore",
        "--model",
        "msq",
        "--client",
        "{push(1); pop()} || {size(); push(2)}",
        "--mode",
        "random",
        "--seed",
        "5",
        "--count",
        "50",
    ];
    let a = report(&weakvis(&args));
    let b = report(&weakvis(&args));
    assert_eq!(a["statistics"], b["statistics"]);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(
        weakvis(&["explore", "--model", "nope", "--client", "{get(1)}"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        weakvis(&["explore", "--model", "chm", "--client", "{get(}"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        weakvis(&["explore", "--model", "msq", "--client", "{get(1)}"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        weakvis(&["cross-validate", "--spec", "map", "-n", "9"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        weakvis(&["check-trace", "/nonexistent/trace.jsonl", "--spec", "map"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn check_history_reports_witness_or_none() {
    let path = scratch("history.json");
    std::fs::write(&path, serde_json::to_string(&example_history()).unwrap()).unwrap();
    let p = path.to_str().unwrap();

    let out = weakvis(&["check-history", p, "--spec", "map"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["witness"]["lin"].as_array().unwrap().len(), 5);

    let out = weakvis(&["check-history", p, "--spec", "map", "--vis", "has=absolute"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(
        report(&out)["witness"],
        serde_json::json!({"member": false})
    );
}

#[test]
fn empty_trace_is_accepted() {
    let path = scratch("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    let out = weakvis(&["check-trace", path.to_str().unwrap(), "--spec", "queue"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn golden_trace_needs_visibility_grouping_in_atomic_mode() {
    let trace = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/ex_execution.jsonl");
    let out = weakvis(&["check-trace", trace, "--spec", "map"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["statistics"]["actions"]["call"], 5);
    assert_eq!(
        weakvis(&["check-trace", trace, "--spec", "map", "--atomic"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn cross_validation_at_small_bounds() {
    let out = weakvis(&[
        "cross-validate",
        "--spec",
        "queue",
        "-n",
        "2",
        "--values",
        "1,2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!(r["statistics"]["members"].as_u64().unwrap() > 0);
}
