use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use weakvis_core::explorer::{
    check_run, enumerate_schedules, explore_product, invocation_menu, model_keys, random_schedules,
    ClientProgram, ExploreStats, ExplorerConfig, ExplorerMode, Run, ThreadSource,
};
use weakvis_core::membership::{self, history_in_spec, SearchBounds};
use weakvis_core::models::program_by_name;
use weakvis_core::spec::parse_override;
use weakvis_core::trace::{action_counts, diagnostics};
use weakvis_core::{
    consistency::product_verdict, make_weak_spec, Adt, History, MonitorError, MonitorMode, Trace,
    WeakVisibilitySpec,
};

use crate::report::RunReport;
use crate::{ExploreArgs, ExploreMode, SpecArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
}

type Outcome = Result<(RunReport, Option<PathBuf>), CliError>;

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn resolve_spec(args: &SpecArgs, default: Option<Adt>) -> Result<WeakVisibilitySpec, CliError> {
    let adt = match (&args.spec, default) {
        (Some(s), _) => s
            .parse::<Adt>()
            .map_err(|e| CliError::Usage(e.to_string()))?,
        (None, Some(a)) => a,
        (None, None) => return Err(CliError::Usage("--spec is required".into())),
    };
    let overrides = args
        .vis
        .iter()
        .map(|v| parse_override(v))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    make_weak_spec(adt, &overrides).map_err(|e| CliError::Usage(e.to_string()))
}

fn spec_json(w: &WeakVisibilitySpec) -> Value {
    serde_json::to_value(w).expect("spec serializes")
}

fn client_text(arg: &str) -> Result<String, CliError> {
    let p = Path::new(arg);
    if p.is_file() {
        read(p)
    } else {
        Ok(arg.to_string())
    }
}

fn violation_json(client: &ClientProgram, run: &Run, err: &MonitorError) -> Value {
    json!({
        "client": client.to_string(),
        "schedule": run.schedule,
        "trace": run.trace,
        "error": err.to_string(),
        "verdict": err.verdict(),
    })
}

pub fn explore(args: &ExploreArgs) -> Outcome {
    let started = Instant::now();
    let prog = program_by_name(&args.model, args.table_size)
        .ok_or_else(|| CliError::Usage(format!("unknown model `{}`", args.model)))?;
    let w = resolve_spec(&args.spec, Some(prog.adt))?;
    if w.adt != prog.adt {
        return Err(CliError::Usage(format!(
            "model `{}` implements {}, not {}",
            prog.name, prog.adt, w.adt
        )));
    }
    if args.step_budget == 0 || args.table_size == 0 {
        return Err(CliError::Usage("budgets must be positive".into()));
    }
    let mode = if args.atomic {
        MonitorMode::Atomic
    } else {
        MonitorMode::General
    };
    let mode_name = match args.mode {
        ExploreMode::Exhaustive => "exhaustive",
        ExploreMode::Random => "random",
        ExploreMode::Stateful => "stateful",
    };
    let mut config = json!({
        "model": prog.name,
        "spec": spec_json(&w),
        "mode": mode_name,
        "atomic": args.atomic,
        "step_budget": args.step_budget,
        "table_size": args.table_size,
    });

    if let Some(ops) = args.all_clients {
        let menu = invocation_menu(&prog, &model_keys(&prog, args.table_size), &args.values);
        config["all_clients"] = json!({"threads": args.threads, "ops": ops});
        config["values"] = json!(args.values);
        config["mode"] = json!("stateful");
        let clients = (menu.len() as f64).powi((ops * args.threads) as i32);
        let source = ThreadSource::Menu {
            threads: args.threads,
            ops,
            menu,
        };
        let stats = explore_product(&prog, &source, &w, mode)
            .map_err(|e| CliError::Input(e.to_string()))?;
        let mut report = RunReport::new("explore", config, stats.counterexample.is_none(), started);
        report.statistics =
            json!({"states": stats.states, "transitions": stats.transitions, "clients": clients});
        if let Some(c) = &stats.counterexample {
            report.counterexample = violation_json(&c.client, &c.run, &c.error);
        }
        return Ok((report, args.out.clone()));
    }

    let text = client_text(args.client.as_deref().expect("clap requires a client"))?;
    let client: ClientProgram = text.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
    config["client"] = json!(client.to_string());
    let cfg = ExplorerConfig {
        step_budget: args.step_budget,
        mode: match args.mode {
            ExploreMode::Random => ExplorerMode::Random {
                seed: args.seed,
                count: args.count,
            },
            _ => ExplorerMode::Exhaustive,
        },
        table_size: args.table_size,
        values: args.values.clone(),
        max_schedules: args.max_schedules,
        stop_at_first_violation: false,
    };

    if args.mode == ExploreMode::Stateful {
        let stats = explore_product(&prog, &ThreadSource::Client(client.clone()), &w, mode)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let mut report = RunReport::new("explore", config, stats.counterexample.is_none(), started);
        report.statistics = json!({"states": stats.states, "transitions": stats.transitions});
        if let Some(c) = &stats.counterexample {
            report.counterexample = violation_json(&c.client, &c.run, &c.error);
        }
        return Ok((report, args.out.clone()));
    }

    let mut first: Option<Value> = None;
    let consumer = |run: &Run| match check_run(run, &w, mode) {
        Ok(()) => false,
        Err(e) => {
            first.get_or_insert_with(|| violation_json(&client, run, &e));
            true
        }
    };
    let stats: ExploreStats = match args.mode {
        ExploreMode::Random => {
            config["seed"] = json!(args.seed);
            config["count"] = json!(args.count);
            random_schedules(&prog, &client, &cfg, args.seed, args.count, consumer)
        }
        _ => enumerate_schedules(&prog, &client, &cfg, consumer),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut report = RunReport::new("explore", config, stats.violations == 0, started);
    report.statistics = serde_json::to_value(&stats).expect("stats serialize");
    report.counterexample = first.unwrap_or(Value::Null);
    Ok((report, args.out.clone()))
}

pub fn check_history(file: &Path, spec: &SpecArgs, max_ops: usize) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let w = resolve_spec(spec, None)?;
    let h: History = serde_json::from_str(&read(file)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
    let bounds = SearchBounds {
        max_ops,
        ..SearchBounds::default()
    };
    let config = json!({"file": file, "spec": spec_json(&w), "max_ops": max_ops});
    match history_in_spec(&h, &w, &bounds) {
        Ok(Some(wit)) => {
            let mut r = RunReport::new("check-history", config, true, started);
            r.witness = serde_json::to_value(&wit).expect("witness serializes");
            Ok(r)
        }
        Ok(None) => {
            let mut r = RunReport::new("check-history", config, false, started);
            r.witness = json!({"member": false});
            Ok(r)
        }
        Err(e) => Err(CliError::Input(format!("bounds exceeded: {e}"))),
    }
}

pub fn check_trace(file: &Path, spec: &SpecArgs, atomic: bool) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let w = resolve_spec(spec, None)?;
    let trace = Trace::from_jsonl(&read(file)?).map_err(|e| CliError::Input(e.to_string()))?;
    let mode = if atomic {
        MonitorMode::Atomic
    } else {
        MonitorMode::General
    };
    let verdict = product_verdict(&trace, &w, mode).map_err(|e| CliError::Input(e.to_string()))?;
    let config = json!({"file": file, "spec": spec_json(&w), "atomic": atomic});
    let mut r = RunReport::new("check-trace", config, verdict.ok, started);
    r.statistics = json!({
        "actions": action_counts(&trace),
        "diagnostics": diagnostics(&trace).iter().map(|d| format!("{d:?}")).collect::<Vec<_>>(),
    });
    r.verdict = serde_json::to_value(&verdict).expect("verdict serializes");
    Ok(r)
}

pub fn cross_validate(spec: &SpecArgs, n: usize, values: &[i64]) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let w = resolve_spec(spec, None)?;
    if n > membership::MAX_CLOSURE_OPS {
        return Err(CliError::Usage(format!(
            "n = {n} exceeds the closure bound {}",
            membership::MAX_CLOSURE_OPS
        )));
    }
    let report =
        membership::cross_validate(&w, n, values).map_err(|e| CliError::Usage(e.to_string()))?;
    let config = json!({"spec": spec_json(&w), "n": n, "values": values});
    let mut r = RunReport::new("cross-validate", config, report.ok(), started);
    r.statistics = json!({
        "histories": report.histories,
        "members": report.members,
        "closure_executions": report.closure_executions,
    });
    if !report.ok() {
        r.counterexample = json!({
            "generated_not_found": report.generated_not_found,
            "found_not_generated": report.found_not_generated,
        });
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_args(spec: Option<&str>, vis: &[&str]) -> SpecArgs {
        SpecArgs {
            spec: spec.map(String::from),
            vis: vis.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn spec_defaults_to_the_model_type() {
        let w = resolve_spec(&spec_args(None, &[]), Some(Adt::Queue)).unwrap();
        assert_eq!(w.adt, Adt::Queue);
        assert!(matches!(
            resolve_spec(&spec_args(None, &[]), None),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn overrides_are_validated() {
        let w = resolve_spec(&spec_args(Some("map"), &["has=absolute"]), None).unwrap();
        assert!(w.all_absolute());
        for bad in ["has", "size=absolute", "has=sometimes"] {
            assert!(
                resolve_spec(&spec_args(Some("map"), &[bad]), None).is_err(),
                "{bad}"
            );
        }
    }

    #[test]
    fn inline_clients_pass_through() {
        assert_eq!(client_text("{get(1)}").unwrap(), "{get(1)}");
    }
}
