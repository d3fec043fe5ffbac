//! Shared inputs for the benchmarks.

use weakvis_core::explorer::{invocation_menu, model_keys, ClientProgram, ThreadSource};
use weakvis_core::{chm_program, History, Method, ObjectProgram, OpId, OperationLabel, Value};

pub const EXAMPLE_CLIENT: &str = "{get(1); has(1)} || {put(1,1); put(0,1); put(1,0)}";

pub fn example_client() -> ClientProgram {
    EXAMPLE_CLIENT.parse().expect("valid client")
}

/// The five-operation map history where has(1) misses a present value.
pub fn example_history() -> History {
    let l = |m, x, y| OperationLabel::new(m, x, y);
    let labels = [
        (OpId(1), l(Method::Get, Value::Int(1), Value::Int(1))),
        (OpId(2), l(Method::Put, Value::Pair(1, 1), Value::TOP)),
        (OpId(3), l(Method::Has, Value::Int(1), Value::BOT)),
        (OpId(4), l(Method::Put, Value::Pair(0, 1), Value::TOP)),
        (OpId(5), l(Method::Put, Value::Pair(1, 0), Value::BOT)),
    ];
    let hb = [(OpId(1), OpId(3)), (OpId(2), OpId(4)), (OpId(4), OpId(5))];
    History::from_labels(&labels, &hb).expect("acyclic")
}

pub fn small_map() -> ObjectProgram {
    chm_program(2)
}

/// Every two-thread client of `ops` map invocations per thread.
pub fn map_menu(prog: &ObjectProgram, ops: usize) -> ThreadSource {
    let menu = invocation_menu(prog, &model_keys(prog, 2), &[0, 1]);
    ThreadSource::Menu {
        threads: 2,
        ops,
        menu,
    }
}
