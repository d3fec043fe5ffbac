//! Checking concurrent objects against weak-visibility specifications.
//!
//! The crate provides the data model (labels, histories, abstract executions,
//! traces), executable sequential specifications with visibility annotations,
//! an online consistency monitor, an offline history membership checker,
//! tagged shared memory, instrumented object models and a deterministic
//! interleaving explorer.

pub mod consistency;
pub mod execution;
pub mod explorer;
pub mod history;
pub mod membership;
pub mod memory;
pub mod models;
pub mod program;
pub mod spec;
pub mod trace;
pub mod value;

pub use consistency::{
    execution_consistent, monitor_step, product_check, ConsistencyVerdict, MonitorError,
    MonitorMode, MonitorState, Reason, Violation,
};
pub use execution::{execution_of_trace, history_of_trace, AbstractExecution};
pub use explorer::{
    check_run, complete_schedule, enumerate_schedules, explore_product, run_schedule,
    ClientProgram, ExploreStats, ExplorerConfig, ExplorerError, ExplorerMode, Run, Schedule,
    ThreadSource,
};
pub use history::{History, HistoryError};
pub use membership::{history_in_spec, MembershipError, SearchBounds, Witness};
pub use memory::{Addr, TaggedMemory, Word};
pub use models::{chm_program, msq_program, mutant_programs, program_by_name};
pub use program::ObjectProgram;
pub use spec::{make_weak_spec, Adt, SequentialSpec, VisibilityKind, WeakVisibilitySpec};
pub use trace::{well_formed, Action, Trace, TraceError};
pub use value::{Method, OpId, OpSet, OperationLabel, Value};
