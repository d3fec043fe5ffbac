//! Instrumented object implementations and faulty variants of them.

mod chm;
mod msq;

pub use chm::{chm_program, DEFAULT_TABLE_SIZE};
pub use msq::msq_program;

use chm::ChmOptions;
use msq::MsqOptions;

use crate::consistency::Reason;
use crate::program::ObjectProgram;

/// A faulty variant and the violations it is expected to exhibit.
#[derive(Clone, Debug)]
pub struct Mutant {
    pub name: &'static str,
    pub program: ObjectProgram,
    pub description: &'static str,
    pub expected: &'static [Reason],
    /// Whether the fault changes observable behavior (histories), not just
    /// the emitted visibility and linearization actions.
    pub changes_histories: bool,
}

pub fn mutant_programs(k: usize) -> Vec<Mutant> {
    vec![
        Mutant {
            name: "chm-mutant-a",
            program: chm::build(
                "chm-mutant-a",
                k,
                ChmOptions {
                    has_read_vis: false,
                    ..ChmOptions::CORRECT
                },
            ),
            description: "has omits the visibility command at each table read",
            expected: &[Reason::ReturnNotInS],
            changes_histories: false,
        },
        Mutant {
            name: "chm-mutant-b",
            program: chm::build(
                "chm-mutant-b",
                k,
                ChmOptions {
                    has_call_vis: false,
                    ..ChmOptions::CORRECT
                },
            ),
            description: "has omits the visibility command fused with its call",
            expected: &[Reason::NotMonotonic],
            changes_histories: false,
        },
        Mutant {
            name: "chm-mutant-c",
            program: chm::build(
                "chm-mutant-c",
                k,
                ChmOptions {
                    put_split_lin: true,
                    ..ChmOptions::CORRECT
                },
            ),
            description: "put linearizes in an atomic section after its store",
            expected: &[Reason::ReturnNotInS],
            changes_histories: false,
        },
        Mutant {
            name: "msq-mutant-d",
            program: msq::build(
                "msq-mutant-d",
                MsqOptions {
                    size_start: 1,
                    ..MsqOptions::CORRECT
                },
            ),
            description: "size counts one node too many",
            expected: &[Reason::ReturnNotInS],
            changes_histories: true,
        },
        Mutant {
            name: "msq-mutant-e",
            program: msq::build(
                "msq-mutant-e",
                MsqOptions {
                    size_read_vis: false,
                    ..MsqOptions::CORRECT
                },
            ),
            description: "size omits the visibility command at traversal reads",
            expected: &[Reason::ReturnNotInS],
            changes_histories: false,
        },
    ]
}

pub const MODEL_NAMES: [&str; 7] = [
    "chm",
    "msq",
    "chm-mutant-a",
    "chm-mutant-b",
    "chm-mutant-c",
    "msq-mutant-d",
    "msq-mutant-e",
];

/// Looks a model up by name; `k` is the map's table size.
pub fn program_by_name(name: &str, k: usize) -> Option<ObjectProgram> {
    match name {
        "chm" => Some(chm_program(k)),
        "msq" => Some(msq_program()),
        _ => mutant_programs(k)
            .into_iter()
            .find(|m| m.name == name)
            .map(|m| m.program),
    }
}
