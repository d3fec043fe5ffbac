//! Concurrent hash map over a fixed table with identity hashing.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::memory::{TaggedMemory, Word};
use crate::program::{
    int, reg, Asm, Cond, Instr, Loc, MethodCode, ObjectProgram, Reg, RetExpr, TReg,
};
use crate::spec::Adt;
use crate::value::{Method, Value};

pub const DEFAULT_TABLE_SIZE: usize = 4;

const TABLE: u8 = 0;
const KEY: Reg = Reg(0);
const VAL: Reg = Reg(1);
const OLD: Reg = Reg(2);
const IDX: Reg = Reg(3);
const TV: Reg = Reg(4);
const TAGS: TReg = TReg(0);

/// Variations used by the mutants.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct ChmOptions {
    pub has_read_vis: bool,
    pub has_call_vis: bool,
    pub put_split_lin: bool,
}

impl ChmOptions {
    pub const CORRECT: ChmOptions = ChmOptions {
        has_read_vis: true,
        has_call_vis: true,
        put_split_lin: false,
    };
}

fn put(opts: ChmOptions) -> MethodCode {
    let mut a = Asm::new();
    let cell = Loc::indexed(TABLE, KEY);
    a.emit(Instr::Begin)
        .emit(Instr::Load {
            dst: OLD,
            tags: None,
            loc: cell,
        })
        .emit(Instr::Store {
            loc: cell,
            src: reg(VAL),
        });
    if opts.put_split_lin {
        a.emit(Instr::End).emit(Instr::Begin);
    }
    a.emit(Instr::VisLin)
        .emit(Instr::Lin(RetExpr::IsNil(reg(OLD))))
        .emit(Instr::End)
        .emit(Instr::Ret(RetExpr::IsNil(reg(OLD))));
    a.finish(false)
}

fn get() -> MethodCode {
    let mut a = Asm::new();
    a.emit(Instr::Begin)
        .emit(Instr::Load {
            dst: OLD,
            tags: None,
            loc: Loc::indexed(TABLE, KEY),
        })
        .emit(Instr::VisLin)
        .emit(Instr::Lin(RetExpr::Word(reg(OLD))))
        .emit(Instr::End)
        .emit(Instr::Ret(RetExpr::Word(reg(OLD))));
    a.finish(false)
}

fn has(k: usize, opts: ChmOptions) -> MethodCode {
    let mut a = Asm::new();
    let top = a.label();
    let found = a.label();
    let absent = a.label();
    if opts.has_call_vis {
        a.emit(Instr::Begin).emit(Instr::VisModLin).emit(Instr::End);
    }
    a.emit(Instr::Move {
        dst: IDX,
        src: int(0),
    });
    a.bind(top);
    a.emit(Instr::Begin).emit(Instr::Load {
        dst: TV,
        tags: Some(TAGS),
        loc: Loc::indexed(TABLE, IDX),
    });
    if opts.has_read_vis {
        a.emit(Instr::VisTags(TAGS));
    }
    a.emit(Instr::Branch {
        cond: Cond::Eq(reg(TV), reg(KEY)),
        target: found,
    })
    .emit(Instr::Branch {
        cond: Cond::Eq(reg(IDX), int(k as i64 - 1)),
        target: absent,
    })
    .emit(Instr::End)
    .emit(Instr::Add {
        dst: IDX,
        a: reg(IDX),
        b: int(1),
    })
    .emit(Instr::Jump(top));
    a.bind(found);
    a.emit(Instr::Lin(RetExpr::Const(Value::TOP)))
        .emit(Instr::End)
        .emit(Instr::Ret(RetExpr::Const(Value::TOP)));
    a.bind(absent);
    a.emit(Instr::Lin(RetExpr::Const(Value::BOT)))
        .emit(Instr::End)
        .emit(Instr::Ret(RetExpr::Const(Value::BOT)));
    a.finish(opts.has_call_vis)
}

pub(crate) fn build(name: &str, k: usize, opts: ChmOptions) -> ObjectProgram {
    assert!(k > 0, "table size must be positive");
    let methods = BTreeMap::from([
        (Method::Put, put(opts)),
        (Method::Get, get()),
        (Method::Has, has(k, opts)),
    ]);
    let in_range = move |key: i64| (0..k as i64).contains(&key);
    ObjectProgram::new(
        name,
        Adt::Map,
        5,
        1,
        (KEY, VAL),
        methods,
        Arc::new(move |mem: &mut TaggedMemory| vec![mem.alloc(&vec![Word::Nil; k])]),
        Arc::new(move |m, x| match (m, x) {
            (Method::Put, Value::Pair(key, _)) | (Method::Get, Value::Int(key)) => in_range(key),
            (Method::Has, Value::Int(_)) => true,
            _ => false,
        }),
    )
}

/// The instrumented map with a table of `k` slots: `put` and `get` are
/// absolute, `has` is monotonic.
pub fn chm_program(k: usize) -> ObjectProgram {
    build("chm", k, ChmOptions::CORRECT)
}
