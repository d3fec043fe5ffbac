//! Michael–Scott queue with a lock-free, monotonic `size`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::memory::{TaggedMemory, Word};
use crate::program::{
    int, reg, Asm, Cond, Instr, Loc, MethodCode, ObjectProgram, Reg, RetExpr, TReg, NIL,
};
use crate::spec::Adt;
use crate::value::{Method, Value};

const HEAD: u8 = 0;
const TAIL: u8 = 1;
const DATA: u8 = 0;
const NEXT: u8 = 1;

const ARG: Reg = Reg(0);
const NODE: Reg = Reg(1);
const T: Reg = Reg(2);
const TN: Reg = Reg(3);
const OK: Reg = Reg(4);
const H: Reg = Reg(5);
const K: Reg = Reg(6);
const S: Reg = Reg(7);
const TAGS: TReg = TReg(0);

#[derive(Clone, Copy, Debug)]
pub(crate) struct MsqOptions {
    pub size_start: i64,
    pub size_read_vis: bool,
}

impl MsqOptions {
    pub const CORRECT: MsqOptions = MsqOptions {
        size_start: 0,
        size_read_vis: true,
    };
}

fn push() -> MethodCode {
    let mut a = Asm::new();
    let retry = a.label();
    let advance = a.label();
    let failed = a.label();
    a.emit(Instr::Alloc {
        dst: NODE,
        fields: vec![reg(ARG), NIL],
    });
    a.bind(retry);
    a.emit(Instr::Load {
        dst: T,
        tags: None,
        loc: Loc::global(TAIL),
    })
    .emit(Instr::Load {
        dst: TN,
        tags: None,
        loc: Loc::field(T, NEXT),
    })
    .emit(Instr::Branch {
        cond: Cond::Ne(reg(TN), NIL),
        target: advance,
    })
    .emit(Instr::Begin)
    .emit(Instr::Cas {
        ok: OK,
        loc: Loc::field(T, NEXT),
        expect: NIL,
        new: reg(NODE),
    })
    .emit(Instr::Branch {
        cond: Cond::Eq(reg(OK), int(0)),
        target: failed,
    })
    .emit(Instr::VisLin)
    .emit(Instr::Lin(RetExpr::Const(Value::TOP)))
    .emit(Instr::End)
    .emit(Instr::Cas {
        ok: OK,
        loc: Loc::global(TAIL),
        expect: reg(T),
        new: reg(NODE),
    })
    .emit(Instr::Ret(RetExpr::Const(Value::TOP)));
    a.bind(failed);
    a.emit(Instr::End).emit(Instr::Jump(retry));
    a.bind(advance);
    a.emit(Instr::Cas {
        ok: OK,
        loc: Loc::global(TAIL),
        expect: reg(T),
        new: reg(TN),
    })
    .emit(Instr::Jump(retry));
    a.finish(false)
}

fn pop() -> MethodCode {
    let mut a = Asm::new();
    let retry = a.label();
    let failed = a.label();
    a.bind(retry);
    a.emit(Instr::Load {
        dst: H,
        tags: None,
        loc: Loc::global(HEAD),
    })
    .emit(Instr::Load {
        dst: T,
        tags: None,
        loc: Loc::global(TAIL),
    })
    .emit(Instr::Load {
        dst: TN,
        tags: None,
        loc: Loc::field(H, NEXT),
    })
    .emit(Instr::Branch {
        cond: Cond::Eq(reg(H), reg(T)),
        target: retry,
    })
    .emit(Instr::Load {
        dst: K,
        tags: None,
        loc: Loc::field(TN, DATA),
    })
    .emit(Instr::Begin)
    .emit(Instr::Cas {
        ok: OK,
        loc: Loc::global(HEAD),
        expect: reg(H),
        new: reg(TN),
    })
    .emit(Instr::Branch {
        cond: Cond::Eq(reg(OK), int(0)),
        target: failed,
    })
    .emit(Instr::VisLin)
    .emit(Instr::Lin(RetExpr::Word(reg(K))))
    .emit(Instr::End)
    .emit(Instr::Ret(RetExpr::Word(reg(K))));
    a.bind(failed);
    a.emit(Instr::End).emit(Instr::Jump(retry));
    a.finish(false)
}

fn size(opts: MsqOptions) -> MethodCode {
    let mut a = Asm::new();
    let top = a.label();
    let out = a.label();
    let read = |a: &mut Asm, loc: Loc, dst: Reg| {
        a.emit(Instr::Begin).emit(Instr::Load {
            dst,
            tags: Some(TAGS),
            loc,
        });
        if opts.size_read_vis {
            a.emit(Instr::VisTags(TAGS));
        }
        a.emit(Instr::End);
    };
    a.emit(Instr::Begin).emit(Instr::VisModLin).emit(Instr::End);
    a.emit(Instr::Move {
        dst: S,
        src: int(opts.size_start),
    });
    // The head pointer is a shared read like any other.
    read(&mut a, Loc::global(HEAD), H);
    read(&mut a, Loc::field(H, NEXT), TN);
    a.bind(top);
    a.emit(Instr::Branch {
        cond: Cond::Eq(reg(TN), NIL),
        target: out,
    })
    .emit(Instr::Add {
        dst: S,
        a: reg(S),
        b: int(1),
    })
    .emit(Instr::Move {
        dst: H,
        src: reg(TN),
    });
    read(&mut a, Loc::field(H, NEXT), TN);
    a.emit(Instr::Jump(top));
    a.bind(out);
    a.emit(Instr::Lin(RetExpr::Word(reg(S))))
        .emit(Instr::Ret(RetExpr::Word(reg(S))));
    a.finish(true)
}

pub(crate) fn build(name: &str, opts: MsqOptions) -> ObjectProgram {
    let methods = BTreeMap::from([
        (Method::Push, push()),
        (Method::Pop, pop()),
        (Method::Size, size(opts)),
    ]);
    ObjectProgram::new(
        name,
        Adt::Queue,
        8,
        1,
        (ARG, ARG),
        methods,
        Arc::new(|mem: &mut TaggedMemory| {
            let dummy = mem.alloc(&[Word::Nil, Word::Nil]);
            let head = mem.alloc(&[Word::Addr(dummy)]);
            let tail = mem.alloc(&[Word::Addr(dummy)]);
            vec![head, tail]
        }),
        Arc::new(|m, x| match m {
            Method::Push => matches!(x, Value::Int(_)),
            Method::Pop | Method::Size => x == Value::Nil,
            _ => false,
        }),
    )
}

/// The instrumented queue: `push` and `pop` are absolute, `size` monotonic.
pub fn msq_program() -> ObjectProgram {
    build("msq", MsqOptions::CORRECT)
}
