//! A small goto language for instrumented object implementations.
//!
//! Each method is a list of instructions over word registers and tag-set
//! registers. `Begin`/`End` delimit atomic sections; the `Vis*` and `Lin`
//! instructions are the visibility and linearization commands, drawing on the
//! shared linearization history [`LinState`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::memory::{Addr, MemoryFault, TaggedMemory, Word};
use crate::spec::Adt;
use crate::trace::Action;
use crate::value::{Method, OpId, OpSet, OperationLabel, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Reg(pub u8);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TReg(pub u8);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Label(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(Reg),
    Const(Word),
}

pub const NIL: Operand = Operand::Const(Word::Nil);

pub fn int(i: i64) -> Operand {
    Operand::Const(Word::Int(i))
}

pub fn reg(r: Reg) -> Operand {
    Operand::Reg(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Base {
    Global(u8),
    Reg(Reg),
}

/// The address `base + index + field`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Loc {
    pub base: Base,
    pub index: Option<Reg>,
    pub field: u8,
}

impl Loc {
    pub fn global(g: u8) -> Loc {
        Loc {
            base: Base::Global(g),
            index: None,
            field: 0,
        }
    }

    pub fn indexed(g: u8, index: Reg) -> Loc {
        Loc {
            base: Base::Global(g),
            index: Some(index),
            field: 0,
        }
    }

    pub fn field(r: Reg, field: u8) -> Loc {
        Loc {
            base: Base::Reg(r),
            index: None,
            field,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cond {
    Eq(Operand, Operand),
    Ne(Operand, Operand),
    Lt(Operand, Operand),
}

/// How a return value is computed from registers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RetExpr {
    Const(Value),
    Word(Operand),
    IsNil(Operand),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instr {
    Begin,
    End,
    /// `dst, tags := load(loc)`.
    Load {
        dst: Reg,
        tags: Option<TReg>,
        loc: Loc,
    },
    Store {
        loc: Loc,
        src: Operand,
    },
    Cas {
        ok: Reg,
        loc: Loc,
        expect: Operand,
        new: Operand,
    },
    /// Allocates one cell per field, then stores each field as this operation.
    Alloc {
        dst: Reg,
        fields: Vec<Operand>,
    },
    Move {
        dst: Reg,
        src: Operand,
    },
    Add {
        dst: Reg,
        a: Operand,
        b: Operand,
    },
    Jump(Label),
    Branch {
        cond: Cond,
        target: Label,
    },
    /// `vis(getLin())`.
    VisLin,
    /// `vis(getModLin())`.
    VisModLin,
    /// `vis(O ∩ getModLin())`.
    VisTags(TReg),
    /// `lin()`, recording the return the operation will produce.
    Lin(RetExpr),
    Ret(RetExpr),
}

impl Instr {
    /// Instructions that emit no action and touch no memory reachable by
    /// other threads. Allocation only writes fresh cells.
    pub fn is_local(&self) -> bool {
        matches!(
            self,
            Instr::Move { .. }
                | Instr::Add { .. }
                | Instr::Jump(_)
                | Instr::Branch { .. }
                | Instr::Alloc { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodCode {
    pub instrs: Vec<Instr>,
    labels: Vec<usize>,
    /// The first atomic section runs in the same step as the call.
    pub atomic_with_call: bool,
}

/// Builds a [`MethodCode`] with symbolic labels.
#[derive(Default)]
pub struct Asm {
    instrs: Vec<Instr>,
    labels: Vec<Option<usize>>,
}

impl Asm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn label(&mut self) -> Label {
        self.labels.push(None);
        Label(self.labels.len() as u16 - 1)
    }

    pub fn bind(&mut self, l: Label) {
        self.labels[l.0 as usize] = Some(self.instrs.len());
    }

    pub fn emit(&mut self, i: Instr) -> &mut Self {
        self.instrs.push(i);
        self
    }

    pub fn finish(self, atomic_with_call: bool) -> MethodCode {
        let labels = self
            .labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.unwrap_or_else(|| panic!("label {i} is never bound")))
            .collect();
        MethodCode {
            instrs: self.instrs,
            labels,
            atomic_with_call,
        }
    }
}

/// The shared linearization history: linearized operations with the labels
/// they will return.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LinState {
    entries: Vec<(OpId, OperationLabel)>,
}

impl LinState {
    pub fn push(&mut self, o: OpId, l: OperationLabel) {
        self.entries.push((o, l));
    }

    pub fn entries(&self) -> &[(OpId, OperationLabel)] {
        &self.entries
    }

    pub fn get_lin(&self) -> OpSet {
        self.entries.iter().map(|e| e.0).collect()
    }

    /// Linearized operations whose labels are not read-only.
    pub fn get_mod_lin(&self, adt: Adt) -> OpSet {
        self.entries
            .iter()
            .filter(|e| !adt.readonly(&e.1))
            .map(|e| e.0)
            .collect()
    }

    pub fn labels(&self) -> Vec<OperationLabel> {
        self.entries.iter().map(|e| e.1).collect()
    }
}

/// A thread's local state inside one operation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LocalState {
    pub method: Method,
    pub arg: Value,
    pub pc: u16,
    pub regs: Vec<Word>,
    pub tregs: Vec<OpSet>,
    pub lock: bool,
    pub ret: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Memory(#[from] MemoryFault),
    #[error("type error in {0:?}")]
    Type(Instr),
    #[error("method {0} is not implemented by this object")]
    NoMethod(Method),
    #[error("bad argument {1} for {0}")]
    BadArgument(Method, Value),
    #[error("operation exceeded {0} instructions in one step")]
    Runaway(usize),
}

/// Shared state an instruction may touch.
pub struct Ctx<'a> {
    pub mem: &'a mut TaggedMemory,
    pub lin: &'a mut LinState,
    pub globals: &'a [Addr],
    pub adt: Adt,
    pub op: OpId,
    /// Operations already made visible to `op`, to avoid duplicate actions.
    pub seen: &'a mut OpSet,
    pub out: &'a mut Vec<Action>,
}

impl Ctx<'_> {
    fn vis(&mut self, targets: impl IntoIterator<Item = OpId>) {
        for p in targets {
            if self.seen.insert(p) {
                self.out.push(Action::Vis {
                    op: self.op,
                    op2: p,
                });
            }
        }
    }
}

pub type Setup = Arc<dyn Fn(&mut TaggedMemory) -> Vec<Addr> + Send + Sync>;
pub type ArgCheck = Arc<dyn Fn(Method, Value) -> bool + Send + Sync>;

/// An object implementation: `init`, `cmd`, `idle` and `done` over local
/// states, plus the initial shared memory.
#[derive(Clone)]
pub struct ObjectProgram {
    pub name: String,
    pub adt: Adt,
    pub nregs: u8,
    pub ntregs: u8,
    methods: BTreeMap<Method, MethodCode>,
    setup: Setup,
    arg_ok: ArgCheck,
    /// Registers that receive the invocation's argument.
    arg_regs: (Reg, Reg),
}

impl fmt::Debug for ObjectProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObjectProgram")
            .field("name", &self.name)
            .field("adt", &self.adt)
            .finish_non_exhaustive()
    }
}

impl ObjectProgram {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        adt: Adt,
        nregs: u8,
        ntregs: u8,
        arg_regs: (Reg, Reg),
        methods: BTreeMap<Method, MethodCode>,
        setup: Setup,
        arg_ok: ArgCheck,
    ) -> Self {
        ObjectProgram {
            name: name.to_string(),
            adt,
            nregs,
            ntregs,
            methods,
            setup,
            arg_ok,
            arg_regs,
        }
    }

    pub fn methods(&self) -> impl Iterator<Item = Method> + '_ {
        self.methods.keys().copied()
    }

    pub fn code(&self, m: Method) -> Option<&MethodCode> {
        self.methods.get(&m)
    }

    pub fn replace_method(&mut self, m: Method, code: MethodCode) {
        self.methods.insert(m, code);
    }

    /// Allocates the initial shared state; returns the global addresses.
    pub fn setup(&self, mem: &mut TaggedMemory) -> Vec<Addr> {
        (self.setup)(mem)
    }

    pub fn check_invocation(&self, m: Method, x: Value) -> Result<(), ExecError> {
        if !self.methods.contains_key(&m) {
            return Err(ExecError::NoMethod(m));
        }
        if !(self.arg_ok)(m, x) {
            return Err(ExecError::BadArgument(m, x));
        }
        Ok(())
    }

    pub fn init(&self, m: Method, x: Value) -> Result<LocalState, ExecError> {
        self.check_invocation(m, x)?;
        let mut regs = vec![Word::Nil; self.nregs as usize];
        match x {
            Value::Int(i) => regs[self.arg_regs.0 .0 as usize] = Word::Int(i),
            Value::Pair(k, v) => {
                regs[self.arg_regs.0 .0 as usize] = Word::Int(k);
                regs[self.arg_regs.1 .0 as usize] = Word::Int(v);
            }
            _ => {}
        }
        Ok(LocalState {
            method: m,
            arg: x,
            pc: 0,
            regs,
            tregs: vec![OpSet::new(); self.ntregs as usize],
            lock: false,
            ret: None,
        })
    }

    pub fn cmd<'a>(&'a self, l: &LocalState) -> Option<&'a Instr> {
        self.methods[&l.method].instrs.get(l.pc as usize)
    }

    pub fn idle(&self, l: &LocalState) -> bool {
        !l.lock
    }

    pub fn done(&self, l: &LocalState) -> bool {
        l.ret.is_some()
    }

    pub fn atomic_with_call(&self, m: Method) -> bool {
        self.methods.get(&m).is_some_and(|c| c.atomic_with_call)
    }

    /// Executes the command at the program counter.
    pub fn exec(&self, l: &mut LocalState, ctx: &mut Ctx<'_>) -> Result<(), ExecError> {
        let code = &self.methods[&l.method];
        let instr = &code.instrs[l.pc as usize];
        let ty = || ExecError::Type(instr.clone());
        let val = |l: &LocalState, o: &Operand| match o {
            Operand::Reg(r) => l.regs[r.0 as usize],
            Operand::Const(w) => *w,
        };
        let addr = |l: &LocalState, loc: &Loc| -> Result<Addr, ExecError> {
            let base = match loc.base {
                Base::Global(g) => *ctx.globals.get(g as usize).ok_or_else(ty)?,
                Base::Reg(r) => match l.regs[r.0 as usize] {
                    Word::Addr(a) => a,
                    _ => return Err(ty()),
                },
            };
            let idx = match loc.index {
                Some(r) => match l.regs[r.0 as usize] {
                    Word::Int(i) => i,
                    _ => return Err(ty()),
                },
                None => 0,
            };
            base.offset(idx + loc.field as i64).ok_or_else(ty)
        };
        let ret_value = |l: &LocalState, e: &RetExpr| -> Result<Value, ExecError> {
            match e {
                RetExpr::Const(v) => Ok(*v),
                RetExpr::Word(o) => val(l, o).to_value().ok_or_else(ty),
                RetExpr::IsNil(o) => Ok(Value::Bool(val(l, o) == Word::Nil)),
            }
        };
        let mut next = l.pc + 1;
        match instr {
            Instr::Begin => l.lock = true,
            Instr::End => l.lock = false,
            Instr::Load { dst, tags, loc } => {
                let a = addr(l, loc)?;
                let r = ctx.mem.load(a)?;
                l.regs[dst.0 as usize] = r.value;
                if let Some(t) = tags {
                    l.tregs[t.0 as usize] = r.tags;
                }
            }
            Instr::Store { loc, src } => {
                let a = addr(l, loc)?;
                ctx.mem.store(a, val(l, src), ctx.op)?;
            }
            Instr::Cas {
                ok,
                loc,
                expect,
                new,
            } => {
                let a = addr(l, loc)?;
                let r = ctx.mem.cas(a, val(l, expect), val(l, new), ctx.op)?;
                l.regs[ok.0 as usize] = Word::Int(r.cas_ok as i64);
            }
            Instr::Alloc { dst, fields } => {
                let base = ctx.mem.alloc(&vec![Word::Nil; fields.len()]);
                for (i, f) in fields.iter().enumerate() {
                    let a = base.offset(i as i64).ok_or_else(ty)?;
                    ctx.mem.store(a, val(l, f), ctx.op)?;
                }
                l.regs[dst.0 as usize] = Word::Addr(base);
            }
            Instr::Move { dst, src } => l.regs[dst.0 as usize] = val(l, src),
            Instr::Add { dst, a, b } => match (val(l, a), val(l, b)) {
                (Word::Int(x), Word::Int(y)) => l.regs[dst.0 as usize] = Word::Int(x + y),
                _ => return Err(ty()),
            },
            Instr::Jump(t) => next = code.labels[t.0 as usize] as u16,
            Instr::Branch { cond, target } => {
                let taken = match cond {
                    Cond::Eq(a, b) => val(l, a) == val(l, b),
                    Cond::Ne(a, b) => val(l, a) != val(l, b),
                    Cond::Lt(a, b) => match (val(l, a), val(l, b)) {
                        (Word::Int(x), Word::Int(y)) => x < y,
                        _ => return Err(ty()),
                    },
                };
                if taken {
                    next = code.labels[target.0 as usize] as u16;
                }
            }
            Instr::VisLin => {
                let targets: Vec<OpId> = ctx.lin.entries().iter().map(|e| e.0).collect();
                ctx.vis(targets);
            }
            Instr::VisModLin => {
                let targets = ctx.lin.get_mod_lin(ctx.adt);
                ctx.vis(targets);
            }
            Instr::VisTags(t) => {
                let modlin = ctx.lin.get_mod_lin(ctx.adt);
                let targets: Vec<OpId> = l.tregs[t.0 as usize]
                    .intersection(&modlin)
                    .copied()
                    .collect();
                ctx.vis(targets);
            }
            Instr::Lin(e) => {
                let y = ret_value(l, e)?;
                ctx.lin
                    .push(ctx.op, OperationLabel::new(l.method, l.arg, y));
                ctx.out.push(Action::Lin { op: ctx.op });
            }
            Instr::Ret(e) => {
                let y = ret_value(l, e)?;
                l.ret = Some(y);
                ctx.out.push(Action::Ret { op: ctx.op, y });
            }
        }
        l.pc = next;
        Ok(())
    }

    /// Runs one scheduled step: commands until the thread is idle again,
    /// followed by any purely local commands. With `call_step`, only the
    /// leading local commands run unless the method's first atomic section is
    /// fused with its call.
    pub fn run_step(
        &self,
        l: &mut LocalState,
        ctx: &mut Ctx<'_>,
        call_step: bool,
        limit: usize,
    ) -> Result<(), ExecError> {
        let mut n = 0;
        let tick = |n: &mut usize| {
            *n += 1;
            if *n > limit {
                Err(ExecError::Runaway(limit))
            } else {
                Ok(())
            }
        };
        if !call_step || self.atomic_with_call(l.method) {
            loop {
                tick(&mut n)?;
                self.exec(l, ctx)?;
                if !l.lock {
                    break;
                }
            }
        }
        while !self.done(l) && self.cmd(l).is_some_and(Instr::is_local) {
            tick(&mut n)?;
            self.exec(l, ctx)?;
        }
        Ok(())
    }
}
