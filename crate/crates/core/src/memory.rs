//! Sequentially consistent shared memory whose cells record writer operations.

use std::collections::BTreeMap;
use std::fmt;

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::value::{OpId, OpSet, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Addr(pub u32);

impl Addr {
    pub fn offset(self, by: i64) -> Option<Addr> {
        u32::try_from(self.0 as i64 + by).ok().map(Addr)
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

/// A memory word: the null pointer/absent value, an integer or an address.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Word {
    #[default]
    Nil,
    Int(i64),
    Addr(Addr),
}

impl Word {
    /// The ADT value a word denotes; addresses have none.
    pub fn to_value(self) -> Option<Value> {
        match self {
            Word::Nil => Some(Value::Nil),
            Word::Int(i) => Some(Value::Int(i)),
            Word::Addr(_) => None,
        }
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Word::Nil => s.serialize_none(),
            Word::Int(i) => s.serialize_i64(*i),
            Word::Addr(a) => s.serialize_str(&a.to_string()),
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Word::Nil => f.write_str("nil"),
            Word::Int(i) => write!(f, "{i}"),
            Word::Addr(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Cell {
    #[serde(rename = "v")]
    pub value: Word,
    pub tags: OpSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemResult {
    pub value: Word,
    pub tags: OpSet,
    pub cas_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("access to unallocated address {0}")]
pub struct MemoryFault(pub Addr);

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TaggedMemory {
    cells: Vec<Cell>,
}

impl TaggedMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocates consecutive untagged cells; returns the first address.
    /// Addresses are never reused.
    pub fn alloc(&mut self, initial: &[Word]) -> Addr {
        let base = Addr(self.cells.len() as u32);
        self.cells.extend(initial.iter().map(|&value| Cell {
            value,
            tags: OpSet::new(),
        }));
        base
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, x: Addr) -> Result<&Cell, MemoryFault> {
        self.cells.get(x.0 as usize).ok_or(MemoryFault(x))
    }

    fn cell_mut(&mut self, x: Addr) -> Result<&mut Cell, MemoryFault> {
        self.cells.get_mut(x.0 as usize).ok_or(MemoryFault(x))
    }

    pub fn load(&self, x: Addr) -> Result<MemResult, MemoryFault> {
        let c = self.cell(x)?;
        Ok(MemResult {
            value: c.value,
            tags: c.tags.clone(),
            cas_ok: false,
        })
    }

    pub fn store(&mut self, x: Addr, y: Word, o: OpId) -> Result<(), MemoryFault> {
        let c = self.cell_mut(x)?;
        c.value = y;
        c.tags.insert(o);
        Ok(())
    }

    pub fn cas(
        &mut self,
        x: Addr,
        expect: Word,
        new: Word,
        o: OpId,
    ) -> Result<MemResult, MemoryFault> {
        let c = self.cell_mut(x)?;
        let cas_ok = c.value == expect;
        if cas_ok {
            c.value = new;
            c.tags.insert(o);
        }
        Ok(MemResult {
            value: c.value,
            tags: c.tags.clone(),
            cas_ok,
        })
    }

    pub fn cells(&self) -> impl Iterator<Item = (Addr, &Cell)> {
        self.cells
            .iter()
            .enumerate()
            .map(|(i, c)| (Addr(i as u32), c))
    }

    /// Debug snapshot, `{"addr": {"v": V, "tags": [..]}}`.
    pub fn snapshot(&self) -> Snapshot<'_> {
        Snapshot(self)
    }
}

pub struct Snapshot<'a>(&'a TaggedMemory);

impl Serialize for Snapshot<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.cells.len()))?;
        for (a, c) in self.0.cells() {
            m.serialize_entry(&a.0.to_string(), c)?;
        }
        m.end()
    }
}

/// Writer sets by address, for comparing against shadow bookkeeping.
pub fn writer_sets(m: &TaggedMemory) -> BTreeMap<Addr, OpSet> {
    m.cells().map(|(a, c)| (a, c.tags.clone())).collect()
}
