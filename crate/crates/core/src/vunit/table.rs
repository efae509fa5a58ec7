//! Records of the vector instructions the main sequencer keeps in flight.

use crate::isa::{AccessMode, ArithOp, ElemType, Sew, VReg, VectorInstr};
use crate::vrf::QueueId;

/// Execution resource an instruction is dispatched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    /// FPU or integer multiplier; they share one set of operand queues.
    FpuMul,
    Alu,
    Load,
    Store,
    Slide,
}

/// Handle to an in-flight instruction. Stale once its slot is reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DepRef {
    pub slot: usize,
    pub id: u64,
}

/// One vector source operand as seen at issue time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Source {
    pub reg: VReg,
    /// Register held a broadcast scalar; read once per lane.
    pub scalar: bool,
    /// Queue the operand travels through, if it is fetched word by word.
    pub queue: Option<QueueId>,
    /// Last writer still in flight when this instruction issued.
    pub raw: Option<DepRef>,
    /// Writer whose words the reads must observe; used to tag-check chaining.
    pub expect: Option<Expect>,
}

/// Last writer of a register as known at issue time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Expect {
    pub id: u64,
    pub vl: usize,
    pub sew: Sew,
    pub scalar: bool,
}

#[derive(Debug, Clone)]
pub struct InFlight {
    pub id: u64,
    /// Position of the dispatching instruction in the program.
    pub index: usize,
    pub slot: usize,
    pub instr: VectorInstr,
    pub unit: Unit,
    pub vl: usize,
    pub vlmax: usize,
    pub sew: Sew,
    /// Element width of the destination (differs from `sew` when widening).
    pub dsew: Sew,
    /// Scalar operand values captured at dispatch, in `xsources` order.
    pub xvals: [u64; 3],
    pub src: [Option<Source>; 3],
    pub dest: Option<VReg>,
    /// Older readers of `dest`, with the source index they read it through.
    pub war: Vec<(DepRef, usize)>,
    pub waw: Option<DepRef>,
    /// Consumers may chain on this instruction word by word.
    pub ordered: bool,
    pub issued_at: u64,
}

impl InFlight {
    pub fn dep(&self) -> DepRef {
        DepRef {
            slot: self.slot,
            id: self.id,
        }
    }

    pub fn arith(&self) -> Option<(ArithOp, ElemType, bool)> {
        match self.instr {
            VectorInstr::Arith { op, ty, widen, .. } => Some((op, ty, widen)),
            _ => None,
        }
    }

    pub fn mode(&self) -> Option<AccessMode> {
        match self.instr {
            VectorInstr::Load { mode, .. } | VectorInstr::Store { mode, .. } => Some(mode),
            _ => None,
        }
    }
}

/// Fixed-size table of sequencer slots.
#[derive(Debug, Clone)]
pub struct InstrTable {
    slots: Vec<Option<InFlight>>,
}

impl InstrTable {
    pub fn new(slots: usize) -> Self {
        InstrTable {
            slots: vec![None; slots],
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(|s| s.is_none())
    }

    pub fn free_slot(&self) -> Option<usize> {
        self.slots.iter().position(|s| s.is_none())
    }

    #[inline]
    pub fn alive(&self, d: DepRef) -> bool {
        matches!(&self.slots[d.slot], Some(f) if f.id == d.id)
    }

    #[inline]
    pub fn get(&self, d: DepRef) -> Option<&InFlight> {
        match &self.slots[d.slot] {
            Some(f) if f.id == d.id => Some(f),
            _ => None,
        }
    }

    #[inline]
    pub fn slot(&self, slot: usize) -> Option<&InFlight> {
        self.slots[slot].as_ref()
    }

    pub fn insert(&mut self, f: InFlight) {
        let s = f.slot;
        debug_assert!(self.slots[s].is_none());
        self.slots[s] = Some(f);
    }

    pub fn remove(&mut self, slot: usize) -> Option<InFlight> {
        self.slots[slot].take()
    }

    pub fn iter(&self) -> impl Iterator<Item = &InFlight> {
        self.slots.iter().flatten()
    }
}

/// Elements of a `vl`-long vector that live in `lane`.
#[inline]
pub fn elems_in_lane(vl: usize, lanes: usize, lane: usize) -> usize {
    if vl > lane {
        (vl - lane - 1) / lanes + 1
    } else {
        0
    }
}

/// 64-bit words holding `elems` elements of width `sew`.
#[inline]
pub fn words_for(elems: usize, sew: Sew) -> usize {
    elems.div_ceil(sew.per_word())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lane_element_counts() {
        assert_eq!(elems_in_lane(10, 4, 0), 3);
        assert_eq!(elems_in_lane(10, 4, 1), 3);
        assert_eq!(elems_in_lane(10, 4, 2), 2);
        assert_eq!(elems_in_lane(10, 4, 3), 2);
        assert_eq!(elems_in_lane(2, 4, 3), 0);
        let total: usize = (0..16).map(|l| elems_in_lane(1000, 16, l)).sum();
        assert_eq!(total, 1000);
        assert_eq!(words_for(9, Sew::E8), 2);
        assert_eq!(words_for(3, Sew::E64), 3);
    }
}
