//! Slide unit: element insertion and extraction and vector slides. It
//! touches every lane at once, so it works on one instruction at a time and
//! waits for the source register to be complete before reading it.

use std::collections::VecDeque;

use crate::isa::{ScalarOperand, Sew, VReg, VectorInstr, XReg};
use crate::lane::{element_mask, Lane};
use crate::vrf::WbEntry;
use crate::vunit::table::{elems_in_lane, words_for, InstrTable};

/// Scalar value produced for the scalar core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarResult {
    pub index: usize,
    pub rd: XReg,
    pub value: u64,
}

#[derive(Debug, Clone)]
struct SlideWrite {
    slot: usize,
    id: u64,
    reg: VReg,
    sew: Sew,
    vl: usize,
    amount: usize,
    /// Source elements captured when the slide started.
    src: Vec<u64>,
    /// Next word to push per lane.
    next: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct Sldu {
    lanes: usize,
    queue: VecDeque<(usize, u64)>,
    active: Option<SlideWrite>,
    /// Slots whose slide-unit work is complete.
    finished: Vec<(usize, u64)>,
}

/// Element `e` of register `reg`, read directly from the lanes.
fn read_element(lanes: &[Lane], reg: VReg, sew: Sew, e: usize, scalar: bool) -> u64 {
    let n = lanes.len();
    let (lane, local) = if scalar { (0, 0) } else { (e % n, e / n) };
    let pw = sew.per_word();
    let word = lanes[lane].vrf.read(reg.id(), local / pw);
    let bits = sew.bits();
    if bits == 64 {
        word
    } else {
        (word >> ((local % pw) * bits)) & ((1u64 << bits) - 1)
    }
}

impl Sldu {
    pub fn new(lanes: usize) -> Self {
        Sldu {
            lanes,
            queue: VecDeque::new(),
            active: None,
            finished: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn accept(&mut self, slot: usize, id: u64) {
        self.queue.push_back((slot, id));
    }

    pub fn done(&self, slot: usize, id: u64) -> bool {
        self.finished.contains(&(slot, id))
    }

    pub fn remove(&mut self, slot: usize) {
        self.finished.retain(|&(s, _)| s != slot);
        self.queue.retain(|&(s, _)| s != slot);
    }

    /// Works on the head instruction for one cycle. Returns true when it did
    /// anything.
    pub fn step(
        &mut self,
        table: &InstrTable,
        lanes: &mut [Lane],
        results: &mut Vec<ScalarResult>,
    ) -> bool {
        if let Some(w) = self.active.as_mut() {
            let moved = Self::push_words(w, lanes);
            if w.next
                .iter()
                .enumerate()
                .all(|(l, &n)| n as usize >= words_for(elems_in_lane(w.vl, lanes.len(), l), w.sew))
            {
                self.finished.push((w.slot, w.id));
                self.active = None;
                self.queue.pop_front();
            }
            return moved;
        }
        let Some(&(slot, id)) = self.queue.front() else {
            return false;
        };
        let Some(f) = table.slot(slot).filter(|f| f.id == id) else {
            self.queue.pop_front();
            return false;
        };
        let n = self.lanes;
        match f.instr {
            VectorInstr::Insert { vd, .. } => {
                let (value, idx) = (f.xvals[0], f.xvals[1] as usize);
                let mut targets: Vec<(usize, u32, u64, u64)> = Vec::new();
                if idx == 0 {
                    targets.extend((0..n).map(|l| (l, 0, value, u64::MAX)));
                } else if idx < f.vlmax {
                    let (lane, local) = (idx % n, idx / n);
                    let pw = f.sew.per_word();
                    let shift = (local % pw) * f.sew.bits();
                    let mask = element_mask(1, f.sew) << shift;
                    targets.push((lane, (local / pw) as u32, value << shift, mask));
                }
                if targets.iter().any(|&(l, ..)| lanes[l].slide_wb.is_full()) {
                    return false;
                }
                for lane in lanes.iter_mut() {
                    let st = &mut lane.state[slot];
                    st.dst_words = 0;
                    st.dst_known = true;
                }
                for (l, word, value, mask) in targets {
                    lanes[l].state[slot].dst_words = 1;
                    let _ = lanes[l].slide_wb.push(WbEntry {
                        slot,
                        instr: id,
                        reg: vd,
                        word,
                        value,
                        mask,
                    });
                }
                self.finished.push((slot, id));
                self.queue.pop_front();
                true
            }
            VectorInstr::Extract { rd, vs, .. } => {
                let src = f.src[0].unwrap_or_else(|| unreachable!());
                if src.raw.is_some_and(|d| table.alive(d)) {
                    return false;
                }
                let idx = f.xvals[0] as usize;
                let value = if src.scalar || idx < f.vl {
                    read_element(lanes, vs, f.sew, idx, src.scalar)
                } else {
                    0
                };
                for lane in lanes.iter_mut() {
                    let st = &mut lane.state[slot];
                    st.read = st.src_words;
                    st.dst_known = true;
                }
                results.push(ScalarResult {
                    index: f.index,
                    rd,
                    value,
                });
                self.finished.push((slot, id));
                self.queue.pop_front();
                true
            }
            VectorInstr::Slide { vd, vs, amount } => {
                let src = f.src[0].unwrap_or_else(|| unreachable!());
                if src.raw.is_some_and(|d| table.alive(d)) {
                    return false;
                }
                let amount = match amount {
                    ScalarOperand::Reg(_) => f.xvals[0] as usize,
                    ScalarOperand::Imm(i) => i.max(0) as usize,
                };
                let vl = if amount >= f.vl { 0 } else { f.vl };
                let values: Vec<u64> = (amount..vl)
                    .map(|e| read_element(lanes, vs, f.sew, e, src.scalar))
                    .collect();
                for (l, lane) in lanes.iter_mut().enumerate() {
                    let st = &mut lane.state[slot];
                    st.read = st.src_words;
                    st.dst_words = words_for(elems_in_lane(vl, n, l), f.sew) as u32;
                    st.dst_known = true;
                }
                self.active = Some(SlideWrite {
                    slot,
                    id,
                    reg: vd,
                    sew: f.sew,
                    vl,
                    amount,
                    src: values,
                    next: vec![0; n],
                });
                true
            }
            _ => {
                self.queue.pop_front();
                false
            }
        }
    }

    /// Pushes the next destination word of every lane with buffer space.
    fn push_words(w: &mut SlideWrite, lanes: &mut [Lane]) -> bool {
        let n = lanes.len();
        let pw = w.sew.per_word();
        let bits = w.sew.bits();
        let mut moved = false;
        for (l, lane) in lanes.iter_mut().enumerate() {
            let elems = elems_in_lane(w.vl, n, l);
            let word = w.next[l] as usize;
            if word >= words_for(elems, w.sew) || lane.slide_wb.is_full() {
                continue;
            }
            let mut value = 0u64;
            let mut mask = 0u64;
            for j in word * pw..((word + 1) * pw).min(elems) {
                let e = j * n + l;
                if e + w.amount < w.vl {
                    let pos = (j % pw) * bits;
                    value |= w.src[e] << pos;
                    mask |= element_mask(1, w.sew) << pos;
                }
            }
            let _ = lane.slide_wb.push(WbEntry {
                slot: w.slot,
                instr: w.id,
                reg: w.reg,
                word: word as u32,
                value,
                mask,
            });
            w.next[l] += 1;
            moved = true;
        }
        moved
    }
}
