//! One lane: its slice of the register file, the lane sequencer that fetches
//! operands into the queues, and the ALU, multiplier and FPU.
//!
//! Chaining has no forwarding path. An operand word is requested only once
//! its producer has written it to the register file by the end of the
//! previous cycle, which the lane checks against per-instruction word
//! counters snapshotted at every cycle boundary.

use std::collections::VecDeque;

use half::f16;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::MachineConfig;
use crate::isa::{ArithOp, ElemType, Sew};
use crate::vrf::{
    BankArbiter, BankRequest, BoundedQueue, OperandQueueSet, OperandWord, Priority, QueueId,
    Requester, VrfGeometry, VrfStorage, WbEntry,
};
use crate::vunit::table::{elems_in_lane, words_for, DepRef, InFlight, InstrTable, Unit};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LaneError {
    #[error("{op:?} is not supported on {ty:?} elements of {sew}")]
    Unsupported { op: ArithOp, ty: ElemType, sew: Sew },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FuKind {
    Alu,
    Mul,
    Fpu,
}

/// A lane execution unit. Every unit consumes and produces one 64-bit
/// bundle per cycle whatever the element width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FunctionalUnit {
    pub kind: FuKind,
    pub depth: u64,
}

impl FunctionalUnit {
    pub fn from_config(kind: FuKind, cfg: &MachineConfig) -> Self {
        let depth = match kind {
            FuKind::Alu => cfg.alu_depth,
            FuKind::Mul => cfg.mul_depth,
            FuKind::Fpu => cfg.fpu_depth,
        };
        FunctionalUnit { kind, depth }
    }
}

/// Unit executing an arithmetic operation.
pub fn fu_for(op: ArithOp, ty: ElemType) -> FuKind {
    match (ty, op) {
        (ElemType::Float, _) => FuKind::Fpu,
        (ElemType::Int, ArithOp::Add) => FuKind::Alu,
        (ElemType::Int, _) => FuKind::Mul,
    }
}

/// Whether an operation has a non-pipelined implementation.
pub fn is_iterative(op: ArithOp) -> bool {
    matches!(op, ArithOp::Div | ArithOp::Sqrt)
}

/// Floating-point operations per element (an FMA counts twice).
pub fn flops_per_element(op: ArithOp, ty: ElemType) -> u64 {
    match (ty, op) {
        (ElemType::Int, _) => 0,
        (ElemType::Float, ArithOp::Madd) => 2,
        (ElemType::Float, _) => 1,
    }
}

/// Checks that `op` can run on `ty` elements of width `sew`.
pub fn check_supported(op: ArithOp, ty: ElemType, widen: bool, sew: Sew) -> Result<(), LaneError> {
    let ok = match ty {
        ElemType::Float => sew != Sew::E8 && !widen,
        ElemType::Int => {
            !is_iterative(op)
                && (!widen
                    || (matches!(op, ArithOp::Add | ArithOp::Mul) && sew.widened().is_some()))
        }
    };
    if ok {
        Ok(())
    } else {
        Err(LaneError::Unsupported { op, ty, sew })
    }
}

#[inline]
fn low_mask(bits: usize) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[inline]
fn field(word: u64, j: usize, bits: usize) -> u64 {
    if bits == 64 {
        word
    } else {
        (word >> (j * bits)) & low_mask(bits)
    }
}

#[inline]
fn sext(v: u64, bits: usize) -> i64 {
    let shift = 64 - bits;
    ((v << shift) as i64) >> shift
}

/// Replicates the low `sew` bits of `value` across a 64-bit word.
pub fn splat(value: u64, sew: Sew) -> u64 {
    let bits = sew.bits();
    if bits == 64 {
        return value;
    }
    let v = value & low_mask(bits);
    (0..sew.per_word()).fold(0, |acc, j| acc | (v << (j * bits)))
}

/// Mask selecting the first `count` elements of width `sew` in a word.
pub fn element_mask(count: usize, sew: Sew) -> u64 {
    low_mask(count * sew.bits())
}

fn float_op(op: ArithOp, a: f64, b: f64, c: f64) -> f64 {
    match op {
        ArithOp::Madd => a.mul_add(b, c),
        ArithOp::Add => a + b,
        ArithOp::Mul => a * b,
        ArithOp::Div => a / b,
        ArithOp::Sqrt => a.sqrt(),
    }
}

fn float32_op(op: ArithOp, a: f32, b: f32, c: f32) -> f32 {
    match op {
        ArithOp::Madd => a.mul_add(b, c),
        ArithOp::Add => a + b,
        ArithOp::Mul => a * b,
        ArithOp::Div => a / b,
        ArithOp::Sqrt => a.sqrt(),
    }
}

fn int_op(op: ArithOp, a: i64, b: i64, c: i64) -> i64 {
    match op {
        ArithOp::Madd => a.wrapping_mul(b).wrapping_add(c),
        ArithOp::Add => a.wrapping_add(b),
        _ => a.wrapping_mul(b),
    }
}

/// Computes one 64-bit result bundle. Operands are packed words of `sew`
/// elements; scalar operands must already be splatted. For widening
/// operations `half` selects which half of the source word feeds the
/// result, whose elements are twice as wide.
pub fn execute_bundle(
    op: ArithOp,
    ty: ElemType,
    widen: bool,
    sew: Sew,
    ops: [u64; 3],
    half: usize,
) -> Result<u64, LaneError> {
    check_supported(op, ty, widen, sew)?;
    let bits = sew.bits();
    let pw = sew.per_word();
    if widen {
        let out = sew
            .widened()
            .ok_or(LaneError::Unsupported { op, ty, sew })?;
        let obits = out.bits();
        let mut res = 0u64;
        for j in 0..out.per_word() {
            let sj = half * out.per_word() + j;
            let a = sext(field(ops[0], sj, bits), bits);
            let b = sext(field(ops[1], sj, bits), bits);
            let r = int_op(op, a, b, 0) as u64 & low_mask(obits);
            res |= if obits == 64 { r } else { r << (j * obits) };
        }
        return Ok(res);
    }
    let mut res = 0u64;
    for j in 0..pw {
        let [a, b, c] = ops.map(|w| field(w, j, bits));
        let r = match (ty, sew) {
            (ElemType::Float, Sew::E64) => {
                float_op(op, f64::from_bits(a), f64::from_bits(b), f64::from_bits(c)).to_bits()
            }
            (ElemType::Float, Sew::E32) => float32_op(
                op,
                f32::from_bits(a as u32),
                f32::from_bits(b as u32),
                f32::from_bits(c as u32),
            )
            .to_bits() as u64,
            (ElemType::Float, _) => {
                let h = |v: u64| f16::from_bits(v as u16).to_f32();
                f16::from_f32(float32_op(op, h(a), h(b), h(c))).to_bits() as u64
            }
            (ElemType::Int, _) => {
                int_op(op, sext(a, bits), sext(b, bits), sext(c, bits)) as u64 & low_mask(bits)
            }
        };
        res |= if bits == 64 { r } else { r << (j * bits) };
    }
    Ok(res)
}

/// Progress of one in-flight instruction inside one lane. All counts are
/// 64-bit words of this lane's slice of the register.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LaneInstrState {
    pub id: u64,
    /// Elements of the destination held by this lane.
    pub elems: u32,
    /// Words each source reads (1 for a broadcast scalar).
    pub src_words: [u32; 3],
    pub read: [u32; 3],
    pub prev_read: [u32; 3],
    pub dst_words: u32,
    /// `dst_words` is final; slides only know it once they start.
    pub dst_known: bool,
    pub written: u32,
    pub prev_written: u32,
    /// Result words handed to a functional unit.
    pub exec: u32,
    pub scalars: [Option<u64>; 3],
}

impl LaneInstrState {
    pub fn reads_done(&self) -> bool {
        (0..3).all(|k| self.read[k] >= self.src_words[k])
    }

    pub fn finished(&self) -> bool {
        self.dst_known && self.written >= self.dst_words && self.reads_done()
    }
}

/// Operand words a chained consumer may request this cycle: never more than
/// the producer had completed by the end of the previous cycle, and never
/// more than the queue can take. `None` means the source has no in-flight
/// producer.
pub fn operand_request_budget(
    read: u32,
    producer_prev_written: Option<u32>,
    queue_space: u32,
) -> u32 {
    let avail = match producer_prev_written {
        Some(p) => p.saturating_sub(read),
        None => u32::MAX,
    };
    avail.min(queue_space)
}

#[derive(Debug, Clone, Copy)]
struct PipeEntry {
    ready: u64,
    wb: WbEntry,
}

/// What a lane did in one cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LaneCycle {
    pub fpu: bool,
    pub mul: bool,
    pub alu: bool,
    pub flops: u64,
    pub grants: u32,
    pub denied: u32,
    /// Banks that granted more than one request (must stay zero).
    pub port_violations: u32,
    /// Reads that observed a word not written by the expected producer.
    pub chaining_violations: u32,
}

#[derive(Debug, Clone, Copy)]
enum ReqSource {
    Read { q: QueueId, slot: usize, k: usize },
    FpuWb,
    AluWb,
    SlideWb,
    LoadWb,
}

/// One lane of the vector unit.
#[derive(Debug, Clone)]
pub struct Lane {
    pub index: usize,
    lanes: usize,
    geom: VrfGeometry,
    pub vrf: VrfStorage,
    pub state: Vec<LaneInstrState>,
    pub queues: OperandQueueSet,
    /// Per operand queue, the (slot, source) pairs still to fetch, in issue
    /// order.
    fetch: Vec<VecDeque<(usize, usize)>>,
    exec_fpu: VecDeque<usize>,
    exec_alu: VecDeque<usize>,
    fpu_pipe: VecDeque<PipeEntry>,
    mul_pipe: VecDeque<PipeEntry>,
    alu_pipe: VecDeque<PipeEntry>,
    iterative_busy_until: u64,
    pub load_buf: BoundedQueue<WbEntry>,
    pub slide_wb: BoundedQueue<WbEntry>,
    arbiter: BankArbiter,
    reqs: Vec<BankRequest>,
    req_src: Vec<ReqSource>,
    granted: Vec<bool>,
    /// Operand pops in order, when enabled: (instruction, queue, word).
    pub operand_log: Option<Vec<(u64, QueueId, u32)>>,
    /// Grants per bank in the most recent cycle.
    pub last_bank_grants: Vec<u32>,
}

impl Lane {
    pub fn new(index: usize, cfg: &MachineConfig) -> Self {
        let geom = VrfGeometry::from_config(cfg);
        Lane {
            index,
            lanes: cfg.lanes,
            geom,
            vrf: VrfStorage::new(geom),
            state: vec![LaneInstrState::default(); cfg.sequencer_slots],
            queues: OperandQueueSet::new(cfg),
            fetch: vec![VecDeque::new(); QueueId::ALL.len()],
            exec_fpu: VecDeque::new(),
            exec_alu: VecDeque::new(),
            fpu_pipe: VecDeque::new(),
            mul_pipe: VecDeque::new(),
            alu_pipe: VecDeque::new(),
            iterative_busy_until: 0,
            load_buf: BoundedQueue::new(cfg.load_buffer_depth),
            slide_wb: BoundedQueue::new(cfg.wb_depth),
            arbiter: BankArbiter::new(cfg.banks, Requester::COUNT),
            reqs: Vec::with_capacity(Requester::COUNT),
            req_src: Vec::with_capacity(Requester::COUNT),
            granted: Vec::with_capacity(Requester::COUNT),
            operand_log: None,
            last_bank_grants: vec![0; cfg.banks],
        }
    }

    /// Registers a freshly issued instruction with this lane.
    pub fn assign(&mut self, f: &InFlight) {
        let elems = elems_in_lane(f.vl, self.lanes, self.index);
        let mut st = LaneInstrState {
            id: f.id,
            elems: elems as u32,
            dst_known: true,
            ..Default::default()
        };
        for (k, src) in f.src.iter().enumerate() {
            if let Some(s) = src {
                st.src_words[k] = if s.scalar {
                    u32::from(elems > 0)
                } else {
                    words_for(elems, f.sew) as u32
                };
                if let Some(q) = s.queue {
                    if st.src_words[k] > 0 {
                        self.fetch[q.index()].push_back((f.slot, k));
                    }
                }
            }
        }
        match f.unit {
            Unit::FpuMul | Unit::Alu | Unit::Load => {
                st.dst_words = words_for(elems, f.dsew) as u32;
            }
            Unit::Store => {}
            Unit::Slide => st.dst_known = false,
        }
        match f.unit {
            Unit::FpuMul if st.dst_words > 0 => self.exec_fpu.push_back(f.slot),
            Unit::Alu if st.dst_words > 0 => self.exec_alu.push_back(f.slot),
            _ => {}
        }
        self.state[f.slot] = st;
    }

    /// Forgets a retired instruction.
    pub fn retire(&mut self, slot: usize) {
        debug_assert!(self.fetch.iter().all(|q| q.iter().all(|(s, _)| *s != slot)));
        self.state[slot] = LaneInstrState::default();
    }

    /// Words of a producer visible to consumers this cycle.
    #[inline]
    fn raw_limit(&self, t: &InstrTable, dep: Option<DepRef>) -> u32 {
        match dep.and_then(|d| t.get(d)) {
            None => u32::MAX,
            Some(p) if p.ordered => self.state[p.slot].prev_written,
            Some(_) => 0,
        }
    }

    /// Whether `f` may write `word` of its destination in this lane.
    pub fn write_allowed(&self, t: &InstrTable, f: &InFlight, word: u32) -> bool {
        for &(d, k) in &f.war {
            if t.alive(d) {
                let r = &self.state[d.slot];
                if r.prev_read[k] < r.src_words[k] && r.prev_read[k] <= word {
                    return false;
                }
            }
        }
        if let Some(d) = f.waw {
            if let Some(w) = t.get(d) {
                if !w.ordered || self.state[d.slot].prev_written <= word {
                    return false;
                }
            }
        }
        true
    }

    pub fn finished(&self, slot: usize) -> bool {
        self.state[slot].finished()
    }

    /// True when nothing is queued or executing in this lane.
    pub fn is_idle(&self) -> bool {
        self.queues.is_idle()
            && self.fpu_pipe.is_empty()
            && self.mul_pipe.is_empty()
            && self.alu_pipe.is_empty()
            && self.load_buf.is_empty()
            && self.slide_wb.is_empty()
    }

    /// Moves finished results to the write-back queues and lets the units
    /// accept new bundles.
    pub fn execute(
        &mut self,
        t: &InstrTable,
        cfg: &MachineConfig,
        now: u64,
        out: &mut LaneCycle,
    ) -> Result<(), LaneError> {
        for pipe in [&mut self.fpu_pipe, &mut self.mul_pipe] {
            while let Some(e) = pipe.front() {
                if e.ready > now || self.queues.fpu_mul_wb.is_full() {
                    break;
                }
                let e = pipe.pop_front().unwrap_or_else(|| unreachable!());
                let _ = self.queues.fpu_mul_wb.push(e.wb);
            }
        }
        while let Some(e) = self.alu_pipe.front() {
            if e.ready > now || self.queues.alu_wb.is_full() {
                break;
            }
            let e = self.alu_pipe.pop_front().unwrap_or_else(|| unreachable!());
            let _ = self.queues.alu_wb.push(e.wb);
        }
        self.accept(t, cfg, now, false, out)?;
        self.accept(t, cfg, now, true, out)?;
        Ok(())
    }

    fn accept(
        &mut self,
        t: &InstrTable,
        cfg: &MachineConfig,
        now: u64,
        alu: bool,
        out: &mut LaneCycle,
    ) -> Result<(), LaneError> {
        let list = if alu { &self.exec_alu } else { &self.exec_fpu };
        let Some(&slot) = list.front() else {
            return Ok(());
        };
        let Some(f) = t.slot(slot) else {
            return Ok(());
        };
        let Some((op, ty, widen)) = f.arith() else {
            return Ok(());
        };
        let kind = if alu { FuKind::Alu } else { fu_for(op, ty) };
        let iterative = kind == FuKind::Fpu && is_iterative(op);
        let room = match kind {
            FuKind::Fpu => {
                now >= self.iterative_busy_until && (self.fpu_pipe.len() as u64) < cfg.fpu_depth
            }
            FuKind::Mul => (self.mul_pipe.len() as u64) < cfg.mul_depth,
            FuKind::Alu => (self.alu_pipe.len() as u64) < cfg.alu_depth,
        };
        if !room {
            return Ok(());
        }
        let st = &self.state[slot];
        let d = st.exec;
        let arity = op.arity();
        let mut ops = [0u64; 3];
        for (k, slot_op) in ops.iter_mut().enumerate().take(arity) {
            let Some(src) = f.src[k] else {
                return Ok(());
            };
            let Some(q) = src.queue else {
                return Ok(());
            };
            if src.scalar {
                let v = match st.scalars[k] {
                    Some(v) => v,
                    None => match self.queues.queue(q).front() {
                        Some(w) if w.instr == f.id => w.value,
                        _ => return Ok(()),
                    },
                };
                *slot_op = splat(v, f.sew);
            } else {
                let s = if widen { d / 2 } else { d };
                match self.queues.queue(q).front() {
                    Some(w) if w.instr == f.id && w.word == s => *slot_op = w.value,
                    _ => return Ok(()),
                }
            }
        }
        let value = execute_bundle(op, ty, widen, f.sew, ops, (d % 2) as usize)?;
        let last = d + 1 == st.dst_words;
        for k in 0..arity {
            let src = f.src[k].unwrap_or_else(|| unreachable!());
            let q = src.queue.unwrap_or_else(|| unreachable!());
            let pop = if src.scalar {
                self.state[slot].scalars[k].is_none()
            } else {
                !widen || d % 2 == 1 || last
            };
            if pop {
                let w = self
                    .queues
                    .queue_mut(q)
                    .pop()
                    .unwrap_or_else(|_| unreachable!());
                if let Some(log) = self.operand_log.as_mut() {
                    log.push((w.instr, q, w.word));
                }
                if src.scalar {
                    self.state[slot].scalars[k] = Some(w.value);
                }
            }
        }
        let st = &mut self.state[slot];
        let pw = f.dsew.per_word() as u32;
        let valid = (st.elems - d * pw).min(pw) as usize;
        let wb = WbEntry {
            slot,
            instr: f.id,
            reg: f.dest.unwrap_or_else(|| unreachable!()),
            word: d,
            value,
            mask: element_mask(valid, f.dsew),
        };
        st.exec += 1;
        let done = st.exec == st.dst_words;
        out.flops += flops_per_element(op, ty) * valid as u64;
        match kind {
            FuKind::Fpu => {
                let lat = if iterative {
                    self.iterative_busy_until = now + cfg.div_latency;
                    cfg.div_latency
                } else {
                    cfg.fpu_depth
                };
                self.fpu_pipe.push_back(PipeEntry {
                    ready: now + lat,
                    wb,
                });
                out.fpu = true;
            }
            FuKind::Mul => {
                self.mul_pipe.push_back(PipeEntry {
                    ready: now + cfg.mul_depth,
                    wb,
                });
                out.mul = true;
            }
            FuKind::Alu => {
                self.alu_pipe.push_back(PipeEntry {
                    ready: now + cfg.alu_depth,
                    wb,
                });
                out.alu = true;
            }
        }
        if done {
            if alu {
                self.exec_alu.pop_front();
            } else {
                self.exec_fpu.pop_front();
            }
        }
        Ok(())
    }

    /// Collects register-file requests from the operand fetchers and the
    /// write-back paths, arbitrates every bank and performs the granted
    /// accesses.
    pub fn access_banks(&mut self, t: &InstrTable, out: &mut LaneCycle) {
        self.reqs.clear();
        self.req_src.clear();
        for q in QueueId::ALL {
            let qi = q.index();
            let Some(&(slot, k)) = self.fetch[qi].front() else {
                continue;
            };
            if self.queues.queue(q).is_full() {
                continue;
            }
            let Some(f) = t.slot(slot) else {
                continue;
            };
            let src = f.src[k].unwrap_or_else(|| unreachable!());
            let word = self.state[slot].read[k];
            if word >= self.raw_limit(t, src.raw) {
                continue;
            }
            self.reqs.push(BankRequest {
                requester: qi,
                bank: self.geom.locate(src.reg.id(), word as usize).0,
                reg: src.reg,
                word: word as usize,
                write: false,
                priority: q.priority(),
            });
            self.req_src.push(ReqSource::Read { q, slot, k });
        }
        let wbs = [
            (
                self.queues.fpu_mul_wb.front(),
                ReqSource::FpuWb,
                Requester::FpuWriteBack,
                Priority::High,
            ),
            (
                self.queues.alu_wb.front(),
                ReqSource::AluWb,
                Requester::AluWriteBack,
                Priority::High,
            ),
            (
                self.slide_wb.front(),
                ReqSource::SlideWb,
                Requester::SlduWriteBack,
                Priority::High,
            ),
            (
                self.load_buf.front(),
                ReqSource::LoadWb,
                Requester::LoadWriteBack,
                Priority::Low,
            ),
        ];
        for (head, src, who, priority) in wbs {
            let Some(e) = head else {
                continue;
            };
            let Some(f) = t.slot(e.slot) else {
                continue;
            };
            if !self.write_allowed(t, f, e.word) {
                continue;
            }
            self.reqs.push(BankRequest {
                requester: who.index(),
                bank: self.geom.locate(e.reg.id(), e.word as usize).0,
                reg: e.reg,
                word: e.word as usize,
                write: true,
                priority,
            });
            self.req_src.push(src);
        }
        if self.reqs.is_empty() {
            return;
        }
        self.arbiter.grant_all(&self.reqs, &mut self.granted);
        self.last_bank_grants.iter_mut().for_each(|g| *g = 0);
        for i in 0..self.reqs.len() {
            if !self.granted[i] {
                out.denied += 1;
                continue;
            }
            out.grants += 1;
            let r = self.reqs[i];
            self.last_bank_grants[r.bank] += 1;
            match self.req_src[i] {
                ReqSource::Read { q, slot, k } => {
                    let f = t.slot(slot).unwrap_or_else(|| unreachable!());
                    let src = f.src[k].unwrap_or_else(|| unreachable!());
                    let value = self.vrf.read(r.reg.id(), r.word);
                    if let Some(e) = src.expect {
                        let covered = if e.scalar {
                            1
                        } else {
                            words_for(elems_in_lane(e.vl, self.lanes, self.index), e.sew)
                        };
                        if r.word < covered && self.vrf.tag(r.reg.id(), r.word) != e.id {
                            out.chaining_violations += 1;
                        }
                    }
                    let _ = self.queues.queue_mut(q).push(OperandWord {
                        instr: f.id,
                        word: r.word as u32,
                        value,
                    });
                    let st = &mut self.state[slot];
                    st.read[k] += 1;
                    if st.read[k] >= st.src_words[k] {
                        self.fetch[q.index()].pop_front();
                    }
                }
                src => {
                    let queue = match src {
                        ReqSource::FpuWb => &mut self.queues.fpu_mul_wb,
                        ReqSource::AluWb => &mut self.queues.alu_wb,
                        ReqSource::SlideWb => &mut self.slide_wb,
                        _ => &mut self.load_buf,
                    };
                    let e = queue.pop().unwrap_or_else(|_| unreachable!());
                    self.vrf
                        .write_tagged(e.reg.id(), e.word as usize, e.value, e.mask, e.instr);
                    self.state[e.slot].written += 1;
                }
            }
        }
        for &g in &self.last_bank_grants {
            if g > 1 {
                out.port_violations += 1;
            }
        }
    }

    /// Publishes this cycle's progress to next cycle's consumers.
    pub fn snapshot(&mut self) {
        for st in &mut self.state {
            st.prev_read = st.read;
            st.prev_written = st.written;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f64w(x: f64) -> u64 {
        x.to_bits()
    }

    #[test]
    fn fma_small_integers() {
        let r = execute_bundle(
            ArithOp::Madd,
            ElemType::Float,
            false,
            Sew::E64,
            [f64w(2.0), f64w(3.0), f64w(1.0)],
            0,
        )
        .unwrap();
        assert_eq!(f64::from_bits(r), 7.0);
    }

    #[test]
    fn sew32_add_two_per_word() {
        let pack = |a: f32, b: f32| a.to_bits() as u64 | (b.to_bits() as u64) << 32;
        let r = execute_bundle(
            ArithOp::Add,
            ElemType::Float,
            false,
            Sew::E32,
            [pack(1.5, -2.0), pack(0.25, 8.0), 0],
            0,
        )
        .unwrap();
        assert_eq!(f32::from_bits(r as u32), 1.75);
        assert_eq!(f32::from_bits((r >> 32) as u32), 6.0);
    }

    #[test]
    fn sew16_float_and_int8() {
        let h = |x: f32| f16::from_f32(x).to_bits() as u64;
        let a = h(1.0) | h(2.0) << 16 | h(3.0) << 32 | h(4.0) << 48;
        let r =
            execute_bundle(ArithOp::Mul, ElemType::Float, false, Sew::E16, [a, a, 0], 0).unwrap();
        let got: Vec<f32> = (0..4)
            .map(|j| f16::from_bits((r >> (16 * j)) as u16).to_f32())
            .collect();
        assert_eq!(got, vec![1.0, 4.0, 9.0, 16.0]);

        let a = u64::from_le_bytes([1, 2, 3, 4, 5, 6, 7, 0xff]);
        let b = u64::from_le_bytes([1; 8]);
        let r = execute_bundle(ArithOp::Add, ElemType::Int, false, Sew::E8, [a, b, 0], 0).unwrap();
        assert_eq!(r.to_le_bytes(), [2, 3, 4, 5, 6, 7, 8, 0]);
        assert!(execute_bundle(ArithOp::Add, ElemType::Float, false, Sew::E8, [0; 3], 0).is_err());
    }

    #[test]
    fn widening_promotes_each_half() {
        let a = u64::from_le_bytes([1, 2, 3, 4, 0x80, 6, 7, 8]);
        let b = u64::from_le_bytes([2; 8]);
        let lo = execute_bundle(ArithOp::Mul, ElemType::Int, true, Sew::E8, [a, b, 0], 0).unwrap();
        let hi = execute_bundle(ArithOp::Mul, ElemType::Int, true, Sew::E8, [a, b, 0], 1).unwrap();
        let words =
            |w: u64| -> Vec<i16> { (0..4).map(|j| (w >> (16 * j)) as u16 as i16).collect() };
        assert_eq!(words(lo), vec![2, 4, 6, 8]);
        assert_eq!(words(hi), vec![-256, 12, 14, 16]);
        assert!(check_supported(ArithOp::Add, ElemType::Int, true, Sew::E64).is_err());
    }

    #[test]
    fn splat_and_masks() {
        assert_eq!(
            splat(0x1234_5678_9abc_def0, Sew::E16),
            0xdef0_def0_def0_def0
        );
        assert_eq!(element_mask(3, Sew::E16), 0xffff_ffff_ffff);
        assert_eq!(element_mask(1, Sew::E64), u64::MAX);
    }

    #[test]
    fn request_budget_throttles_on_producer() {
        assert_eq!(operand_request_budget(3, Some(4), 4), 1);
        assert_eq!(operand_request_budget(4, Some(4), 4), 0);
        assert_eq!(operand_request_budget(0, None, 2), 2);
    }

    #[test]
    fn unit_selection() {
        assert_eq!(fu_for(ArithOp::Madd, ElemType::Float), FuKind::Fpu);
        assert_eq!(fu_for(ArithOp::Madd, ElemType::Int), FuKind::Mul);
        assert_eq!(fu_for(ArithOp::Add, ElemType::Int), FuKind::Alu);
        assert_eq!(flops_per_element(ArithOp::Madd, ElemType::Float), 2);
        assert_eq!(flops_per_element(ArithOp::Add, ElemType::Int), 0);
    }
}
