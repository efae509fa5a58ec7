//! Vector load/store unit: address generation, coalescing of unit-stride
//! accesses into bursts, and the wide memory port shared by reads and
//! writes.
//!
//! Unit-stride accesses make one burst request and move one aligned chunk of
//! the port width per cycle. Strided and indexed accesses move one element
//! per cycle, each with its own request.

use std::collections::VecDeque;

use thiserror::Error;

use crate::config::MachineConfig;
use crate::isa::{AccessMode, Sew, VReg, VectorInstr};
use crate::lane::{element_mask, Lane};
use crate::memory::Memory;
use crate::vrf::{BoundedQueue, OperandWord, QueueId, WbEntry};
use crate::vunit::table::{elems_in_lane, InFlight, InstrTable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VlsuError {
    #[error("misaligned {size}-byte element access at {addr:#x}")]
    Misaligned { addr: u64, size: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamMode {
    Unit,
    /// Byte stride between consecutive elements.
    Strided(i64),
    /// Byte offsets from the base, one per element.
    Indexed(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressStream {
    pub mode: StreamMode,
    pub base: u64,
    pub count: usize,
    /// Element size in bytes.
    pub size: usize,
}

/// Element addresses of a stream, in element order.
pub fn generate_addresses(s: &AddressStream) -> Result<Vec<u64>, VlsuError> {
    let addrs: Vec<u64> = match &s.mode {
        StreamMode::Unit => (0..s.count)
            .map(|k| s.base.wrapping_add((k * s.size) as u64))
            .collect(),
        StreamMode::Strided(stride) => (0..s.count)
            .map(|k| s.base.wrapping_add((k as i64).wrapping_mul(*stride) as u64))
            .collect(),
        StreamMode::Indexed(idx) => idx
            .iter()
            .take(s.count)
            .map(|&o| s.base.wrapping_add(o))
            .collect(),
    };
    for &addr in &addrs {
        check_aligned(addr, s.size)?;
    }
    Ok(addrs)
}

fn check_aligned(addr: u64, size: usize) -> Result<(), VlsuError> {
    if addr.is_multiple_of(size as u64) {
        Ok(())
    } else {
        Err(VlsuError::Misaligned { addr, size })
    }
}

/// A contiguous byte range moved under a single request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Burst {
    pub start: u64,
    pub len: usize,
}

impl Burst {
    /// Data cycles on a port moving `port_bytes` aligned bytes per cycle.
    pub fn beats(&self, port_bytes: usize) -> usize {
        if self.len == 0 {
            return 0;
        }
        let w = port_bytes as u64;
        let first = self.start / w;
        let last = (self.start + self.len as u64 - 1) / w;
        (last - first + 1) as usize
    }
}

/// Merges maximal runs of contiguous element addresses into bursts.
pub fn coalesce(addrs: &[u64], size: usize) -> Vec<Burst> {
    let mut out: Vec<Burst> = Vec::new();
    for &a in addrs {
        match out.last_mut() {
            Some(b) if b.start + b.len as u64 == a => b.len += size,
            _ => out.push(Burst {
                start: a,
                len: size,
            }),
        }
    }
    out
}

/// What the memory port did in one cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PortCycle {
    pub read_bytes: u64,
    pub write_bytes: u64,
    /// Cycles whose transfer exceeded the port width (must stay zero).
    pub bandwidth_violations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Unit,
    Strided(i64),
    Indexed,
}

#[derive(Debug, Clone)]
struct Txn {
    slot: usize,
    id: u64,
    load: bool,
    kind: Kind,
    base: u64,
    size: usize,
    sew: Sew,
    vl: usize,
    reg: VReg,
    /// Byte range touched; `None` when it depends on index values.
    range: Option<(u64, u64)>,
    data_scalar: bool,
    index_scalar: bool,
    /// Unit stride: cycle of the burst request.
    request_at: Option<u64>,
    /// Unit stride: bytes moved so far.
    moved: u64,
    /// Strided and indexed: elements requested so far.
    requested: usize,
    /// Outstanding element reads: (element, address, data-ready cycle).
    pending: VecDeque<(usize, u64, u64)>,
    /// Elements fully transferred.
    done: usize,
    last_beat: Option<u64>,
    /// Stores: cycle of the write response.
    response_at: Option<u64>,
    /// Loads: per-lane partial word (value, elements).
    acc: Vec<(u64, u32)>,
    data_used: Vec<u32>,
    index_used: Vec<u32>,
}

impl Txn {
    fn transferred(&self) -> bool {
        self.done >= self.vl
    }

    fn complete(&self, now: u64) -> bool {
        if self.load {
            self.transferred()
        } else {
            self.transferred() && self.response_at.is_some_and(|r| r <= now)
        }
    }

    fn overlaps(&self, other: &Txn) -> bool {
        match (self.range, other.range) {
            (Some((a0, a1)), Some((b0, b1))) => a0 < b1 && b0 < a1,
            _ => self.vl > 0 && other.vl > 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Vlsu {
    lanes: usize,
    port_bytes: usize,
    latency: u64,
    txns: Vec<Txn>,
    /// Elements to gather this cycle: (element, address).
    scratch: Vec<(usize, u64)>,
    need: Vec<u32>,
}

fn lane_of(e: usize, lanes: usize) -> (usize, usize) {
    (e % lanes, e / lanes)
}

fn find_word(q: &BoundedQueue<OperandWord>, id: u64, word: u32) -> Option<u64> {
    q.iter()
        .find(|w| w.instr == id && w.word == word)
        .map(|w| w.value)
}

impl Vlsu {
    pub fn new(cfg: &MachineConfig) -> Self {
        Vlsu {
            lanes: cfg.lanes,
            port_bytes: cfg.mem_bytes_per_cycle(),
            latency: cfg.mem_latency,
            txns: Vec::new(),
            scratch: Vec::new(),
            need: vec![0; cfg.lanes],
        }
    }

    pub fn len(&self) -> usize {
        self.txns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txns.is_empty()
    }

    /// Takes a newly issued load or store.
    pub fn accept(&mut self, f: &InFlight) {
        let (load, reg, mem, mode) = match f.instr {
            VectorInstr::Load { vd, mem, mode } => (true, vd, mem, mode),
            VectorInstr::Store { vs, mem, mode } => (false, vs, mem, mode),
            _ => return,
        };
        let size = f.sew.bytes();
        let base = f.xvals[0].wrapping_add(mem.offset as u64);
        let kind = match mode {
            AccessMode::Unit => Kind::Unit,
            AccessMode::Strided(_) => Kind::Strided(f.xvals[1] as i64),
            AccessMode::Indexed(_) => Kind::Indexed,
        };
        let range = match kind {
            Kind::Unit => Some((base, base.wrapping_add((f.vl * size) as u64))),
            Kind::Strided(s) if f.vl > 0 => {
                let last = base.wrapping_add(((f.vl - 1) as i64).wrapping_mul(s) as u64);
                Some((base.min(last), base.max(last) + size as u64))
            }
            Kind::Strided(_) => Some((base, base)),
            Kind::Indexed => None,
        };
        let scalar_of = |q: QueueId| {
            f.src
                .iter()
                .flatten()
                .find(|s| s.queue == Some(q))
                .is_some_and(|s| s.scalar)
        };
        self.txns.push(Txn {
            slot: f.slot,
            id: f.id,
            load,
            kind,
            base,
            size,
            sew: f.sew,
            vl: f.vl,
            reg,
            range,
            data_scalar: scalar_of(QueueId::Vlsu(0)),
            index_scalar: scalar_of(QueueId::Vlsu(1)),
            request_at: None,
            moved: 0,
            requested: 0,
            pending: VecDeque::new(),
            done: 0,
            last_beat: None,
            response_at: None,
            acc: vec![(0, 0); self.lanes],
            data_used: vec![0; self.lanes],
            index_used: vec![0; self.lanes],
        });
    }

    /// The memory side of the instruction in `slot` is finished.
    pub fn done(&self, slot: usize, now: u64) -> bool {
        self.txns
            .iter()
            .find(|t| t.slot == slot)
            .is_none_or(|t| t.complete(now))
    }

    pub fn remove(&mut self, slot: usize) {
        self.txns.retain(|t| t.slot != slot);
    }

    /// Transactions that have not finished moving data.
    pub fn busy(&self) -> bool {
        self.txns.iter().any(|t| !t.transferred())
    }

    fn may_start(&self, i: usize, now: u64) -> bool {
        let t = &self.txns[i];
        self.txns[..i].iter().all(|o| {
            if !o.overlaps(t) {
                return true;
            }
            match (t.load, o.load) {
                (true, false) => o.complete(now),
                (false, true) => o.transferred(),
                (false, false) => o.transferred(),
                (true, true) => true,
            }
        })
    }

    /// Advances the address channel and the data port by one cycle.
    pub fn step(
        &mut self,
        now: u64,
        table: &InstrTable,
        lanes: &mut [Lane],
        mem: &mut Memory,
        out: &mut PortCycle,
    ) -> Result<(), VlsuError> {
        self.request(now, lanes)?;
        for i in 0..self.txns.len() {
            if self.txns[i].transferred() || !self.may_start(i, now) {
                continue;
            }
            let moved = if self.txns[i].load {
                self.load_beat(i, now, table, lanes, mem, out)?
            } else {
                self.store_beat(i, now, lanes, mem, out)?
            };
            if moved {
                let t = &mut self.txns[i];
                t.last_beat = Some(now);
                if !t.load && t.transferred() {
                    t.response_at = Some(now + self.latency);
                }
                break;
            }
        }
        if out.read_bytes + out.write_bytes > self.port_bytes as u64 {
            out.bandwidth_violations += 1;
        }
        Ok(())
    }

    /// Issues at most one read request, in load order.
    fn request(&mut self, now: u64, lanes: &mut [Lane]) -> Result<(), VlsuError> {
        for i in 0..self.txns.len() {
            let t = &self.txns[i];
            if !t.load {
                continue;
            }
            let requested_all = match t.kind {
                Kind::Unit => t.request_at.is_some() || t.vl == 0,
                _ => t.requested >= t.vl,
            };
            if requested_all {
                continue;
            }
            if !self.may_start(i, now) {
                return Ok(());
            }
            let latency = self.latency;
            match t.kind {
                Kind::Unit => {
                    self.txns[i].request_at = Some(now);
                }
                kind => {
                    let e = t.requested;
                    let addr = match kind {
                        Kind::Strided(s) => t.base.wrapping_add((e as i64).wrapping_mul(s) as u64),
                        _ => match self.take_index(i, e, lanes) {
                            Some(off) => self.txns[i].base.wrapping_add(off),
                            None => return Ok(()),
                        },
                    };
                    check_aligned(addr, self.txns[i].size)?;
                    let t = &mut self.txns[i];
                    t.pending.push_back((e, addr, now + latency));
                    t.requested += 1;
                }
            }
            return Ok(());
        }
        Ok(())
    }

    /// Reads element `e` of the index operand and consumes it.
    fn take_index(&mut self, i: usize, e: usize, lanes: &mut [Lane]) -> Option<u64> {
        let v = self.peek_operand(i, e, lanes, QueueId::Vlsu(1))?;
        let t = &mut self.txns[i];
        let (lane, _) = lane_of(e, self.lanes);
        t.index_used[lane] += 1;
        let used = t.index_used[lane];
        let scalar = t.index_scalar;
        Self::release(t, lanes, lane, QueueId::Vlsu(1), used, scalar);
        Some(v)
    }

    /// Element `e` of the operand in queue `q`, if its word has arrived.
    fn peek_operand(&self, i: usize, e: usize, lanes: &[Lane], q: QueueId) -> Option<u64> {
        let t = &self.txns[i];
        let (lane, local) = lane_of(e, self.lanes);
        let scalar = if q == QueueId::Vlsu(0) {
            t.data_scalar
        } else {
            t.index_scalar
        };
        let pw = t.sew.per_word();
        let (word, pos) = if scalar {
            (0, 0)
        } else {
            (local / pw, local % pw)
        };
        let value = find_word(lanes[lane].queues.queue(q), t.id, word as u32)?;
        let bits = t.sew.bits();
        Some(if bits == 64 {
            value
        } else {
            (value >> (pos * bits)) & ((1u64 << bits) - 1)
        })
    }

    /// Pops operand words of `lane` whose elements have all been used.
    fn release(t: &Txn, lanes: &mut [Lane], lane: usize, q: QueueId, used: u32, scalar: bool) {
        let elems = elems_in_lane(t.vl, lanes.len(), lane) as u32;
        let pw = t.sew.per_word() as u32;
        let queue = lanes[lane].queues.queue_mut(q);
        while let Some(w) = queue.front() {
            if w.instr != t.id {
                break;
            }
            let end = if scalar {
                elems
            } else {
                ((w.word + 1) * pw).min(elems)
            };
            if used < end {
                break;
            }
            let _ = queue.pop();
        }
    }

    fn unit_beat_bytes(&self, t: &Txn) -> u64 {
        let total = (t.vl * t.size) as u64;
        let addr = t.base + t.moved;
        let w = self.port_bytes as u64;
        let chunk_end = (addr / w + 1) * w;
        (chunk_end - addr).min(total - t.moved)
    }

    fn load_beat(
        &mut self,
        i: usize,
        now: u64,
        table: &InstrTable,
        lanes: &mut [Lane],
        mem: &Memory,
        out: &mut PortCycle,
    ) -> Result<bool, VlsuError> {
        let t = &self.txns[i];
        self.scratch.clear();
        let bytes;
        match t.kind {
            Kind::Unit => {
                let Some(r) = t.request_at else {
                    return Ok(false);
                };
                let beat = self.port_beats_moved(t);
                if now < r + self.latency + beat {
                    return Ok(false);
                }
                bytes = self.unit_beat_bytes(t);
                let end = t.moved + bytes;
                let last = (end / t.size as u64) as usize;
                for e in t.done..last {
                    self.scratch.push((e, t.base + (e * t.size) as u64));
                }
            }
            _ => {
                let Some(&(e, addr, ready)) = t.pending.front() else {
                    return Ok(false);
                };
                if ready > now {
                    return Ok(false);
                }
                bytes = t.size as u64;
                self.scratch.push((e, addr));
            }
        }
        if table.slot(t.slot).is_none() {
            return Ok(false);
        }
        // Words this beat completes in each lane must fit the load buffers.
        self.need.iter_mut().for_each(|n| *n = 0);
        let pw = t.sew.per_word();
        for &(e, _) in &self.scratch {
            let (lane, local) = lane_of(e, self.lanes);
            let elems = elems_in_lane(t.vl, self.lanes, lane);
            if (local + 1) % pw == 0 || local + 1 == elems {
                self.need[lane] += 1;
            }
        }
        for (lane, &n) in self.need.iter().enumerate() {
            let buf = &lanes[lane].load_buf;
            if buf.len() + n as usize > buf.depth() {
                return Ok(false);
            }
        }
        let lanes_n = self.lanes;
        let t = &mut self.txns[i];
        let bits = t.sew.bits();
        for &(e, addr) in &self.scratch {
            let (lane, local) = lane_of(e, lanes_n);
            let elems = elems_in_lane(t.vl, lanes_n, lane);
            let v = mem.read_uint(addr, t.size);
            let pos = local % pw;
            let acc = &mut t.acc[lane];
            acc.0 |= if bits == 64 { v } else { v << (pos * bits) };
            acc.1 += 1;
            if pos + 1 == pw || local + 1 == elems {
                let _ = lanes[lane].load_buf.push(WbEntry {
                    slot: t.slot,
                    instr: t.id,
                    reg: t.reg,
                    word: (local / pw) as u32,
                    value: acc.0,
                    mask: element_mask(acc.1 as usize, t.sew),
                });
                *acc = (0, 0);
            }
        }
        match t.kind {
            Kind::Unit => {
                t.moved += bytes;
                t.done = (t.moved / t.size as u64) as usize;
            }
            _ => {
                t.pending.pop_front();
                t.done += 1;
            }
        }
        out.read_bytes += bytes;
        Ok(true)
    }

    fn port_beats_moved(&self, t: &Txn) -> u64 {
        Burst {
            start: t.base,
            len: t.moved as usize,
        }
        .beats(self.port_bytes) as u64
    }

    fn store_beat(
        &mut self,
        i: usize,
        _now: u64,
        lanes: &mut [Lane],
        mem: &mut Memory,
        out: &mut PortCycle,
    ) -> Result<bool, VlsuError> {
        let t = &self.txns[i];
        self.scratch.clear();
        let bytes;
        let touched_end;
        match t.kind {
            Kind::Unit => {
                bytes = self.unit_beat_bytes(t);
                let end = t.moved + bytes;
                touched_end = (end as usize).div_ceil(t.size);
                for e in t.done..(end / t.size as u64) as usize {
                    self.scratch.push((e, t.base + (e * t.size) as u64));
                }
            }
            kind => {
                let e = t.done;
                let addr = match kind {
                    Kind::Strided(s) => t.base.wrapping_add((e as i64).wrapping_mul(s) as u64),
                    _ => match self.peek_operand(i, e, lanes, QueueId::Vlsu(1)) {
                        Some(off) => t.base.wrapping_add(off),
                        None => return Ok(false),
                    },
                };
                check_aligned(addr, t.size)?;
                bytes = t.size as u64;
                touched_end = e + 1;
                self.scratch.push((e, addr));
            }
        }
        let t = &self.txns[i];
        for e in t.done..touched_end {
            if self.peek_operand(i, e, lanes, QueueId::Vlsu(0)).is_none() {
                return Ok(false);
            }
        }
        let scratch = std::mem::take(&mut self.scratch);
        for &(e, addr) in &scratch {
            let v = self
                .peek_operand(i, e, lanes, QueueId::Vlsu(0))
                .unwrap_or_default();
            mem.write_uint(addr, self.txns[i].size, v);
            if self.txns[i].kind == Kind::Indexed {
                self.take_index(i, e, lanes);
            }
            let (lane, _) = lane_of(e, self.lanes);
            let t = &mut self.txns[i];
            t.data_used[lane] += 1;
            let used = t.data_used[lane];
            let scalar = t.data_scalar;
            Self::release(&self.txns[i], lanes, lane, QueueId::Vlsu(0), used, scalar);
        }
        self.scratch = scratch;
        let t = &mut self.txns[i];
        match t.kind {
            Kind::Unit => {
                t.moved += bytes;
                t.done = (t.moved / t.size as u64) as usize;
            }
            _ => t.done += 1,
        }
        out.write_bytes += bytes;
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_stride_addresses() {
        let s = AddressStream {
            mode: StreamMode::Unit,
            base: 0x1000,
            count: 4,
            size: 8,
        };
        assert_eq!(
            generate_addresses(&s).unwrap(),
            vec![0x1000, 0x1008, 0x1010, 0x1018]
        );
    }

    #[test]
    fn strided_addresses() {
        let s = AddressStream {
            mode: StreamMode::Strided(256),
            base: 0,
            count: 3,
            size: 8,
        };
        assert_eq!(generate_addresses(&s).unwrap(), vec![0, 256, 512]);
    }

    #[test]
    fn indexed_addresses_match_naive_loop() {
        let idx = vec![24, 0, 8];
        let s = AddressStream {
            mode: StreamMode::Indexed(idx.clone()),
            base: 0x40,
            count: 3,
            size: 8,
        };
        let naive: Vec<u64> = idx.iter().map(|o| 0x40 + o).collect();
        assert_eq!(generate_addresses(&s).unwrap(), naive);
    }

    #[test]
    fn misaligned_is_rejected() {
        let s = AddressStream {
            mode: StreamMode::Unit,
            base: 0x1004,
            count: 2,
            size: 8,
        };
        assert_eq!(
            generate_addresses(&s),
            Err(VlsuError::Misaligned {
                addr: 0x1004,
                size: 8
            })
        );
    }

    #[test]
    fn coalescing() {
        let addrs: Vec<u64> = (0..64).map(|k| 0x2000 + 8 * k).collect();
        let b = coalesce(&addrs, 8);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].beats(16), 32);
        let one = coalesce(&[0x10], 8);
        assert_eq!(
            one,
            vec![Burst {
                start: 0x10,
                len: 8
            }]
        );
        assert_eq!(one[0].beats(16), 1);
        let strided: Vec<u64> = (0..8).map(|k| 16 * k).collect();
        assert_eq!(coalesce(&strided, 8).len(), 8);
        assert_eq!(Burst { start: 8, len: 16 }.beats(16), 2);
    }
}
