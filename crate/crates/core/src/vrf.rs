//! Per-lane vector register file: single-ported 64-bit banks, register
//! placement, per-bank arbitration and the operand / write-back queues that
//! sit between the banks and the execution units.

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

use crate::config::{BankMapping, MachineConfig};
use crate::isa::{VReg, NUM_VREGS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VrfError {
    #[error("element {element} out of range (vlmax {vlmax})")]
    ElementRange { element: usize, vlmax: usize },
}

/// Shape of one lane's register file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VrfGeometry {
    pub banks: usize,
    pub bank_width_bits: usize,
    pub bytes_per_lane: usize,
    pub registers: usize,
    pub mapping: BankMapping,
}

impl Default for VrfGeometry {
    fn default() -> Self {
        VrfGeometry {
            banks: 8,
            bank_width_bits: 64,
            bytes_per_lane: 16 * 1024,
            registers: NUM_VREGS,
            mapping: BankMapping::BarberPole,
        }
    }
}

impl VrfGeometry {
    pub fn from_config(cfg: &MachineConfig) -> Self {
        VrfGeometry {
            banks: cfg.banks,
            bank_width_bits: 64,
            bytes_per_lane: cfg.vrf_bytes_per_lane,
            registers: NUM_VREGS,
            mapping: cfg.bank_mapping,
        }
    }

    pub fn words_per_reg(&self) -> usize {
        self.bytes_per_lane * 8 / self.bank_width_bits / self.registers
    }

    pub fn rows_per_reg(&self) -> usize {
        self.words_per_reg() / self.banks
    }

    pub fn rows_total(&self) -> usize {
        self.rows_per_reg() * self.registers
    }

    /// Bank and row of local 64-bit word `word` of `reg`.
    #[inline]
    pub fn locate(&self, reg: usize, word: usize) -> (usize, usize) {
        let bank = match self.mapping {
            BankMapping::BarberPole => (word + reg) % self.banks,
            BankMapping::Flat => word % self.banks,
        };
        let row = reg * self.rows_per_reg() + word / self.banks;
        (bank, row)
    }
}

/// Physical position of an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementLocation {
    pub lane: usize,
    pub bank: usize,
    pub row: usize,
}

/// Places 64-bit element `element` of `reg` across `lanes` lanes: elements
/// interleave over lanes, then rotate over the banks starting at the bank
/// selected by the mapping.
pub fn map_element(
    geom: &VrfGeometry,
    reg: VReg,
    element: usize,
    lanes: usize,
) -> Result<ElementLocation, VrfError> {
    let vlmax = geom.words_per_reg() * lanes;
    if element >= vlmax {
        return Err(VrfError::ElementRange { element, vlmax });
    }
    let lane = element % lanes;
    let local = element / lanes;
    let (bank, row) = geom.locate(reg.id(), local);
    Ok(ElementLocation { lane, bank, row })
}

/// Functional contents of one lane's register file.
#[derive(Debug, Clone)]
pub struct VrfStorage {
    geom: VrfGeometry,
    cells: Vec<u64>,
    /// Id of the instruction that last wrote each cell (0 = never written).
    tags: Vec<u64>,
}

impl VrfStorage {
    pub fn new(geom: VrfGeometry) -> Self {
        let n = geom.rows_total() * geom.banks;
        VrfStorage {
            geom,
            cells: vec![0; n],
            tags: vec![0; n],
        }
    }

    pub fn geometry(&self) -> &VrfGeometry {
        &self.geom
    }

    #[inline]
    fn index(&self, reg: usize, word: usize) -> usize {
        let (bank, row) = self.geom.locate(reg, word);
        row * self.geom.banks + bank
    }

    #[inline]
    pub fn read(&self, reg: usize, word: usize) -> u64 {
        self.cells[self.index(reg, word)]
    }

    #[inline]
    pub fn write(&mut self, reg: usize, word: usize, value: u64) {
        let i = self.index(reg, word);
        self.cells[i] = value;
    }

    /// Writes only the bits selected by `mask`.
    #[inline]
    pub fn write_masked(&mut self, reg: usize, word: usize, value: u64, mask: u64) {
        let i = self.index(reg, word);
        self.cells[i] = (self.cells[i] & !mask) | (value & mask);
    }

    /// Masked write that also records the writer.
    #[inline]
    pub fn write_tagged(&mut self, reg: usize, word: usize, value: u64, mask: u64, tag: u64) {
        let i = self.index(reg, word);
        self.cells[i] = (self.cells[i] & !mask) | (value & mask);
        self.tags[i] = tag;
    }

    #[inline]
    pub fn tag(&self, reg: usize, word: usize) -> u64 {
        self.tags[self.index(reg, word)]
    }
}

/// Writes the CSV debug dump `register,element,lane,bank,row,value` for the
/// first `elements` 64-bit elements of each register in `regs`.
pub fn dump_csv(lanes: &[VrfStorage], regs: &[VReg], elements: usize) -> String {
    let mut out = String::from("register,element,lane,bank,row,value\n");
    let n = lanes.len();
    for &reg in regs {
        for e in 0..elements {
            let lane = &lanes[e % n];
            let loc = match map_element(lane.geometry(), reg, e, n) {
                Ok(loc) => loc,
                Err(_) => break,
            };
            let value = lane.read(reg.id(), e / n);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:#018x}",
                reg.id(),
                e,
                loc.lane,
                loc.bank,
                loc.row,
                value
            );
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Priority {
    Low,
    High,
}

/// One port request to a bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankRequest {
    /// Index of the requesting queue endpoint, see [`Requester`].
    pub requester: usize,
    pub bank: usize,
    pub reg: VReg,
    pub word: usize,
    pub write: bool,
    pub priority: Priority,
}

/// Endpoints that compete for the banks of one lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Requester {
    FpuOperand(usize),
    AluOperand(usize),
    VlsuOperand(usize),
    FpuWriteBack,
    AluWriteBack,
    LoadWriteBack,
    SlduWriteBack,
}

impl Requester {
    pub const COUNT: usize = 4 + 3 + 3 + 4;

    pub fn index(self) -> usize {
        match self {
            Requester::FpuOperand(i) => i,
            Requester::AluOperand(i) => 4 + i,
            Requester::VlsuOperand(i) => 7 + i,
            Requester::FpuWriteBack => 10,
            Requester::AluWriteBack => 11,
            Requester::LoadWriteBack => 12,
            Requester::SlduWriteBack => 13,
        }
    }
}

/// Two-level round-robin arbiters, one per bank. A high-priority request
/// always wins over a low-priority one. At the high level a functional-unit
/// write-back goes ahead of operand reads. Otherwise the search starts just after the last requester granted at
/// that level.
#[derive(Debug, Clone)]
pub struct BankArbiter {
    requesters: usize,
    next: Vec<[usize; 2]>,
}

impl BankArbiter {
    pub fn new(banks: usize, requesters: usize) -> Self {
        BankArbiter {
            requesters,
            next: vec![[0; 2]; banks],
        }
    }

    #[inline]
    fn key(&self, bank: usize, r: &BankRequest) -> (u8, usize) {
        let level = r.priority as usize;
        let start = self.next[bank][level];
        let dist = (r.requester + self.requesters - start) % self.requesters;
        let class = match (r.priority, r.write) {
            (Priority::High, true) => 0,
            (Priority::High, false) => 1,
            (Priority::Low, _) => 2,
        };
        (class, dist)
    }

    /// Grants one of `pending` (all targeting `bank`) and advances that
    /// level's pointer. Returns the index into `pending`.
    pub fn arbitrate(&mut self, bank: usize, pending: &[BankRequest]) -> Option<usize> {
        let best = pending
            .iter()
            .enumerate()
            .filter(|(_, r)| r.bank == bank)
            .min_by_key(|(_, r)| self.key(bank, r))
            .map(|(i, _)| i)?;
        let r = &pending[best];
        self.next[bank][r.priority as usize] = (r.requester + 1) % self.requesters;
        Some(best)
    }

    /// Arbitrates every bank at once; `granted[i]` tells whether request `i`
    /// won its bank this cycle.
    pub fn grant_all(&mut self, pending: &[BankRequest], granted: &mut Vec<bool>) {
        granted.clear();
        granted.resize(pending.len(), false);
        let mut best: [Option<(usize, (u8, usize))>; 64] = [None; 64];
        let banks = self.next.len();
        debug_assert!(banks <= 64);
        for (i, r) in pending.iter().enumerate() {
            let k = self.key(r.bank, r);
            match best[r.bank] {
                Some((_, bk)) if bk <= k => {}
                _ => best[r.bank] = Some((i, k)),
            }
        }
        for (bank, b) in best.iter().enumerate().take(banks) {
            if let Some((i, _)) = *b {
                granted[i] = true;
                let r = &pending[i];
                self.next[bank][r.priority as usize] = (r.requester + 1) % self.requesters;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum QueueError {
    #[error("queue full")]
    Full,
    #[error("queue empty")]
    Empty,
}

/// Bounded FIFO between the register file and a functional unit.
#[derive(Debug, Clone)]
pub struct BoundedQueue<T> {
    items: VecDeque<T>,
    depth: usize,
}

impl<T> BoundedQueue<T> {
    pub fn new(depth: usize) -> Self {
        BoundedQueue {
            items: VecDeque::with_capacity(depth),
            depth,
        }
    }

    pub fn push(&mut self, item: T) -> Result<(), QueueError> {
        if self.items.len() >= self.depth {
            return Err(QueueError::Full);
        }
        self.items.push_back(item);
        Ok(())
    }

    pub fn pop(&mut self) -> Result<T, QueueError> {
        self.items.pop_front().ok_or(QueueError::Empty)
    }

    pub fn front(&self) -> Option<&T> {
        self.items.front()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.depth
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

/// A 64-bit operand word tagged with the instruction and word it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperandWord {
    pub instr: u64,
    pub word: u32,
    pub value: u64,
}

/// A result word waiting for its register-file write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WbEntry {
    pub slot: usize,
    pub instr: u64,
    pub reg: VReg,
    pub word: u32,
    pub value: u64,
    pub mask: u64,
}

/// Identifies one of the ten operand queues of a lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueueId {
    /// Four queues feeding the FPU and the integer multiplier.
    FpuMul(usize),
    /// Three ALU queues; the first two are shared with the slide unit.
    Alu(usize),
    /// Store data, index and mask queues towards the load/store unit.
    Vlsu(usize),
}

impl QueueId {
    pub const ALL: [QueueId; 10] = [
        QueueId::FpuMul(0),
        QueueId::FpuMul(1),
        QueueId::FpuMul(2),
        QueueId::FpuMul(3),
        QueueId::Alu(0),
        QueueId::Alu(1),
        QueueId::Alu(2),
        QueueId::Vlsu(0),
        QueueId::Vlsu(1),
        QueueId::Vlsu(2),
    ];

    /// Position in [`QueueId::ALL`], also the queue's arbiter requester id.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            QueueId::FpuMul(i) => i,
            QueueId::Alu(i) => 4 + i,
            QueueId::Vlsu(i) => 7 + i,
        }
    }

    pub fn requester(self) -> Requester {
        match self {
            QueueId::FpuMul(i) => Requester::FpuOperand(i),
            QueueId::Alu(i) => Requester::AluOperand(i),
            QueueId::Vlsu(i) => Requester::VlsuOperand(i),
        }
    }

    /// Memory-side queues arbitrate at low priority.
    pub fn priority(self) -> Priority {
        match self {
            QueueId::Vlsu(_) => Priority::Low,
            _ => Priority::High,
        }
    }
}

/// The per-lane queue complement: ten operand queues and two write-back
/// queues.
#[derive(Debug, Clone)]
pub struct OperandQueueSet {
    operand: Vec<BoundedQueue<OperandWord>>,
    pub fpu_mul_wb: BoundedQueue<WbEntry>,
    pub alu_wb: BoundedQueue<WbEntry>,
}

impl OperandQueueSet {
    pub fn new(cfg: &MachineConfig) -> Self {
        let operand = QueueId::ALL
            .iter()
            .map(|q| {
                BoundedQueue::new(match q {
                    QueueId::FpuMul(_) => cfg.opq_fpu_depth,
                    QueueId::Alu(_) => cfg.opq_alu_depth,
                    QueueId::Vlsu(_) => cfg.opq_vlsu_depth,
                })
            })
            .collect();
        OperandQueueSet {
            operand,
            fpu_mul_wb: BoundedQueue::new(cfg.wb_depth),
            alu_wb: BoundedQueue::new(cfg.wb_depth),
        }
    }

    #[inline]
    pub fn queue(&self, id: QueueId) -> &BoundedQueue<OperandWord> {
        &self.operand[id.index()]
    }

    #[inline]
    pub fn queue_mut(&mut self, id: QueueId) -> &mut BoundedQueue<OperandWord> {
        &mut self.operand[id.index()]
    }

    pub fn operand_queue_count(&self) -> usize {
        self.operand.len()
    }

    pub fn write_back_queue_count(&self) -> usize {
        2
    }

    pub fn is_idle(&self) -> bool {
        self.operand.iter().all(|q| q.is_empty())
            && self.fpu_mul_wb.is_empty()
            && self.alu_wb.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: u32) -> VReg {
        VReg::new(i).unwrap()
    }

    #[test]
    fn geometry_invariant() {
        let g = VrfGeometry::default();
        assert_eq!(g.rows_per_reg(), 8);
        assert_eq!(
            g.banks * g.bank_width_bits * g.rows_total(),
            g.bytes_per_lane * 8
        );
    }

    #[test]
    fn map_element_examples() {
        let g = VrfGeometry::default();
        let l = map_element(&g, v(0), 0, 1).unwrap();
        assert_eq!((l.bank, l.row), (0, 0));
        assert_eq!(map_element(&g, v(1), 0, 1).unwrap().bank, 1);
        assert!(matches!(
            map_element(&g, v(0), 64, 1),
            Err(VrfError::ElementRange { .. })
        ));
    }

    /// Independent enumeration of the shifted layout for v0..v3 over 16
    /// elements: element e of v_r sits in the bank reached by walking e steps
    /// from bank r, filling one row of eight banks before moving up.
    #[test]
    fn barber_pole_layout_enumeration() {
        let g = VrfGeometry::default();
        for r in 0..4u32 {
            let mut bank = r as usize;
            let mut row = r as usize * 8;
            for e in 0..16usize {
                if e > 0 && e % 8 == 0 {
                    row += 1;
                }
                let loc = map_element(&g, v(r), e, 1).unwrap();
                assert_eq!((loc.lane, loc.bank, loc.row), (0, bank, row), "v{r} e{e}");
                bank = (bank + 1) % 8;
            }
        }
        let loc = map_element(&g, v(2), 14, 1).unwrap();
        assert_eq!((loc.bank, loc.row), (0, 17));
    }

    #[test]
    fn mapping_is_bijective_per_lane() {
        let g = VrfGeometry::default();
        let mut seen = std::collections::HashSet::new();
        for r in 0..32u32 {
            for w in 0..g.words_per_reg() {
                assert!(seen.insert(g.locate(r as usize, w)));
            }
        }
        assert_eq!(seen.len(), g.rows_total() * g.banks);
    }

    fn req(requester: usize, bank: usize, priority: Priority) -> BankRequest {
        BankRequest {
            requester,
            bank,
            reg: v(0),
            word: 0,
            write: false,
            priority,
        }
    }

    #[test]
    fn high_priority_wins() {
        let mut arb = BankArbiter::new(8, Requester::COUNT);
        let fpu = req(Requester::FpuOperand(0).index(), 3, Priority::High);
        let vlsu = req(Requester::VlsuOperand(0).index(), 3, Priority::Low);
        assert_eq!(arb.arbitrate(3, &[vlsu, fpu]), Some(1));
        assert_eq!(arb.arbitrate(3, &[vlsu]), Some(0));
        assert_eq!(arb.arbitrate(3, &[]), None);
    }

    #[test]
    fn round_robin_fairness() {
        let mut arb = BankArbiter::new(8, Requester::COUNT);
        let pending = [
            req(0, 5, Priority::High),
            req(4, 5, Priority::High),
            req(10, 5, Priority::High),
        ];
        let mut counts = [0usize; 3];
        for _ in 0..300 {
            counts[arb.arbitrate(5, &pending).unwrap()] += 1;
        }
        for c in counts {
            assert!((99..=101).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn grant_all_single_port_law() {
        let mut arb = BankArbiter::new(8, Requester::COUNT);
        let pending: Vec<_> = (0..Requester::COUNT)
            .map(|r| req(r, r % 3, Priority::High))
            .collect();
        let mut granted = Vec::new();
        arb.grant_all(&pending, &mut granted);
        let mut per_bank = [0; 8];
        for (r, g) in pending.iter().zip(&granted) {
            if *g {
                per_bank[r.bank] += 1;
            }
        }
        assert_eq!(per_bank, [1, 1, 1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn queue_semantics() {
        let mut q = BoundedQueue::new(2);
        assert_eq!(q.push(1), Ok(()));
        assert_eq!(q.push(2), Ok(()));
        assert_eq!(q.push(3), Err(QueueError::Full));
        assert_eq!(q.pop(), Ok(1));
        assert_eq!(q.pop(), Ok(2));
        assert_eq!(q.pop(), Err(QueueError::Empty));
    }

    #[test]
    fn queue_set_shape() {
        let cfg = MachineConfig::default();
        let mut s = OperandQueueSet::new(&cfg);
        assert_eq!(s.operand_queue_count(), 10);
        assert_eq!(s.write_back_queue_count(), 2);
        assert_eq!(s.queue_mut(QueueId::FpuMul(3)).depth(), 4);
        assert_eq!(s.queue_mut(QueueId::Alu(0)).depth(), 2);
        assert_eq!(s.queue_mut(QueueId::Vlsu(2)).depth(), 2);
        assert_eq!(s.fpu_mul_wb.depth(), 2);
        let idx: Vec<usize> = QueueId::ALL.iter().map(|q| q.index()).collect();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
        for q in QueueId::ALL {
            assert_eq!(q.requester().index(), q.index());
        }
    }

    #[test]
    fn csv_dump_rows() {
        let cfg = MachineConfig::with_lanes(2);
        let g = VrfGeometry::from_config(&cfg);
        let mut lanes = vec![VrfStorage::new(g), VrfStorage::new(g)];
        lanes[1].write(3, 0, 0xabc);
        let csv = dump_csv(&lanes, &[v(3)], 2);
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], "register,element,lane,bank,row,value");
        assert_eq!(rows[2], "3,1,1,3,24,0x0000000000000abc");
    }
}
