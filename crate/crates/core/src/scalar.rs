//! Timing model of the single-issue in-order scalar core and its dispatcher
//! into the vector unit.
//!
//! The core executes the trace functionally so that vector instructions
//! carry real scalar operands, but only the issue timing is modeled in
//! detail. A vector instruction is pushed to the vector unit once it reaches
//! the top of the scoreboard: every older scalar instruction has committed
//! in an earlier cycle and every older vector instruction has been pushed in
//! an earlier cycle.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScalarPipeModel;
use crate::isa::{Program, ScalarInstr, ScalarOperand, VectorInstr, XReg, NUM_XREGS};
use crate::memory::Memory;
use crate::vrf::BoundedQueue;

/// A vector instruction handed to the vector unit with its scalar operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dispatch {
    /// Position in the program.
    pub index: usize,
    pub instr: VectorInstr,
    /// Values of `instr.xsources()`, in order.
    pub xvals: [u64; 3],
    pub pushed_at: u64,
}

/// Per-instruction pipeline events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InstrTiming {
    pub issue: u64,
    /// Cycle the instruction entered the vector unit's intake queue.
    pub dispatch: Option<u64>,
    pub ack: Option<u64>,
    pub commit: u64,
}

/// Dispatch record of one vector instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchEvent {
    pub index: usize,
    pub dispatched: u64,
    pub acknowledged: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScalarError {
    #[error("result delivered for instruction {0} which is not waiting for one")]
    UnexpectedResult(usize),
}

#[derive(Debug, Clone, Copy)]
struct RobEntry {
    index: usize,
    vector: bool,
    /// Earliest commit cycle, once known.
    commit_at: Option<u64>,
    pushed: Option<u64>,
    xvals: [u64; 3],
    /// Waits for a value from the vector unit.
    needs_result: bool,
    result_at: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ScalarCore {
    cfg: ScalarPipeModel,
    regs: [u64; NUM_XREGS],
    ready: [u64; NUM_XREGS],
    pc: usize,
    rob: VecDeque<RobEntry>,
    /// Issue is blocked until this cycle (a vector result is pending while
    /// it is `u64::MAX`).
    blocked_until: u64,
    timeline: Vec<InstrTiming>,
}

impl ScalarCore {
    pub fn new(cfg: ScalarPipeModel, program: &Program) -> Self {
        let mut regs = [0; NUM_XREGS];
        for &(r, v) in &program.init_regs {
            if r != XReg::ZERO {
                regs[r.id()] = v;
            }
        }
        ScalarCore {
            cfg,
            regs,
            ready: [0; NUM_XREGS],
            pc: 0,
            rob: VecDeque::new(),
            blocked_until: 0,
            timeline: vec![InstrTiming::default(); program.len()],
        }
    }

    pub fn reg(&self, r: XReg) -> u64 {
        self.regs[r.id()]
    }

    pub fn is_done(&self, program: &Program) -> bool {
        self.pc >= program.len() && self.rob.is_empty()
    }

    pub fn pc(&self) -> usize {
        self.pc
    }

    pub fn timeline(&self) -> &[InstrTiming] {
        &self.timeline
    }

    /// Dispatch events of the vector instructions pushed so far, in program
    /// order.
    pub fn dispatch_events(&self) -> Vec<DispatchEvent> {
        self.timeline
            .iter()
            .enumerate()
            .filter_map(|(index, t)| {
                Some(DispatchEvent {
                    index,
                    dispatched: t.dispatch?,
                    acknowledged: t.ack?,
                })
            })
            .collect()
    }

    /// Accepts the scalar result of a SETVL or VEXT in cycle `now`.
    pub fn deliver(&mut self, index: usize, now: u64) -> Result<(), ScalarError> {
        let e = self
            .rob
            .iter_mut()
            .find(|e| e.index == index && e.needs_result && e.result_at.is_none())
            .ok_or(ScalarError::UnexpectedResult(index))?;
        e.result_at = Some(now);
        let pushed = e.pushed.ok_or(ScalarError::UnexpectedResult(index))?;
        e.commit_at = Some((pushed + 2).max(now + 1));
        self.blocked_until = now + 1;
        Ok(())
    }

    /// Sets the destination register of a completed vector-to-scalar move.
    pub fn write_result(&mut self, rd: XReg, value: u64, now: u64) {
        if rd != XReg::ZERO {
            self.regs[rd.id()] = value;
            self.ready[rd.id()] = now + 1;
        }
    }

    fn value(&self, op: ScalarOperand) -> u64 {
        match op {
            ScalarOperand::Reg(r) => self.regs[r.id()],
            ScalarOperand::Imm(i) => i as u64,
        }
    }

    /// Advances one cycle: commit, push to the vector unit, then issue.
    pub fn step(
        &mut self,
        now: u64,
        program: &Program,
        intake: &mut BoundedQueue<Dispatch>,
        mem: &Memory,
    ) {
        self.commit(now);
        self.push(now, program, intake);
        self.issue(now, program, mem);
    }

    fn push(&mut self, now: u64, program: &Program, intake: &mut BoundedQueue<Dispatch>) {
        if intake.is_full() {
            return;
        }
        for i in 0..self.rob.len() {
            let e = self.rob[i];
            if !e.vector {
                return;
            }
            match e.pushed {
                Some(c) if c < now => continue,
                Some(_) => return,
                None => {}
            }
            if self.timeline[e.index].issue >= now {
                return;
            }
            let Some(instr) = program.instrs[e.index].as_vector() else {
                return;
            };
            let _ = intake.push(Dispatch {
                index: e.index,
                instr: *instr,
                xvals: e.xvals,
                pushed_at: now,
            });
            let e = &mut self.rob[i];
            e.pushed = Some(now);
            if !e.needs_result {
                e.commit_at = Some(now + 2);
            }
            let t = &mut self.timeline[e.index];
            t.dispatch = Some(now);
            t.ack = Some(now + 1);
            return;
        }
    }

    fn commit(&mut self, now: u64) {
        for _ in 0..self.cfg.commit_ports {
            match self.rob.front() {
                Some(e) if e.commit_at.is_some_and(|c| c <= now) => {
                    self.timeline[e.index].commit = now;
                    self.rob.pop_front();
                }
                _ => break,
            }
        }
    }

    fn issue(&mut self, now: u64, program: &Program, mem: &Memory) {
        if now < self.blocked_until || self.pc >= program.len() {
            return;
        }
        if self.rob.len() >= self.cfg.scoreboard_entries {
            return;
        }
        let instr = program.instrs[self.pc];
        let busy = |r: &XReg| self.ready[r.id()] > now;
        if instr.reads().iter().any(busy) || instr.writes().iter().any(busy) {
            return;
        }
        let index = self.pc;
        let mut entry = RobEntry {
            index,
            vector: false,
            commit_at: None,
            pushed: None,
            xvals: [0; 3],
            needs_result: false,
            result_at: None,
        };
        match instr {
            ScalarInstr::Ld { rd, mem: m } => {
                let addr = self.regs[m.base.id()].wrapping_add(m.offset as u64);
                let done = now + self.cfg.ld_latency + 1;
                self.set(rd, mem.read_u64(addr), done);
                entry.commit_at = Some(done);
            }
            ScalarInstr::Add { rd, rs1, rs2 } => {
                let v = self.regs[rs1.id()].wrapping_add(self.value(rs2));
                self.set(rd, v, now + 1);
                entry.commit_at = Some(now + 2);
            }
            ScalarInstr::Branch { .. } => entry.commit_at = Some(now + 2),
            ScalarInstr::VDispatch(v) => {
                entry.vector = true;
                for (slot, r) in entry.xvals.iter_mut().zip(v.xsources()) {
                    *slot = self.regs[r.id()];
                }
                if let Some(rd) = v.xdest() {
                    entry.needs_result = true;
                    self.blocked_until = u64::MAX;
                    if rd != XReg::ZERO {
                        self.ready[rd.id()] = u64::MAX;
                    }
                }
            }
        }
        self.timeline[index].issue = now;
        self.rob.push_back(entry);
        self.pc += 1;
    }

    fn set(&mut self, rd: XReg, value: u64, ready: u64) {
        if rd != XReg::ZERO {
            self.regs[rd.id()] = value;
            self.ready[rd.id()] = ready;
        }
    }
}

/// Steady-state cycles between vector FMA dispatches of the broadcast
/// multiply-add loop body `{ld, add, vins, vmadd}` against an intake that
/// never fills. This is the issue gap of the matrix-multiplication kernel.
pub fn fma_loop_period(model: &ScalarPipeModel) -> u64 {
    const ITERS: usize = 16;
    let body = "ld t0, 0(a0)\nadd a0, a0, a2\nvins v0, t0, zero\nvmadd v8, v0, v1, v8\n";
    let program = Program::parse(&body.repeat(ITERS)).unwrap_or_default();
    let mut core = ScalarCore::new(model.clone(), &program);
    let mut intake = BoundedQueue::new(1);
    let mem = Memory::new();
    let mut now = 0;
    while !core.is_done(&program) && now < 100 * ITERS as u64 {
        while intake.pop().is_ok() {}
        core.step(now, &program, &mut intake, &mem);
        now += 1;
    }
    let t = core.timeline();
    match (
        t[4 * (ITERS - 2) + 3].dispatch,
        t[4 * (ITERS - 1) + 3].dispatch,
    ) {
        (Some(a), Some(b)) => b - a,
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::decode;

    /// Runs a program against an intake drained every cycle.
    fn run(text: &str) -> Vec<InstrTiming> {
        let program = Program::parse(text).unwrap();
        let mut core = ScalarCore::new(ScalarPipeModel::default(), &program);
        let mut intake = BoundedQueue::new(4);
        let mem = Memory::new();
        let mut now = 0;
        while !core.is_done(&program) {
            while intake.pop().is_ok() {}
            core.step(now, &program, &mut intake, &mem);
            now += 1;
            assert!(now < 10_000);
        }
        core.timeline().to_vec()
    }

    fn body(iters: usize, preload: bool) -> String {
        let ld = if preload {
            "ld t1, 0(a0)"
        } else {
            "ld t0, 0(a0)"
        };
        let mut s = String::new();
        for _ in 0..iters {
            s += &format!("{ld}\nadd a0, a0, a2\nvins v0, t0, zero\nvmadd v8, v0, v1, v8\n");
        }
        s
    }

    fn vmadd_gaps(t: &[InstrTiming]) -> Vec<u64> {
        let d: Vec<u64> = t
            .iter()
            .skip(3)
            .step_by(4)
            .map(|t| t.dispatch.unwrap())
            .collect();
        d.windows(2).map(|w| w[1] - w[0]).collect()
    }

    #[test]
    fn listing_body_runs_in_five_cycles() {
        let t = run(&body(8, false));
        assert!(
            vmadd_gaps(&t).iter().skip(1).all(|&g| g == 5),
            "{:?}",
            vmadd_gaps(&t)
        );
        assert_eq!(t[0].issue, 0);
        assert_eq!(t[2].issue, 3);
        assert_eq!(t[2].dispatch, Some(4));
        assert_eq!(t[3].dispatch, Some(5));
    }

    #[test]
    fn removing_load_dependence_gives_four_cycles() {
        let t = run(&body(8, true));
        assert!(
            vmadd_gaps(&t).iter().skip(1).all(|&g| g == 4),
            "{:?}",
            vmadd_gaps(&t)
        );
    }

    #[test]
    fn fma_loop_period_follows_load_latency() {
        assert_eq!(fma_loop_period(&ScalarPipeModel::default()), 5);
        let slow = ScalarPipeModel {
            ld_latency: 4,
            ..ScalarPipeModel::default()
        };
        assert_eq!(fma_loop_period(&slow), 7);
    }

    #[test]
    fn independent_adds_issue_every_cycle() {
        let text: String = (0..10)
            .map(|i| format!("add t{}, zero, 1\n", i % 3))
            .collect();
        let t = run(&text);
        for (i, x) in t.iter().enumerate() {
            assert_eq!(x.issue, i as u64);
        }
    }

    #[test]
    fn back_to_back_dispatches_one_cycle_apart() {
        let text = "vadd v1, v2, v3\n".repeat(6);
        let t = run(&text);
        let d: Vec<u64> = t.iter().map(|t| t.dispatch.unwrap()).collect();
        assert!(d.windows(2).all(|w| w[1] == w[0] + 1), "{d:?}");
    }

    #[test]
    fn full_intake_stalls_without_loss() {
        let program = Program::parse(&"vadd v1, v2, v3\n".repeat(8)).unwrap();
        let mut core = ScalarCore::new(ScalarPipeModel::default(), &program);
        let mut intake = BoundedQueue::new(2);
        let mem = Memory::new();
        for now in 0..20 {
            core.step(now, &program, &mut intake, &mem);
        }
        assert_eq!(intake.len(), 2);
        let mut seen = 0;
        let mut now = 20;
        while !core.is_done(&program) {
            if let Ok(d) = intake.pop() {
                assert_eq!(d.index, seen);
                seen += 1;
            }
            core.step(now, &program, &mut intake, &mem);
            now += 1;
        }
        while intake.pop().is_ok() {
            seen += 1;
        }
        assert_eq!(seen, 8);
    }

    #[test]
    fn vector_result_blocks_issue() {
        let program = Program::parse("setvl t0, a0, e64\nadd t1, t0, 1\n").unwrap();
        let mut core = ScalarCore::new(ScalarPipeModel::default(), &program);
        let mut intake = BoundedQueue::new(4);
        let mem = Memory::new();
        for now in 0..5 {
            core.step(now, &program, &mut intake, &mem);
        }
        assert_eq!(core.pc(), 1);
        let d = intake.pop().unwrap();
        core.write_result(XReg::new(5).unwrap(), 42, 5);
        core.deliver(d.index, 5).unwrap();
        for now in 5..10 {
            core.step(now, &program, &mut intake, &mem);
        }
        assert!(core.is_done(&program));
        assert_eq!(core.timeline()[1].issue, 6);
        assert_eq!(core.reg(XReg::new(6).unwrap()), 43);
        assert!(core.deliver(0, 11).is_err());
    }

    #[test]
    fn scalar_load_reads_memory() {
        let mut program = Program::new();
        program.set_reg(XReg::new(10).unwrap(), 0x100);
        program.push(decode("ld t0, 8(a0)").unwrap());
        let mut core = ScalarCore::new(ScalarPipeModel::default(), &program);
        let mut mem = Memory::new();
        mem.write_u64(0x108, 99);
        let mut intake = BoundedQueue::new(4);
        for now in 0..5 {
            core.step(now, &program, &mut intake, &mem);
        }
        assert_eq!(core.reg(XReg::new(5).unwrap()), 99);
        assert_eq!(core.timeline()[0].commit, 3);
    }
}
