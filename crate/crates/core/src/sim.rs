//! The global clock. Each cycle runs, in order: main-sequencer issue, the
//! load/store and slide units, the lanes, completion and retirement, and
//! finally the scalar core. Values a stage publishes become visible to
//! other stages in the next cycle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, MachineConfig};
use crate::isa::{Program, VOpcode};
use crate::lane::{LaneCycle, LaneError};
use crate::memory::Memory;
use crate::perf::{InvariantCounters, SimReport, UnitName, UtilWindow};
use crate::scalar::{InstrTiming, ScalarCore, ScalarError};
use crate::vunit::vlsu::{PortCycle, VlsuError};
use crate::vunit::{IssueOutcome, StallReason, VectorUnit, VunitError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Lane(#[from] LaneError),
    #[error(transparent)]
    Vlsu(#[from] VlsuError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error("no progress for {idle} cycles at cycle {cycle}: {detail}")]
    Deadlock {
        cycle: u64,
        idle: u64,
        detail: String,
    },
    #[error("cycle limit {0} reached")]
    CycleLimit(u64),
}

impl From<VunitError> for SimError {
    fn from(e: VunitError) -> Self {
        match e {
            VunitError::Lane(e) => SimError::Lane(e),
            VunitError::Vlsu(e) => SimError::Vlsu(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Window length of the utilization timeline, in cycles.
    pub util_window: u64,
    /// Record unit busy transitions and per-cycle port traffic.
    pub trace: bool,
    pub max_cycles: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            util_window: 100,
            trace: false,
            max_cycles: 1 << 36,
        }
    }
}

/// A change of a unit's busy state: (cycle, lane, unit, busy). The load/store
/// and slide units report lane 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusyEvent {
    pub cycle: u64,
    pub lane: usize,
    pub unit: UnitName,
    pub busy: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub busy: Vec<BusyEvent>,
    /// (cycle, bytes moved on the memory port), for cycles that moved data.
    pub port: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, Default)]
struct Window {
    counts: [u64; 5],
}

#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: MachineConfig,
    opts: SimOptions,
    program: Program,
    scalar: ScalarCore,
    pub vu: VectorUnit,
    mem: Memory,
    now: u64,
    dpflops: u64,
    bytes_read: u64,
    bytes_written: u64,
    bank_conflicts: u64,
    invariants: InvariantCounters,
    stalls: BTreeMap<String, u64>,
    windows: Vec<Window>,
    trace: Option<Trace>,
    busy_state: Vec<[bool; 5]>,
    idle: u64,
    idle_limit: u64,
}

impl Simulator {
    pub fn new(
        cfg: &MachineConfig,
        program: Program,
        mem: Memory,
        opts: SimOptions,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        if opts.util_window == 0 {
            return Err(ConfigError::TooSmall {
                name: "util_window",
                value: 0,
                min: 1,
            }
            .into());
        }
        let scalar = ScalarCore::new(cfg.scalar.clone(), &program);
        let idle_limit = 1000 + 4 * (cfg.mem_latency + cfg.div_latency + cfg.fpu_depth);
        Ok(Simulator {
            cfg: cfg.clone(),
            trace: opts.trace.then(Trace::default),
            opts,
            program,
            scalar,
            vu: VectorUnit::new(cfg),
            mem,
            now: 0,
            dpflops: 0,
            bytes_read: 0,
            bytes_written: 0,
            bank_conflicts: 0,
            invariants: InvariantCounters::default(),
            stalls: BTreeMap::new(),
            windows: Vec::new(),
            busy_state: vec![[false; 5]; cfg.lanes + 1],
            idle: 0,
            idle_limit,
        })
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn memory(&self) -> &Memory {
        &self.mem
    }

    pub fn into_memory(self) -> Memory {
        self.mem
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn timeline(&self) -> &[InstrTiming] {
        self.scalar.timeline()
    }

    pub fn trace(&self) -> Option<&Trace> {
        self.trace.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.scalar.is_done(&self.program) && self.vu.is_idle()
    }

    fn count(&mut self, unit: UnitName, n: u64) {
        let w = (self.now / self.opts.util_window) as usize;
        if self.windows.len() <= w {
            self.windows.resize(w + 1, Window::default());
        }
        self.windows[w].counts[unit as usize] += n;
    }

    fn record_busy(&mut self, lane: usize, unit: UnitName, busy: bool) {
        let prev = &mut self.busy_state[lane][unit as usize];
        if *prev != busy {
            *prev = busy;
            if let Some(t) = self.trace.as_mut() {
                t.busy.push(BusyEvent {
                    cycle: self.now,
                    lane,
                    unit,
                    busy,
                });
            }
        }
    }

    /// Advances the machine by one cycle.
    pub fn step(&mut self) -> Result<(), SimError> {
        let now = self.now;
        let mut progress = false;

        match self.vu.issue(now)? {
            IssueOutcome::Idle => {}
            IssueOutcome::Issued { .. } | IssueOutcome::Configured { .. } => progress = true,
            IssueOutcome::Stalled { reason, .. } => {
                let key = match reason {
                    StallReason::SequencerFull => "sequencer_full",
                    StallReason::UnitFull => "unit_full",
                    StallReason::SharedPath => "shared_path",
                };
                *self.stalls.entry(key.to_string()).or_default() += 1;
            }
        }

        let mut port = PortCycle::default();
        let vu = &mut self.vu;
        vu.vlsu
            .step(now, &vu.table, &mut vu.lanes, &mut self.mem, &mut port)?;
        let sldu_busy = !vu.sldu.is_empty();
        progress |= vu.sldu.step(&vu.table, &mut vu.lanes, &mut vu.results);

        let mut lane_cycles = Vec::with_capacity(vu.lanes.len());
        for lane in &mut vu.lanes {
            let mut lc = LaneCycle::default();
            lane.execute(&vu.table, &self.cfg, now, &mut lc)?;
            lane.access_banks(&vu.table, &mut lc);
            lane_cycles.push(lc);
        }

        let results = std::mem::take(&mut self.vu.results);
        for r in &results {
            self.scalar.write_result(r.rd, r.value, now);
            self.scalar.deliver(r.index, now)?;
            progress = true;
        }
        progress |= self.vu.retire(now) > 0;
        for lane in &mut self.vu.lanes {
            lane.snapshot();
        }

        let before = (self.scalar.pc(), self.vu.intake.len());
        self.scalar
            .step(now, &self.program, &mut self.vu.intake, &self.mem);
        progress |= before != (self.scalar.pc(), self.vu.intake.len());

        let moved = port.read_bytes + port.write_bytes;
        self.bytes_read += port.read_bytes;
        self.bytes_written += port.write_bytes;
        self.invariants.port_overflow += port.bandwidth_violations as u64;
        if moved > 0 {
            progress = true;
            self.count(UnitName::Vlsu, 1);
            if let Some(t) = self.trace.as_mut() {
                t.port.push((now, moved));
            }
        }
        self.record_busy(self.cfg.lanes, UnitName::Vlsu, moved > 0);
        if sldu_busy {
            self.count(UnitName::Sldu, 1);
        }
        self.record_busy(self.cfg.lanes, UnitName::Sldu, sldu_busy);
        for (i, lc) in lane_cycles.iter().enumerate() {
            self.dpflops += lc.flops;
            self.bank_conflicts += lc.denied as u64;
            self.invariants.bank_multi_grant += lc.port_violations as u64;
            self.invariants.chaining += lc.chaining_violations as u64;
            if lc.fpu && lc.mul {
                self.invariants.mul_fpu_overlap += 1;
            }
            progress |= lc.fpu || lc.mul || lc.alu || lc.grants > 0;
            for (unit, busy) in [
                (UnitName::Fpu, lc.fpu),
                (UnitName::Mul, lc.mul),
                (UnitName::Alu, lc.alu),
            ] {
                if busy {
                    self.count(unit, 1);
                }
                self.record_busy(i, unit, busy);
            }
        }

        self.now += 1;
        if progress {
            self.idle = 0;
        } else {
            self.idle += 1;
            if self.idle >= self.idle_limit {
                return Err(SimError::Deadlock {
                    cycle: self.now,
                    idle: self.idle,
                    detail: self.describe(),
                });
            }
        }
        Ok(())
    }

    fn describe(&self) -> String {
        let mut s = format!(
            "pc {}/{}, intake {}, in flight:",
            self.scalar.pc(),
            self.program.len(),
            self.vu.intake.len()
        );
        let mut alive: Vec<_> = self.vu.table.iter().collect();
        alive.sort_by_key(|f| f.id);
        for f in alive {
            let st = &self.vu.lanes[0].state[f.slot];
            s += &format!(
                " [#{} {} read {:?}/{:?} written {}/{}]",
                f.id, f.instr, st.read, st.src_words, st.written, st.dst_words
            );
        }
        s
    }

    /// Runs until the program has retired completely.
    pub fn run(&mut self) -> Result<SimReport, SimError> {
        while !self.is_done() {
            if self.now >= self.opts.max_cycles {
                return Err(SimError::CycleLimit(self.opts.max_cycles));
            }
            self.step()?;
        }
        Ok(self.report())
    }

    /// Dispatch cycles of vector FMAs among program positions `range`.
    pub fn fma_dispatches(&self, range: std::ops::Range<usize>) -> Vec<u64> {
        let t = self.scalar.timeline();
        range
            .filter(|&i| {
                self.program.instrs[i]
                    .as_vector()
                    .is_some_and(|v| v.opcode() == VOpcode::Vmadd)
            })
            .filter_map(|i| t[i].dispatch)
            .collect()
    }

    pub fn report(&self) -> SimReport {
        let cycles = self.now;
        let peak = self.cfg.peak_dpflop_per_cycle();
        let performance = if cycles == 0 {
            0.0
        } else {
            self.dpflops as f64 / cycles as f64
        };
        let w = self.opts.util_window;
        let mut utilization = Vec::new();
        for (i, win) in self.windows.iter().enumerate() {
            let start = i as u64 * w;
            let len = (cycles.saturating_sub(start)).clamp(1, w) as f64;
            for unit in UnitName::ALL {
                let per = match unit {
                    UnitName::Vlsu | UnitName::Sldu => 1.0,
                    _ => self.cfg.lanes as f64,
                };
                utilization.push(UtilWindow {
                    start,
                    unit,
                    utilization: win.counts[unit as usize] as f64 / (len * per),
                });
            }
        }
        let vector_instructions = self
            .program
            .instrs
            .iter()
            .filter(|i| i.as_vector().is_some())
            .count();
        SimReport {
            lanes: self.cfg.lanes,
            cycles,
            dpflops: self.dpflops,
            performance,
            peak,
            fpu_utilization: performance / peak,
            bytes_read: self.bytes_read,
            bytes_written: self.bytes_written,
            scalar_instructions: self.program.len(),
            vector_instructions,
            issue_gap: None,
            bank_conflicts: self.bank_conflicts,
            stalls: self.stalls.clone(),
            invariants: self.invariants,
            util_window: w,
            utilization,
        }
    }
}
