//! The vector unit's global pieces: the main sequencer with its hazard
//! bookkeeping, the load/store unit and the slide unit.
//!
//! Data hazards never stall the sequencer. It records, for every issued
//! instruction, which in-flight instructions it depends on, and the lanes
//! resolve those dependencies word by word. Only structural hazards stall
//! issue.

pub mod sldu;
pub mod table;
pub mod vlsu;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::MachineConfig;
use crate::isa::{AccessMode, ElemType, VecConfig, VectorInstr, NUM_VREGS};
use crate::lane::{check_supported, fu_for, FuKind, Lane, LaneError};
use crate::scalar::Dispatch;
use crate::vrf::{BoundedQueue, QueueId};
use sldu::{ScalarResult, Sldu};
use table::{DepRef, Expect, InFlight, InstrTable, Source, Unit};
use vlsu::{Vlsu, VlsuError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VunitError {
    #[error(transparent)]
    Lane(#[from] LaneError),
    #[error(transparent)]
    Vlsu(#[from] VlsuError),
}

/// Why the head of the intake queue could not issue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StallReason {
    /// All sequencer slots hold in-flight instructions.
    SequencerFull,
    /// The target unit tracks as many instructions as it can.
    UnitFull,
    /// The ALU and the slide unit share operand paths.
    SharedPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueOutcome {
    /// Nothing eligible in the intake queue.
    Idle,
    Issued {
        id: u64,
    },
    /// The vector length was reconfigured.
    Configured {
        vl: usize,
    },
    Stalled {
        reason: StallReason,
        blocking: Option<u64>,
    },
}

#[derive(Debug, Clone)]
pub struct VectorUnit {
    cfg: MachineConfig,
    pub lanes: Vec<Lane>,
    pub table: InstrTable,
    pub intake: BoundedQueue<Dispatch>,
    pub vcfg: VecConfig,
    scalar_shaped: [bool; NUM_VREGS],
    last_write: [Option<Expect>; NUM_VREGS],
    next_id: u64,
    pub vlsu: Vlsu,
    pub sldu: Sldu,
    /// Scalar results produced this cycle.
    pub results: Vec<ScalarResult>,
}

fn unit_of(instr: &VectorInstr) -> Unit {
    match *instr {
        VectorInstr::Load { .. } => Unit::Load,
        VectorInstr::Store { .. } => Unit::Store,
        VectorInstr::Arith { op, ty, .. } => match fu_for(op, ty) {
            FuKind::Alu => Unit::Alu,
            _ => Unit::FpuMul,
        },
        _ => Unit::Slide,
    }
}

impl VectorUnit {
    pub fn new(cfg: &MachineConfig) -> Self {
        VectorUnit {
            cfg: cfg.clone(),
            lanes: (0..cfg.lanes).map(|i| Lane::new(i, cfg)).collect(),
            table: InstrTable::new(cfg.sequencer_slots),
            intake: BoundedQueue::new(cfg.intake_depth),
            vcfg: VecConfig::new(cfg.lanes, cfg.vrf_bytes_per_lane, crate::isa::Sew::E64),
            scalar_shaped: [false; NUM_VREGS],
            last_write: [None; NUM_VREGS],
            next_id: 1,
            vlsu: Vlsu::new(cfg),
            sldu: Sldu::new(cfg.lanes),
            results: Vec::new(),
        }
    }

    pub fn config(&self) -> &MachineConfig {
        &self.cfg
    }

    pub fn is_idle(&self) -> bool {
        self.table.is_empty() && self.intake.is_empty()
    }

    fn last_writer(&self, reg: crate::isa::VReg) -> Option<DepRef> {
        self.table
            .iter()
            .filter(|f| f.dest == Some(reg))
            .max_by_key(|f| f.id)
            .map(InFlight::dep)
    }

    fn count(&self, pred: impl Fn(Unit) -> bool) -> usize {
        self.table.iter().filter(|f| pred(f.unit)).count()
    }

    fn oldest(&self, unit: Unit) -> Option<u64> {
        self.table
            .iter()
            .filter(|f| f.unit == unit)
            .map(|f| f.id)
            .min()
    }

    /// Issues the head of the intake queue if it was pushed before `now`.
    pub fn issue(&mut self, now: u64) -> Result<IssueOutcome, VunitError> {
        let Some(&d) = self.intake.front() else {
            return Ok(IssueOutcome::Idle);
        };
        if d.pushed_at >= now {
            return Ok(IssueOutcome::Idle);
        }
        if let VectorInstr::SetVl { rd, sew, .. } = d.instr {
            let vlmax = self.cfg.vlmax(sew);
            let vl = (d.xvals[0] as usize).min(vlmax);
            self.vcfg = VecConfig { vl, sew, vlmax };
            self.results.push(ScalarResult {
                index: d.index,
                rd,
                value: vl as u64,
            });
            let _ = self.intake.pop();
            return Ok(IssueOutcome::Configured { vl });
        }
        let unit = unit_of(&d.instr);
        let Some(slot) = self.table.free_slot() else {
            return Ok(IssueOutcome::Stalled {
                reason: StallReason::SequencerFull,
                blocking: self.table.iter().map(|f| f.id).min(),
            });
        };
        let (busy, limit) = match unit {
            Unit::FpuMul | Unit::Alu => (self.count(|u| u == unit), self.cfg.lane_unit_slots),
            Unit::Load | Unit::Store => (
                self.count(|u| matches!(u, Unit::Load | Unit::Store)),
                self.cfg.vlsu_slots,
            ),
            Unit::Slide => (self.count(|u| u == Unit::Slide), self.cfg.sldu_slots),
        };
        if busy >= limit {
            return Ok(IssueOutcome::Stalled {
                reason: StallReason::UnitFull,
                blocking: self.oldest(unit),
            });
        }
        let other = match unit {
            Unit::Alu => Some(Unit::Slide),
            Unit::Slide => Some(Unit::Alu),
            _ => None,
        };
        if let Some(blocking) = other.and_then(|u| self.oldest(u)) {
            return Ok(IssueOutcome::Stalled {
                reason: StallReason::SharedPath,
                blocking: Some(blocking),
            });
        }
        let sew = self.vcfg.sew;
        let mut dsew = sew;
        if let VectorInstr::Arith { op, ty, widen, .. } = d.instr {
            check_supported(op, ty, widen, sew)?;
            if widen {
                dsew = sew.widened().unwrap_or(sew);
            }
            debug_assert!(ty == ElemType::Int || !widen);
        }

        let id = self.next_id;
        self.next_id += 1;
        let mut src = [None; 3];
        let operands: Vec<(crate::isa::VReg, Option<QueueId>)> = match d.instr {
            VectorInstr::Arith { srcs, .. } => srcs
                .iter()
                .enumerate()
                .filter_map(|(k, r)| {
                    let q = if unit == Unit::Alu {
                        QueueId::Alu(k)
                    } else {
                        QueueId::FpuMul(k)
                    };
                    r.map(|r| (r, Some(q)))
                })
                .collect(),
            VectorInstr::Store { vs, mode, .. } => {
                let mut v = vec![(vs, Some(QueueId::Vlsu(0)))];
                if let AccessMode::Indexed(ix) = mode {
                    v.push((ix, Some(QueueId::Vlsu(1))));
                }
                v
            }
            VectorInstr::Load {
                mode: AccessMode::Indexed(ix),
                ..
            } => vec![(ix, Some(QueueId::Vlsu(1)))],
            VectorInstr::Extract { vs, .. } | VectorInstr::Slide { vs, .. } => vec![(vs, None)],
            _ => vec![],
        };
        for (k, (reg, queue)) in operands.into_iter().enumerate() {
            src[k] = Some(Source {
                reg,
                scalar: self.scalar_shaped[reg.id()],
                queue,
                raw: self.last_writer(reg),
                expect: self.last_write[reg.id()],
            });
        }
        let dest = d.instr.vdest();
        let mut war = Vec::new();
        let mut waw = None;
        if let Some(dr) = dest {
            for f in self.table.iter() {
                for (k, s) in f.src.iter().enumerate() {
                    if s.is_some_and(|s| s.reg == dr) {
                        war.push((f.dep(), k));
                    }
                }
            }
            waw = self.last_writer(dr);
        }
        let vl = self.vcfg.vl;
        let scalar_insert = matches!(d.instr, VectorInstr::Insert { .. }) && d.xvals[1] == 0;
        let ordered = matches!(unit, Unit::FpuMul | Unit::Alu | Unit::Load) || scalar_insert;
        let f = InFlight {
            id,
            index: d.index,
            slot,
            instr: d.instr,
            unit,
            vl,
            vlmax: self.vcfg.vlmax,
            sew,
            dsew,
            xvals: d.xvals,
            src,
            dest,
            war,
            waw,
            ordered,
            issued_at: now,
        };
        if let Some(dr) = dest {
            let r = dr.id();
            match d.instr {
                VectorInstr::Insert { .. } if scalar_insert => {
                    self.scalar_shaped[r] = true;
                    self.last_write[r] = Some(Expect {
                        id,
                        vl,
                        sew,
                        scalar: true,
                    });
                }
                VectorInstr::Insert { .. } if (d.xvals[1] as usize) >= f.vlmax => {}
                VectorInstr::Insert { .. } => {
                    self.scalar_shaped[r] = false;
                    self.last_write[r] = None;
                }
                _ => {
                    self.scalar_shaped[r] = false;
                    self.last_write[r] = Some(Expect {
                        id,
                        vl,
                        sew: dsew,
                        scalar: false,
                    });
                }
            }
        }
        for lane in &mut self.lanes {
            lane.assign(&f);
        }
        match unit {
            Unit::Load | Unit::Store => self.vlsu.accept(&f),
            Unit::Slide => self.sldu.accept(slot, id),
            _ => {}
        }
        self.table.insert(f);
        let _ = self.intake.pop();
        Ok(IssueOutcome::Issued { id })
    }

    /// Frees the slots of completed instructions, oldest first. Returns the
    /// number retired.
    pub fn retire(&mut self, now: u64) -> usize {
        let mut alive: Vec<(u64, usize)> = self.table.iter().map(|f| (f.id, f.slot)).collect();
        alive.sort_unstable();
        let mut retired = 0;
        for (id, slot) in alive {
            let Some(f) = self.table.slot(slot) else {
                continue;
            };
            if !self.lanes.iter().all(|l| l.finished(slot)) {
                continue;
            }
            let unit_done = match f.unit {
                Unit::Load | Unit::Store => self.vlsu.done(slot, now),
                Unit::Slide => self.sldu.done(slot, id),
                _ => true,
            };
            if !unit_done || f.waw.is_some_and(|d| self.table.alive(d)) {
                continue;
            }
            self.table.remove(slot);
            for lane in &mut self.lanes {
                lane.retire(slot);
            }
            self.vlsu.remove(slot);
            self.sldu.remove(slot);
            retired += 1;
        }
        retired
    }
}
