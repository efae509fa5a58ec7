//! Machine parameters. Defaults follow the reference design point: 16 KiB of
//! register file per lane in eight 64-bit banks, and a memory port of 32
//! bits per lane.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{self, Sew};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("lane count {0} must be a power of two >= 1")]
    Lanes(usize),
    #[error("{name} must be >= {min}, got {value}")]
    TooSmall {
        name: &'static str,
        value: u64,
        min: u64,
    },
    #[error("register file geometry is inconsistent: {0}")]
    Geometry(String),
    #[error("{0}")]
    Other(String),
}

/// Register-to-bank placement inside a lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BankMapping {
    /// Starting bank shifted by the register index.
    BarberPole,
    /// Every register starts at bank 0.
    Flat,
}

/// Timing parameters of the single-issue scalar core.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalarPipeModel {
    /// Execute cycles of a scalar load; a consumer issues `ld_latency + 1`
    /// cycles after the load.
    pub ld_latency: u64,
    pub commit_ports: usize,
    /// In-flight (issued, uncommitted) instruction entries.
    pub scoreboard_entries: usize,
}

impl Default for ScalarPipeModel {
    fn default() -> Self {
        ScalarPipeModel {
            ld_latency: 2,
            commit_ports: 2,
            scoreboard_entries: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub lanes: usize,
    pub vrf_bytes_per_lane: usize,
    pub banks: usize,
    pub bank_mapping: BankMapping,
    /// Cycles from a read request to its first data beat, and from the last
    /// write beat to the write response.
    pub mem_latency: u64,
    pub fpu_depth: u64,
    pub alu_depth: u64,
    pub mul_depth: u64,
    /// Non-pipelined divide / square-root latency.
    pub div_latency: u64,
    pub opq_fpu_depth: usize,
    pub opq_alu_depth: usize,
    pub opq_vlsu_depth: usize,
    pub wb_depth: usize,
    /// Load beats each lane buffers before writing them to the register file.
    pub load_buffer_depth: usize,
    /// Instruction queue between the scalar dispatcher and the vector unit.
    pub intake_depth: usize,
    /// Vector instructions the main sequencer keeps in flight.
    pub sequencer_slots: usize,
    /// Instructions each execution unit accepts before the sequencer stalls
    /// on a structural hazard.
    pub lane_unit_slots: usize,
    pub vlsu_slots: usize,
    pub sldu_slots: usize,
    pub scalar: ScalarPipeModel,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig::with_lanes(4)
    }
}

impl MachineConfig {
    pub fn with_lanes(lanes: usize) -> Self {
        MachineConfig {
            lanes,
            vrf_bytes_per_lane: 16 * 1024,
            banks: 8,
            bank_mapping: BankMapping::BarberPole,
            mem_latency: 10,
            fpu_depth: 5,
            alu_depth: 1,
            mul_depth: 2,
            div_latency: 12,
            opq_fpu_depth: 4,
            opq_alu_depth: 2,
            opq_vlsu_depth: 2,
            wb_depth: 2,
            load_buffer_depth: 4,
            intake_depth: 4,
            sequencer_slots: 8,
            lane_unit_slots: 8,
            vlsu_slots: 4,
            sldu_slots: 4,
            scalar: ScalarPipeModel::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.lanes == 0 || !self.lanes.is_power_of_two() {
            return Err(ConfigError::Lanes(self.lanes));
        }
        let min = |name: &'static str, value: u64, min: u64| {
            if value < min {
                Err(ConfigError::TooSmall { name, value, min })
            } else {
                Ok(())
            }
        };
        min("fpu_depth", self.fpu_depth, 1)?;
        min("alu_depth", self.alu_depth, 1)?;
        min("mul_depth", self.mul_depth, 1)?;
        min("div_latency", self.div_latency, 1)?;
        min("opq_fpu_depth", self.opq_fpu_depth as u64, 1)?;
        min("opq_alu_depth", self.opq_alu_depth as u64, 1)?;
        min("opq_vlsu_depth", self.opq_vlsu_depth as u64, 1)?;
        min("wb_depth", self.wb_depth as u64, 1)?;
        min("load_buffer_depth", self.load_buffer_depth as u64, 1)?;
        min("intake_depth", self.intake_depth as u64, 1)?;
        min("sequencer_slots", self.sequencer_slots as u64, 1)?;
        min("lane_unit_slots", self.lane_unit_slots as u64, 1)?;
        min("vlsu_slots", self.vlsu_slots as u64, 1)?;
        min("sldu_slots", self.sldu_slots as u64, 1)?;
        min("commit_ports", self.scalar.commit_ports as u64, 1)?;
        min(
            "scoreboard_entries",
            self.scalar.scoreboard_entries as u64,
            1,
        )?;
        min("banks", self.banks as u64, 1)?;
        let per_reg = self.vrf_bytes_per_lane / isa::NUM_VREGS;
        if per_reg == 0 || !per_reg.is_multiple_of(8) || !(per_reg / 8).is_multiple_of(self.banks) {
            return Err(ConfigError::Geometry(format!(
                "{} bytes/lane over {} registers and {} banks",
                self.vrf_bytes_per_lane,
                isa::NUM_VREGS,
                self.banks
            )));
        }
        Ok(())
    }

    /// Memory port width W in bits.
    pub fn mem_width_bits(&self) -> usize {
        32 * self.lanes
    }

    /// Memory port bytes per cycle.
    pub fn mem_bytes_per_cycle(&self) -> usize {
        self.mem_width_bits() / 8
    }

    /// Peak double-precision flops per cycle (one FMA per lane).
    pub fn peak_dpflop_per_cycle(&self) -> f64 {
        2.0 * self.lanes as f64
    }

    pub fn vlmax(&self, sew: Sew) -> usize {
        isa::vlmax(self.lanes, self.vrf_bytes_per_lane, sew)
    }

    /// 64-bit words each register occupies in one lane.
    pub fn words_per_reg(&self) -> usize {
        self.vrf_bytes_per_lane / isa::NUM_VREGS / 8
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for l in [1, 2, 4, 8, 16, 32] {
            MachineConfig::with_lanes(l).validate().unwrap();
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert_eq!(
            MachineConfig::with_lanes(3).validate(),
            Err(ConfigError::Lanes(3))
        );
        assert!(MachineConfig::with_lanes(0).validate().is_err());
    }

    #[test]
    fn bandwidth_to_peak_is_two_bytes_per_flop() {
        for l in [2, 4, 8, 16] {
            let c = MachineConfig::with_lanes(l);
            let ratio = c.mem_bytes_per_cycle() as f64 / c.peak_dpflop_per_cycle();
            assert_eq!(ratio, 2.0);
        }
    }
}
