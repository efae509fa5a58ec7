//! Cycle-approximate simulator of a lane-scalable vector coprocessor fed by
//! a single-issue in-order scalar core, with a roofline and issue-rate
//! performance model and three reference kernels.

pub mod config;
pub mod isa;
pub mod kernels;
pub mod lane;
pub mod memory;
pub mod perf;
pub mod scalar;
pub mod sim;
pub mod vrf;
pub mod vunit;

pub use config::{ConfigError, MachineConfig};
pub use isa::Program;
pub use memory::Memory;
pub use sim::{SimError, SimOptions, Simulator};
