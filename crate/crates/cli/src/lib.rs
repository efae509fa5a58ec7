//! Batch front end for the simulator: resolves settings, runs kernels and
//! sweeps, writes `report.json`, `roofline.csv` and `util.csv`, and compares
//! reports against golden files.

pub mod compare;
pub mod report;
pub mod settings;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use lanesim::kernels::{self, KernelError, KernelRun};
use lanesim::sim::Trace;
use lanesim::SimOptions;
use rayon::prelude::*;

use report::{ReportFile, RunRecord};
use settings::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_MISMATCH: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;

/// Overall verdict of one or more runs, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok,
    Mismatch,
    Invariant,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Ok => EXIT_OK,
            Status::Mismatch => EXIT_MISMATCH,
            Status::Invariant => EXIT_INVARIANT,
        }
    }

    pub fn of(file: &ReportFile) -> Status {
        file.runs
            .iter()
            .map(|r| {
                if r.report.invariants.total() > 0 {
                    Status::Invariant
                } else if !r.functional_pass() {
                    Status::Mismatch
                } else {
                    Status::Ok
                }
            })
            .max()
            .unwrap_or(Status::Ok)
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<KernelRun, KernelError> {
    let opts = SimOptions {
        trace: cfg.trace,
        ..SimOptions::default()
    };
    kernels::run(&cfg.spec, &cfg.machine, opts)
}

/// Runs every configuration in parallel; results keep the input order.
pub fn sweep(cfgs: &[RunConfig]) -> Vec<Result<(RunRecord, Option<Trace>), KernelError>> {
    cfgs.par_iter()
        .map(|c| {
            simulate(c).map(|mut r| {
                let trace = r.trace.take();
                (RunRecord::from_kernel(&r, &c.machine), trace)
            })
        })
        .collect()
}

pub fn trace_csv(traces: &[(String, &Trace)]) -> String {
    let mut s = String::from("run,cycle,lane,unit,busy\n");
    for (label, t) in traces {
        for e in &t.busy {
            let _ = writeln!(
                s,
                "{label},{},{},{},{}",
                e.cycle,
                e.lane,
                e.unit.as_str(),
                u8::from(e.busy)
            );
        }
    }
    s
}

/// Writes `report.json`, `roofline.csv`, `util.csv` and, with traces,
/// `trace.csv` into `dir`.
pub fn write_outputs(
    dir: &Path,
    file: &ReportFile,
    traces: &[(String, &Trace)],
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    };
    write("report.json", serde_json::to_string_pretty(file)? + "\n")?;
    write("roofline.csv", file.roofline_csv())?;
    write("util.csv", file.util_csv())?;
    if !traces.is_empty() {
        write("trace.csv", trace_csv(traces))?;
    }
    Ok(())
}

/// One line per run for the terminal.
pub fn summary(file: &ReportFile) -> String {
    let mut s = String::new();
    for r in &file.runs {
        let _ = write!(
            s,
            "{}: {} cycles, {:.3} dpflop/cycle, fpu {:.1}%",
            r.label,
            r.report.cycles,
            r.report.performance,
            100.0 * r.report.fpu_utilization
        );
        if let Some(a) = &r.analysis {
            let _ = write!(
                s,
                ", bound {:.3}, loss {:.2}%, functional {} (max rel error {:e})",
                a.bound,
                a.loss_pct,
                if a.functional_pass { "pass" } else { "FAIL" },
                a.max_rel_error
            );
        }
        let inv = r.report.invariants.total();
        if inv > 0 {
            let _ = write!(s, ", {inv} invariant violations");
        }
        s.push('\n');
    }
    s
}
