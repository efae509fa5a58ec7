use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lanesim::isa::{Program, Sew};
use lanesim::kernels::KernelError;
use lanesim::memory::MemoryImage;
use lanesim::{Memory, SimOptions, Simulator};
use lanesim_cli::compare::{self, Tolerance, Tolerances};
use lanesim_cli::report::{self, ReportFile, RunRecord};
use lanesim_cli::settings::{KernelName, Settings};
use lanesim_cli::{Status, EXIT_INVARIANT, EXIT_MISMATCH, EXIT_USAGE};

#[derive(Parser)]
#[command(
    name = "lanesim",
    version,
    about = "Lane-scalable vector coprocessor simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one kernel.
    Run(RunArgs),
    /// Simulate a kernel over lists of sizes and lane counts.
    Sweep(SweepArgs),
    /// Compare a report against a golden file.
    Compare(CompareArgs),
    /// Simulate an assembly program.
    Exec(ExecArgs),
}

#[derive(Args, Clone, Default)]
struct MachineArgs {
    /// `key = value` settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kernel: Option<KernelName>,
    /// Matrix multiplication block height, or convolution output-channel tile.
    #[arg(long)]
    tile: Option<usize>,
    #[arg(long)]
    sew: Option<Sew>,
    #[arg(long)]
    mem_latency: Option<u64>,
    #[arg(long)]
    fpu_depth: Option<u64>,
    /// Depth of the FPU operand queues.
    #[arg(long)]
    opq_depth: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write per-cycle unit activity to trace.csv.
    #[arg(long)]
    trace: bool,
    /// DAXPY scale factor.
    #[arg(long)]
    alpha: Option<f64>,
    /// Convolution output channels.
    #[arg(long)]
    c_out: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    machine: MachineArgs,
    #[arg(long)]
    lanes: Option<usize>,
    /// Problem size: matrix order, vector length, or image height and width.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    machine: MachineArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    lanes: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
}

#[derive(Args)]
struct CompareArgs {
    report: PathBuf,
    golden: PathBuf,
    /// `metric = tolerance` file.
    #[arg(long)]
    tolerances: Option<PathBuf>,
    /// Per-metric tolerance such as `cycles=abs:12`; repeatable.
    #[arg(long = "tol", value_name = "METRIC=TOL")]
    tol: Vec<String>,
    /// Tolerance for metrics without their own entry.
    #[arg(long)]
    default_tol: Option<Tolerance>,
}

#[derive(Args)]
struct ExecArgs {
    program: PathBuf,
    /// Initial memory image.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    lanes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the final memory image here.
    #[arg(long)]
    dump: Option<PathBuf>,
}

impl MachineArgs {
    fn settings(&self, lanes: Option<usize>, n: Option<usize>) -> anyhow::Result<Settings> {
        let file = match &self.config {
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Settings::parse(&text).with_context(|| format!("in {}", p.display()))?
            }
            None => Settings::default(),
        };
        let flags = Settings {
            lanes,
            kernel: self.kernel,
            n,
            tile: self.tile,
            sew: self.sew,
            mem_latency: self.mem_latency,
            fpu_depth: self.fpu_depth,
            opq_depth: self.opq_depth,
            out: self.out.clone(),
            seed: self.seed,
            trace: self.trace.then_some(true),
            alpha: self.alpha,
            c_out: self.c_out,
        };
        Ok(file.overlay(flags))
    }
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: error.into(),
    }
}

fn sim_failure(e: KernelError) -> Failure {
    let code = match e {
        KernelError::Sim(_) => EXIT_INVARIANT,
        _ => EXIT_USAGE,
    };
    Failure {
        code,
        error: e.into(),
    }
}

fn finish(
    file: &ReportFile,
    out: &std::path::Path,
    traces: &[(String, &lanesim::sim::Trace)],
) -> Result<u8, Failure> {
    lanesim_cli::write_outputs(out, file, traces).map_err(usage)?;
    print!("{}", lanesim_cli::summary(file));
    Ok(Status::of(file).exit_code())
}

fn run(args: RunArgs) -> Result<u8, Failure> {
    let settings = args.machine.settings(args.lanes, args.n).map_err(usage)?;
    let cfg = settings.resolve().map_err(usage)?;
    let mut r = lanesim_cli::simulate(&cfg).map_err(sim_failure)?;
    let trace = r.trace.take();
    let file = ReportFile::new(vec![RunRecord::from_kernel(&r, &cfg.machine)]);
    let traces: Vec<_> = trace
        .iter()
        .map(|t| (file.runs[0].label.clone(), t))
        .collect();
    finish(&file, &cfg.out, &traces)
}

fn sweep(args: SweepArgs) -> Result<u8, Failure> {
    let mut cfgs = Vec::new();
    for &lanes in &args.lanes {
        for &n in &args.n {
            let s = args.machine.settings(Some(lanes), Some(n)).map_err(usage)?;
            cfgs.push(s.resolve().map_err(usage)?);
        }
    }
    let Some(out) = cfgs.first().map(|c| c.out.clone()) else {
        return Err(usage(anyhow::anyhow!("empty sweep")));
    };
    let mut runs = Vec::new();
    let mut traces = Vec::new();
    for res in lanesim_cli::sweep(&cfgs) {
        let (rec, trace) = res.map_err(sim_failure)?;
        if let Some(t) = trace {
            traces.push((rec.label.clone(), t));
        }
        runs.push(rec);
    }
    let refs: Vec<_> = traces.iter().map(|(l, t)| (l.clone(), t)).collect();
    finish(&ReportFile::new(runs), &out, &refs)
}

fn compare_cmd(args: CompareArgs) -> Result<u8, Failure> {
    let read = |p: &PathBuf| -> anyhow::Result<String> {
        fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
    };
    let actual = report::load_metrics(&read(&args.report).map_err(usage)?)
        .with_context(|| format!("in {}", args.report.display()))
        .map_err(usage)?;
    let golden = report::load_metrics(&read(&args.golden).map_err(usage)?)
        .with_context(|| format!("in {}", args.golden.display()))
        .map_err(usage)?;
    let mut tol = match &args.tolerances {
        Some(p) => Tolerances::parse(&read(p).map_err(usage)?).map_err(usage)?,
        None => Tolerances::default(),
    };
    if let Some(d) = args.default_tol {
        tol.default = d;
    }
    for item in &args.tol {
        let Some((k, v)) = item.split_once('=') else {
            return Err(usage(anyhow::anyhow!(
                "--tol expects METRIC=TOL, got `{item}`"
            )));
        };
        tol.set(k.trim(), v.parse().map_err(usage)?);
    }
    let verdicts = compare::compare(&actual, &golden, &tol);
    print!("{}", compare::table(&verdicts));
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("{failed} of {} metrics failed", verdicts.len());
    Ok(if failed == 0 { 0 } else { EXIT_MISMATCH })
}

fn exec(args: ExecArgs) -> Result<u8, Failure> {
    let text = fs::read_to_string(&args.program)
        .with_context(|| format!("reading {}", args.program.display()))
        .map_err(usage)?;
    let program = Program::parse(&text)
        .with_context(|| format!("in {}", args.program.display()))
        .map_err(usage)?;
    let mut mem = Memory::new();
    if let Some(p) = &args.image {
        let bytes = fs::read(p)
            .with_context(|| format!("reading {}", p.display()))
            .map_err(usage)?;
        MemoryImage::parse(&bytes)
            .with_context(|| format!("in {}", p.display()))
            .map_err(usage)?
            .load_into(&mut mem);
    }
    let machine = lanesim::MachineConfig::with_lanes(args.lanes);
    let mut sim = Simulator::new(&machine, program, mem, SimOptions::default())
        .map_err(|e| usage(anyhow::Error::from(e)))?;
    let report = sim.run().map_err(|e| Failure {
        code: EXIT_INVARIANT,
        error: e.into(),
    })?;
    if let Some(p) = &args.dump {
        fs::write(p, MemoryImage::from_memory(sim.memory()).to_bytes())
            .with_context(|| format!("writing {}", p.display()))
            .map_err(usage)?;
    }
    let file = ReportFile::new(vec![RunRecord {
        label: args
            .program
            .file_stem()
            .map_or_else(|| "program".into(), |s| s.to_string_lossy().into_owned()),
        kernel: None,
        seed: None,
        machine,
        analysis: None,
        report,
    }]);
    finish(
        &file,
        &args.out.unwrap_or_else(|| PathBuf::from("out")),
        &[],
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Exec(a) => exec(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
