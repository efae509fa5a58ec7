//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when
//! any criterion fails.

use std::process::ExitCode;

use lanesim::config::BankMapping;
use lanesim::kernels::{intensity, run, KernelKind, KernelRun, KernelSpec};
use lanesim::perf::{BoundKind, RooflineModel};
use lanesim::scalar::fma_loop_period;
use lanesim::vrf::{BankArbiter, BankRequest, Priority, VrfGeometry};
use lanesim::{isa::VReg, MachineConfig, SimOptions};

struct Suite {
    failed: usize,
}

impl Suite {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn sim(kind: KernelKind, lanes: usize) -> KernelRun {
    let cfg = MachineConfig::with_lanes(lanes);
    run(&KernelSpec::new(kind, 1), &cfg, SimOptions::default()).expect("kernel runs")
}

fn reduced_dconv() -> KernelKind {
    KernelKind::Dconv {
        c_out: 8,
        c_in: 3,
        k: 7,
        h: 112,
        w: 112,
        tile_co: 8,
    }
}

fn criterion_1(s: &mut Suite) {
    let modeled = fma_loop_period(&MachineConfig::default().scalar);
    let r = sim(KernelKind::matmul(64), 16);
    let measured = r.report.issue_gap.as_ref().map(|g| g.mode);
    s.check(
        "1 issue gap of the FMA loop",
        modeled == 5 && measured == Some(5),
        format!("modeled {modeled}, measured mode {measured:?} (want 5)"),
    );
}

fn criterion_2(s: &mut Suite) {
    let table: [(usize, [f64; 4]); 3] = [
        (4, [49.5, 82.6, 89.6, 94.3]),
        (8, [25.4, 53.4, 77.5, 93.1]),
        (16, [12.8, 27.6, 45.6, 78.8]),
    ];
    for (lanes, want) in table {
        for (n, want) in [16, 32, 64, 128].into_iter().zip(want) {
            let got = 100.0 * sim(KernelKind::matmul(n), lanes).report.fpu_utilization;
            s.check(
                &format!("2 matmul utilization lanes={lanes} n={n}"),
                (got - want).abs() <= 5.0,
                format!("{got:.1}% (want {want}% +/- 5pp)"),
            );
        }
    }
}

fn criterion_3(s: &mut Suite) {
    for (lanes, max_loss) in [(2, 5.0), (16, 7.0)] {
        let r = sim(KernelKind::matmul(256), lanes);
        s.check(
            &format!("3 matmul n=256 loss lanes={lanes}"),
            r.loss_pct <= max_loss && r.loss_pct >= 0.0,
            format!(
                "{:.3} dpflop/cycle, loss {:.2}% (want <= {max_loss}%)",
                r.report.performance, r.loss_pct
            ),
        );
    }
}

fn criterion_4(s: &mut Suite) {
    for n in [16usize, 32, 64] {
        let r = sim(KernelKind::matmul(n), 16);
        let line = 32.0 / 5.0 * n as f64 / 16.0;
        let mut ok = r.report.performance <= line;
        let mut want = format!("<= {line}");
        if n == 64 {
            ok &= r.report.performance >= 0.75 * line;
            want = format!("in [{}, {line}]", 0.75 * line);
        }
        s.check(
            &format!("4 issue line lanes=16 n={n}"),
            ok,
            format!("{:.3} dpflop/cycle (want {want})", r.report.performance),
        );
    }
}

fn criterion_5(s: &mut Suite) {
    let r = sim(KernelKind::daxpy(256), 2);
    let p = r.report.performance;
    s.check(
        "5 daxpy n=256 lanes=2 performance",
        (p - 0.65).abs() <= 0.03,
        format!("{p:.4} dpflop/cycle (want 0.65 +/- 0.03)"),
    );
    let r = sim(KernelKind::daxpy(256), 16);
    let (c, p) = (r.report.cycles, r.report.performance);
    s.check(
        "5 daxpy n=256 lanes=16 runtime",
        c.abs_diff(120) <= 12,
        format!("{c} cycles (want 120 +/- 12)"),
    );
    s.check(
        "5 daxpy n=256 lanes=16 performance",
        (p - 4.27).abs() <= 0.4,
        format!("{p:.4} dpflop/cycle (want 4.27 +/- 0.4)"),
    );
}

fn criterion_6(s: &mut Suite) {
    let pattern = [(2, 93.25), (4, 92.1), (8, 90.6), (16, 83.1)];
    let mut perf16 = 0.0;
    for (lanes, want) in pattern {
        let r = sim(reduced_dconv(), lanes);
        let got = 100.0 * r.report.performance / r.bound;
        if lanes == 16 {
            perf16 = r.report.performance;
        }
        s.check(
            &format!("6 dconv c_out=8 roofline utilization lanes={lanes}"),
            (got - want).abs() <= 7.0,
            format!("{got:.1}% (want {want}% +/- 7pp)"),
        );
    }
    s.check(
        "6 dconv c_out=8 lanes=16 against full-size 26.7",
        (perf16 / 26.7 - 1.0).abs() <= 0.10,
        format!("{perf16:.3} dpflop/cycle (want 26.7 +/- 10%)"),
    );
}

fn criterion_7(s: &mut Suite) {
    let mut worst = 0.0f64;
    let mut runs = 0;
    for seed in 0..20u64 {
        for n in [1usize, 7, 16, 33] {
            let lanes = [1, 2, 4, 8][(seed % 4) as usize];
            let kinds = [
                KernelKind::matmul(n),
                KernelKind::daxpy(n),
                KernelKind::Dconv {
                    c_out: 2,
                    c_in: 2,
                    k: 3,
                    h: 2,
                    w: n,
                    tile_co: 2,
                },
            ];
            for kind in kinds {
                let cfg = MachineConfig::with_lanes(lanes);
                let r = run(&KernelSpec::new(kind, seed), &cfg, SimOptions::default())
                    .expect("kernel runs");
                worst = worst.max(r.max_rel_error);
                runs += 1;
            }
        }
    }
    s.check(
        "7 functional correctness",
        worst <= 1e-12,
        format!("{runs} runs over 20 seeds, worst relative error {worst:e} (want <= 1e-12)"),
    );
}

fn criterion_8(s: &mut Suite) {
    let conflicts = |mapping| {
        let geom = VrfGeometry {
            mapping,
            ..VrfGeometry::default()
        };
        let reqs: Vec<BankRequest> = (0..8)
            .map(|r| BankRequest {
                requester: r,
                bank: geom.locate(r, 0).0,
                reg: VReg::new(r as u32).unwrap(),
                word: 0,
                write: false,
                priority: Priority::High,
            })
            .collect();
        let mut granted = Vec::new();
        BankArbiter::new(8, 14).grant_all(&reqs, &mut granted);
        granted.iter().filter(|g| !**g).count()
    };
    let (pole, flat) = (
        conflicts(BankMapping::BarberPole),
        conflicts(BankMapping::Flat),
    );
    s.check(
        "8 barber's pole de-conflicts element 0 of v0..v7",
        pole == 0 && flat == 7,
        format!("{pole} conflicts shifted, {flat} non-shifted (want 0 and 7)"),
    );

    let mut violations = 0;
    let mut deterministic = true;
    for lanes in [2usize, 4] {
        let cfg = MachineConfig::with_lanes(lanes);
        let opts = SimOptions {
            trace: true,
            ..SimOptions::default()
        };
        for kind in [
            KernelKind::matmul(16),
            KernelKind::daxpy(100),
            KernelKind::Dconv {
                c_out: 4,
                c_in: 2,
                k: 3,
                h: 4,
                w: 20,
                tile_co: 4,
            },
        ] {
            let spec = KernelSpec::new(kind, 7);
            let a = run(&spec, &cfg, opts.clone()).expect("kernel runs");
            let b = run(&spec, &cfg, opts.clone()).expect("kernel runs");
            violations += a.report.invariants.total();
            deterministic &= a.report == b.report && a.memory == b.memory;
            let inst = lanesim::kernels::build(&spec, &cfg).expect("builds");
            let mut sim =
                lanesim::Simulator::new(&cfg, inst.program, inst.memory, opts.clone()).unwrap();
            sim.run().unwrap();
            let t = sim.trace().unwrap();
            let peak = t.port.iter().map(|p| p.1).max().unwrap_or(0);
            if peak > cfg.mem_bytes_per_cycle() as u64 {
                violations += 1;
            }
        }
    }
    s.check(
        "8 single-port, MUL/FPU exclusion, chaining, bandwidth ceiling",
        violations == 0,
        format!("{violations} invariant violations (want 0)"),
    );
    s.check(
        "8 determinism",
        deterministic,
        "bit-identical reports and memory on re-run".to_string(),
    );
}

fn criterion_9(s: &mut Suite) {
    let i_mm = intensity(&KernelKind::matmul(256));
    let i_ax = intensity(&KernelKind::daxpy(256));
    let i_cv = intensity(&KernelKind::dconv());
    let slope = RooflineModel::new(16, 5.0).issue_bound(1.0);
    let bound = RooflineModel::new(16, 5.0)
        .bound(BoundKind::IssueLimited, 1.0)
        .unwrap();
    s.check(
        "9 roofline analytics",
        i_mm == 16.0
            && i_ax == 1.0 / 12.0
            && (i_cv - 34.9).abs() <= 0.05
            && slope == 6.4
            && bound == 6.4,
        format!("I(matmul 256) {i_mm}, I(daxpy) {i_ax:.6}, I(dconv) {i_cv:.3}, slope {slope}"),
    );
}

fn main() -> ExitCode {
    let mut s = Suite { failed: 0 };
    criterion_9(&mut s);
    criterion_1(&mut s);
    criterion_5(&mut s);
    criterion_8(&mut s);
    criterion_7(&mut s);
    criterion_4(&mut s);
    criterion_2(&mut s);
    criterion_3(&mut s);
    criterion_6(&mut s);
    println!("acceptance: {} failed", s.failed);
    if s.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
