use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lanesim::memory::MemoryImage;
use lanesim_cli::report::{load_metrics, ReportFile};
use lanesim_cli::Status;
use tempfile::TempDir;

fn lanesim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanesim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn goldens() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../goldens")
}

fn report(dir: &Path) -> ReportFile {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn empty_daxpy_exits_cleanly() {
    let tmp = TempDir::new().unwrap();
    let o = lanesim(
        &[
            "run", "--lanes", "2", "--kernel", "daxpy", "--n", "0", "--out", "o",
        ],
        tmp.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = report(&tmp.path().join("o"));
    assert_eq!(r.runs[0].report.dpflops, 0);
    for f in ["roofline.csv", "util.csv"] {
        assert!(tmp.path().join("o").join(f).exists());
    }
}

#[test]
fn invalid_settings_exit_with_usage_code() {
    let tmp = TempDir::new().unwrap();
    for args in [
        &["run", "--lanes", "3"][..],
        &["run", "--kernel", "fft"],
        &["run", "--sew", "e32"],
        &["run", "--n", "0"],
        &["run", "--nonsense"],
        &["compare", "missing.json", "also-missing.json"],
    ] {
        let o = lanesim(args, tmp.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    fs::write(tmp.path().join("bad.cfg"), "lanes = 4\nwidth = 3\n").unwrap();
    let o = lanesim(&["run", "--config", "bad.cfg"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("m.cfg"),
        "# machine\nlanes = 8\nkernel = daxpy\nn = 64\nout = from-file\nfpu_depth = 3\n",
    )
    .unwrap();
    let o = lanesim(&["run", "--config", "m.cfg", "--lanes", "2"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(&tmp.path().join("from-file"));
    let run = &r.runs[0];
    assert_eq!(run.machine.lanes, 2);
    assert_eq!(run.machine.fpu_depth, 3);
    assert_eq!(run.label, "daxpy.n64.l2");
}

#[test]
fn sweep_writes_one_roofline_row_per_point() {
    let tmp = TempDir::new().unwrap();
    let o = lanesim(
        &[
            "sweep",
            "--kernel",
            "matmul",
            "--n",
            "2,4,6,8,10",
            "--lanes",
            "2,4,8,16",
            "--out",
            "s",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("s/roofline.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
    assert!(csv.starts_with("lanes,intensity,bound,measured,loss_pct\n"));
    let r = report(&tmp.path().join("s"));
    assert_eq!(r.runs.len(), 20);
    assert!(r.metrics.contains_key("matmul.n10.l16.fpu_utilization"));
}

#[test]
fn reruns_write_identical_files() {
    let tmp = TempDir::new().unwrap();
    for out in ["a", "b"] {
        let o = lanesim(
            &[
                "run", "--kernel", "dconv", "--n", "9", "--c-out", "3", "--seed", "5", "--trace",
                "--out", out,
            ],
            tmp.path(),
        );
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["report.json", "roofline.csv", "util.csv", "trace.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn compare_verdicts_and_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let o = lanesim(
        &["run", "--kernel", "matmul", "--n", "8", "--out", "r"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let o = lanesim(&["compare", "r/report.json", "r/report.json"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("FAIL"));

    let util = load_metrics(&fs::read_to_string(tmp.path().join("r/report.json")).unwrap())
        .unwrap()["fpu_utilization"];
    fs::write(
        tmp.path().join("off.json"),
        format!("{{\"fpu_utilization\": {}}}", util + 0.10),
    )
    .unwrap();
    let o = lanesim(
        &[
            "compare",
            "r/report.json",
            "off.json",
            "--tol",
            "fpu_utilization=abs:0.05",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL fpu_utilization"));

    fs::write(tmp.path().join("extra.json"), "{\"no_such_metric\": 1}").unwrap();
    let o = lanesim(&["compare", "r/report.json", "extra.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL no_such_metric 1 missing"));
}

#[test]
fn daxpy_matches_golden_set() {
    let tmp = TempDir::new().unwrap();
    let g = goldens();
    for lanes in ["2", "16"] {
        let out = format!("d{lanes}");
        let o = lanesim(
            &[
                "run", "--kernel", "daxpy", "--n", "256", "--lanes", lanes, "--out", &out,
            ],
            tmp.path(),
        );
        assert_eq!(o.status.code(), Some(0));
        let golden = g.join(format!("daxpy_l{lanes}.json"));
        let tol = g.join(format!("daxpy_l{lanes}.tol"));
        let o = lanesim(
            &[
                "compare",
                &format!("{out}/report.json"),
                golden.to_str().unwrap(),
                "--tolerances",
                tol.to_str().unwrap(),
            ],
            tmp.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    }
}

#[test]
fn exec_runs_assembly_over_an_image() {
    let tmp = TempDir::new().unwrap();
    let values: Vec<u8> = [1.0f64, 2.0, 3.0, 4.0]
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    let image = MemoryImage {
        segments: vec![(0x1000, values)],
    };
    fs::write(tmp.path().join("in.img"), image.to_bytes()).unwrap();
    fs::write(
        tmp.path().join("double.s"),
        "; y = x + x\n.set a0, 4\n.set a1, 0x1000\nsetvl t0, a0\nvld v1, 0(a1)\nvadd v2, v1, v1\nvst v2, 0(a1)\n",
    )
    .unwrap();
    let o = lanesim(
        &[
            "exec", "double.s", "--image", "in.img", "--lanes", "2", "--dump", "out.img", "--out",
            "x",
        ],
        tmp.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = MemoryImage::parse(&fs::read(tmp.path().join("out.img")).unwrap()).unwrap();
    let mut mem = lanesim::Memory::new();
    out.load_into(&mut mem);
    assert_eq!(mem.read_f64s(0x1000, 4), vec![2.0, 4.0, 6.0, 8.0]);
    assert_eq!(report(&tmp.path().join("x")).runs[0].label, "double");

    fs::write(tmp.path().join("bad.s"), "vld v1\n").unwrap();
    assert_eq!(
        lanesim(&["exec", "bad.s"], tmp.path()).status.code(),
        Some(1)
    );
    fs::write(tmp.path().join("bad.img"), b"LSMI").unwrap();
    let o = lanesim(&["exec", "double.s", "--image", "bad.img"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn status_orders_failures_by_severity() {
    let tmp = TempDir::new().unwrap();
    let o = lanesim(
        &["run", "--kernel", "daxpy", "--n", "10", "--out", "r"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let mut r = report(&tmp.path().join("r"));
    assert_eq!(Status::of(&r), Status::Ok);
    r.runs[0].analysis.as_mut().unwrap().functional_pass = false;
    assert_eq!(Status::of(&r), Status::Mismatch);
    assert_eq!(Status::of(&r).exit_code(), 2);
    r.runs[0].report.invariants.mul_fpu_overlap = 1;
    assert_eq!(Status::of(&r), Status::Invariant);
    assert_eq!(Status::of(&r).exit_code(), 3);
}
