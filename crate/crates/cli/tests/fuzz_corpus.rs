//! Replays the checked-in fuzz seed corpus through the checks each fuzz
//! target performs.

use std::fs;
use std::path::{Path, PathBuf};

use lanesim::isa::Program;
use lanesim::memory::MemoryImage;
use lanesim_cli::compare::{compare, Tolerances};
use lanesim_cli::report::{load_metrics, ReportFile};
use lanesim_cli::settings::Settings;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

fn name(p: &Path) -> String {
    p.file_name().unwrap().to_string_lossy().into_owned()
}

#[test]
fn asm_seeds() {
    for (p, data) in seeds("asm") {
        let text = std::str::from_utf8(&data).unwrap();
        match Program::parse(text) {
            Ok(prog) => {
                assert_eq!(
                    Program::parse(&prog.to_string()).unwrap(),
                    prog,
                    "{}",
                    name(&p)
                );
            }
            Err(_) => assert!(
                name(&p).starts_with("errors"),
                "{} failed to parse",
                name(&p)
            ),
        }
    }
}

#[test]
fn config_seeds() {
    for (p, data) in seeds("config") {
        let text = std::str::from_utf8(&data).unwrap();
        let parsed = Settings::parse(text);
        assert_eq!(
            parsed.is_err(),
            name(&p).starts_with("errors"),
            "{}",
            name(&p)
        );
        if let Ok(s) = parsed {
            s.resolve().unwrap();
        }
    }
}

#[test]
fn report_json_seeds() {
    let mut full_reports = 0;
    for (_, data) in seeds("report_json") {
        let text = std::str::from_utf8(&data).unwrap();
        if let Ok(m) = load_metrics(text) {
            assert!(compare(&m, &m, &Tolerances::default())
                .iter()
                .all(|v| v.pass));
        }
        full_reports += usize::from(serde_json::from_str::<ReportFile>(text).is_ok());
        let _ = Tolerances::parse(text);
    }
    assert_eq!(full_reports, 1);
}

#[test]
fn memory_image_seeds() {
    for (p, data) in seeds("memory_image") {
        match MemoryImage::parse(&data) {
            Ok(img) => assert_eq!(img.to_bytes(), data, "{}", name(&p)),
            Err(_) => assert!(
                ["truncated.img", "bad_version.img"].contains(&name(&p).as_str()),
                "{}",
                name(&p)
            ),
        }
    }
}
