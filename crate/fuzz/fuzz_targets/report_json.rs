#![no_main]
use lanesim_cli::compare::{compare, Tolerances};
use lanesim_cli::report::{load_metrics, ReportFile};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = load_metrics(text) {
        let _ = compare(&m, &m, &Tolerances::default());
    }
    let _ = serde_json::from_str::<ReportFile>(text);
    let _ = Tolerances::parse(text);
});
