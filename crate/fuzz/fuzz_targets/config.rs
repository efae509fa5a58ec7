#![no_main]
use lanesim_cli::settings::Settings;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = Settings::parse(text) {
        let _ = s.resolve();
    }
});
