#![no_main]
use lanesim::isa::Program;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = Program::parse(text) {
        let again = Program::parse(&p.to_string()).expect("printed program parses");
        assert_eq!(again, p);
    }
});
