#![no_main]
use lanesim::memory::MemoryImage;
use lanesim::Memory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = MemoryImage::parse(data) {
        assert_eq!(img.to_bytes(), data);
        let mut mem = Memory::new();
        img.load_into(&mut mem);
        for (base, bytes) in &img.segments {
            let mut back = vec![0; bytes.len()];
            mem.read_bytes(*base, &mut back);
            if img.segments.len() == 1 {
                assert_eq!(&back, bytes);
            }
        }
    }
});
