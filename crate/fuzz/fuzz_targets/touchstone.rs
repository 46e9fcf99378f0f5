#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = cavimag::io::parse_touchstone(text, "fuzz.s2p") {
            assert_eq!(spec.f_grid().len(), spec.s21().len());
        }
    }
});
