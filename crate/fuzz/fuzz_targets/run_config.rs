#![no_main]

use cavimag::io::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = RunConfig::from_json(text, "fuzz.json") else { return };
    if cfg.validate().is_ok() {
        let _ = cfg.circuit();
        let _ = cfg.hybrid();
        let _ = cfg.polarization();
        let _ = cfg.frequencies();
        let _ = cfg.fields();
    }
});
