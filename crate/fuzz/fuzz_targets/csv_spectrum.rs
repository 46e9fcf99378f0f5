#![no_main]

use cavimag::io::{parse_spectrum_csv, write_spectrum_csv, ColumnMap};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = parse_spectrum_csv(text, "fuzz.csv", None, &ColumnMap::default()) else { return };
    // Whatever parses must survive a write/read cycle.
    let again = parse_spectrum_csv(&write_spectrum_csv(&spec, None), "again.csv", None, &ColumnMap::default())
        .expect("written spectrum reparses");
    assert_eq!(again.len(), spec.len());
});
