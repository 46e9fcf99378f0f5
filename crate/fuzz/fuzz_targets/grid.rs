#![no_main]

use cavimag::io::{parse_grid, write_grid};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(grid) = parse_grid(text, "fuzz.grid") else { return };
    parse_grid(&write_grid(&grid), "again.grid").expect("written grid reparses");
    let _ = grid.to_field_sweep();
    let _ = grid.to_transition_map();
});
