#![no_main]
use libfuzzer_sys::fuzz_target;

use lattice_fermi::resolvent::{parse_kernel_text, write_kernel_text};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(grid) = parse_kernel_text(text) else { return };
    let written = write_kernel_text(&grid);
    let back = parse_kernel_text(&written).expect("written table parses");
    assert_eq!(back, grid);
    assert_eq!(write_kernel_text(&back), written);
});
