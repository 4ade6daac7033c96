#![no_main]
use libfuzzer_sys::fuzz_target;

use lattice_fermi::resolvent::parse_kernel_text;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_kernel_text(text);
    }
});
