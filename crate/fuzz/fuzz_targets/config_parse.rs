#![no_main]
use libfuzzer_sys::fuzz_target;

use lattice_fermi_cli::config::Config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = Config::parse(text) {
        // whatever parsed must print back to an equivalent file
        let again = Config::parse(&cfg.to_text()).expect("printed config parses");
        assert_eq!(cfg, again);
    }
});
