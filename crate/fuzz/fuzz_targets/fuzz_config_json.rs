#![no_main]

use libfuzzer_sys::fuzz_target;

// Experiment configs come from user-supplied files; parsing plus validation
// must never panic on arbitrary bytes.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = fedcodist::harness::parse_config_str(text);
    }
});
