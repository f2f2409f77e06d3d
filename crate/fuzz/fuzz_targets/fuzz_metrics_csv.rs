#![no_main]

use libfuzzer_sys::fuzz_target;

// Metrics CSVs are read back for audits and sweep merging.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = fedcodist::harness::parse_metrics_str(text);
    }
});
