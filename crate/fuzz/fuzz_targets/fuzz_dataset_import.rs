#![no_main]

use libfuzzer_sys::fuzz_target;

// Columnar dataset import parses files produced outside the process.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = fedcodist::data::parse_dataset_str(text);
    }
});
