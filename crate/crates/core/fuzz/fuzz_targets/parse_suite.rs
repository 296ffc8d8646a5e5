#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(suite) = metaoc::harness::parse_suite(text) {
        let _ = suite.tasks();
        let _ = suite.hash();
    }
});
