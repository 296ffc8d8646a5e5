#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = metaoc::harness::parse_config(text) {
        // anything accepted must survive a round trip
        let again = metaoc::harness::parse_config(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }
});
