#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = bosc_cli::config::ExperimentConfig::parse(text) {
            assert_eq!(bosc_cli::config::ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        }
    }
});
