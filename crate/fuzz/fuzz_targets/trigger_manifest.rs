#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = bosc::backdoor::triggers::TriggerManifest::parse(text) {
            let names: Vec<String> = m.bindings.iter().map(|b| b.class.clone()).collect();
            let _ = m.ordered_files(&names);
        }
    }
});
