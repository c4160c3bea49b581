#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = bosc::data::Manifest::parse(text) {
            let _ = m.num_classes();
            let _ = m.in_set_names();
        }
    }
});
