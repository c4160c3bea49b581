#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(op) = text.parse::<bosc::data::ProcessingOp>() {
            assert_eq!(op.to_string().parse::<bosc::data::ProcessingOp>().unwrap(), op);
        }
    }
});
