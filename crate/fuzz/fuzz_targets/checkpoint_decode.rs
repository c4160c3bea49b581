#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(clf) = bosc::checkpoint::decode(data) {
        let again = bosc::checkpoint::encode(&clf).expect("decoded checkpoint re-encodes");
        assert!(bosc::checkpoint::decode(&again).is_ok());
    }
});
