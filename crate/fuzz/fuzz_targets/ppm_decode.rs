#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = bosc::data::ppm::decode(data) {
        let bytes = bosc::data::ppm::encode(&img).expect("decoded image re-encodes");
        assert_eq!(bosc::data::ppm::decode(&bytes).unwrap(), img);
    }
});
