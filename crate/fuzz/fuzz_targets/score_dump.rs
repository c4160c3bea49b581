#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Some((&n, rest)) = data.split_first() {
        let _ = bosc::inference::read_score_dump(rest, (n % 16) as usize + 1);
    }
});
