#![no_main]

use libfuzzer_sys::fuzz_target;
use rmt_logfield::dbm::NoiseRecord;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = NoiseRecord::from_json(s);
});
