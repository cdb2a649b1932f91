#![no_main]

use libfuzzer_sys::fuzz_target;
use rmt_logfield::qve::QveSolution;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(sol) = QveSolution::from_json(s) {
        let _ = sol.mean();
    }
});
