#![no_main]

use libfuzzer_sys::fuzz_target;
use rmt_logfield::ensemble::MatrixSample;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(m) = MatrixSample::from_json(s) {
        assert!(m.validate().is_ok());
        let _ = m.trace();
    }
});
