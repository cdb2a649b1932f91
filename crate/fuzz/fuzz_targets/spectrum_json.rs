#![no_main]

use libfuzzer_sys::fuzz_target;
use rmt_logfield::spectral::Spectrum;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = Spectrum::from_json(s) {
        assert!(spec.validate().is_ok());
    }
});
