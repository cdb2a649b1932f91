#![no_main]

use libfuzzer_sys::fuzz_target;
use rmt_logfield::cli::Settings;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = serde_json::from_slice::<Settings>(data) else {
        return;
    };
    let _ = s.ns();
    let _ = s.into_experiment();
});
