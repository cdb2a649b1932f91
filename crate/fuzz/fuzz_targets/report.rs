#![no_main]

use libfuzzer_sys::fuzz_target;
use rmt_logfield::experiments::render_report;

fuzz_target!(|data: &[u8]| {
    let Ok(v) = serde_json::from_slice::<serde_json::Value>(data) else {
        return;
    };
    let _ = render_report(&v);
});
