#![no_main]

use libfuzzer_sys::fuzz_target;
use rmt_logfield::experiments::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ExperimentConfig::from_json(s) else {
        return;
    };
    if cfg.validate().is_ok() {
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert!(back.validate().is_ok());
    }
});
