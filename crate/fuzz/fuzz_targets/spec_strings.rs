#![no_main]

use libfuzzer_sys::fuzz_target;
use rmt_logfield::ensemble::{EntryLaw, ProfileKind};
use rmt_logfield::experiments::{build_profile, EnergySpec, ExperimentKind, IndexSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = EnergySpec::parse(s).map(|e| e.at(64));
    let _ = IndexSpec::parse(s).map(|k| k.at(64));
    let _ = ProfileKind::parse(s);
    let _ = EntryLaw::parse(s);
    let _ = ExperimentKind::parse(s);
    let _ = build_profile(s, 16);
});
