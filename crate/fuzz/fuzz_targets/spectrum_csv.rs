#![no_main]

use libfuzzer_sys::fuzz_target;
use rmt_logfield::spectral::{Spectrum, SpectrumSource};

fuzz_target!(|data: &[u8]| {
    let src = SpectrumSource {
        profile: "fuzz".into(),
        beta: 1,
        seed: None,
    };
    if let Ok(spec) = Spectrum::read_csv(data, src.clone()) {
        let mut buf = Vec::new();
        spec.write_csv(&mut buf).unwrap();
        assert_eq!(Spectrum::read_csv(buf.as_slice(), src).unwrap(), spec);
    }
});
