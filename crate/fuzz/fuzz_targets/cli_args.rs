#![no_main]

use clap::Parser;
use libfuzzer_sys::fuzz_target;
use rmt_logfield::cli::Cli;

// Arguments are NUL-separated; only parsing is exercised.
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let args = std::iter::once("rmt-logfield").chain(s.split('\0'));
    let _ = Cli::try_parse_from(args);
});
