#![no_main]

use libfuzzer_sys::fuzz_target;
use marketsim::io::parse_scenario;

// No base directory: file references are rejected, so nothing touches disk.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_scenario(text, None);
});
