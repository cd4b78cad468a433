#![no_main]

use libfuzzer_sys::fuzz_target;
use marketsim::network::parse_network_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_network_csv(text, 10.0);
});
