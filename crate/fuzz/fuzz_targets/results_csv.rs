#![no_main]

use libfuzzer_sys::fuzz_target;
use marketsim::io::parse_results_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_results_csv(text);
});
