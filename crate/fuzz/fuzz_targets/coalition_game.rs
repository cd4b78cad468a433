#![no_main]

use libfuzzer_sys::fuzz_target;
use marketsim::io::{game_to_json, parse_game_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(game) = parse_game_json(text) {
        let again = parse_game_json(&game_to_json(&game)).expect("written game parses");
        assert_eq!(again, game);
    }
});
