#![no_main]

use libfuzzer_sys::fuzz_target;
use marketsim::io::parse_bids;
use marketsim::mechanisms::{run_single_item_auction, Bid};
use marketsim::model::PlatformId;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(amounts) = parse_bids(text) else {
        return;
    };
    let bids: Vec<Bid> = amounts
        .into_iter()
        .take(u16::MAX as usize)
        .enumerate()
        .map(|(i, amount)| Bid { platform: PlatformId(i as u16), amount })
        .collect();
    let _ = run_single_item_auction(&bids, 0.1);
});
