//! Broker marketplace: requests auctioned one at a time in random order.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::auction::{run_single_item_auction, AuctionOutcome, Bid};
use super::valuation::{marginal_profit, max_profit, MechanismError};
use crate::model::{Money, PlatformId, RequestId, VehicleId};
use crate::rtv::RtvContext;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionRecord {
    pub epoch: u64,
    pub request: RequestId,
    pub bids: Vec<Bid>,
    pub outcome: AuctionOutcome,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MarketplaceOutcome {
    /// `(request, winner, payment to the broker)` in auction order.
    pub awards: Vec<(RequestId, PlatformId, Money)>,
    /// Unsold requests, to be offered again next epoch.
    pub leftovers: Vec<RequestId>,
    pub records: Vec<AuctionRecord>,
}

/// Auctions every broker-held request. `pools[p]` and `fleets[p]` are the
/// requests and vehicles of platform `p`; a won request joins the winner's
/// pool before the next auction.
pub fn marketplace_epoch<R: Rng>(
    ctx: &RtvContext,
    broker_pool: &[RequestId],
    pools: &[Vec<RequestId>],
    fleets: &[Vec<VehicleId>],
    gamma: f64,
    rng: &mut R,
    epoch: u64,
) -> Result<MarketplaceOutcome, MechanismError> {
    let mut order = broker_pool.to_vec();
    order.sort();
    order.shuffle(rng);
    let mut pools = pools.to_vec();
    let mut bases: Vec<Option<Money>> = vec![None; pools.len()];
    let mut out = MarketplaceOutcome::default();
    for r in order {
        let mut bids = Vec::with_capacity(pools.len());
        for (p, pool) in pools.iter().enumerate() {
            let base = match bases[p] {
                Some(b) => b,
                None => *bases[p].insert(max_profit(ctx, pool, &fleets[p])?),
            };
            let amount = marginal_profit(ctx, pool, base, &fleets[p], r)?;
            bids.push(Bid { platform: PlatformId(p as u16), amount });
        }
        let outcome = run_single_item_auction(&bids, gamma)?;
        match outcome {
            AuctionOutcome::Sold { winner, payment, .. } => {
                pools[winner.0 as usize].push(r);
                bases[winner.0 as usize] = None;
                out.awards.push((r, winner, payment));
            }
            AuctionOutcome::NoSale => out.leftovers.push(r),
        }
        out.records.push(AuctionRecord { epoch, request: r, bids, outcome });
    }
    Ok(out)
}
