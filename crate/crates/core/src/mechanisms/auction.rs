//! Sealed-bid single-item auction with a price of information.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Money, PlatformId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bid {
    pub platform: PlatformId,
    pub amount: Money,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum AuctionOutcome {
    Sold { winner: PlatformId, payment: Money, second_bid: Money },
    NoSale,
}

#[derive(Debug, Error, PartialEq)]
pub enum AuctionError {
    #[error("gamma must lie in [0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("bid of platform {0} is negative")]
    NegativeBid(PlatformId),
}

/// Highest bid wins (ties to the lowest platform id) and pays `gamma` times
/// the second-highest bid, rounded to the mill.
pub fn run_single_item_auction(bids: &[Bid], gamma: f64) -> Result<AuctionOutcome, AuctionError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(AuctionError::InvalidGamma(gamma));
    }
    if let Some(b) = bids.iter().find(|b| b.amount < Money::ZERO) {
        return Err(AuctionError::NegativeBid(b.platform));
    }
    let mut ranked: Vec<&Bid> = bids.iter().filter(|b| b.amount.is_positive()).collect();
    ranked.sort_by(|a, b| b.amount.cmp(&a.amount).then(a.platform.cmp(&b.platform)));
    let Some(top) = ranked.first() else { return Ok(AuctionOutcome::NoSale) };
    let second_bid = ranked.get(1).map_or(Money::ZERO, |b| b.amount);
    Ok(AuctionOutcome::Sold { winner: top.platform, payment: second_bid.scale(gamma), second_bid })
}
