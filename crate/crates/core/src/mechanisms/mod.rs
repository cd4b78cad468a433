//! Market mechanisms: cooperative profit allocation, the marketplace
//! auction and request trading between platforms.

pub mod auction;
pub mod cooperative;
pub mod game;
pub mod marketplace;
pub mod trading;
pub mod valuation;

pub use auction::{run_single_item_auction, AuctionError, AuctionOutcome, Bid};
pub use cooperative::{
    contribution_allocate, contribution_weights, contribution_weights_with_profit, epm_allocate, AllocError,
    ContributionWeights, CoreOutcome,
};
pub use game::{in_core, shapley, shapley_exact, Allocation, CoalitionGame, GameError};
pub use marketplace::{marketplace_epoch, AuctionRecord, MarketplaceOutcome};
pub use trading::{bilateral_trading_round, central_trading_epoch, split_largest_remainder, CentralOutcome, TradeRecord};
pub use valuation::{marginal_profit, max_profit, platform_valuation, MechanismError};
