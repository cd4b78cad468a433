//! Episode-level metrics in fixed point.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::mechanisms::{Allocation, ContributionWeights, CoreOutcome};
use crate::model::Money;

/// Fixed-point number with four decimal places.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fixed4(i64);

impl Fixed4 {
    pub const ZERO: Fixed4 = Fixed4(0);

    pub fn from_f64(v: f64) -> Fixed4 {
        Fixed4((v * 1e4).round() as i64)
    }

    pub const fn from_raw(raw: i64) -> Fixed4 {
        Fixed4(raw)
    }

    pub fn raw(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 1e4
    }
}

impl fmt::Display for Fixed4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:04}", a / 10_000, a % 10_000)
    }
}

impl Serialize for Fixed4 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for Fixed4 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !v.is_finite() {
            return Err(serde::de::Error::custom("value must be finite"));
        }
        Ok(Fixed4::from_f64(v))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlatformMetrics {
    pub platform: String,
    pub profit: Money,
    pub revenue: Money,
    pub driver_cost: Money,
    pub info_paid: Money,
    pub info_received: Money,
    pub auction_paid: Money,
    pub trips: u64,
    /// Vehicles of this platform that delivered at least one rider.
    pub contributing_vehicle_count: u64,
    /// Fares of delivered riders who originally requested through this platform.
    pub contributed_request_value: Money,
}

/// Allocation results attached to cooperative runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CooperativeReport {
    pub players: Vec<String>,
    /// `(coalition as comma-joined players, v(S))` for every non-empty coalition.
    pub coalition_values: Vec<(String, Money)>,
    pub shapley: Allocation,
    pub epm: Result<CoreOutcome, String>,
    pub weights: Result<ContributionWeights, String>,
    pub contribution: Result<CoreOutcome, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub scenario: String,
    pub structure: String,
    pub seed: u64,
    /// Vehicle miles, deadhead included.
    pub total_vmt: Fixed4,
    /// Share of requests that left unserved, in [0, 1].
    pub pct_unsatisfied: Fixed4,
    /// Mean seconds from request to pickup over delivered riders.
    pub avg_wait: Fixed4,
    pub total_trips: u64,
    pub requests: u64,
    pub served: u64,
    pub expired: u64,
    pub trades: u64,
    pub broker_balance: Money,
    pub per_platform: Vec<PlatformMetrics>,
    pub cooperative: Option<CooperativeReport>,
}
