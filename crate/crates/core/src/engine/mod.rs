//! The epoch loop: expire, admit, run the structure's mechanism and
//! matching, then move vehicles. Runs are deterministic in the scenario seed.

pub mod metrics;
pub mod scenario;
pub mod state;
#[cfg(test)]
mod tests;

use thiserror::Error;

pub use metrics::{CooperativeReport, EpisodeMetrics, Fixed4, PlatformMetrics};
pub use scenario::{
    generate, place_vehicles, rng_for, split_demand, GenSpec, GenerateError, GridSpec, PlatformSpec, RequestSpec, Scenario,
    ScenarioError, Stream,
};
pub use state::{EpochCounts, MarketState, PlatformBook, StopEvent};

use crate::mechanisms::{
    contribution_allocate, contribution_weights_with_profit, epm_allocate, shapley, AuctionRecord, CoalitionGame,
    GameError, MechanismError, TradeRecord,
};
use crate::model::{ModelError, Money, PlatformId, Request, RequestId, RequestState, Vehicle, VehicleId};
use crate::network::{Distance, METERS_PER_MILE};
use crate::rtv::StructureKind;
use crate::solve::SolveError;

/// Extra simulated time allowed after the horizon for riders to finish.
const DRAIN_LIMIT_S: f64 = 86_400.0;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("vehicle {} cannot reach its next stop", .0.0)]
    Stuck(VehicleId),
    #[error("request {} was delivered with no responsible platform", .0.0)]
    Unheld(RequestId),
    #[error("coalition is empty")]
    EmptyCoalition,
}

/// Everything an episode produced, for inspection beyond the headline metrics.
#[derive(Clone, Debug)]
pub struct Episode {
    pub metrics: EpisodeMetrics,
    pub trades: Vec<TradeRecord>,
    pub auctions: Vec<AuctionRecord>,
    pub requests: Vec<Request>,
    pub vehicles: Vec<Vehicle>,
    pub events: Vec<StopEvent>,
    pub counts: Vec<EpochCounts>,
    pub books: Vec<PlatformBook>,
    pub driver_costs: Vec<Money>,
    pub broker_balance: Money,
    pub epochs: u64,
}

impl Episode {
    pub fn odometer_total(&self) -> Distance {
        self.vehicles.iter().map(|v| v.odometer).sum()
    }

    pub fn ledger_total(&self) -> Distance {
        self.vehicles.iter().map(|v| v.route_ledger).sum()
    }

    pub fn fares_collected(&self) -> Money {
        self.requests.iter().filter(|r| r.state == RequestState::Served).filter_map(|r| r.fare).sum()
    }

    /// Checks the money-flow identities; returns the first that fails.
    pub fn check_money(&self) -> Result<(), String> {
        let revenue: Money = self.books.iter().map(|b| b.revenue).sum();
        if revenue != self.fares_collected() {
            return Err(format!("revenue {revenue} != fares {}", self.fares_collected()));
        }
        let paid: Money = self.books.iter().map(|b| b.info_paid).sum();
        let received: Money = self.books.iter().map(|b| b.info_received).sum();
        if paid != received {
            return Err(format!("information paid {paid} != received {received}"));
        }
        let auction: Money = self.books.iter().map(|b| b.auction_paid).sum();
        if auction != self.broker_balance {
            return Err(format!("auction payments {auction} != broker balance {}", self.broker_balance));
        }
        let cost: Money = self.driver_costs.iter().copied().sum();
        let profit: Money = self.metrics.per_platform.iter().map(|p| p.profit).sum();
        let expect = revenue - cost - paid + received - auction;
        if profit != expect {
            return Err(format!("profits {profit} != {expect}"));
        }
        let traded: Money = self.trades.iter().map(|t| t.info_price).sum();
        if traded != paid {
            return Err(format!("trade log {traded} != information paid {paid}"));
        }
        Ok(())
    }
}

/// Runs the scenario and returns its metrics.
pub fn run(scenario: &Scenario) -> Result<EpisodeMetrics, EngineError> {
    run_detailed(scenario).map(|e| e.metrics)
}

/// Runs the scenario; cooperative structures also get the allocation report.
pub fn run_detailed(scenario: &Scenario) -> Result<Episode, EngineError> {
    let mut ep = simulate(scenario)?;
    if scenario.structure.kind == StructureKind::Cooperative {
        ep.metrics.cooperative = Some(cooperative_report(scenario)?);
    }
    Ok(ep)
}

/// Total profit of the coalition operating alone as one platform.
pub fn characteristic_value(scenario: &Scenario, coalition: &[PlatformId]) -> Result<Money, EngineError> {
    if coalition.is_empty() {
        return Err(EngineError::EmptyCoalition);
    }
    let ep = simulate(&scenario.restrict(coalition))?;
    Ok(ep.metrics.per_platform.iter().map(|p| p.profit).sum())
}

/// The episode loop without any cooperative post-processing.
pub fn simulate(scenario: &Scenario) -> Result<Episode, EngineError> {
    let mut st = MarketState::new(scenario)?;
    let dt = scenario.constraints.epoch_s;
    let mut counts = Vec::new();
    loop {
        st.now = st.epoch as f64 * dt;
        st.expire()?;
        st.admit()?;
        match scenario.structure.kind {
            StructureKind::Single | StructureKind::Segmented | StructureKind::Cooperative => st.match_groups(None)?,
            StructureKind::Marketplace => {
                st.run_marketplace()?;
                st.match_groups(None)?;
            }
            StructureKind::Bilateral => {
                st.match_groups(None)?;
                st.run_bilateral()?;
            }
            StructureKind::Central => {
                st.match_groups(None)?;
                st.run_central()?;
            }
        }
        st.advance(st.now + dt)?;
        counts.push(st.counts());
        st.epoch += 1;
        let next = st.epoch as f64 * dt;
        if next > scenario.horizon && st.all_settled() {
            break;
        }
        if next > scenario.horizon + DRAIN_LIMIT_S {
            break;
        }
    }
    st.close_ledgers();
    Ok(finish(st, counts))
}

fn fixed_ratio(num: u64, den: u64) -> Fixed4 {
    if den == 0 {
        Fixed4::ZERO
    } else {
        Fixed4::from_raw(((num as i128 * 10_000 + den as i128 / 2) / den as i128) as i64)
    }
}

fn finish(st: MarketState, counts: Vec<EpochCounts>) -> Episode {
    let sc = st.scenario;
    let net = &*sc.network;
    let n = sc.platforms.len();
    let mut driver_costs = vec![Money::ZERO; n];
    let mut contributing = vec![0u64; n];
    for v in &st.vehicles {
        driver_costs[v.platform.0 as usize] += sc.pricing.route_pay(v.odometer, net);
        if v.served > 0 {
            contributing[v.platform.0 as usize] += 1;
        }
    }
    let mut contributed = vec![Money::ZERO; n];
    let (mut served, mut expired, mut wait_sum) = (0u64, 0u64, 0.0f64);
    for r in &st.requests {
        match r.state {
            RequestState::Served => {
                served += 1;
                wait_sum += r.pickup_time.unwrap_or(r.request_time) - r.request_time;
                contributed[r.platform.0 as usize] += r.fare.unwrap_or(Money::ZERO);
            }
            RequestState::Expired => expired += 1,
            _ => {}
        }
    }
    let per_platform = (0..n)
        .map(|p| {
            let b = &st.books[p];
            PlatformMetrics {
                platform: sc.platforms[p].label.clone(),
                profit: b.revenue - driver_costs[p] - b.info_paid + b.info_received - b.auction_paid,
                revenue: b.revenue,
                driver_cost: driver_costs[p],
                info_paid: b.info_paid,
                info_received: b.info_received,
                auction_paid: b.auction_paid,
                trips: b.trips,
                contributing_vehicle_count: contributing[p],
                contributed_request_value: contributed[p],
            }
        })
        .collect();
    let total_mm: u64 = st.vehicles.iter().map(|v| v.odometer.mm()).sum();
    let total = st.requests.len() as u64;
    let metrics = EpisodeMetrics {
        scenario: sc.name.clone(),
        structure: sc.structure_label(),
        seed: sc.seed,
        total_vmt: Fixed4::from_f64(total_mm as f64 / 1000.0 / METERS_PER_MILE),
        pct_unsatisfied: fixed_ratio(total - served, total),
        avg_wait: if served == 0 { Fixed4::ZERO } else { Fixed4::from_f64(wait_sum / served as f64) },
        total_trips: st.chosen_edges,
        requests: total,
        served,
        expired,
        trades: st.trades.len() as u64,
        broker_balance: st.broker_balance,
        per_platform,
        cooperative: None,
    };
    Episode {
        metrics,
        epochs: st.epoch,
        broker_balance: st.broker_balance,
        trades: st.trades,
        auctions: st.auctions,
        requests: st.requests,
        vehicles: st.vehicles,
        events: st.events,
        counts,
        books: st.books,
        driver_costs,
    }
}

/// Plays the cooperative game over the alliance: every coalition is
/// re-simulated on its own, then the three allocations are computed.
pub fn cooperative_report(scenario: &Scenario) -> Result<CooperativeReport, EngineError> {
    let members: Vec<PlatformId> = scenario.structure.alliance.clone();
    let labels: Vec<String> = members.iter().map(|p| scenario.platforms[p.0 as usize].label.clone()).collect();
    let n = members.len();
    if n == 0 {
        return Err(EngineError::EmptyCoalition);
    }
    if n > crate::mechanisms::game::MAX_PLAYERS {
        return Err(GameError::TooManyPlayers(n).into());
    }
    let coalition = |mask: u32| -> Vec<PlatformId> {
        members.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, &p)| p).collect()
    };
    let masks: Vec<u32> = (1..(1u32 << n)).collect();
    let runs: Vec<Result<Episode, EngineError>> = std::thread::scope(|s| {
        let handles: Vec<_> = masks
            .iter()
            .map(|&m| {
                let sc = scenario.restrict(&coalition(m));
                s.spawn(move || simulate(&sc))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("coalition run panicked")).collect()
    });
    let mut values = vec![Money::ZERO; 1 << n];
    let mut grand: Option<Episode> = None;
    for (&m, run) in masks.iter().zip(runs) {
        let ep = run?;
        values[m as usize] = ep.metrics.per_platform.iter().map(|p| p.profit).sum();
        if m == (1u32 << n) - 1 {
            grand = Some(ep);
        }
    }
    let game = CoalitionGame::new(labels.clone(), |m| Some(values[m as usize]))?;
    let grand = grand.expect("grand coalition is always run");
    let costs: Vec<f64> = members.iter().map(|p| grand.driver_costs[p.0 as usize].dollars()).collect();
    let revenues: Vec<f64> = members.iter().map(|p| grand.books[p.0 as usize].revenue.dollars()).collect();
    let weights = contribution_weights_with_profit(&costs, &revenues, game.grand_value().dollars()).map_err(|e| e.to_string());
    let contribution = match &weights {
        Ok(w) => contribution_allocate(&game, &w.w).map_err(|e| e.to_string()),
        Err(e) => Err(e.clone()),
    };
    Ok(CooperativeReport {
        players: labels.clone(),
        coalition_values: masks
            .iter()
            .map(|&m| {
                let names: Vec<&str> = (0..n).filter(|i| m & (1 << i) != 0).map(|i| labels[i].as_str()).collect();
                (names.join(","), values[m as usize])
            })
            .collect(),
        shapley: shapley(&game),
        epm: epm_allocate(&game).map_err(|e| e.to_string()),
        weights,
        contribution,
    })
}
