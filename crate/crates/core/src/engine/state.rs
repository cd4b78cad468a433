//! Mutable market state stepped by the episode loop.

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{rng_for, Scenario, Stream};
use super::EngineError;
use crate::mechanisms::{
    bilateral_trading_round, central_trading_epoch, marketplace_epoch, AuctionRecord, TradeRecord,
};
use crate::model::{
    Money, PlatformId, Request, RequestId, RequestState, StopKind, Vehicle, VehicleId,
};
use crate::network::Distance;
use crate::rtv::{build_rtv_graph, RtvContext, RtvGraph, StructureKind};
use crate::solve::{solve_assignment, AssignmentProblem};

/// Money and activity booked to one platform.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlatformBook {
    pub revenue: Money,
    pub info_paid: Money,
    pub info_received: Money,
    pub auction_paid: Money,
    pub trips: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub time: f64,
    pub vehicle: VehicleId,
    pub request: RequestId,
    pub kind: StopKind,
}

/// Request counts by state after one epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochCounts {
    pub epoch: u64,
    pub admitted: u64,
    pub waiting: u64,
    pub assigned: u64,
    pub onboard: u64,
    pub served: u64,
    pub expired: u64,
}

pub struct MarketState<'s> {
    pub scenario: &'s Scenario,
    pub epoch: u64,
    pub now: f64,
    pub requests: Vec<Request>,
    pub vehicles: Vec<Vehicle>,
    pub books: Vec<PlatformBook>,
    pub trades: Vec<TradeRecord>,
    pub auctions: Vec<AuctionRecord>,
    pub events: Vec<StopEvent>,
    pub broker_balance: Money,
    pub chosen_edges: u64,
    auction_rng: ChaCha8Rng,
    trading_rng: ChaCha8Rng,
}

impl<'s> MarketState<'s> {
    pub fn new(scenario: &'s Scenario) -> Result<Self, EngineError> {
        scenario.validate()?;
        let net = &*scenario.network;
        let mut requests = Vec::with_capacity(scenario.requests.len());
        for (i, r) in scenario.requests.iter().enumerate() {
            let req = Request::new(RequestId(i as u32), r.label.clone(), r.origin, r.destination, r.request_time, r.platform, net)?;
            requests.push(req);
        }
        let mut vehicles = Vec::new();
        for (p, spec) in scenario.platforms.iter().enumerate() {
            for &at in &spec.vehicles {
                vehicles.push(Vehicle::new(VehicleId(vehicles.len() as u32), PlatformId(p as u16), at));
            }
        }
        Ok(MarketState {
            scenario,
            epoch: 0,
            now: 0.0,
            requests,
            vehicles,
            books: vec![PlatformBook::default(); scenario.platforms.len()],
            trades: Vec::new(),
            auctions: Vec::new(),
            events: Vec::new(),
            broker_balance: Money::ZERO,
            chosen_edges: 0,
            auction_rng: rng_for(scenario.seed, Stream::AuctionOrder),
            trading_rng: rng_for(scenario.seed, Stream::TradingOrder),
        })
    }

    pub fn ctx(&self) -> RtvContext<'_> {
        RtvContext {
            net: &self.scenario.network,
            requests: &self.requests,
            vehicles: &self.vehicles,
            constraints: &self.scenario.constraints,
            pricing: &self.scenario.pricing,
            now: self.now,
        }
    }

    fn platforms(&self) -> usize {
        self.scenario.platforms.len()
    }

    /// Waiting requests that have outlived the maximum wait. Returns them.
    pub fn expire(&mut self) -> Result<Vec<RequestId>, EngineError> {
        let max_wait = self.scenario.constraints.max_wait_s;
        let mut out = Vec::new();
        for r in &mut self.requests {
            if r.state == RequestState::Waiting && self.now - r.request_time > max_wait {
                r.transition(RequestState::Expired)?;
                out.push(r.id);
            }
        }
        Ok(out)
    }

    /// Moves requests whose time has come into the market. Under the
    /// marketplace the broker takes them.
    pub fn admit(&mut self) -> Result<(), EngineError> {
        let broker = self.scenario.structure.kind == StructureKind::Marketplace;
        for r in &mut self.requests {
            if r.state == RequestState::Pending && r.request_time <= self.now {
                r.transition(RequestState::Waiting)?;
                if broker {
                    r.holder = None;
                }
            }
        }
        Ok(())
    }

    pub fn waiting_held_by(&self, p: PlatformId) -> Vec<RequestId> {
        self.requests.iter().filter(|r| r.state == RequestState::Waiting && r.holder == Some(p)).map(|r| r.id).collect()
    }

    pub fn fleet(&self, p: PlatformId) -> Vec<VehicleId> {
        self.vehicles.iter().filter(|v| v.platform == p).map(|v| v.id).collect()
    }

    /// Matches each group of platforms on its own, optionally only the listed groups.
    pub fn match_groups(&mut self, only: Option<&BTreeSet<u32>>) -> Result<(), EngineError> {
        let mu = &self.scenario.structure;
        let mut groups: BTreeSet<u32> = (0..self.platforms() as u16).map(|p| mu.group(PlatformId(p))).collect();
        if let Some(only) = only {
            groups.retain(|g| only.contains(g));
        }
        for g in groups {
            let live: Vec<RequestId> = self
                .requests
                .iter()
                .filter(|r| r.state == RequestState::Waiting && r.holder.is_some_and(|h| mu.group(h) == g))
                .map(|r| r.id)
                .collect();
            if live.is_empty() {
                continue;
            }
            let fleet: Vec<VehicleId> = self.vehicles.iter().filter(|v| mu.group(v.platform) == g).map(|v| v.id).collect();
            if fleet.is_empty() {
                continue;
            }
            let graph = build_rtv_graph(&self.ctx(), &live, &fleet);
            let problem = AssignmentProblem {
                graph: &graph,
                objective: self.scenario.objective,
                penalty: self.scenario.constraints.penalty,
            };
            let a = solve_assignment(&problem)?;
            self.apply(&graph, &a.chosen)?;
        }
        Ok(())
    }

    /// Commits chosen trip-vehicle edges: vehicles adopt the witness routes.
    pub fn apply(&mut self, graph: &RtvGraph, chosen: &[usize]) -> Result<(), EngineError> {
        let net = &*self.scenario.network;
        let c = self.scenario.constraints;
        for &e in chosen {
            let edge = &graph.edges[e];
            let v = &mut self.vehicles[edge.vehicle.index()];
            close_ledger(v, net);
            let t0 = self.now.max(v.ready_time);
            v.schedule = edge.route.clone();
            v.plan_start = t0;
            v.ready_time = t0;
            v.plan_progress = Distance::ZERO;
            self.books[v.platform.0 as usize].trips += 1;
            self.chosen_edges += 1;
            for &(r, fare) in &edge.fares {
                let req = &mut self.requests[r.index()];
                req.transition(RequestState::Assigned)?;
                req.assigned_at = Some(self.now);
                req.pickup_deadline = Some(req.fresh_pickup_deadline(self.now, &c));
                req.fare = Some(fare);
            }
        }
        Ok(())
    }

    /// Auctions broker-held requests to the platforms.
    pub fn run_marketplace(&mut self) -> Result<(), EngineError> {
        let broker: Vec<RequestId> =
            self.requests.iter().filter(|r| r.state == RequestState::Waiting && r.holder.is_none()).map(|r| r.id).collect();
        if broker.is_empty() {
            return Ok(());
        }
        let ids: Vec<PlatformId> = self.scenario.platform_ids();
        let pools: Vec<Vec<RequestId>> = ids.iter().map(|&p| self.waiting_held_by(p)).collect();
        let fleets: Vec<Vec<VehicleId>> = ids.iter().map(|&p| self.fleet(p)).collect();
        let gamma = self.scenario.structure.gamma;
        let mut rng = self.auction_rng.clone();
        let out = marketplace_epoch(&self.ctx(), &broker, &pools, &fleets, gamma, &mut rng, self.epoch)?;
        self.auction_rng = rng;
        for (r, winner, payment) in out.awards {
            self.requests[r.index()].holder = Some(winner);
            self.books[winner.0 as usize].auction_paid += payment;
            self.broker_balance += payment;
        }
        self.auctions.extend(out.records);
        Ok(())
    }

    /// Bilateral trading over post-matching leftovers, then re-matching of buyers.
    pub fn run_bilateral(&mut self) -> Result<(), EngineError> {
        let ids = self.scenario.platform_ids();
        let pools: Vec<Vec<RequestId>> = ids.iter().map(|&p| self.waiting_held_by(p)).collect();
        if pools.iter().all(Vec::is_empty) {
            return Ok(());
        }
        let fleets: Vec<Vec<VehicleId>> = ids.iter().map(|&p| self.fleet(p)).collect();
        let locked: BTreeSet<RequestId> = self.requests.iter().filter(|r| r.traded).map(|r| r.id).collect();
        let gamma = self.scenario.structure.gamma;
        let mut rng = self.trading_rng.clone();
        let trades = bilateral_trading_round(&self.ctx(), &pools, &fleets, &locked, gamma, &mut rng, self.epoch)?;
        self.trading_rng = rng;
        let mut buyers = BTreeSet::new();
        for t in &trades {
            buyers.insert(self.scenario.structure.group(t.buyer));
        }
        self.book_trades(trades);
        if !buyers.is_empty() {
            self.match_groups(Some(&buyers))?;
        }
        Ok(())
    }

    /// Central trading: leftovers of all platforms matched to idle vehicles of all platforms.
    pub fn run_central(&mut self) -> Result<(), EngineError> {
        let unsatisfied: Vec<RequestId> = self
            .requests
            .iter()
            .filter(|r| r.state == RequestState::Waiting && !r.traded && r.holder.is_some())
            .map(|r| r.id)
            .collect();
        let idle: Vec<VehicleId> = self.vehicles.iter().filter(|v| v.is_idle()).map(|v| v.id).collect();
        if unsatisfied.is_empty() || idle.is_empty() {
            return Ok(());
        }
        let gamma = self.scenario.structure.gamma;
        let out = central_trading_epoch(&self.ctx(), &unsatisfied, &idle, gamma, self.epoch)?;
        self.book_trades(out.trades);
        self.apply(&out.graph, &out.assignment.chosen)
    }

    fn book_trades(&mut self, trades: Vec<TradeRecord>) {
        for t in trades {
            let req = &mut self.requests[t.request.index()];
            req.holder = Some(t.buyer);
            req.traded = true;
            self.books[t.buyer.0 as usize].info_paid += t.info_price;
            self.books[t.seller.0 as usize].info_received += t.info_price;
            self.trades.push(t);
        }
    }

    /// Drives every vehicle along its schedule until `t_end`. A vehicle that
    /// is mid-edge at `t_end` completes the edge and is ready at its head node.
    pub fn advance(&mut self, t_end: f64) -> Result<(), EngineError> {
        for i in 0..self.vehicles.len() {
            self.advance_vehicle(i, t_end)?;
        }
        Ok(())
    }

    fn advance_vehicle(&mut self, i: usize, t_end: f64) -> Result<(), EngineError> {
        let net = &*self.scenario.network;
        loop {
            while self.vehicles[i].schedule.first().is_some_and(|s| s.node == self.vehicles[i].position) {
                let stop = self.vehicles[i].schedule.remove(0);
                self.execute(i, stop.request, stop.kind)?;
            }
            let v = &mut self.vehicles[i];
            if v.schedule.is_empty() || v.ready_time >= t_end {
                return Ok(());
            }
            let target = v.schedule[0].node;
            let next = net.next_hop(v.position, target).ok_or(EngineError::Stuck(v.id))?;
            let leg = net.distance(v.position, next).ok_or(EngineError::Stuck(v.id))?;
            v.plan_progress += leg;
            v.odometer += leg;
            v.position = next;
            v.ready_time = v.plan_start + net.travel_time(v.plan_progress);
        }
    }

    fn execute(&mut self, i: usize, r: RequestId, kind: StopKind) -> Result<(), EngineError> {
        let net = &*self.scenario.network;
        let v = &mut self.vehicles[i];
        close_ledger(v, net);
        let t = v.ready_time;
        let req = &mut self.requests[r.index()];
        match kind {
            StopKind::Pickup => {
                req.transition(RequestState::Onboard)?;
                req.pickup_time = Some(t);
                req.served_by = Some(v.id);
                v.onboard.push(r);
            }
            StopKind::Dropoff => {
                req.transition(RequestState::Served)?;
                req.dropoff_time = Some(t);
                v.onboard.retain(|&x| x != r);
                v.served += 1;
                let holder = req.holder.ok_or(EngineError::Unheld(r))?;
                self.books[holder.0 as usize].revenue += req.fare.unwrap_or(Money::ZERO);
            }
        }
        self.events.push(StopEvent { time: t, vehicle: v.id, request: r, kind });
        Ok(())
    }

    /// Books the distance since the last event into each vehicle's route ledger.
    pub fn close_ledgers(&mut self) {
        let net = &*self.scenario.network;
        for v in &mut self.vehicles {
            close_ledger(v, net);
        }
    }

    pub fn all_settled(&self) -> bool {
        self.requests.iter().all(|r| matches!(r.state, RequestState::Served | RequestState::Expired))
            && self.vehicles.iter().all(Vehicle::is_idle)
    }

    pub fn counts(&self) -> EpochCounts {
        let mut c = EpochCounts { epoch: self.epoch, ..Default::default() };
        for r in &self.requests {
            match r.state {
                RequestState::Pending => continue,
                RequestState::Waiting => c.waiting += 1,
                RequestState::Assigned => c.assigned += 1,
                RequestState::Onboard => c.onboard += 1,
                RequestState::Served => c.served += 1,
                RequestState::Expired => c.expired += 1,
            }
            c.admitted += 1;
        }
        c
    }
}

fn close_ledger(v: &mut Vehicle, net: &crate::network::RoadNetwork) {
    let d = net.distance(v.ledger_anchor, v.position).unwrap_or(Distance::ZERO);
    v.route_ledger += d;
    v.ledger_anchor = v.position;
}
