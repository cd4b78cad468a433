//! Shareability graphs: the request-vehicle (RV) graph, enumeration of
//! candidate trips into the request-trip-vehicle (RTV) graph, and the
//! market-structure operator that cuts the RTV graph down to a subgraph.
//!
//! All request and vehicle lookups index the context slices by id, so
//! `requests[i].id == RequestId(i)` and `vehicles[i].id == VehicleId(i)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Constraints, Money, PlatformId, PricingScheme, Request, RequestId, Stop, StopKind, Vehicle,
    VehicleId,
};
use crate::network::{Distance, NodeId, RoadNetwork};

/// Slack for floating-point deadline comparisons, seconds.
pub const TIME_EPS: f64 = 1e-6;

/// Read-only view of the world at one decision instant.
#[derive(Clone, Copy)]
pub struct RtvContext<'a> {
    pub net: &'a RoadNetwork,
    pub requests: &'a [Request],
    pub vehicles: &'a [Vehicle],
    pub constraints: &'a Constraints,
    pub pricing: &'a PricingScheme,
    pub now: f64,
}

/// A minimum-distance feasible stop sequence and its timing.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedRoute {
    pub stops: Vec<Stop>,
    pub times: Vec<f64>,
    pub distance: Distance,
    /// Sum of dropoff delays over every rider on the route.
    pub total_delay_s: f64,
}

#[derive(Clone, Copy, Debug)]
struct Rider {
    id: RequestId,
    origin: NodeId,
    destination: NodeId,
    deadline: f64,
    /// Known pickup time for riders already onboard.
    picked_at: Option<f64>,
    max_ride: f64,
    ideal_dropoff: f64,
}

impl<'a> RtvContext<'a> {
    fn request(&self, id: RequestId) -> &'a Request {
        &self.requests[id.index()]
    }

    fn vehicle(&self, id: VehicleId) -> &'a Vehicle {
        &self.vehicles[id.index()]
    }

    /// Earliest time the vehicle can start a new plan.
    pub fn start_time(&self, v: &Vehicle) -> f64 {
        self.now.max(v.ready_time)
    }

    fn rider(&self, id: RequestId, deadline: f64, picked_at: Option<f64>) -> Rider {
        let r = self.request(id);
        Rider {
            id,
            origin: r.origin,
            destination: r.destination,
            deadline,
            picked_at,
            max_ride: r.max_ride_s(self.constraints),
            ideal_dropoff: r.request_time + r.direct_duration_s,
        }
    }

    /// Plans the vehicle's current commitments plus `new` requests.
    pub fn plan_for_vehicle(&self, v: &Vehicle, new: &[RequestId]) -> Option<PlannedRoute> {
        let mut riders: Vec<Rider> = Vec::new();
        for &id in &v.onboard {
            let picked = self.request(id).pickup_time.unwrap_or(v.ready_time);
            riders.push(self.rider(id, f64::INFINITY, Some(picked)));
        }
        for s in v.schedule.iter().filter(|s| s.kind == StopKind::Pickup) {
            let deadline = self.request(s.request).pickup_deadline.unwrap_or(f64::INFINITY);
            riders.push(self.rider(s.request, deadline, None));
        }
        for &id in new {
            let deadline = self.request(id).fresh_pickup_deadline(self.now, self.constraints);
            riders.push(self.rider(id, deadline, None));
        }
        if riders.len() > v.capacity {
            return None;
        }
        riders.sort_by_key(|r| r.id);
        plan_route(self.net, v.position, self.start_time(v), &riders)
    }

    /// Plans `new` requests on an empty vehicle placed at `start` at time `now`.
    pub fn plan_virtual(&self, start: NodeId, new: &[RequestId]) -> Option<PlannedRoute> {
        let mut riders: Vec<Rider> = new
            .iter()
            .map(|&id| self.rider(id, self.request(id).fresh_pickup_deadline(self.now, self.constraints), None))
            .collect();
        riders.sort_by_key(|r| r.id);
        plan_route(self.net, start, self.now, &riders)
    }
}

struct Search<'a> {
    net: &'a RoadNetwork,
    t0: f64,
    riders: &'a [Rider],
    /// 0 = awaiting pickup, 1 = onboard, 2 = delivered.
    phase: Vec<u8>,
    picked_at: Vec<f64>,
    path: Vec<(usize, StopKind, f64)>,
    best: Option<(u64, Vec<(usize, StopKind, f64)>)>,
}

impl Search<'_> {
    fn dfs(&mut self, at: NodeId, cum: u64) {
        if let Some((b, _)) = &self.best {
            if cum >= *b {
                return;
            }
        }
        if self.phase.iter().all(|&p| p == 2) {
            self.best = Some((cum, self.path.clone()));
            return;
        }
        for i in 0..self.riders.len() {
            let r = self.riders[i];
            let (kind, node) = match self.phase[i] {
                0 => (StopKind::Pickup, r.origin),
                1 => (StopKind::Dropoff, r.destination),
                _ => continue,
            };
            let Some(leg) = self.net.distance(at, node) else { continue };
            let next = cum + leg.mm();
            let t = self.t0 + self.net.travel_time(Distance::from_mm(next));
            match kind {
                StopKind::Pickup => {
                    if t > r.deadline + TIME_EPS {
                        continue;
                    }
                    self.phase[i] = 1;
                    self.picked_at[i] = t;
                }
                StopKind::Dropoff => {
                    if t - self.picked_at[i] > r.max_ride + TIME_EPS {
                        continue;
                    }
                    self.phase[i] = 2;
                }
            }
            self.path.push((i, kind, t));
            self.dfs(node, next);
            self.path.pop();
            self.phase[i] = if kind == StopKind::Pickup { 0 } else { 1 };
        }
    }
}

/// Exhaustive search for the minimum-distance feasible route. Among equal
/// distances the first sequence in canonical order (request id, pickup
/// before dropoff) wins.
fn plan_route(net: &RoadNetwork, start: NodeId, t0: f64, riders: &[Rider]) -> Option<PlannedRoute> {
    let mut search = Search {
        net,
        t0,
        riders,
        phase: riders.iter().map(|r| if r.picked_at.is_some() { 1 } else { 0 }).collect(),
        picked_at: riders.iter().map(|r| r.picked_at.unwrap_or(f64::NAN)).collect(),
        path: Vec::with_capacity(riders.len() * 2),
        best: None,
    };
    search.dfs(start, 0);
    let (mm, path) = search.best?;
    let mut stops = Vec::with_capacity(path.len());
    let mut times = Vec::with_capacity(path.len());
    let mut total_delay_s = 0.0;
    for (i, kind, t) in path {
        let r = &riders[i];
        let node = if kind == StopKind::Pickup { r.origin } else { r.destination };
        if kind == StopKind::Dropoff {
            total_delay_s += t - r.ideal_dropoff;
        }
        stops.push(Stop { node, request: r.id, kind });
        times.push(t);
    }
    Some(PlannedRoute { stops, times, distance: Distance::from_mm(mm), total_delay_s })
}

/// Pairwise shareability graph.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RvGraph {
    /// Unordered pairs stored with the smaller id first.
    pub rr_edges: BTreeSet<(RequestId, RequestId)>,
    pub rv_edges: BTreeSet<(RequestId, VehicleId)>,
}

impl RvGraph {
    pub fn shareable(&self, a: RequestId, b: RequestId) -> bool {
        self.rr_edges.contains(&(a.min(b), a.max(b)))
    }
}

/// Builds the RV graph over `live` waiting requests and the given vehicles.
pub fn build_rv_graph(ctx: &RtvContext, live: &[RequestId], vehicles: &[VehicleId]) -> RvGraph {
    let mut g = RvGraph::default();
    let mut live = live.to_vec();
    live.sort();
    for (i, &a) in live.iter().enumerate() {
        for &b in &live[i + 1..] {
            let pair = [a, b];
            let feasible = [a, b]
                .iter()
                .any(|&s| ctx.plan_virtual(ctx.request(s).origin, &pair).is_some());
            if feasible {
                g.rr_edges.insert((a, b));
            }
        }
    }
    for &v in vehicles {
        let veh = ctx.vehicle(v);
        for &r in &live {
            if ctx.plan_for_vehicle(veh, &[r]).is_some() {
                g.rv_edges.insert((r, v));
            }
        }
    }
    g
}

/// A vehicle's route when it takes no new request this epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Baseline {
    pub route: Vec<Stop>,
    pub times: Vec<f64>,
    pub distance: Distance,
    pub total_delay_s: f64,
}

/// A feasible (trip, vehicle) pairing with its witness route.
#[derive(Clone, Debug, PartialEq)]
pub struct TvEdge {
    pub trip: usize,
    pub vehicle: VehicleId,
    pub route: Vec<Stop>,
    pub times: Vec<f64>,
    pub distance: Distance,
    /// Route distance beyond the vehicle's baseline.
    pub added_distance: Distance,
    /// Total rider delay beyond the vehicle's baseline, seconds.
    pub added_delay_s: f64,
    /// Locked fare of each new rider.
    pub fares: Vec<(RequestId, Money)>,
    /// New fares minus driver pay for the added distance.
    pub profit: Money,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RtvGraph {
    pub now: f64,
    pub requests: Vec<RequestId>,
    pub vehicles: Vec<VehicleId>,
    pub rv: RvGraph,
    /// Sorted request sets.
    pub trips: Vec<Vec<RequestId>>,
    /// Sorted by `(trip, vehicle)`; the position is the edge id.
    pub edges: Vec<TvEdge>,
    pub baselines: BTreeMap<VehicleId, Baseline>,
}

impl RtvGraph {
    pub fn edges_of_trip(&self, trip: usize) -> impl Iterator<Item = &TvEdge> {
        self.edges.iter().filter(move |e| e.trip == trip)
    }

    pub fn trip_requests(&self, edge: &TvEdge) -> &[RequestId] {
        &self.trips[edge.trip]
    }
}

fn baseline(ctx: &RtvContext, v: &Vehicle) -> Baseline {
    match ctx.plan_for_vehicle(v, &[]) {
        Some(p) => Baseline {
            route: p.stops,
            times: p.times,
            distance: p.distance,
            total_delay_s: p.total_delay_s,
        },
        // Unreachable in a consistent state: the current schedule is itself
        // feasible. Keep it, so commitments are never dropped.
        None => {
            let mut at = v.position;
            let mut cum = Distance::ZERO;
            let mut times = Vec::new();
            for s in &v.schedule {
                cum += ctx.net.distance(at, s.node).unwrap_or(Distance::ZERO);
                at = s.node;
                times.push(ctx.start_time(v) + ctx.net.travel_time(cum));
            }
            Baseline { route: v.schedule.clone(), times, distance: cum, total_delay_s: 0.0 }
        }
    }
}

/// Enumerates every trip of up to `cap` requests (counting the vehicle's
/// existing commitments) with a feasible route on at least one vehicle.
/// A trip is tried on a vehicle only if all its pairs are rr-adjacent and
/// all its one-smaller sub-trips are feasible on that vehicle.
pub fn enumerate_trips(ctx: &RtvContext, rv: &RvGraph, vehicles: &[VehicleId], cap: usize) -> RtvGraph {
    let mut by_trip: BTreeMap<Vec<RequestId>, Vec<(VehicleId, PlannedRoute)>> = BTreeMap::new();
    let mut baselines = BTreeMap::new();
    let mut vehicles = vehicles.to_vec();
    vehicles.sort();
    vehicles.dedup();
    for &vid in &vehicles {
        let v = ctx.vehicle(vid);
        baselines.insert(vid, baseline(ctx, v));
        let room = cap.min(v.capacity).saturating_sub(v.committed().len());
        let reachable: Vec<RequestId> =
            rv.rv_edges.iter().filter(|(_, x)| *x == vid).map(|(r, _)| *r).collect();
        let mut level: BTreeMap<Vec<RequestId>, PlannedRoute> = BTreeMap::new();
        if room >= 1 {
            for &r in &reachable {
                if let Some(p) = ctx.plan_for_vehicle(v, &[r]) {
                    level.insert(vec![r], p);
                }
            }
        }
        for size in 2..=room {
            let mut next: BTreeMap<Vec<RequestId>, PlannedRoute> = BTreeMap::new();
            for set in level.keys() {
                let last = *set.last().expect("trips are non-empty");
                for &r in reachable.iter().filter(|&&r| r > last) {
                    if !set.iter().all(|&m| rv.shareable(m, r)) {
                        continue;
                    }
                    let mut cand = set.clone();
                    cand.push(r);
                    let closed = (0..size).all(|skip| {
                        let sub: Vec<RequestId> =
                            cand.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, &x)| x).collect();
                        level.contains_key(&sub)
                    });
                    if !closed {
                        continue;
                    }
                    if let Some(p) = ctx.plan_for_vehicle(v, &cand) {
                        next.insert(cand, p);
                    }
                }
            }
            for (set, p) in std::mem::take(&mut level) {
                by_trip.entry(set).or_default().push((vid, p));
            }
            level = next;
            if level.is_empty() {
                break;
            }
        }
        for (set, p) in level {
            by_trip.entry(set).or_default().push((vid, p));
        }
    }

    let mut graph = RtvGraph {
        now: ctx.now,
        requests: {
            let mut live: BTreeSet<RequestId> = rv.rr_edges.iter().flat_map(|&(a, b)| [a, b]).collect();
            live.extend(rv.rv_edges.iter().map(|&(r, _)| r));
            live.into_iter().collect()
        },
        vehicles,
        rv: rv.clone(),
        trips: Vec::new(),
        edges: Vec::new(),
        baselines,
    };
    for (set, mut options) in by_trip {
        options.sort_by_key(|(v, _)| *v);
        let trip = graph.trips.len();
        for (vid, p) in options {
            let base = &graph.baselines[&vid];
            let added_distance = p.distance.saturating_sub(base.distance);
            let fares: Vec<(RequestId, Money)> =
                set.iter().map(|&r| (r, ctx.pricing.rider_fare(set.len(), ctx.request(r)))).collect();
            let revenue: Money = fares.iter().map(|(_, f)| *f).sum();
            graph.edges.push(TvEdge {
                trip,
                vehicle: vid,
                added_delay_s: p.total_delay_s - base.total_delay_s,
                added_distance,
                profit: revenue - ctx.pricing.route_pay(added_distance, ctx.net),
                route: p.stops,
                times: p.times,
                distance: p.distance,
                fares,
            });
        }
        graph.trips.push(set);
    }
    graph
}

/// RV graph plus trip enumeration at vehicle capacity.
pub fn build_rtv_graph(ctx: &RtvContext, live: &[RequestId], vehicles: &[VehicleId]) -> RtvGraph {
    let rv = build_rv_graph(ctx, live, vehicles);
    let mut g = enumerate_trips(ctx, &rv, vehicles, crate::model::VEHICLE_CAPACITY);
    let mut all: Vec<RequestId> = live.to_vec();
    all.sort();
    all.dedup();
    g.requests = all;
    g
}

/// Re-checks a stored route from scratch: precedence, capacity, pickup
/// deadlines and ride-time bounds, and that the stored distance and times
/// match the network.
pub fn check_route(ctx: &RtvContext, vehicle: &Vehicle, new: &[RequestId], route: &[Stop], times: &[f64], distance: Distance) -> Result<(), String> {
    if route.len() != times.len() {
        return Err("times do not match stops".into());
    }
    let mut onboard: Vec<RequestId> = vehicle.onboard.clone();
    let mut picked_at: BTreeMap<RequestId, f64> = vehicle
        .onboard
        .iter()
        .map(|&r| (r, ctx.request(r).pickup_time.unwrap_or(vehicle.ready_time)))
        .collect();
    let mut expected: BTreeSet<RequestId> = vehicle.committed().into_iter().collect();
    expected.extend(new.iter().copied());
    if expected.len() > vehicle.capacity {
        return Err(format!("{} requests exceed capacity {}", expected.len(), vehicle.capacity));
    }
    let mut at = vehicle.position;
    let mut cum = Distance::ZERO;
    let mut delivered = BTreeSet::new();
    let t0 = ctx.start_time(vehicle);
    for (stop, &t) in route.iter().zip(times) {
        cum += ctx.net.distance(at, stop.node).ok_or("unreachable stop")?;
        at = stop.node;
        let expect_t = t0 + ctx.net.travel_time(cum);
        if (expect_t - t).abs() > TIME_EPS {
            return Err(format!("stop time {t} differs from {expect_t}"));
        }
        let req = ctx.request(stop.request);
        match stop.kind {
            StopKind::Pickup => {
                if stop.node != req.origin || picked_at.contains_key(&stop.request) {
                    return Err(format!("bad pickup for {:?}", stop.request));
                }
                let deadline = if new.contains(&stop.request) {
                    req.fresh_pickup_deadline(ctx.now, ctx.constraints)
                } else {
                    req.pickup_deadline.unwrap_or(f64::INFINITY)
                };
                if t > deadline + TIME_EPS || t - req.request_time > ctx.constraints.max_wait_s + TIME_EPS {
                    return Err(format!("pickup of {:?} at {t} misses deadline {deadline}", stop.request));
                }
                picked_at.insert(stop.request, t);
                onboard.push(stop.request);
                if onboard.len() > vehicle.capacity {
                    return Err("capacity exceeded".into());
                }
            }
            StopKind::Dropoff => {
                if stop.node != req.destination {
                    return Err(format!("bad dropoff node for {:?}", stop.request));
                }
                let Some(pos) = onboard.iter().position(|&r| r == stop.request) else {
                    return Err(format!("dropoff before pickup for {:?}", stop.request));
                };
                onboard.remove(pos);
                let ride = t - picked_at[&stop.request];
                if ride > req.max_ride_s(ctx.constraints) + TIME_EPS {
                    return Err(format!("ride of {:?} lasts {ride} s", stop.request));
                }
                delivered.insert(stop.request);
            }
        }
    }
    if cum != distance {
        return Err(format!("route length {cum} differs from stored {distance}"));
    }
    if delivered != expected || !onboard.is_empty() {
        return Err("route does not deliver every rider".into());
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    Single,
    Segmented,
    Bilateral,
    Central,
    Cooperative,
    Marketplace,
}

impl StructureKind {
    pub const ALL: [StructureKind; 6] = [
        StructureKind::Single,
        StructureKind::Segmented,
        StructureKind::Bilateral,
        StructureKind::Central,
        StructureKind::Cooperative,
        StructureKind::Marketplace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructureKind::Single => "single",
            StructureKind::Segmented => "segmented",
            StructureKind::Bilateral => "bilateral",
            StructureKind::Central => "central",
            StructureKind::Cooperative => "cooperative",
            StructureKind::Marketplace => "marketplace",
        }
    }

    pub fn parse(s: &str) -> Option<StructureKind> {
        StructureKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RtvError {
    #[error("no platform mapping for {0}")]
    UnmappedEntity(String),
    #[error("gamma must lie in [0, 1], got {0}")]
    InvalidGamma(f64),
}

/// Market structure: which request-trip-vehicle edges are admissible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketStructure {
    pub kind: StructureKind,
    /// Cooperative alliance members; ignored by other kinds.
    #[serde(default)]
    pub alliance: Vec<PlatformId>,
    pub gamma: f64,
}

impl MarketStructure {
    pub fn new(kind: StructureKind, gamma: f64) -> Result<Self, RtvError> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(RtvError::InvalidGamma(gamma));
        }
        Ok(MarketStructure { kind, alliance: Vec::new(), gamma })
    }

    pub fn cooperative(alliance: Vec<PlatformId>, gamma: f64) -> Result<Self, RtvError> {
        let mut s = Self::new(StructureKind::Cooperative, gamma)?;
        s.alliance = alliance;
        s.alliance.sort();
        s.alliance.dedup();
        Ok(s)
    }

    /// Matching partition a platform belongs to. Platforms sharing a group
    /// are matched jointly.
    pub fn group(&self, p: PlatformId) -> u32 {
        match self.kind {
            StructureKind::Single => 0,
            StructureKind::Cooperative if self.alliance.contains(&p) => 0,
            _ => p.0 as u32 + 1,
        }
    }
}

/// Keeps the trips whose requests sit in one group and the trip-vehicle
/// edges whose vehicle is in that group. Trips left without edges go too.
pub fn apply_market_structure(
    g: &RtvGraph,
    mu: &MarketStructure,
    request_platform: &dyn Fn(RequestId) -> Option<PlatformId>,
    vehicle_platform: &dyn Fn(VehicleId) -> Option<PlatformId>,
) -> Result<RtvGraph, RtvError> {
    let rg = |r: RequestId| {
        request_platform(r).map(|p| mu.group(p)).ok_or_else(|| RtvError::UnmappedEntity(format!("request {}", r.0)))
    };
    let vg = |v: VehicleId| {
        vehicle_platform(v).map(|p| mu.group(p)).ok_or_else(|| RtvError::UnmappedEntity(format!("vehicle {}", v.0)))
    };
    let mut req_group = BTreeMap::new();
    for &r in &g.requests {
        req_group.insert(r, rg(r)?);
    }
    let mut veh_group = BTreeMap::new();
    for &v in &g.vehicles {
        veh_group.insert(v, vg(v)?);
    }
    let mut out = RtvGraph {
        now: g.now,
        requests: g.requests.clone(),
        vehicles: g.vehicles.clone(),
        rv: RvGraph::default(),
        trips: Vec::new(),
        edges: Vec::new(),
        baselines: g.baselines.clone(),
    };
    let group_of = |r: &RequestId| req_group.get(r).copied().map_or_else(|| rg(*r), Ok);
    for &(a, b) in &g.rv.rr_edges {
        if group_of(&a)? == group_of(&b)? {
            out.rv.rr_edges.insert((a, b));
        }
    }
    for &(r, v) in &g.rv.rv_edges {
        let vgrp = veh_group.get(&v).copied().map_or_else(|| vg(v), Ok)?;
        if group_of(&r)? == vgrp {
            out.rv.rv_edges.insert((r, v));
        }
    }
    for (t, set) in g.trips.iter().enumerate() {
        let grp = group_of(&set[0])?;
        let mut same = true;
        for r in set {
            same &= group_of(r)? == grp;
        }
        if !same {
            continue;
        }
        let mut kept = Vec::new();
        for e in g.edges_of_trip(t) {
            if veh_group.get(&e.vehicle).copied().map_or_else(|| vg(e.vehicle), Ok)? == grp {
                kept.push(e.clone());
            }
        }
        if kept.is_empty() {
            continue;
        }
        let idx = out.trips.len();
        out.trips.push(set.clone());
        out.edges.extend(kept.into_iter().map(|e| TvEdge { trip: idx, ..e }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vehicle;
    use crate::network::make_grid;
    use proptest::prelude::*;

    struct World {
        net: RoadNetwork,
        requests: Vec<Request>,
        vehicles: Vec<Vehicle>,
        c: Constraints,
        p: PricingScheme,
    }

    impl World {
        fn ctx(&self, now: f64) -> RtvContext<'_> {
            RtvContext {
                net: &self.net,
                requests: &self.requests,
                vehicles: &self.vehicles,
                constraints: &self.c,
                pricing: &self.p,
                now,
            }
        }

        fn add_request(&mut self, o: u32, d: u32, t: f64, plat: u16) -> RequestId {
            let id = RequestId(self.requests.len() as u32);
            let mut r = Request::new(id, format!("r{}", id.0), NodeId(o), NodeId(d), t, PlatformId(plat), &self.net).unwrap();
            r.state = crate::model::RequestState::Waiting;
            self.requests.push(r);
            id
        }

        fn add_vehicle(&mut self, at: u32, plat: u16) -> VehicleId {
            let id = VehicleId(self.vehicles.len() as u32);
            self.vehicles.push(Vehicle::new(id, PlatformId(plat), NodeId(at)));
            id
        }
    }

    fn world(rows: usize, cols: usize, edge: f64, speed: f64) -> World {
        World {
            net: make_grid(rows, cols, edge, speed).unwrap(),
            requests: Vec::new(),
            vehicles: Vec::new(),
            c: Constraints::default(),
            p: PricingScheme::default(),
        }
    }

    fn ids<T: Copy>(n: usize, f: impl Fn(u32) -> T) -> Vec<T> {
        (0..n as u32).map(f).collect()
    }

    #[test]
    fn single_request_adjacent_vehicle() {
        let mut w = world(3, 3, 100.0, 10.0);
        let r = w.add_request(1, 8, 0.0, 0);
        let v = w.add_vehicle(0, 0);
        let rv = build_rv_graph(&w.ctx(0.0), &[r], &[v]);
        assert_eq!(rv.rv_edges.iter().copied().collect::<Vec<_>>(), vec![(r, v)]);
        assert!(rv.rr_edges.is_empty());
    }

    #[test]
    fn identical_requests_are_shareable() {
        let mut w = world(3, 3, 100.0, 10.0);
        let a = w.add_request(0, 8, 0.0, 0);
        let b = w.add_request(0, 8, 0.0, 0);
        let rv = build_rv_graph(&w.ctx(0.0), &[a, b], &[]);
        assert!(rv.shareable(a, b));
    }

    #[test]
    fn far_vehicle_gets_no_edge() {
        // 3.1 km at 10 m/s is 310 s of pickup travel.
        let mut w = world(1, 33, 100.0, 10.0);
        let r = w.add_request(31, 32, 0.0, 0);
        let v = w.add_vehicle(0, 0);
        let rv = build_rv_graph(&w.ctx(0.0), &[r], &[v]);
        assert!(rv.rv_edges.is_empty());
        let near = w.add_vehicle(2, 0);
        let rv = build_rv_graph(&w.ctx(0.0), &[r], &[v, near]);
        assert_eq!(rv.rv_edges.len(), 1);
    }

    #[test]
    fn no_sharing_gives_singletons_only() {
        // Serving the two back to back takes 390 s of pickup travel either way.
        let mut w = world(1, 40, 100.0, 10.0);
        let a = w.add_request(0, 20, 0.0, 0);
        let b = w.add_request(39, 21, 0.0, 0);
        let v = w.add_vehicle(20, 0);
        let g = build_rtv_graph(&w.ctx(0.0), &[a, b], &[v]);
        assert!(g.rv.rr_edges.is_empty());
        assert!(g.trips.iter().all(|t| t.len() == 1));
        assert_eq!(g.trips.len(), 2);
    }

    #[test]
    fn three_identical_requests_give_all_sizes() {
        let mut w = world(3, 3, 100.0, 10.0);
        let rs: Vec<RequestId> = (0..3).map(|_| w.add_request(0, 8, 0.0, 0)).collect();
        let v = w.add_vehicle(0, 0);
        let g = build_rtv_graph(&w.ctx(0.0), &rs, &[v]);
        let mut sizes: Vec<usize> = g.trips.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 1, 1, 2, 2, 2, 3]);
        let full = g.edges.iter().find(|e| g.trips[e.trip].len() == 3).unwrap();
        assert_eq!(full.distance.meters(), 400.0);
        assert_eq!(full.route.len(), 6);
    }

    #[test]
    fn unreachable_pair_is_pruned() {
        let mut w = world(1, 40, 100.0, 10.0);
        let a = w.add_request(35, 39, 0.0, 0);
        let b = w.add_request(35, 39, 0.0, 0);
        let v = w.add_vehicle(0, 0);
        let g = build_rtv_graph(&w.ctx(0.0), &[a, b], &[v]);
        assert!(g.rv.shareable(a, b));
        assert!(g.edges.is_empty());
        assert!(g.trips.is_empty());
    }

    #[test]
    fn route_respects_committed_rider() {
        let mut w = world(1, 10, 100.0, 10.0);
        let a = w.add_request(0, 9, 0.0, 0);
        let v = w.add_vehicle(0, 0);
        {
            let ctx = w.ctx(0.0);
            let p = ctx.plan_for_vehicle(&w.vehicles[0], &[a]).unwrap();
            assert_eq!(p.distance.meters(), 900.0);
        }
        // Commit `a` onboard; a reverse-direction request cannot be added.
        w.requests[0].pickup_time = Some(0.0);
        w.requests[0].state = crate::model::RequestState::Onboard;
        w.vehicles[0].onboard.push(a);
        w.vehicles[0].schedule = vec![Stop { node: NodeId(9), request: a, kind: StopKind::Dropoff }];
        w.c.max_pickup_s = 100.0;
        let b = w.add_request(5, 1, 0.0, 0);
        let c = w.add_request(2, 7, 0.0, 0);
        let ctx = w.ctx(0.0);
        assert!(ctx.plan_for_vehicle(&w.vehicles[v.index()], &[b]).is_none());
        let p = ctx.plan_for_vehicle(&w.vehicles[v.index()], &[c]).unwrap();
        assert_eq!(p.distance.meters(), 900.0);
        check_route(&ctx, &w.vehicles[0], &[c], &p.stops, &p.times, p.distance).unwrap();
    }

    #[test]
    fn single_structure_keeps_graph() {
        let mut w = world(3, 3, 100.0, 10.0);
        let a = w.add_request(0, 8, 0.0, 0);
        let b = w.add_request(0, 8, 0.0, 1);
        let v0 = w.add_vehicle(0, 0);
        let v1 = w.add_vehicle(4, 1);
        let g = build_rtv_graph(&w.ctx(0.0), &[a, b], &[v0, v1]);
        let rp = |r: RequestId| Some(PlatformId(r.0 as u16));
        let vp = |v: VehicleId| Some(PlatformId(v.0 as u16));
        let single = MarketStructure::new(StructureKind::Single, 0.1).unwrap();
        assert_eq!(apply_market_structure(&g, &single, &rp, &vp).unwrap(), g);
        let seg = MarketStructure::new(StructureKind::Segmented, 0.1).unwrap();
        let s = apply_market_structure(&g, &seg, &rp, &vp).unwrap();
        assert!(s.trips.iter().all(|t| t.len() == 1));
        assert!(s.edges.iter().all(|e| e.vehicle.0 == s.trips[e.trip][0].0));
        let coop = MarketStructure::cooperative(vec![PlatformId(0), PlatformId(1)], 0.1).unwrap();
        assert_eq!(apply_market_structure(&g, &coop, &rp, &vp).unwrap(), g);
        let none = |_| None;
        assert!(matches!(apply_market_structure(&g, &seg, &none, &vp), Err(RtvError::UnmappedEntity(_))));
    }

    #[test]
    fn invalid_gamma_rejected() {
        assert_eq!(MarketStructure::new(StructureKind::Central, 1.5), Err(RtvError::InvalidGamma(1.5)));
    }

    fn random_world(seed: &[(u32, u32, u16)], vehicles: &[(u32, u16)]) -> World {
        let mut w = world(4, 4, 150.0, 8.0);
        for &(o, d, p) in seed {
            if o != d {
                w.add_request(o, d, 0.0, p);
            }
        }
        for &(at, p) in vehicles {
            w.add_vehicle(at, p);
        }
        w
    }

    fn is_sub_graph(sub: &RtvGraph, g: &RtvGraph) -> bool {
        sub.rv.rr_edges.is_subset(&g.rv.rr_edges)
            && sub.rv.rv_edges.is_subset(&g.rv.rv_edges)
            && sub.trips.iter().all(|t| g.trips.contains(t))
            && sub.edges.iter().all(|e| {
                g.edges.iter().any(|f| f.vehicle == e.vehicle && g.trips[f.trip] == sub.trips[e.trip] && f.route == e.route)
            })
    }

    fn closure_holds(g: &RtvGraph) -> bool {
        g.edges.iter().all(|e| {
            let t = &g.trips[e.trip];
            t.len() == 1
                || (0..t.len()).all(|skip| {
                    let sub: Vec<RequestId> = t.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, &r)| r).collect();
                    g.edges.iter().any(|f| f.vehicle == e.vehicle && g.trips[f.trip] == sub)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn filtering_is_subgraph_and_keeps_closure(
            reqs in prop::collection::vec((0u32..16, 0u32..16, 0u16..3), 1..8),
            vehs in prop::collection::vec((0u32..16, 0u16..3), 1..4),
            alliance in prop::collection::vec(0u16..3, 0..3),
        ) {
            let w = random_world(&reqs, &vehs);
            let ctx = w.ctx(0.0);
            let live = ids(w.requests.len(), RequestId);
            let vids = ids(w.vehicles.len(), VehicleId);
            let g = build_rtv_graph(&ctx, &live, &vids);
            prop_assert!(closure_holds(&g));
            for e in &g.edges {
                let r = check_route(&ctx, &w.vehicles[e.vehicle.index()], &g.trips[e.trip], &e.route, &e.times, e.distance);
                prop_assert!(r.is_ok(), "{:?}", r);
            }
            let rp = |r: RequestId| Some(w.requests[r.index()].platform);
            let vp = |v: VehicleId| Some(w.vehicles[v.index()].platform);
            let mut structures: Vec<MarketStructure> = StructureKind::ALL.iter().map(|&k| MarketStructure::new(k, 0.1).unwrap()).collect();
            structures.push(MarketStructure::cooperative(alliance.iter().map(|&p| PlatformId(p)).collect(), 0.1).unwrap());
            for mu in &structures {
                let s = apply_market_structure(&g, mu, &rp, &vp).unwrap();
                prop_assert!(is_sub_graph(&s, &g));
                prop_assert!(closure_holds(&s));
                // Building per group equals filtering the joint graph.
                let mut groups: BTreeSet<u32> = BTreeSet::new();
                groups.extend(w.requests.iter().map(|r| mu.group(r.platform)));
                groups.extend(w.vehicles.iter().map(|v| mu.group(v.platform)));
                let mut edges = Vec::new();
                for grp in groups {
                    let lr: Vec<RequestId> = live.iter().copied().filter(|r| mu.group(w.requests[r.index()].platform) == grp).collect();
                    let lv: Vec<VehicleId> = vids.iter().copied().filter(|v| mu.group(w.vehicles[v.index()].platform) == grp).collect();
                    let part = build_rtv_graph(&ctx, &lr, &lv);
                    edges.extend(part.edges.iter().map(|e| (part.trips[e.trip].clone(), e.vehicle, e.route.clone())));
                }
                let mut expect: Vec<_> = s.edges.iter().map(|e| (s.trips[e.trip].clone(), e.vehicle, e.route.clone())).collect();
                edges.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
                expect.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
                prop_assert_eq!(edges, expect);
            }
        }
    }
}
