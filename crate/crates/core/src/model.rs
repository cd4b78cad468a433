//! Domain types shared by every layer: identifiers, money, requests,
//! vehicles, trips and the fare/driver-pay schedule.

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::network::{Distance, NodeId, RoadNetwork, METERS_PER_MILE};

/// Seats per vehicle.
pub const VEHICLE_CAPACITY: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlatformId(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl RequestId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl VehicleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PlatformId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// Fixed-point money in mills (thousandths of a dollar, i.e. tenths of a cent).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_mills(mills: i64) -> Self {
        Money(mills)
    }

    pub fn from_dollars(dollars: f64) -> Self {
        Money((dollars * 1000.0).round() as i64)
    }

    pub fn mills(self) -> i64 {
        self.0
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// `rate × self`, rounded to the nearest mill.
    pub fn scale(self, rate: f64) -> Money {
        Money((self.0 as f64 * rate).round() as i64)
    }

    pub fn max(self, other: Money) -> Money {
        Money(self.0.max(other.0))
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    /// Four decimal places, e.g. `-1.6720`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:03}0", abs / 1000, abs % 1000)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.dollars())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !v.is_finite() {
            return Err(serde::de::Error::custom("money must be finite"));
        }
        Ok(Money::from_dollars(v))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PricingError {
    #[error("distance and duration must be non-negative (got {distance_m} m, {duration_s} s)")]
    NegativeInput { distance_m: f64, duration_s: f64 },
    #[error("pricing field `{0}` must be non-negative")]
    NegativeRate(&'static str),
}

/// Fare and driver-pay schedule. Every field is a dollar amount held in mills.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricingScheme {
    pub ded_base: Money,
    pub ded_per_mile: Money,
    pub ded_per_min: Money,
    pub ded_min_fare: Money,
    pub shr_base: Money,
    pub shr_per_mile: Money,
    pub shr_per_min: Money,
    pub shr_min_fare: Money,
    pub pay_per_mile: Money,
    pub pay_per_min: Money,
}

impl Default for PricingScheme {
    fn default() -> Self {
        PricingScheme {
            ded_base: Money(2550),
            ded_per_mile: Money(1750),
            ded_per_min: Money(350),
            ded_min_fare: Money(8000),
            shr_base: Money(1220),
            shr_per_mile: Money(810),
            shr_per_min: Money(260),
            shr_min_fare: Money(7840),
            pay_per_mile: Money(1429),
            pay_per_min: Money(502),
        }
    }
}

impl PricingScheme {
    pub fn validate(&self) -> Result<(), PricingError> {
        let fields = [
            ("ded_base", self.ded_base),
            ("ded_per_mile", self.ded_per_mile),
            ("ded_per_min", self.ded_per_min),
            ("ded_min_fare", self.ded_min_fare),
            ("shr_base", self.shr_base),
            ("shr_per_mile", self.shr_per_mile),
            ("shr_per_min", self.shr_per_min),
            ("shr_min_fare", self.shr_min_fare),
            ("pay_per_mile", self.pay_per_mile),
            ("pay_per_min", self.pay_per_min),
        ];
        match fields.iter().find(|(_, m)| m.0 < 0) {
            Some((name, _)) => Err(PricingError::NegativeRate(name)),
            None => Ok(()),
        }
    }

    pub fn dedicated_fare(&self, distance_m: f64, duration_s: f64) -> Result<Money, PricingError> {
        let raw = linear(self.ded_base, self.ded_per_mile, self.ded_per_min, distance_m, duration_s)?;
        Ok(raw.max(self.ded_min_fare))
    }

    /// Shared-ride fare, charged on the rider's direct distance and duration.
    pub fn shared_fare(&self, distance_m: f64, duration_s: f64) -> Result<Money, PricingError> {
        let raw = linear(self.shr_base, self.shr_per_mile, self.shr_per_min, distance_m, duration_s)?;
        Ok(raw.max(self.shr_min_fare))
    }

    /// Driver earnings for moving `distance_m` metres over `duration_s`
    /// seconds, deadhead included. No minimum.
    pub fn driver_pay(&self, distance_m: f64, duration_s: f64) -> Result<Money, PricingError> {
        linear(Money::ZERO, self.pay_per_mile, self.pay_per_min, distance_m, duration_s)
    }

    /// Fare for one rider of a trip carrying `trip_size` requests.
    pub fn rider_fare(&self, trip_size: usize, request: &Request) -> Money {
        let (d, t) = (request.direct_distance.meters(), request.direct_duration_s);
        let fare = if trip_size >= 2 { self.shared_fare(d, t) } else { self.dedicated_fare(d, t) };
        fare.expect("direct distance and duration are non-negative")
    }

    /// Pay for a route of `distance`, driven at the network speed.
    pub fn route_pay(&self, distance: Distance, net: &RoadNetwork) -> Money {
        self.driver_pay(distance.meters(), net.travel_time(distance))
            .expect("distances are non-negative")
    }
}

fn linear(
    base: Money,
    per_mile: Money,
    per_min: Money,
    distance_m: f64,
    duration_s: f64,
) -> Result<Money, PricingError> {
    if !(distance_m >= 0.0 && duration_s >= 0.0) {
        return Err(PricingError::NegativeInput { distance_m, duration_s });
    }
    let miles = distance_m / METERS_PER_MILE;
    let minutes = duration_s / 60.0;
    let mills = base.0 as f64 + per_mile.0 as f64 * miles + per_min.0 as f64 * minutes;
    Ok(Money(mills.round() as i64))
}

/// Matching and service-quality limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    /// Maximum ride time as a multiple of the direct travel time.
    pub max_detour: f64,
    pub max_wait_s: f64,
    pub max_pickup_s: f64,
    /// Cost of leaving one request unserved, in objective units.
    pub penalty: f64,
    /// Price-of-information rate.
    pub gamma: f64,
    pub epoch_s: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            max_detour: 1.25,
            max_wait_s: 300.0,
            max_pickup_s: 300.0,
            penalty: 10.0,
            gamma: 0.1,
            epoch_s: 30.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestState {
    /// Known to the scenario but not yet admitted.
    Pending,
    Waiting,
    Assigned,
    Onboard,
    Served,
    Expired,
}

impl RequestState {
    pub fn can_become(self, next: RequestState) -> bool {
        use RequestState::*;
        matches!(
            (self, next),
            (Pending, Waiting)
                | (Waiting, Assigned)
                | (Waiting, Expired)
                | (Assigned, Onboard)
                | (Onboard, Served)
        )
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("request `{0}` has identical origin and destination")]
    DegenerateRequest(String),
    #[error("request `{0}`: destination unreachable from origin")]
    UnreachableRequest(String),
    #[error("request {id:?} cannot move from {from:?} to {to:?}")]
    IllegalTransition { id: RequestId, from: RequestState, to: RequestState },
}

/// One customer trip demand and its service outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub label: String,
    pub origin: NodeId,
    pub destination: NodeId,
    pub request_time: f64,
    /// Platform the customer requested through.
    pub platform: PlatformId,
    /// Platform currently responsible for the request; `None` while a broker holds it.
    pub holder: Option<PlatformId>,
    pub state: RequestState,
    pub direct_distance: Distance,
    pub direct_duration_s: f64,
    pub assigned_at: Option<f64>,
    /// Latest pickup time promised at assignment.
    pub pickup_deadline: Option<f64>,
    pub pickup_time: Option<f64>,
    pub dropoff_time: Option<f64>,
    pub fare: Option<Money>,
    pub served_by: Option<VehicleId>,
    pub traded: bool,
}

impl Request {
    pub fn new(
        id: RequestId,
        label: impl Into<String>,
        origin: NodeId,
        destination: NodeId,
        request_time: f64,
        platform: PlatformId,
        net: &RoadNetwork,
    ) -> Result<Self, ModelError> {
        let label = label.into();
        if origin == destination {
            return Err(ModelError::DegenerateRequest(label));
        }
        let direct = net
            .distance(origin, destination)
            .ok_or_else(|| ModelError::UnreachableRequest(label.clone()))?;
        Ok(Request {
            id,
            label,
            origin,
            destination,
            request_time,
            platform,
            holder: Some(platform),
            state: RequestState::Pending,
            direct_distance: direct,
            direct_duration_s: net.travel_time(direct),
            assigned_at: None,
            pickup_deadline: None,
            pickup_time: None,
            dropoff_time: None,
            fare: None,
            served_by: None,
            traded: false,
        })
    }

    pub fn transition(&mut self, next: RequestState) -> Result<(), ModelError> {
        if !self.state.can_become(next) {
            return Err(ModelError::IllegalTransition { id: self.id, from: self.state, to: next });
        }
        self.state = next;
        Ok(())
    }

    /// Longest allowed in-vehicle time.
    pub fn max_ride_s(&self, c: &Constraints) -> f64 {
        c.max_detour * self.direct_duration_s
    }

    /// Pickup deadline for a request not yet promised to any vehicle, if it
    /// were assigned at `now`.
    pub fn fresh_pickup_deadline(&self, now: f64, c: &Constraints) -> f64 {
        (self.request_time + c.max_wait_s).min(now + c.max_pickup_s)
    }

    /// Delay against an immediate, direct ride.
    pub fn delay_for(&self, dropoff_time: f64) -> f64 {
        dropoff_time - (self.request_time + self.direct_duration_s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stop {
    pub node: NodeId,
    pub request: RequestId,
    pub kind: StopKind,
}

/// A capacity-4 vehicle. Positions are always nodes: a vehicle that is part
/// way along an edge when an epoch ends finishes the edge first and becomes
/// available at its head node at `ready_time`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub platform: PlatformId,
    pub position: NodeId,
    pub ready_time: f64,
    pub schedule: Vec<Stop>,
    pub onboard: Vec<RequestId>,
    pub capacity: usize,
    pub odometer: Distance,
    /// Start time of the current plan; stop times are `plan_start + travel_time(plan_progress)`.
    pub plan_start: f64,
    pub plan_progress: Distance,
    /// Distance booked from planned legs, kept independently of the odometer.
    pub route_ledger: Distance,
    pub ledger_anchor: NodeId,
    pub served: u32,
}

impl Vehicle {
    pub fn new(id: VehicleId, platform: PlatformId, position: NodeId) -> Self {
        Vehicle {
            id,
            platform,
            position,
            ready_time: 0.0,
            schedule: Vec::new(),
            onboard: Vec::new(),
            capacity: VEHICLE_CAPACITY,
            odometer: Distance::ZERO,
            plan_start: 0.0,
            plan_progress: Distance::ZERO,
            route_ledger: Distance::ZERO,
            ledger_anchor: position,
            served: 0,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.schedule.is_empty() && self.onboard.is_empty()
    }

    /// Requests this vehicle is already committed to (onboard or awaiting pickup).
    pub fn committed(&self) -> Vec<RequestId> {
        let mut ids: Vec<RequestId> = self.onboard.clone();
        ids.extend(
            self.schedule.iter().filter(|s| s.kind == StopKind::Pickup).map(|s| s.request),
        );
        ids.sort();
        ids.dedup();
        ids
    }

    /// Checks the schedule invariants: capacity, and each request appearing
    /// as pickup-then-dropoff, or dropoff-only when already onboard.
    pub fn schedule_is_consistent(&self) -> bool {
        if self.onboard.len() > self.capacity {
            return false;
        }
        let mut load = self.onboard.len();
        let mut picked: Vec<RequestId> = Vec::new();
        let mut dropped: Vec<RequestId> = Vec::new();
        for stop in &self.schedule {
            match stop.kind {
                StopKind::Pickup => {
                    if self.onboard.contains(&stop.request) || picked.contains(&stop.request) {
                        return false;
                    }
                    picked.push(stop.request);
                    load += 1;
                    if load > self.capacity {
                        return false;
                    }
                }
                StopKind::Dropoff => {
                    let known =
                        self.onboard.contains(&stop.request) || picked.contains(&stop.request);
                    if !known || dropped.contains(&stop.request) {
                        return false;
                    }
                    dropped.push(stop.request);
                    load -= 1;
                }
            }
        }
        picked.iter().all(|r| dropped.contains(r)) && self.onboard.iter().all(|r| dropped.contains(r))
    }
}

/// A candidate set of requests served together by one vehicle, with its
/// witness route.
#[derive(Clone, Debug, PartialEq)]
pub struct Trip {
    pub requests: Vec<RequestId>,
    pub vehicle: VehicleId,
    pub route: Vec<Stop>,
    /// Full route length including the pickup leg from the vehicle's position.
    pub total_distance: Distance,
    /// Delay of each new rider, seconds.
    pub per_request_delay: Vec<(RequestId, f64)>,
}

/// Rider fares minus driver pay for the whole route.
pub fn trip_profit(
    scheme: &PricingScheme,
    trip: &Trip,
    requests: &[Request],
    net: &RoadNetwork,
) -> Result<Money, PricingError> {
    let n = trip.requests.len();
    let mut fares = Money::ZERO;
    for r in &trip.requests {
        let req = &requests[r.index()];
        let (d, t) = (req.direct_distance.meters(), req.direct_duration_s);
        fares += if n >= 2 { scheme.shared_fare(d, t)? } else { scheme.dedicated_fare(d, t)? };
    }
    let d = trip.total_distance;
    Ok(fares - scheme.driver_pay(d.meters(), net.travel_time(d))?)
}
