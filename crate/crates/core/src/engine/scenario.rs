//! Fully resolved simulation input.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Constraints, PlatformId, PricingError, PricingScheme};
use crate::network::{make_grid, NetworkError, NodeId, RoadNetwork};
use crate::rtv::{MarketStructure, StructureKind};
use crate::solve::Objective;

/// Named random substreams derived from the scenario seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Placement = 1,
    DemandSplit = 2,
    AuctionOrder = 3,
    TradingOrder = 4,
    /// Synthetic demand for generated scenarios.
    Demand = 5,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Uniform random start nodes for each platform's fleet.
pub fn place_vehicles(net: &RoadNetwork, fleet: &[usize], seed: u64) -> Vec<Vec<NodeId>> {
    let mut rng = rng_for(seed, Stream::Placement);
    let n = net.node_count() as u32;
    fleet.iter().map(|&k| (0..k).map(|_| NodeId(rng.random_range(0..n))).collect()).collect()
}

/// Equal split of `count` requests over `platforms`: round-robin over a seeded shuffle.
pub fn split_demand(count: usize, platforms: usize, seed: u64) -> Vec<PlatformId> {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut rng_for(seed, Stream::DemandSplit));
    let mut out = vec![PlatformId(0); count];
    for (k, &i) in order.iter().enumerate() {
        out[i] = PlatformId((k % platforms.max(1)) as u16);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlatformSpec {
    pub label: String,
    pub vehicles: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RequestSpec {
    pub label: String,
    pub origin: NodeId,
    pub destination: NodeId,
    pub request_time: f64,
    pub platform: PlatformId,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario needs at least one platform")]
    NoPlatforms,
    #[error("constraint `{0}` is out of range")]
    InvalidConstraint(&'static str),
    #[error("horizon {horizon} s precedes request `{request}` at {time} s")]
    HorizonTooShort { horizon: f64, request: String, time: f64 },
    #[error("request `{0}` references a node outside the network")]
    UnknownNode(String),
    #[error("request `{0}` has identical origin and destination")]
    DegenerateRequest(String),
    #[error("request `{request}` names platform #{platform}, which does not exist")]
    UnknownPlatform { request: String, platform: u16 },
    #[error("destination of request `{0}` is unreachable")]
    Unreachable(String),
    #[error("alliance member #{0} is not a platform")]
    UnknownAllianceMember(u16),
    #[error("request time of `{0}` must be finite and non-negative")]
    InvalidRequestTime(String),
    #[error(transparent)]
    Pricing(#[from] PricingError),
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub network: Arc<RoadNetwork>,
    pub requests: Vec<RequestSpec>,
    pub platforms: Vec<PlatformSpec>,
    pub pricing: PricingScheme,
    pub structure: MarketStructure,
    pub constraints: Constraints,
    pub seed: u64,
    pub horizon: f64,
    pub objective: Objective,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.platforms.is_empty() {
            return Err(ScenarioError::NoPlatforms);
        }
        let c = &self.constraints;
        let checks: [(&'static str, bool); 6] = [
            ("chi", c.max_detour.is_finite() && c.max_detour >= 1.0),
            ("max_wait_s", c.max_wait_s.is_finite() && c.max_wait_s >= 0.0),
            ("max_pickup_s", c.max_pickup_s.is_finite() && c.max_pickup_s >= 0.0),
            ("penalty", c.penalty.is_finite() && c.penalty >= 0.0),
            ("gamma", (0.0..=1.0).contains(&c.gamma)),
            ("delta_s", c.epoch_s.is_finite() && c.epoch_s > 0.0),
        ];
        if let Some((name, _)) = checks.iter().find(|(_, ok)| !ok) {
            return Err(ScenarioError::InvalidConstraint(name));
        }
        if !(0.0..=1.0).contains(&self.structure.gamma) {
            return Err(ScenarioError::InvalidConstraint("gamma"));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(ScenarioError::InvalidConstraint("horizon"));
        }
        self.pricing.validate()?;
        let n = self.network.node_count();
        for p in &self.platforms {
            if p.vehicles.iter().any(|v| v.index() >= n) {
                return Err(ScenarioError::UnknownNode(format!("vehicle of {}", p.label)));
            }
        }
        if self.structure.kind == StructureKind::Cooperative {
            if let Some(m) = self.structure.alliance.iter().find(|m| m.0 as usize >= self.platforms.len()) {
                return Err(ScenarioError::UnknownAllianceMember(m.0));
            }
        }
        for r in &self.requests {
            if r.origin.index() >= n || r.destination.index() >= n {
                return Err(ScenarioError::UnknownNode(r.label.clone()));
            }
            if r.origin == r.destination {
                return Err(ScenarioError::DegenerateRequest(r.label.clone()));
            }
            if r.platform.0 as usize >= self.platforms.len() {
                return Err(ScenarioError::UnknownPlatform { request: r.label.clone(), platform: r.platform.0 });
            }
            if !(r.request_time.is_finite() && r.request_time >= 0.0) {
                return Err(ScenarioError::InvalidRequestTime(r.label.clone()));
            }
            if r.request_time > self.horizon {
                return Err(ScenarioError::HorizonTooShort {
                    horizon: self.horizon,
                    request: r.label.clone(),
                    time: r.request_time,
                });
            }
            if self.network.distance(r.origin, r.destination).is_none() {
                return Err(ScenarioError::Unreachable(r.label.clone()));
            }
        }
        Ok(())
    }

    pub fn platform_ids(&self) -> Vec<PlatformId> {
        (0..self.platforms.len() as u16).map(PlatformId).collect()
    }

    pub fn with_structure(&self, structure: MarketStructure) -> Scenario {
        Scenario { structure, ..self.clone() }
    }

    /// The coalition operating alone as one pooled platform: other platforms
    /// lose their vehicles and requests. Platform ids and vehicle placements
    /// are kept so runs stay comparable.
    pub fn restrict(&self, coalition: &[PlatformId]) -> Scenario {
        let platforms = self
            .platforms
            .iter()
            .enumerate()
            .map(|(i, p)| PlatformSpec {
                label: p.label.clone(),
                vehicles: if coalition.contains(&PlatformId(i as u16)) { p.vehicles.clone() } else { Vec::new() },
            })
            .collect();
        Scenario {
            requests: self.requests.iter().filter(|r| coalition.contains(&r.platform)).cloned().collect(),
            platforms,
            structure: MarketStructure { kind: StructureKind::Single, alliance: Vec::new(), gamma: self.structure.gamma },
            ..self.clone()
        }
    }

    /// Human-readable structure label, naming a partial alliance.
    pub fn structure_label(&self) -> String {
        let s = &self.structure;
        if s.kind == StructureKind::Cooperative && s.alliance.len() < self.platforms.len() {
            let names: Vec<&str> = s.alliance.iter().map(|p| self.platforms[p.0 as usize].label.as_str()).collect();
            format!("cooperative[{}]", names.join("+"))
        } else {
            s.kind.name().to_string()
        }
    }
}

/// Square-lattice network parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub edge_m: f64,
    pub speed_mps: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<RoadNetwork, NetworkError> {
        make_grid(self.rows, self.cols, self.edge_m, self.speed_mps)
    }
}

/// Recipe for a synthetic scenario: uniform origins, destinations and
/// request times, equal demand split, uniform vehicle placement.
#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub name: String,
    pub grid: GridSpec,
    pub requests: usize,
    pub duration_s: f64,
    /// Vehicles per platform.
    pub fleet: Vec<usize>,
    pub seed: u64,
    pub structure: MarketStructure,
    pub objective: Objective,
}

pub fn generate(spec: &GenSpec) -> Result<Scenario, GenerateError> {
    let net = spec.grid.build()?;
    let n = net.node_count() as u32;
    if n < 2 {
        return Err(GenerateError::TooSmall);
    }
    if spec.fleet.is_empty() {
        return Err(ScenarioError::NoPlatforms.into());
    }
    let mut rng = rng_for(spec.seed, Stream::Demand);
    let mut demand: Vec<(f64, NodeId, NodeId)> = (0..spec.requests)
        .map(|_| {
            let t = rng.random_range(0.0..spec.duration_s.max(1.0)).floor();
            let o = rng.random_range(0..n);
            let d = (o + rng.random_range(1..n)) % n;
            (t, NodeId(o), NodeId(d))
        })
        .collect();
    demand.sort_by(|a, b| a.0.total_cmp(&b.0));
    let owners = split_demand(spec.requests, spec.fleet.len(), spec.seed);
    let requests = demand
        .into_iter()
        .zip(owners)
        .enumerate()
        .map(|(i, ((t, o, d), p))| RequestSpec { label: format!("r{i}"), origin: o, destination: d, request_time: t, platform: p })
        .collect();
    let platforms = place_vehicles(&net, &spec.fleet, spec.seed)
        .into_iter()
        .enumerate()
        .map(|(i, vehicles)| PlatformSpec { label: format!("P{}", i + 1), vehicles })
        .collect();
    let sc = Scenario {
        name: spec.name.clone(),
        network: Arc::new(net),
        requests,
        platforms,
        pricing: PricingScheme::default(),
        structure: spec.structure.clone(),
        constraints: Constraints { gamma: spec.structure.gamma, ..Constraints::default() },
        seed: spec.seed,
        horizon: spec.duration_s.max(0.0),
        objective: spec.objective,
    };
    sc.validate()?;
    Ok(sc)
}

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("grid needs at least two nodes")]
    TooSmall,
}
