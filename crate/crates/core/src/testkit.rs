//! Small hand-built worlds shared by unit tests.

use crate::model::{Constraints, PlatformId, PricingScheme, Request, RequestId, RequestState, Vehicle, VehicleId};
use crate::network::{make_grid, NodeId, RoadNetwork};
use crate::rtv::{build_rtv_graph, RtvContext, RtvGraph};

pub struct World {
    pub net: RoadNetwork,
    pub requests: Vec<Request>,
    pub vehicles: Vec<Vehicle>,
    pub c: Constraints,
    pub p: PricingScheme,
}

impl World {
    pub fn grid(rows: usize, cols: usize, edge: f64, speed: f64) -> World {
        World {
            net: make_grid(rows, cols, edge, speed).unwrap(),
            requests: Vec::new(),
            vehicles: Vec::new(),
            c: Constraints::default(),
            p: PricingScheme::default(),
        }
    }

    pub fn ctx(&self, now: f64) -> RtvContext<'_> {
        RtvContext {
            net: &self.net,
            requests: &self.requests,
            vehicles: &self.vehicles,
            constraints: &self.c,
            pricing: &self.p,
            now,
        }
    }

    pub fn request(&mut self, o: u32, d: u32, t: f64, plat: u16) -> RequestId {
        let id = RequestId(self.requests.len() as u32);
        let mut r = Request::new(id, format!("r{}", id.0), NodeId(o), NodeId(d), t, PlatformId(plat), &self.net).unwrap();
        r.state = RequestState::Waiting;
        self.requests.push(r);
        id
    }

    pub fn vehicle(&mut self, at: u32, plat: u16) -> VehicleId {
        let id = VehicleId(self.vehicles.len() as u32);
        self.vehicles.push(Vehicle::new(id, PlatformId(plat), NodeId(at)));
        id
    }

    pub fn live(&self) -> Vec<RequestId> {
        self.requests.iter().filter(|r| r.state == RequestState::Waiting).map(|r| r.id).collect()
    }

    pub fn fleet(&self) -> Vec<VehicleId> {
        self.vehicles.iter().map(|v| v.id).collect()
    }

    pub fn graph(&self, now: f64) -> RtvGraph {
        build_rtv_graph(&self.ctx(now), &self.live(), &self.fleet())
    }
}
