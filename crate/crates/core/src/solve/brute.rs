//! Exhaustive assignment enumeration, used as a test oracle.

use super::assignment::{edge_cost, finish, penalty_cost, Assignment, AssignmentProblem, SolveError};
use crate::model::{RequestId, VehicleId};

pub const MAX_REQUESTS: usize = 8;
pub const MAX_VEHICLES: usize = 5;

struct Walk<'a> {
    p: &'a AssignmentProblem<'a>,
    pen: i64,
    by_vehicle: Vec<Vec<usize>>,
    used: Vec<RequestId>,
    picked: Vec<usize>,
    /// (score, trip count, sorted edge ids)
    best: Option<(i64, usize, Vec<usize>)>,
}

impl Walk<'_> {
    fn visit(&mut self, k: usize) {
        if k == self.by_vehicle.len() {
            let g = self.p.graph;
            let cost: i64 = self.picked.iter().map(|&e| edge_cost(&g.edges[e], self.p.objective)).sum();
            let score = cost + self.pen * (g.requests.len() - self.used.len()) as i64;
            let mut ids = self.picked.clone();
            ids.sort();
            let cand = (score, ids.len(), ids);
            if self.best.as_ref().is_none_or(|b| cand < *b) {
                self.best = Some(cand);
            }
            return;
        }
        self.visit(k + 1);
        for i in 0..self.by_vehicle[k].len() {
            let e = self.by_vehicle[k][i];
            let trip = &self.p.graph.trips[self.p.graph.edges[e].trip];
            if trip.iter().any(|r| self.used.contains(r)) {
                continue;
            }
            self.used.extend(trip.iter().copied());
            self.picked.push(e);
            self.visit(k + 1);
            self.picked.pop();
            self.used.truncate(self.used.len() - trip.len());
        }
    }
}

/// Tries every combination of at most one edge per vehicle.
pub fn brute_force_assignment(p: &AssignmentProblem) -> Result<Assignment, SolveError> {
    let g = p.graph;
    if g.requests.len() > MAX_REQUESTS || g.vehicles.len() > MAX_VEHICLES {
        return Err(SolveError::TooLarge { requests: g.requests.len(), vehicles: g.vehicles.len() });
    }
    let pen = penalty_cost(p)?;
    let mut vehicles: Vec<VehicleId> = g.vehicles.clone();
    vehicles.extend(g.edges.iter().map(|e| e.vehicle));
    vehicles.sort();
    vehicles.dedup();
    let by_vehicle = vehicles
        .iter()
        .map(|v| (0..g.edges.len()).filter(|&e| g.edges[e].vehicle == *v).collect())
        .collect();
    let mut walk = Walk { p, pen, by_vehicle, used: Vec::new(), picked: Vec::new(), best: None };
    walk.visit(0);
    let (_, _, chosen) = walk.best.expect("the empty assignment is always visited");
    Ok(finish(p, chosen, pen))
}
