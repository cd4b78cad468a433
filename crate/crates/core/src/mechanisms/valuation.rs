//! Marginal-profit valuation of a request by one platform.

use thiserror::Error;

use super::auction::AuctionError;
use crate::model::{Money, RequestId, VehicleId};
use crate::rtv::{build_rtv_graph, RtvContext};
use crate::solve::{optimal_score, AssignmentProblem, Objective, SolveError};

#[derive(Debug, Error, PartialEq)]
pub enum MechanismError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Auction(#[from] AuctionError),
}

/// Best total profit from assigning `pool` to `vehicles`.
pub fn max_profit(ctx: &RtvContext, pool: &[RequestId], vehicles: &[VehicleId]) -> Result<Money, SolveError> {
    if pool.is_empty() || vehicles.is_empty() {
        return Ok(Money::ZERO);
    }
    let graph = build_rtv_graph(ctx, pool, vehicles);
    let score = optimal_score(&AssignmentProblem { graph: &graph, objective: Objective::MaxProfit, penalty: 0.0 })?;
    Ok(Money::from_mills(-score / 10))
}

/// `max(0, max_profit(pool ∪ {r}) − base)` where `base = max_profit(pool)`.
pub fn marginal_profit(
    ctx: &RtvContext,
    pool: &[RequestId],
    base: Money,
    vehicles: &[VehicleId],
    request: RequestId,
) -> Result<Money, SolveError> {
    if pool.contains(&request) {
        return Ok(Money::ZERO);
    }
    let reachable = vehicles.iter().any(|&v| ctx.plan_for_vehicle(&ctx.vehicles[v.index()], &[request]).is_some());
    if !reachable {
        return Ok(Money::ZERO);
    }
    let mut with = pool.to_vec();
    with.push(request);
    Ok((max_profit(ctx, &with, vehicles)? - base).max(Money::ZERO))
}

/// The platform's valuation of `request` given its current pool and fleet.
pub fn platform_valuation(
    ctx: &RtvContext,
    pool: &[RequestId],
    vehicles: &[VehicleId],
    request: RequestId,
) -> Result<Money, SolveError> {
    let base = max_profit(ctx, pool, vehicles)?;
    marginal_profit(ctx, pool, base, vehicles, request)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StopKind;
    use crate::network::METERS_PER_MILE;
    use crate::testkit::World;

    /// 1×3 line of 1-mile edges driven at 2 miles per 10 minutes.
    fn line() -> World {
        World::grid(1, 3, METERS_PER_MILE, 2.0 * METERS_PER_MILE / 600.0)
    }

    #[test]
    fn lone_vehicle_at_origin_values_trip_profit() {
        let mut w = line();
        let r = w.request(0, 2, 0.0, 0);
        let v = w.vehicle(0, 0);
        let val = platform_valuation(&w.ctx(0.0), &[], &[v], r).unwrap();
        assert_eq!(val, Money::from_mills(1672));
    }

    #[test]
    fn unreachable_is_worth_nothing() {
        let mut w = line();
        w.c.max_pickup_s = 10.0;
        let r = w.request(0, 1, 0.0, 0);
        let v = w.vehicle(2, 0);
        assert_eq!(platform_valuation(&w.ctx(0.0), &[], &[v], r).unwrap(), Money::ZERO);
        assert_eq!(platform_valuation(&w.ctx(0.0), &[], &[], r).unwrap(), Money::ZERO);
    }

    #[test]
    fn full_vehicle_values_nothing() {
        let mut w = line();
        let v = w.vehicle(0, 0);
        for _ in 0..4 {
            let r = w.request(0, 2, 0.0, 0);
            w.requests[r.index()].state = crate::model::RequestState::Onboard;
            w.requests[r.index()].pickup_time = Some(0.0);
            w.vehicles[v.index()].onboard.push(r);
            w.vehicles[v.index()].schedule.push(crate::model::Stop { node: crate::network::NodeId(2), request: r, kind: StopKind::Dropoff });
        }
        let r = w.request(0, 2, 0.0, 0);
        assert_eq!(platform_valuation(&w.ctx(0.0), &[], &[v], r).unwrap(), Money::ZERO);
    }

    #[test]
    fn pool_member_has_no_marginal_value() {
        let mut w = line();
        let r = w.request(0, 2, 0.0, 0);
        let v = w.vehicle(0, 0);
        assert_eq!(platform_valuation(&w.ctx(0.0), &[r], &[v], r).unwrap(), Money::ZERO);
    }

    #[test]
    fn pool_member_changes_value_through_sharing() {
        let mut w = line();
        w.c.max_detour = 1.0;
        let a = w.request(0, 1, 0.0, 0);
        let b = w.request(0, 2, 0.0, 0);
        let v = w.vehicle(0, 0);
        let ctx = w.ctx(0.0);
        assert_eq!(platform_valuation(&ctx, &[], &[v], b).unwrap(), Money::from_mills(1672));
        // Shared fares 7.84 + 7.84 less 2 miles of pay, minus a's solo profit 4.061.
        assert_eq!(platform_valuation(&ctx, &[a], &[v], b).unwrap(), Money::from_mills(3741));
    }
}
