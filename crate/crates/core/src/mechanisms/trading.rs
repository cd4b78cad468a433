//! Request trading between platforms: pairwise bilateral rounds and a
//! central broker that matches pooled leftovers to idle vehicles.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::valuation::{marginal_profit, max_profit, MechanismError};
use crate::model::{Money, PlatformId, RequestId, VehicleId};
use crate::rtv::{build_rtv_graph, RtvContext, RtvGraph};
use crate::solve::{solve_assignment, Assignment, AssignmentProblem, Objective};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub epoch: u64,
    pub request: RequestId,
    pub seller: PlatformId,
    pub buyer: PlatformId,
    pub info_price: Money,
}

/// Splits `total` mills in proportion to `weights` by largest remainder.
/// Ties in remainder go to the earlier position; all-zero weights split equally.
pub fn split_largest_remainder(total: i64, weights: &[i64]) -> Vec<i64> {
    if weights.is_empty() {
        return Vec::new();
    }
    let w: Vec<i128> = if weights.iter().all(|&x| x <= 0) {
        vec![1; weights.len()]
    } else {
        weights.iter().map(|&x| x.max(0) as i128).collect()
    };
    let sum: i128 = w.iter().sum();
    let t = total as i128;
    let mut shares: Vec<i128> = w.iter().map(|&x| (t * x).div_euclid(sum)).collect();
    let mut rest = t - shares.iter().sum::<i128>();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| (t * w[b]).rem_euclid(sum).cmp(&(t * w[a]).rem_euclid(sum)).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        shares[i] += 1;
        rest -= 1;
    }
    shares.into_iter().map(|x| x as i64).collect()
}

/// One bilateral round. `pools[p]` holds platform `p`'s unmatched requests
/// and `fleets[p]` all of its vehicles; requests in `locked` were traded
/// before and stay put. Platform pairs, then the requests of each pair, are
/// visited in `rng` order. A request moves to the other platform of the pair
/// when that platform's marginal profit `p` is positive, at price `gamma * p`.
#[allow(clippy::too_many_arguments)]
pub fn bilateral_trading_round<R: Rng>(
    ctx: &RtvContext,
    pools: &[Vec<RequestId>],
    fleets: &[Vec<VehicleId>],
    locked: &BTreeSet<RequestId>,
    gamma: f64,
    rng: &mut R,
    epoch: u64,
) -> Result<Vec<TradeRecord>, MechanismError> {
    let n = pools.len();
    let mut pools: Vec<Vec<RequestId>> = pools.to_vec();
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs.shuffle(rng);
    let mut traded: BTreeSet<RequestId> = BTreeSet::new();
    let mut trades = Vec::new();
    for (i, j) in pairs {
        let mut candidates: Vec<RequestId> =
            pools[i].iter().chain(&pools[j]).copied().filter(|r| !locked.contains(r) && !traded.contains(r)).collect();
        candidates.sort();
        candidates.shuffle(rng);
        let mut base: [Option<Money>; 2] = [None, None];
        for r in candidates {
            let (seller, buyer, slot) = if pools[i].contains(&r) { (i, j, 1) } else { (j, i, 0) };
            let b = match base[slot] {
                Some(b) => b,
                None => *base[slot].insert(max_profit(ctx, &pools[buyer], &fleets[buyer])?),
            };
            let p = marginal_profit(ctx, &pools[buyer], b, &fleets[buyer], r)?;
            if !p.is_positive() {
                continue;
            }
            pools[seller].retain(|&x| x != r);
            pools[buyer].push(r);
            base = [None, None];
            traded.insert(r);
            trades.push(TradeRecord {
                epoch,
                request: r,
                seller: PlatformId(seller as u16),
                buyer: PlatformId(buyer as u16),
                info_price: p.scale(gamma),
            });
        }
    }
    Ok(trades)
}

#[derive(Clone, Debug)]
pub struct CentralOutcome {
    pub graph: RtvGraph,
    pub assignment: Assignment,
    pub trades: Vec<TradeRecord>,
}

/// Central trading: one profit-maximising assignment of all unmatched
/// requests to all idle vehicles. A request served by another platform's
/// vehicle is bought by that platform; the buyer pays `gamma` times the trip
/// profit, split over the trip's riders in proportion to what each would
/// earn served alone on the same vehicle. Shares of the buyer's own riders
/// are not paid.
pub fn central_trading_epoch(
    ctx: &RtvContext,
    unsatisfied: &[RequestId],
    idle: &[VehicleId],
    gamma: f64,
    epoch: u64,
) -> Result<CentralOutcome, MechanismError> {
    let graph = build_rtv_graph(ctx, unsatisfied, idle);
    let assignment = solve_assignment(&AssignmentProblem { graph: &graph, objective: Objective::MaxProfit, penalty: 0.0 })?;
    let mut trades = Vec::new();
    for &e in &assignment.chosen {
        let edge = &graph.edges[e];
        let vehicle = &ctx.vehicles[edge.vehicle.index()];
        let buyer = vehicle.platform;
        let riders = graph.trip_requests(edge);
        if riders.iter().all(|r| ctx.requests[r.index()].holder == Some(buyer)) {
            continue;
        }
        let standalone: Vec<i64> = riders
            .iter()
            .map(|&r| {
                let req = &ctx.requests[r.index()];
                let solo = ctx.plan_for_vehicle(vehicle, &[r]).map_or(Money::ZERO, |p| {
                    let base = graph.baselines.get(&edge.vehicle).map_or(p.distance, |b| b.distance);
                    ctx.pricing.rider_fare(1, req) - ctx.pricing.route_pay(p.distance.saturating_sub(base), ctx.net)
                });
                solo.mills().max(0)
            })
            .collect();
        let total = edge.profit.max(Money::ZERO).scale(gamma).mills();
        let shares = split_largest_remainder(total, &standalone);
        for (k, &r) in riders.iter().enumerate() {
            let Some(seller) = ctx.requests[r.index()].holder.filter(|&h| h != buyer) else { continue };
            trades.push(TradeRecord { epoch, request: r, seller, buyer, info_price: Money::from_mills(shares[k]) });
        }
    }
    Ok(CentralOutcome { graph, assignment, trades })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::World;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn proportional_split_examples() {
        assert_eq!(split_largest_remainder(300, &[2000, 1000]), vec![200, 100]);
        assert_eq!(split_largest_remainder(10, &[1, 1, 1]), vec![4, 3, 3]);
        assert_eq!(split_largest_remainder(7, &[0, 0]), vec![4, 3]);
        assert_eq!(split_largest_remainder(5, &[-3, 1]), vec![0, 5]);
        assert!(split_largest_remainder(5, &[]).is_empty());
    }

    proptest! {
        #[test]
        fn split_is_exact_and_near_proportional(total in 0i64..1_000_000, w in prop::collection::vec(0i64..100_000, 1..6)) {
            let s = split_largest_remainder(total, &w);
            prop_assert_eq!(s.iter().sum::<i64>(), total);
            let sum: i64 = w.iter().sum();
            for (k, &x) in s.iter().enumerate() {
                let exact = if sum == 0 { total as f64 / w.len() as f64 } else { total as f64 * w[k] as f64 / sum as f64 };
                prop_assert!((x as f64 - exact).abs() < 1.0 + 1e-9);
            }
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Platform 0 holds a request only platform 1's vehicle can reach.
    fn stranded() -> (World, RequestId, VehicleId, VehicleId) {
        let mut w = World::grid(1, 8, 1000.0, 10.0);
        let r = w.request(1, 5, 0.0, 0);
        let v0 = w.vehicle(7, 0);
        let v1 = w.vehicle(1, 1);
        (w, r, v0, v1)
    }

    #[test]
    fn central_single_trade_pays_gamma_profit() {
        let (w, r, v0, v1) = stranded();
        let out = central_trading_epoch(&w.ctx(0.0), &[r], &[v0, v1], 0.1, 3).unwrap();
        assert_eq!(out.assignment.chosen.len(), 1);
        let edge = &out.graph.edges[out.assignment.chosen[0]];
        assert_eq!(edge.vehicle, v1);
        assert!(edge.profit.is_positive());
        assert_eq!(
            out.trades,
            vec![TradeRecord { epoch: 3, request: r, seller: PlatformId(0), buyer: PlatformId(1), info_price: edge.profit.scale(0.1) }]
        );
    }

    #[test]
    fn central_without_idle_vehicles_trades_nothing() {
        let (w, r, _, _) = stranded();
        let out = central_trading_epoch(&w.ctx(0.0), &[r], &[], 0.1, 0).unwrap();
        assert!(out.trades.is_empty());
        assert!(out.assignment.chosen.is_empty());
    }

    #[test]
    fn central_own_request_is_not_a_trade() {
        let (w, r, v0, _) = stranded();
        let mut w = w;
        w.requests[r.index()].holder = Some(PlatformId(1));
        w.requests[r.index()].platform = PlatformId(1);
        let out = central_trading_epoch(&w.ctx(0.0), &[r], &[v0, VehicleId(1)], 0.1, 0).unwrap();
        assert_eq!(out.assignment.chosen.len(), 1);
        assert!(out.trades.is_empty());
    }

    #[test]
    fn central_pooled_trip_splits_by_standalone_profit() {
        // Platform 2's vehicle pools a request of platform 0 and one of platform 1.
        let mut w = World::grid(1, 8, 1000.0, 10.0);
        w.c.max_detour = 2.0;
        let a = w.request(1, 6, 0.0, 0);
        let b = w.request(1, 4, 0.0, 1);
        let v = w.vehicle(1, 2);
        let ctx = w.ctx(0.0);
        let out = central_trading_epoch(&ctx, &[a, b], &[v], 0.1, 0).unwrap();
        assert_eq!(out.assignment.chosen.len(), 1);
        let edge = &out.graph.edges[out.assignment.chosen[0]];
        assert_eq!(out.graph.trip_requests(edge), &[a, b]);
        let solo = |r: RequestId| {
            let p = ctx.plan_for_vehicle(&w.vehicles[0], &[r]).unwrap();
            (ctx.pricing.rider_fare(1, &w.requests[r.index()]) - ctx.pricing.route_pay(p.distance, &w.net)).mills().max(0)
        };
        let expect = split_largest_remainder(edge.profit.scale(0.1).mills(), &[solo(a), solo(b)]);
        let paid: Vec<(PlatformId, i64)> = out.trades.iter().map(|t| (t.seller, t.info_price.mills())).collect();
        assert_eq!(paid, vec![(PlatformId(0), expect[0]), (PlatformId(1), expect[1])]);
        assert!(out.trades.iter().all(|t| t.buyer == PlatformId(2)));
        assert_eq!(paid.iter().map(|p| p.1).sum::<i64>(), edge.profit.scale(0.1).mills());
    }

    #[test]
    fn bilateral_minimal_trade() {
        let (w, r, v0, v1) = stranded();
        let ctx = w.ctx(0.0);
        let p = crate::mechanisms::platform_valuation(&ctx, &[], &[v1], r).unwrap();
        let trades =
            bilateral_trading_round(&ctx, &[vec![r], vec![]], &[vec![v0], vec![v1]], &BTreeSet::new(), 0.1, &mut rng(0), 4).unwrap();
        assert_eq!(
            trades,
            vec![TradeRecord { epoch: 4, request: r, seller: PlatformId(0), buyer: PlatformId(1), info_price: p.scale(0.1) }]
        );
    }

    #[test]
    fn bilateral_skips_unprofitable_and_locked() {
        let (mut w, r, v0, v1) = stranded();
        w.vehicles[v1.index()].position = crate::network::NodeId(7);
        let ctx = w.ctx(0.0);
        let trades = bilateral_trading_round(&ctx, &[vec![r], vec![]], &[vec![v0], vec![v1]], &BTreeSet::new(), 0.1, &mut rng(0), 0);
        assert!(trades.unwrap().is_empty());
        let (w, r, v0, v1) = stranded();
        let locked: BTreeSet<RequestId> = [r].into();
        let trades = bilateral_trading_round(&w.ctx(0.0), &[vec![r], vec![]], &[vec![v0], vec![v1]], &locked, 0.1, &mut rng(0), 0);
        assert!(trades.unwrap().is_empty());
    }

    #[test]
    fn bilateral_order_follows_seed() {
        // Platforms 1 and 2 can both serve platform 0's request; the pair
        // drawn first gets it.
        let mut w = World::grid(1, 8, 1000.0, 10.0);
        let r = w.request(3, 6, 0.0, 0);
        let v0 = w.vehicle(0, 0);
        w.c.max_pickup_s = 150.0;
        let v1 = w.vehicle(3, 1);
        let v2 = w.vehicle(3, 2);
        let ctx = w.ctx(0.0);
        let pools = vec![vec![r], vec![], vec![]];
        let fleets = vec![vec![v0], vec![v1], vec![v2]];
        let mut buyers = BTreeSet::new();
        for seed in 0..16 {
            let a = bilateral_trading_round(&ctx, &pools, &fleets, &BTreeSet::new(), 0.1, &mut rng(seed), 0).unwrap();
            let b = bilateral_trading_round(&ctx, &pools, &fleets, &BTreeSet::new(), 0.1, &mut rng(seed), 0).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 1);
            buyers.insert(a[0].buyer);
        }
        assert_eq!(buyers.len(), 2);
    }

    #[test]
    fn request_is_traded_at_most_once_per_round() {
        let mut w = World::grid(1, 8, 1000.0, 10.0);
        let r = w.request(3, 6, 0.0, 0);
        let v1 = w.vehicle(3, 1);
        let v2 = w.vehicle(3, 2);
        let ctx = w.ctx(0.0);
        for seed in 0..8 {
            let t = bilateral_trading_round(&ctx, &[vec![r], vec![], vec![]], &[vec![], vec![v1], vec![v2]], &BTreeSet::new(), 0.1, &mut rng(seed), 0).unwrap();
            assert_eq!(t.len(), 1);
        }
    }
}
