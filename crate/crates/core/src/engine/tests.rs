use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::model::{Constraints, PricingScheme, StopKind};
use crate::network::{make_grid, NodeId};
use crate::rtv::MarketStructure;
use crate::solve::Objective;

fn line_scenario(cols: usize, edge: f64, speed: f64, kind: StructureKind) -> Scenario {
    Scenario {
        name: "t".into(),
        network: Arc::new(make_grid(1, cols, edge, speed).unwrap()),
        requests: Vec::new(),
        platforms: vec![PlatformSpec { label: "A".into(), vehicles: vec![] }, PlatformSpec { label: "B".into(), vehicles: vec![] }],
        pricing: PricingScheme::default(),
        structure: MarketStructure::new(kind, 0.1).unwrap(),
        constraints: Constraints::default(),
        seed: 1,
        horizon: 0.0,
        objective: Objective::MinVmtPenalty,
    }
}

fn req(o: u32, d: u32, t: f64, p: u16) -> RequestSpec {
    RequestSpec { label: format!("{o}-{d}@{t}"), origin: NodeId(o), destination: NodeId(d), request_time: t, platform: PlatformId(p) }
}

#[test]
fn empty_scenario_has_zero_metrics() {
    let m = run(&line_scenario(3, 100.0, 10.0, StructureKind::Single)).unwrap();
    assert_eq!(m.total_vmt, Fixed4::ZERO);
    assert_eq!(m.pct_unsatisfied, Fixed4::ZERO);
    assert_eq!(m.avg_wait, Fixed4::ZERO);
    assert_eq!(m.total_trips, 0);
    assert_eq!(m.requests, 0);
    assert!(m.per_platform.iter().all(|p| p.profit == Money::ZERO));
}

#[test]
fn lone_request_is_served_by_vehicle_at_origin() {
    let mut sc = line_scenario(5, 400.0, 10.0, StructureKind::Single);
    sc.requests = vec![req(0, 4, 0.0, 0)];
    sc.platforms[0].vehicles = vec![NodeId(0)];
    let ep = run_detailed(&sc).unwrap();
    let m = &ep.metrics;
    assert_eq!(m.served, 1);
    assert_eq!(m.pct_unsatisfied, Fixed4::ZERO);
    assert_eq!(m.avg_wait, Fixed4::ZERO);
    assert_eq!(m.total_vmt, Fixed4::from_f64(1600.0 / 1609.344));
    assert_eq!(m.total_trips, 1);
    let fare = sc.pricing.dedicated_fare(1600.0, 160.0).unwrap();
    assert_eq!(m.per_platform[0].revenue, fare);
    assert_eq!(m.per_platform[0].profit, fare - sc.pricing.driver_pay(1600.0, 160.0).unwrap());
    assert_eq!(m.per_platform[0].contributing_vehicle_count, 1);
    assert_eq!(m.per_platform[0].contributed_request_value, fare);
    assert_eq!(ep.requests[0].dropoff_time, Some(160.0));
    ep.check_money().unwrap();
}

#[test]
fn segmentation_strands_the_only_rider() {
    let mut sc = line_scenario(5, 400.0, 10.0, StructureKind::Segmented);
    sc.requests = vec![req(0, 4, 0.0, 0)];
    sc.platforms[1].vehicles = vec![NodeId(0)];
    let m = run(&sc).unwrap();
    assert_eq!(m.pct_unsatisfied, Fixed4::from_raw(10_000));
    assert_eq!(m.expired, 1);
    assert_eq!(m.total_vmt, Fixed4::ZERO);
}

#[test]
fn pickup_within_epoch_then_keeps_driving() {
    // 100 m edges at 10 m/s: the pickup is 10 s away, then 20 s more driving.
    let mut sc = line_scenario(8, 100.0, 10.0, StructureKind::Single);
    sc.requests = vec![req(1, 7, 0.0, 0)];
    sc.platforms[0].vehicles = vec![NodeId(0)];
    let mut st = MarketState::new(&sc).unwrap();
    st.admit().unwrap();
    st.match_groups(None).unwrap();
    st.advance(30.0).unwrap();
    let v = &st.vehicles[0];
    assert_eq!(st.requests[0].state, RequestState::Onboard);
    assert_eq!(st.requests[0].pickup_time, Some(10.0));
    assert_eq!(v.position, NodeId(3));
    assert_eq!(v.odometer.meters(), 300.0);
    assert_eq!(v.ready_time, 30.0);
}

#[test]
fn idle_vehicle_holds_position() {
    let mut sc = line_scenario(3, 100.0, 10.0, StructureKind::Single);
    sc.platforms[0].vehicles = vec![NodeId(1)];
    let mut st = MarketState::new(&sc).unwrap();
    let before = st.vehicles[0].clone();
    st.advance(30.0).unwrap();
    assert_eq!(st.vehicles[0], before);
}

#[test]
fn dropoff_on_epoch_boundary_is_served() {
    let mut sc = line_scenario(4, 100.0, 10.0, StructureKind::Single);
    sc.requests = vec![req(0, 3, 0.0, 0)];
    sc.platforms[0].vehicles = vec![NodeId(0)];
    let mut st = MarketState::new(&sc).unwrap();
    st.admit().unwrap();
    st.match_groups(None).unwrap();
    st.advance(30.0).unwrap();
    assert_eq!(st.requests[0].state, RequestState::Served);
    assert_eq!(st.requests[0].dropoff_time, Some(30.0));
    assert_eq!(st.books[0].revenue, st.requests[0].fare.unwrap());
}

#[test]
fn expiry_boundary() {
    let mut sc = line_scenario(3, 100.0, 10.0, StructureKind::Single);
    sc.requests = vec![req(0, 2, 0.0, 0), req(0, 2, 2.0, 0)];
    sc.horizon = 2.0;
    let mut st = MarketState::new(&sc).unwrap();
    st.now = 2.0;
    st.admit().unwrap();
    st.now = 301.0;
    let gone = st.expire().unwrap();
    assert_eq!(gone, vec![RequestId(0)]);
    assert_eq!(st.requests[1].state, RequestState::Waiting);
}

#[test]
fn assigned_requests_never_expire() {
    let mut sc = line_scenario(3, 100.0, 10.0, StructureKind::Single);
    sc.requests = vec![req(0, 2, 0.0, 0)];
    sc.platforms[0].vehicles = vec![NodeId(0)];
    let mut st = MarketState::new(&sc).unwrap();
    st.admit().unwrap();
    st.match_groups(None).unwrap();
    st.now = 1000.0;
    assert!(st.expire().unwrap().is_empty());
    assert_eq!(st.requests[0].state, RequestState::Assigned);
}

#[test]
fn marketplace_holds_requests_at_the_broker() {
    let mut sc = line_scenario(3, 100.0, 10.0, StructureKind::Marketplace);
    sc.requests = vec![req(0, 2, 0.0, 0)];
    let mut st = MarketState::new(&sc).unwrap();
    st.admit().unwrap();
    assert_eq!(st.requests[0].holder, None);
}

#[test]
fn central_trading_serves_stranded_request() {
    let mut sc = line_scenario(6, 400.0, 10.0, StructureKind::Central);
    sc.requests = vec![req(0, 4, 0.0, 0)];
    sc.platforms[1].vehicles = vec![NodeId(0)];
    let ep = run_detailed(&sc).unwrap();
    assert_eq!(ep.metrics.served, 1);
    assert_eq!(ep.trades.len(), 1);
    let t = &ep.trades[0];
    assert_eq!((t.seller, t.buyer), (PlatformId(0), PlatformId(1)));
    assert_eq!(ep.metrics.per_platform[1].revenue, ep.requests[0].fare.unwrap());
    assert_eq!(ep.metrics.per_platform[0].info_received, t.info_price);
    assert_eq!(ep.metrics.broker_balance, Money::ZERO);
    ep.check_money().unwrap();
}

#[test]
fn bilateral_trading_serves_stranded_request() {
    let mut sc = line_scenario(6, 400.0, 10.0, StructureKind::Bilateral);
    sc.requests = vec![req(0, 4, 0.0, 0)];
    sc.platforms[1].vehicles = vec![NodeId(0)];
    let ep = run_detailed(&sc).unwrap();
    assert_eq!(ep.metrics.served, 1);
    assert_eq!(ep.trades.len(), 1);
    assert_eq!(ep.requests[0].served_by, Some(VehicleId(0)));
    ep.check_money().unwrap();
}

#[test]
fn marketplace_sells_to_the_capable_platform() {
    let mut sc = line_scenario(6, 400.0, 10.0, StructureKind::Marketplace);
    sc.requests = vec![req(0, 4, 0.0, 0)];
    sc.platforms[1].vehicles = vec![NodeId(0)];
    let ep = run_detailed(&sc).unwrap();
    assert_eq!(ep.metrics.served, 1);
    assert_eq!(ep.requests[0].holder, Some(PlatformId(1)));
    // A lone positive bid pays gamma times a zero second bid.
    assert_eq!(ep.metrics.broker_balance, Money::ZERO);
    ep.check_money().unwrap();
}

#[test]
fn untradeable_request_expires_under_bilateral() {
    let mut sc = line_scenario(20, 400.0, 10.0, StructureKind::Bilateral);
    sc.requests = vec![req(0, 4, 0.0, 0)];
    sc.platforms[1].vehicles = vec![NodeId(19)];
    let ep = run_detailed(&sc).unwrap();
    assert!(ep.trades.is_empty());
    assert_eq!(ep.metrics.expired, 1);
    assert_eq!(ep.requests[0].state, RequestState::Expired);
}

#[test]
fn cooperative_report_covers_all_coalitions() {
    let mut sc = line_scenario(6, 400.0, 10.0, StructureKind::Cooperative);
    sc.structure = MarketStructure::cooperative(vec![PlatformId(0), PlatformId(1)], 0.1).unwrap();
    sc.requests = vec![req(0, 4, 0.0, 0), req(5, 1, 0.0, 1)];
    sc.platforms[0].vehicles = vec![NodeId(0)];
    sc.platforms[1].vehicles = vec![NodeId(5)];
    let m = run(&sc).unwrap();
    let rep = m.cooperative.unwrap();
    assert_eq!(rep.players, vec!["A", "B"]);
    assert_eq!(rep.coalition_values.len(), 3);
    let grand: Money = m.per_platform.iter().map(|p| p.profit).sum();
    assert_eq!(rep.coalition_values[2], ("A,B".to_string(), grand));
    let sum: f64 = rep.shapley.x.iter().sum();
    assert!((sum - grand.dollars()).abs() < 1e-9);
    assert!(matches!(rep.epm, Ok(crate::mechanisms::CoreOutcome::Allocated { .. })));
}

#[test]
fn singleton_value_is_standalone_profit() {
    let mut sc = line_scenario(6, 400.0, 10.0, StructureKind::Segmented);
    sc.requests = vec![req(0, 4, 0.0, 0), req(5, 1, 0.0, 1)];
    sc.platforms[0].vehicles = vec![NodeId(0)];
    sc.platforms[1].vehicles = vec![NodeId(5)];
    let seg = run(&sc).unwrap();
    assert_eq!(characteristic_value(&sc, &[PlatformId(0)]).unwrap(), seg.per_platform[0].profit);
    assert_eq!(characteristic_value(&sc, &[]), Err(EngineError::EmptyCoalition));
}

fn small_random(seed: u64, kind: StructureKind) -> Scenario {
    let structure = if kind == StructureKind::Cooperative {
        MarketStructure::cooperative(vec![PlatformId(0), PlatformId(1)], 0.1).unwrap()
    } else {
        MarketStructure::new(kind, 0.1).unwrap()
    };
    generate(&GenSpec {
        name: format!("rand{seed}"),
        grid: GridSpec { rows: 5, cols: 5, edge_m: 250.0, speed_mps: 8.0 },
        requests: 12,
        duration_s: 400.0,
        fleet: vec![2, 2],
        seed,
        structure,
        objective: Objective::MinVmtPenalty,
    })
    .unwrap()
}

fn check_invariants(sc: &Scenario, ep: &Episode) {
    let total = sc.requests.len() as u64;
    for c in &ep.counts {
        assert_eq!(c.waiting + c.assigned + c.onboard + c.served + c.expired, c.admitted);
        assert!(c.admitted <= total);
    }
    assert_eq!(ep.metrics.served + ep.metrics.expired, total);
    assert_eq!(ep.odometer_total(), ep.ledger_total());
    let mut seen: BTreeMap<RequestId, Vec<(StopKind, VehicleId, f64)>> = BTreeMap::new();
    for e in &ep.events {
        seen.entry(e.request).or_default().push((e.kind, e.vehicle, e.time));
    }
    for r in &ep.requests {
        if r.state == RequestState::Served {
            let ev = &seen[&r.id];
            assert_eq!(ev.len(), 2);
            assert_eq!((ev[0].0, ev[1].0), (StopKind::Pickup, StopKind::Dropoff));
            assert_eq!(ev[0].1, ev[1].1);
            assert!(ev[0].2 <= ev[1].2);
            let wait = r.pickup_time.unwrap() - r.request_time;
            assert!(wait <= sc.constraints.max_wait_s + sc.constraints.epoch_s + 1e-6);
            let ride = r.dropoff_time.unwrap() - r.pickup_time.unwrap();
            assert!(ride <= sc.constraints.max_detour * r.direct_duration_s + 1e-6);
        } else {
            assert!(!seen.contains_key(&r.id));
        }
    }
    let mut traded = std::collections::BTreeSet::new();
    for t in &ep.trades {
        assert!(traded.insert(t.request), "request traded twice");
        assert_ne!(t.seller, t.buyer);
        assert!(t.info_price >= Money::ZERO);
        let r = &ep.requests[t.request.index()];
        assert!(matches!(r.state, RequestState::Served | RequestState::Expired));
        if r.state == RequestState::Served {
            assert_eq!(ep.vehicles[r.served_by.unwrap().index()].platform, t.buyer);
        }
    }
    ep.check_money().unwrap();
    assert!(ep.metrics.pct_unsatisfied.raw() >= 0 && ep.metrics.pct_unsatisfied.raw() <= 10_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn episode_invariants(seed in 0u64..10_000, k in 0usize..6) {
        let kind = StructureKind::ALL[k];
        let sc = small_random(seed, kind);
        let ep = run_detailed(&sc).unwrap();
        check_invariants(&sc, &ep);
        let again = run_detailed(&sc).unwrap();
        prop_assert_eq!(&ep.metrics, &again.metrics);
        prop_assert_eq!(&ep.trades, &again.trades);
    }

    #[test]
    fn single_equals_full_alliance(seed in 0u64..10_000) {
        let single = run(&small_random(seed, StructureKind::Single)).unwrap();
        let coop = run(&small_random(seed, StructureKind::Cooperative)).unwrap();
        prop_assert_eq!(single.total_vmt, coop.total_vmt);
        prop_assert_eq!(single.served, coop.served);
    }
}
