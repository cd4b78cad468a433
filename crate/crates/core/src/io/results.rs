use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use super::{json_error, read_text, write_text, IoError};
use crate::engine::{EpisodeMetrics, Fixed4, PlatformMetrics};
use crate::model::Money;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResultFormat {
    Json,
    Csv,
}

impl FromStr for ResultFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ResultFormat::Json),
            "csv" => Ok(ResultFormat::Csv),
            other => Err(format!("unknown format `{other}` (json or csv)")),
        }
    }
}

/// One episode or a comparison list.
#[derive(Clone, Copy, Debug)]
pub enum ResultSet<'a> {
    One(&'a EpisodeMetrics),
    Many(&'a [EpisodeMetrics]),
}

impl ResultSet<'_> {
    fn rows(&self) -> &[EpisodeMetrics] {
        match self {
            ResultSet::One(m) => std::slice::from_ref(*m),
            ResultSet::Many(ms) => ms,
        }
    }
}

impl<'a> From<&'a EpisodeMetrics> for ResultSet<'a> {
    fn from(m: &'a EpisodeMetrics) -> Self {
        ResultSet::One(m)
    }
}

impl<'a> From<&'a [EpisodeMetrics]> for ResultSet<'a> {
    fn from(ms: &'a [EpisodeMetrics]) -> Self {
        ResultSet::Many(ms)
    }
}

impl<'a> From<&'a Vec<EpisodeMetrics>> for ResultSet<'a> {
    fn from(ms: &'a Vec<EpisodeMetrics>) -> Self {
        ResultSet::Many(ms)
    }
}

pub fn write_results<'a>(results: impl Into<ResultSet<'a>>, path: &Path, format: ResultFormat) -> Result<(), IoError> {
    let results = results.into();
    let text = match format {
        ResultFormat::Json => results_json(results),
        ResultFormat::Csv => results_csv(results.rows()),
    };
    write_text(path, &text)
}

/// Reads a results file written by [`write_results`], by extension.
pub fn read_results(path: &Path) -> Result<Vec<EpisodeMetrics>, IoError> {
    let text = read_text(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => parse_results_csv(&text),
        _ => parse_results_json(&text),
    }
}

pub fn results_json(results: ResultSet) -> String {
    let mut out = match results {
        ResultSet::One(m) => serde_json::to_string_pretty(m),
        ResultSet::Many(ms) => serde_json::to_string_pretty(ms),
    }
    .expect("metrics serialize");
    out.push('\n');
    out
}

/// Accepts a single metrics object or an array of them.
pub fn parse_results_json(text: &str) -> Result<Vec<EpisodeMetrics>, IoError> {
    let v: Value = serde_json::from_str(text).map_err(|e| json_error("results", e))?;
    match v {
        Value::Array(_) => serde_json::from_value(v).map_err(|e| json_error("results", e)),
        _ => serde_json::from_value(v).map(|m| vec![m]).map_err(|e| json_error("results", e)),
    }
}

const HEADLINE: [&str; 12] = [
    "scenario",
    "structure",
    "seed",
    "total_vmt",
    "pct_unsatisfied",
    "avg_wait",
    "total_trips",
    "requests",
    "served",
    "expired",
    "trades",
    "broker_balance",
];

const PLATFORM: [&str; 10] = [
    "name",
    "profit",
    "revenue",
    "driver_cost",
    "info_paid",
    "info_received",
    "auction_paid",
    "trips",
    "contributing_vehicle_count",
    "contributed_request_value",
];

/// One row per episode; per-platform columns are `p1_profit`, `p2_profit`, ….
/// The cooperative report is JSON-only.
pub fn results_csv(rows: &[EpisodeMetrics]) -> String {
    let width = rows.iter().map(|m| m.per_platform.len()).max().unwrap_or(0);
    let mut header: Vec<String> = HEADLINE.iter().map(|s| s.to_string()).collect();
    for k in 1..=width {
        header.extend(PLATFORM.iter().map(|f| format!("p{k}_{f}")));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for m in rows {
        let mut rec = vec![
            m.scenario.clone(),
            m.structure.clone(),
            m.seed.to_string(),
            m.total_vmt.to_string(),
            m.pct_unsatisfied.to_string(),
            m.avg_wait.to_string(),
            m.total_trips.to_string(),
            m.requests.to_string(),
            m.served.to_string(),
            m.expired.to_string(),
            m.trades.to_string(),
            m.broker_balance.to_string(),
        ];
        for k in 0..width {
            match m.per_platform.get(k) {
                Some(p) => rec.extend([
                    p.platform.clone(),
                    p.profit.to_string(),
                    p.revenue.to_string(),
                    p.driver_cost.to_string(),
                    p.info_paid.to_string(),
                    p.info_received.to_string(),
                    p.auction_paid.to_string(),
                    p.trips.to_string(),
                    p.contributing_vehicle_count.to_string(),
                    p.contributed_request_value.to_string(),
                ]),
                None => rec.extend(std::iter::repeat_n(String::new(), PLATFORM.len())),
            }
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("labels are UTF-8")
}

/// Inverse of [`results_csv`]; the cooperative report is absent.
pub fn parse_results_csv(text: &str) -> Result<Vec<EpisodeMetrics>, IoError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?.clone();
    let extra = header.len().checked_sub(HEADLINE.len()).filter(|e| e % PLATFORM.len() == 0);
    let ok_header = header.iter().take(HEADLINE.len()).eq(HEADLINE);
    let Some(extra) = extra.filter(|_| ok_header) else {
        return Err(IoError::Parse { location: "line 1".into(), message: "unrecognized results header".into() });
    };
    let width = extra / PLATFORM.len();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |i: usize| Cell { text: &rec[i], column: &header[i], line };
        let mut per_platform = Vec::new();
        for k in 0..width {
            let at = |j: usize| cell(HEADLINE.len() + k * PLATFORM.len() + j);
            if at(0).text.is_empty() {
                continue;
            }
            per_platform.push(PlatformMetrics {
                platform: at(0).text.to_string(),
                profit: at(1).money()?,
                revenue: at(2).money()?,
                driver_cost: at(3).money()?,
                info_paid: at(4).money()?,
                info_received: at(5).money()?,
                auction_paid: at(6).money()?,
                trips: at(7).int()?,
                contributing_vehicle_count: at(8).int()?,
                contributed_request_value: at(9).money()?,
            });
        }
        out.push(EpisodeMetrics {
            scenario: rec[0].to_string(),
            structure: rec[1].to_string(),
            seed: cell(2).int()?,
            total_vmt: cell(3).fixed()?,
            pct_unsatisfied: cell(4).fixed()?,
            avg_wait: cell(5).fixed()?,
            total_trips: cell(6).int()?,
            requests: cell(7).int()?,
            served: cell(8).int()?,
            expired: cell(9).int()?,
            trades: cell(10).int()?,
            broker_balance: cell(11).money()?,
            per_platform,
            cooperative: None,
        });
    }
    Ok(out)
}

struct Cell<'a> {
    text: &'a str,
    column: &'a str,
    line: u64,
}

impl Cell<'_> {
    fn err(&self) -> IoError {
        IoError::Parse { location: format!("line {} column `{}`", self.line, self.column), message: format!("invalid value `{}`", self.text) }
    }

    fn int(&self) -> Result<u64, IoError> {
        self.text.parse().map_err(|_| self.err())
    }

    fn decimal(&self) -> Result<f64, IoError> {
        self.text.parse::<f64>().ok().filter(|v| v.is_finite() && v.abs() < 1e14).ok_or_else(|| self.err())
    }

    fn fixed(&self) -> Result<Fixed4, IoError> {
        self.decimal().map(Fixed4::from_f64)
    }

    fn money(&self) -> Result<Money, IoError> {
        self.decimal().map(Money::from_dollars)
    }
}

fn csv_error(e: csv::Error) -> IoError {
    let location = e.position().map_or_else(|| "results".to_string(), |p| format!("line {}", p.line()));
    IoError::Parse { location, message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::CooperativeReport;
    use crate::mechanisms::{Allocation, CoreOutcome};
    use proptest::prelude::*;

    fn money() -> impl Strategy<Value = Money> {
        (-10_000_000_000i64..10_000_000_000).prop_map(Money::from_mills)
    }

    fn fixed() -> impl Strategy<Value = Fixed4> {
        (-10_000_000_000i64..10_000_000_000).prop_map(Fixed4::from_raw)
    }

    fn platform() -> impl Strategy<Value = PlatformMetrics> {
        ("[A-Z][a-z0-9]{0,5}", money(), money(), money(), money(), money(), money(), 0u64..10_000, 0u64..100, money())
            .prop_map(|(platform, profit, revenue, driver_cost, info_paid, info_received, auction_paid, trips, c, v)| {
                PlatformMetrics {
                    platform,
                    profit,
                    revenue,
                    driver_cost,
                    info_paid,
                    info_received,
                    auction_paid,
                    trips,
                    contributing_vehicle_count: c,
                    contributed_request_value: v,
                }
            })
    }

    fn metrics() -> impl Strategy<Value = EpisodeMetrics> {
        (
            ("[a-z ,\"]{0,8}", "[a-z]{1,10}", any::<u64>()),
            (fixed(), fixed(), fixed()),
            (0u64..1000, 0u64..1000, 0u64..1000, 0u64..1000, 0u64..1000),
            money(),
            prop::collection::vec(platform(), 0..4),
        )
            .prop_map(|((scenario, structure, seed), (vmt, unsat, wait), (trips, req, served, expired, trades), bal, pp)| {
                EpisodeMetrics {
                    scenario,
                    structure,
                    seed,
                    total_vmt: vmt,
                    pct_unsatisfied: unsat,
                    avg_wait: wait,
                    total_trips: trips,
                    requests: req,
                    served,
                    expired,
                    trades,
                    broker_balance: bal,
                    per_platform: pp,
                    cooperative: None,
                }
            })
    }

    fn report() -> CooperativeReport {
        let alloc = Allocation { players: vec!["A".into(), "B".into()], x: vec![12.0, 24.000000000000004] };
        CooperativeReport {
            players: alloc.players.clone(),
            coalition_values: vec![("A".into(), Money::from_mills(10_000)), ("A,B".into(), Money::from_mills(36_000))],
            shapley: alloc.clone(),
            epm: Ok(CoreOutcome::Allocated { allocation: alloc, gap: 0.1 + 0.2 }),
            weights: Err("contribution ratio has a zero or negative denominator".into()),
            contribution: Ok(CoreOutcome::CoreEmpty),
        }
    }

    proptest! {
        #[test]
        fn json_round_trip(ms in prop::collection::vec(metrics(), 1..4)) {
            let mut ms = ms;
            ms[0].cooperative = Some(report());
            prop_assert_eq!(&parse_results_json(&results_json(ResultSet::Many(&ms))).unwrap(), &ms);
            prop_assert_eq!(parse_results_json(&results_json(ResultSet::One(&ms[0]))).unwrap(), vec![ms[0].clone()]);
        }

        #[test]
        fn csv_round_trip(ms in prop::collection::vec(metrics(), 0..5)) {
            prop_assert_eq!(parse_results_csv(&results_csv(&ms)).unwrap(), ms);
        }
    }

    #[test]
    fn eleven_markets_give_eleven_rows() {
        let m = EpisodeMetrics {
            scenario: "s".into(),
            structure: "single".into(),
            seed: 1,
            total_vmt: Fixed4::from_raw(123_456),
            pct_unsatisfied: Fixed4::from_raw(500),
            avg_wait: Fixed4::ZERO,
            total_trips: 3,
            requests: 4,
            served: 3,
            expired: 1,
            trades: 0,
            broker_balance: Money::ZERO,
            per_platform: vec![],
            cooperative: None,
        };
        let rows = vec![m; 11];
        let csv = results_csv(&rows);
        assert_eq!(csv.lines().count(), 12);
        assert!(csv.lines().nth(1).unwrap().contains(",12.3456,0.0500,0.0000,"));
    }

    #[test]
    fn write_and_read_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = parse_results_json(&results_json(ResultSet::Many(&[]))).unwrap();
        assert!(m.is_empty());
        let path = dir.path().join("r.csv");
        write_results(&m, &path, ResultFormat::Csv).unwrap();
        assert_eq!(read_results(&path).unwrap(), m);
        let err = write_results(&m, &dir.path().join("no/such/dir/r.json"), ResultFormat::Json).unwrap_err();
        assert!(matches!(err, IoError::Io { .. }));
    }

    #[test]
    fn format_names() {
        assert_eq!("csv".parse::<ResultFormat>(), Ok(ResultFormat::Csv));
        assert!("xml".parse::<ResultFormat>().is_err());
    }
}
