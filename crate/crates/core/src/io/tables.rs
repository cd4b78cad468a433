use serde::{Deserialize, Deserializer, Serialize};

use super::IoError;
use crate::engine::Scenario;
use crate::mechanisms::TradeRecord;
use crate::model::Money;

const REQUEST_HEADER: [&str; 5] = ["id", "request_time_s", "origin_node", "dest_node", "platform"];

/// One request as written in a scenario: node and platform by label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestRow {
    #[serde(deserialize_with = "label")]
    pub id: String,
    pub request_time_s: f64,
    #[serde(deserialize_with = "label")]
    pub origin_node: String,
    #[serde(deserialize_with = "label")]
    pub dest_node: String,
    #[serde(deserialize_with = "label")]
    pub platform: String,
}

/// Accepts a string or an integer, so JSON authors may write `"7"` or `7`.
pub(crate) fn label<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Label {
        S(String),
        U(u64),
        I(i64),
    }
    Ok(match Label::deserialize(d)? {
        Label::S(s) => s,
        Label::U(u) => u.to_string(),
        Label::I(i) => i.to_string(),
    })
}

/// Parses `id,request_time_s,origin_node,dest_node,platform`.
pub fn parse_requests_csv(text: &str) -> Result<Vec<RequestRow>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().ne(REQUEST_HEADER) {
        return Err(IoError::Parse {
            location: "line 1".into(),
            message: format!("expected header `{}`", REQUEST_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let time = &rec[1];
        let row = RequestRow {
            id: rec[0].to_string(),
            request_time_s: time.parse().map_err(|_| IoError::Parse {
                location: format!("line {line}"),
                message: format!("invalid request_time_s `{time}`"),
            })?,
            origin_node: rec[2].to_string(),
            dest_node: rec[3].to_string(),
            platform: rec[4].to_string(),
        };
        if !(row.request_time_s.is_finite() && row.request_time_s >= 0.0) {
            return Err(IoError::validation(format!("requests[{}].request_time_s", row.id), "must be finite and non-negative"));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn csv_error(e: csv::Error) -> IoError {
    let location = e.position().map_or_else(|| "requests".to_string(), |p| format!("line {}", p.line()));
    IoError::Parse { location, message: e.to_string() }
}

/// `epoch,request,seller,buyer,info_price` with labels from the scenario.
pub fn trade_log_csv(trades: &[TradeRecord], scenario: &Scenario) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "request", "seller", "buyer", "info_price"]).expect("in-memory write");
    let platform = |p: crate::model::PlatformId| scenario.platforms[p.0 as usize].label.as_str();
    for t in trades {
        w.write_record([
            t.epoch.to_string().as_str(),
            scenario.requests[t.request.0 as usize].label.as_str(),
            platform(t.seller),
            platform(t.buyer),
            t.info_price.to_string().as_str(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("labels are UTF-8")
}

/// Comma-separated dollar bids, e.g. `5,3,0`.
pub fn parse_bids(text: &str) -> Result<Vec<Money>, IoError> {
    text.split(',')
        .enumerate()
        .map(|(i, s)| {
            let s = s.trim();
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() && (0.0..1e12).contains(&v) => Ok(Money::from_dollars(v)),
                Ok(_) => Err(IoError::validation(format!("bids[{i}]"), format!("`{s}` must be a non-negative amount"))),
                Err(_) => Err(IoError::Parse { location: format!("bid {}", i + 1), message: format!("`{s}` is not a number") }),
            }
        })
        .collect()
}
