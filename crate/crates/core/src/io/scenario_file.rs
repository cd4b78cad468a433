use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::tables::{label, parse_requests_csv, RequestRow};
use super::{json_error, read_text, IoError};
use crate::engine::{place_vehicles, GridSpec, PlatformSpec, RequestSpec, Scenario, ScenarioError};
use crate::model::{Constraints, Money, PlatformId, PricingScheme};
use crate::network::{parse_network_csv, RoadNetwork};
use crate::rtv::{MarketStructure, StructureKind};
use crate::solve::Objective;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    network: NetworkDef,
    requests: Value,
    platforms: Vec<PlatformDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    structure: Option<Value>,
    #[serde(default)]
    constraints: ConstraintsDef,
    #[serde(default)]
    pricing: PricingDef,
    #[serde(default)]
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    objective: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_mps: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlatformDef {
    #[serde(deserialize_with = "label")]
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vehicles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vehicle_nodes: Option<Vec<Value>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintsDef {
    chi: Option<f64>,
    max_wait_s: Option<f64>,
    max_pickup_s: Option<f64>,
    penalty: Option<f64>,
    gamma: Option<f64>,
    delta_s: Option<f64>,
}

/// Overrides in dollars; absent fields keep the defaults.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PricingDef {
    ded_base: Option<f64>,
    ded_per_mile: Option<f64>,
    ded_per_min: Option<f64>,
    ded_min_fare: Option<f64>,
    shr_base: Option<f64>,
    shr_per_mile: Option<f64>,
    shr_per_min: Option<f64>,
    shr_min_fare: Option<f64>,
    pay_per_mile: Option<f64>,
    pay_per_min: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureDef {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alliance: Option<Vec<Value>>,
}

/// All-pairs tables grow with the square of this.
const MAX_GRID_NODES: usize = 4096;

/// Where a written scenario says its network comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum NetworkSource {
    Grid(GridSpec),
    File { path: String, speed_mps: f64 },
}

/// Loads and validates a scenario; relative paths resolve against its directory.
pub fn load_scenario(path: &Path) -> Result<Scenario, IoError> {
    load_scenario_seeded(path, None)
}

/// As [`load_scenario`], with `seed` replacing the file's seed before
/// anything random (vehicle placement) happens.
pub fn load_scenario_seeded(path: &Path, seed: Option<u64>) -> Result<Scenario, IoError> {
    let text = read_text(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario_seeded(&text, Some(base), seed)
}

/// Parses scenario JSON. With `base == None`, file references are rejected.
pub fn parse_scenario(text: &str, base: Option<&Path>) -> Result<Scenario, IoError> {
    parse_scenario_seeded(text, base, None)
}

pub fn parse_scenario_seeded(text: &str, base: Option<&Path>, seed: Option<u64>) -> Result<Scenario, IoError> {
    let mut file: ScenarioFile = serde_json::from_str(text).map_err(|e| json_error("scenario", e))?;
    if let Some(seed) = seed {
        file.seed = seed;
    }
    let network = Arc::new(build_network(&file.network, base)?);
    let constraints = constraints(&file.constraints);
    let pricing = pricing(&file.pricing)?;

    let mut names: HashMap<String, PlatformId> = HashMap::new();
    for (i, p) in file.platforms.iter().enumerate() {
        if names.insert(p.name.clone(), PlatformId(i as u16)).is_some() {
            return Err(IoError::validation("platforms", format!("duplicate platform `{}`", p.name)));
        }
    }
    if file.platforms.len() > u16::MAX as usize {
        return Err(IoError::validation("platforms", "too many platforms"));
    }
    let platforms = build_platforms(&file.platforms, &network, file.seed)?;

    let rows = request_rows(&file.requests, base)?;
    let node = |id: &str, field: &str, v: &str| {
        network.node(v).ok_or_else(|| IoError::validation(format!("requests[{id}].{field}"), format!("unknown node `{v}`")))
    };
    let mut requests = Vec::with_capacity(rows.len());
    for r in &rows {
        let platform = *names
            .get(&r.platform)
            .ok_or_else(|| IoError::validation(format!("requests[{}].platform", r.id), format!("unknown platform `{}`", r.platform)))?;
        requests.push(RequestSpec {
            label: r.id.clone(),
            origin: node(&r.id, "origin_node", &r.origin_node)?,
            destination: node(&r.id, "dest_node", &r.dest_node)?,
            request_time: r.request_time_s,
            platform,
        });
    }
    if requests.iter().any(|r| !r.request_time.is_finite()) {
        return Err(IoError::validation("requests", "request times must be finite"));
    }
    requests.sort_by(|a, b| a.request_time.total_cmp(&b.request_time));

    let structure = structure(file.structure.as_ref(), &names, constraints.gamma)?;
    let objective = match &file.objective {
        None => Objective::MinDelayPenalty,
        Some(s) => Objective::parse(s).ok_or_else(|| IoError::validation("objective", format!("unknown objective `{s}`")))?,
    };
    let horizon = file.horizon.unwrap_or_else(|| requests.iter().map(|r| r.request_time).fold(0.0, f64::max));
    let scenario = Scenario {
        name: file.name.unwrap_or_else(|| "scenario".into()),
        network,
        requests,
        platforms,
        pricing,
        structure,
        constraints,
        seed: file.seed,
        horizon,
        objective,
    };
    scenario.validate().map_err(scenario_error)?;
    Ok(scenario)
}

fn build_network(def: &NetworkDef, base: Option<&Path>) -> Result<RoadNetwork, IoError> {
    match (&def.grid, &def.file) {
        (Some(g), None) => {
            if def.speed_mps.is_some() {
                return Err(IoError::validation("network.speed_mps", "grid networks carry their own speed"));
            }
            if g.rows.saturating_mul(g.cols) > MAX_GRID_NODES {
                return Err(IoError::validation("network.grid", format!("grid exceeds {MAX_GRID_NODES} nodes")));
            }
            g.build().map_err(|e| IoError::validation("network.grid", e))
        }
        (None, Some(f)) => {
            let speed = def.speed_mps.ok_or_else(|| IoError::validation("network.speed_mps", "required with `file`"))?;
            let base = base.ok_or_else(|| IoError::validation("network.file", "file references need a scenario directory"))?;
            let text = read_text(&base.join(f))?;
            parse_network_csv(&text, speed).map_err(|e| IoError::validation("network.file", e))
        }
        _ => Err(IoError::validation("network", "give exactly one of `grid` or `file`")),
    }
}

fn request_rows(v: &Value, base: Option<&Path>) -> Result<Vec<RequestRow>, IoError> {
    match v {
        Value::String(f) => {
            let base = base.ok_or_else(|| IoError::validation("requests", "file references need a scenario directory"))?;
            parse_requests_csv(&read_text(&base.join(f))?)
        }
        Value::Array(_) => serde_json::from_value(v.clone()).map_err(|e| json_error("requests", e)),
        _ => Err(IoError::validation("requests", "expected a CSV path or an array of requests")),
    }
}

fn build_platforms(defs: &[PlatformDef], net: &RoadNetwork, seed: u64) -> Result<Vec<PlatformSpec>, IoError> {
    let mut fleet = Vec::with_capacity(defs.len());
    for p in defs {
        match (p.vehicles, &p.vehicle_nodes) {
            (Some(k), None) if k <= 100_000 => fleet.push(k),
            (Some(_), None) => return Err(IoError::validation(format!("platforms[{}].vehicles", p.name), "at most 100000")),
            (None, Some(_)) => fleet.push(0),
            _ => {
                return Err(IoError::validation(
                    format!("platforms[{}]", p.name),
                    "give exactly one of `vehicles` or `vehicle_nodes`",
                ))
            }
        }
    }
    let placed = place_vehicles(net, &fleet, seed);
    defs.iter()
        .zip(placed)
        .map(|(p, random)| {
            let vehicles = match &p.vehicle_nodes {
                None => random,
                Some(nodes) => nodes
                    .iter()
                    .map(|n| {
                        let l = value_label(n);
                        net.node(&l).ok_or_else(|| {
                            IoError::validation(format!("platforms[{}].vehicle_nodes", p.name), format!("unknown node `{l}`"))
                        })
                    })
                    .collect::<Result<_, _>>()?,
            };
            Ok(PlatformSpec { label: p.name.clone(), vehicles })
        })
        .collect()
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn constraints(def: &ConstraintsDef) -> Constraints {
    let d = Constraints::default();
    Constraints {
        max_detour: def.chi.unwrap_or(d.max_detour),
        max_wait_s: def.max_wait_s.unwrap_or(d.max_wait_s),
        max_pickup_s: def.max_pickup_s.unwrap_or(d.max_pickup_s),
        penalty: def.penalty.unwrap_or(d.penalty),
        gamma: def.gamma.unwrap_or(d.gamma),
        epoch_s: def.delta_s.unwrap_or(d.epoch_s),
    }
}

fn pricing(def: &PricingDef) -> Result<PricingScheme, IoError> {
    let d = PricingScheme::default();
    let field = |name: &str, v: Option<f64>, dflt: Money| match v {
        None => Ok(dflt),
        Some(x) if x.is_finite() && (0.0..1e9).contains(&x) => Ok(Money::from_dollars(x)),
        Some(_) => Err(IoError::validation(format!("pricing.{name}"), "must be a non-negative dollar amount")),
    };
    Ok(PricingScheme {
        ded_base: field("ded_base", def.ded_base, d.ded_base)?,
        ded_per_mile: field("ded_per_mile", def.ded_per_mile, d.ded_per_mile)?,
        ded_per_min: field("ded_per_min", def.ded_per_min, d.ded_per_min)?,
        ded_min_fare: field("ded_min_fare", def.ded_min_fare, d.ded_min_fare)?,
        shr_base: field("shr_base", def.shr_base, d.shr_base)?,
        shr_per_mile: field("shr_per_mile", def.shr_per_mile, d.shr_per_mile)?,
        shr_per_min: field("shr_per_min", def.shr_per_min, d.shr_per_min)?,
        shr_min_fare: field("shr_min_fare", def.shr_min_fare, d.shr_min_fare)?,
        pay_per_mile: field("pay_per_mile", def.pay_per_mile, d.pay_per_mile)?,
        pay_per_min: field("pay_per_min", def.pay_per_min, d.pay_per_min)?,
    })
}

fn structure(v: Option<&Value>, names: &HashMap<String, PlatformId>, gamma: f64) -> Result<MarketStructure, IoError> {
    let def = match v {
        None => StructureDef { kind: "single".into(), alliance: None },
        Some(Value::String(s)) => StructureDef { kind: s.clone(), alliance: None },
        Some(obj @ Value::Object(_)) => serde_json::from_value(obj.clone()).map_err(|e| json_error("structure", e))?,
        Some(_) => return Err(IoError::validation("structure", "expected a name or an object with `kind`")),
    };
    let kind = StructureKind::parse(&def.kind)
        .ok_or_else(|| IoError::validation("structure.kind", format!("unknown structure `{}`", def.kind)))?;
    let bad_gamma = |e| IoError::validation("constraints.gamma", e);
    match (kind, def.alliance) {
        (StructureKind::Cooperative, alliance) => {
            let members = match alliance {
                None => {
                    let mut all: Vec<PlatformId> = names.values().copied().collect();
                    all.sort();
                    all
                }
                Some(list) => list
                    .iter()
                    .map(|m| {
                        let l = value_label(m);
                        names.get(&l).copied().ok_or_else(|| {
                            IoError::validation("structure.alliance", format!("unknown platform `{l}`"))
                        })
                    })
                    .collect::<Result<_, _>>()?,
            };
            if members.is_empty() {
                return Err(IoError::validation("structure.alliance", "alliance is empty"));
            }
            MarketStructure::cooperative(members, gamma).map_err(bad_gamma)
        }
        (_, Some(_)) => Err(IoError::validation("structure.alliance", "only cooperative structures take an alliance")),
        (kind, None) => MarketStructure::new(kind, gamma).map_err(bad_gamma),
    }
}

fn scenario_error(e: ScenarioError) -> IoError {
    let field = match &e {
        ScenarioError::NoPlatforms => "platforms".to_string(),
        ScenarioError::InvalidConstraint("horizon") | ScenarioError::HorizonTooShort { .. } => "horizon".to_string(),
        ScenarioError::InvalidConstraint(name) => format!("constraints.{name}"),
        ScenarioError::UnknownNode(_)
        | ScenarioError::DegenerateRequest(_)
        | ScenarioError::UnknownPlatform { .. }
        | ScenarioError::Unreachable(_)
        | ScenarioError::InvalidRequestTime(_) => "requests".to_string(),
        ScenarioError::UnknownAllianceMember(_) => "structure.alliance".to_string(),
        ScenarioError::Pricing(_) => "pricing".to_string(),
    };
    IoError::validation(field, e)
}

/// Writes a self-contained scenario: requests inline, vehicles by node.
pub fn scenario_to_json(scenario: &Scenario, network: &NetworkSource) -> String {
    let net = &scenario.network;
    let label = |p: PlatformId| scenario.platforms[p.0 as usize].label.clone();
    let requests: Vec<RequestRow> = scenario
        .requests
        .iter()
        .map(|r| RequestRow {
            id: r.label.clone(),
            request_time_s: r.request_time,
            origin_node: net.label(r.origin).to_string(),
            dest_node: net.label(r.destination).to_string(),
            platform: label(r.platform),
        })
        .collect();
    let s = &scenario.structure;
    let structure = match s.kind {
        StructureKind::Cooperative => serde_json::to_value(StructureDef {
            kind: s.kind.name().to_string(),
            alliance: Some(s.alliance.iter().map(|&p| Value::String(label(p))).collect()),
        })
        .expect("serializable"),
        kind => Value::String(kind.name().to_string()),
    };
    let c = &scenario.constraints;
    let p = &scenario.pricing;
    let d = |m: Money| Some(m.dollars());
    let file = ScenarioFile {
        name: Some(scenario.name.clone()),
        network: match network {
            NetworkSource::Grid(g) => NetworkDef { grid: Some(*g), file: None, speed_mps: None },
            NetworkSource::File { path, speed_mps } => {
                NetworkDef { grid: None, file: Some(path.clone()), speed_mps: Some(*speed_mps) }
            }
        },
        requests: serde_json::to_value(requests).expect("serializable"),
        platforms: scenario
            .platforms
            .iter()
            .map(|p| PlatformDef {
                name: p.label.clone(),
                vehicles: None,
                vehicle_nodes: Some(p.vehicles.iter().map(|&n| Value::String(net.label(n).to_string())).collect()),
            })
            .collect(),
        structure: Some(structure),
        constraints: ConstraintsDef {
            chi: Some(c.max_detour),
            max_wait_s: Some(c.max_wait_s),
            max_pickup_s: Some(c.max_pickup_s),
            penalty: Some(c.penalty),
            gamma: Some(s.gamma),
            delta_s: Some(c.epoch_s),
        },
        pricing: PricingDef {
            ded_base: d(p.ded_base),
            ded_per_mile: d(p.ded_per_mile),
            ded_per_min: d(p.ded_per_min),
            ded_min_fare: d(p.ded_min_fare),
            shr_base: d(p.shr_base),
            shr_per_mile: d(p.shr_per_mile),
            shr_per_min: d(p.shr_per_min),
            shr_min_fare: d(p.shr_min_fare),
            pay_per_mile: d(p.pay_per_mile),
            pay_per_min: d(p.pay_per_min),
        },
        seed: scenario.seed,
        horizon: Some(scenario.horizon),
        objective: Some(scenario.objective.name().to_string()),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("serializable");
    out.push('\n');
    out
}
