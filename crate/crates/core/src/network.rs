//! Road graph and shortest-path queries.
//!
//! Edge lengths are stored as whole millimetres so that every distance sum in
//! the simulator is exact. All-pairs distances are computed once, on
//! construction, with one Dijkstra pass per source node.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Metres per statute mile.
pub const METERS_PER_MILE: f64 = 1609.344;

const UNREACHABLE: u64 = u64::MAX;
const NO_PRED: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("network file not found: {0}")]
    MissingFile(String),
    #[error("could not read network file {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("edge at line {line} references undeclared node `{node}`")]
    DanglingEdgeEndpoint { line: usize, node: String },
    #[error("grid dimensions must be at least 1x1 with a positive edge length")]
    InvalidDimension,
    #[error("speed must be strictly positive, got {0}")]
    InvalidSpeed(f64),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{to}` is not reachable from node `{from}`")]
    Unreachable { from: String, to: String },
}

/// Dense node index into a [`RoadNetwork`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A road distance in whole millimetres.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Distance(u64);

impl Distance {
    pub const ZERO: Distance = Distance(0);

    pub fn from_mm(mm: u64) -> Self {
        Distance(mm)
    }

    /// Rounds to the nearest millimetre. Negative or non-finite input yields `None`.
    pub fn from_meters(m: f64) -> Option<Self> {
        if !m.is_finite() || m < 0.0 {
            return None;
        }
        Some(Distance((m * 1000.0).round() as u64))
    }

    pub fn mm(self) -> u64 {
        self.0
    }

    pub fn meters(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn miles(self) -> f64 {
        self.meters() / METERS_PER_MILE
    }

    pub fn saturating_sub(self, other: Distance) -> Distance {
        Distance(self.0.saturating_sub(other.0))
    }
}

impl Add for Distance {
    type Output = Distance;
    fn add(self, rhs: Distance) -> Distance {
        Distance(self.0 + rhs.0)
    }
}

impl AddAssign for Distance {
    fn add_assign(&mut self, rhs: Distance) {
        self.0 += rhs.0;
    }
}

impl Sub for Distance {
    type Output = Distance;
    fn sub(self, rhs: Distance) -> Distance {
        Distance(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Distance {
    fn sum<I: Iterator<Item = Distance>>(iter: I) -> Distance {
        iter.fold(Distance::ZERO, Add::add)
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03} m", self.0 / 1000, self.0 % 1000)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub length: Distance,
}

/// Result of a point-to-point query.
#[derive(Clone, Debug, PartialEq)]
pub struct ShortestPath {
    pub distance: Distance,
    pub duration_s: f64,
    pub nodes: Vec<NodeId>,
}

/// Directed road graph with a constant travel speed and cached all-pairs
/// shortest paths. Immutable after construction.
#[derive(Clone, Debug)]
pub struct RoadNetwork {
    labels: Vec<String>,
    index: HashMap<String, NodeId>,
    edges: Vec<Edge>,
    speed_mps: f64,
    dist: Vec<u64>,
    pred: Vec<u32>,
}

impl RoadNetwork {
    /// Builds a network from node labels and `(from, to, length_m)` edges.
    pub fn new(
        labels: Vec<String>,
        edges: &[(String, String, f64)],
        speed_mps: f64,
    ) -> Result<Self, NetworkError> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), NodeId(i as u32)).is_some() {
                return Err(NetworkError::MalformedRow {
                    line: i + 1,
                    reason: format!("duplicate node `{label}`"),
                });
            }
        }
        let mut built = Vec::with_capacity(edges.len());
        for (i, (from, to, len)) in edges.iter().enumerate() {
            let lookup = |n: &String| {
                index.get(n).copied().ok_or_else(|| NetworkError::DanglingEdgeEndpoint {
                    line: i + 1,
                    node: n.clone(),
                })
            };
            let (from, to) = (lookup(from)?, lookup(to)?);
            let length = positive_length(*len).ok_or_else(|| NetworkError::MalformedRow {
                line: i + 1,
                reason: format!("edge length must be strictly positive, got {len}"),
            })?;
            built.push(Edge { from, to, length });
        }
        Self::from_parts(labels, index, built, speed_mps)
    }

    fn from_parts(
        labels: Vec<String>,
        index: HashMap<String, NodeId>,
        edges: Vec<Edge>,
        speed_mps: f64,
    ) -> Result<Self, NetworkError> {
        if !(speed_mps.is_finite() && speed_mps > 0.0) {
            return Err(NetworkError::InvalidSpeed(speed_mps));
        }
        let n = labels.len();
        let mut adj: Vec<Vec<(u32, u64)>> = vec![Vec::new(); n];
        for e in &edges {
            adj[e.from.index()].push((e.to.0, e.length.mm()));
        }
        let mut dist = vec![UNREACHABLE; n * n];
        let mut pred = vec![NO_PRED; n * n];
        for s in 0..n {
            dijkstra(&adj, s, &mut dist[s * n..(s + 1) * n], &mut pred[s * n..(s + 1) * n]);
        }
        Ok(RoadNetwork { labels, index, edges, speed_mps, dist, pred })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_mps
    }

    pub fn node(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.labels[node.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.labels.len() as u32).map(NodeId)
    }

    /// Cached shortest distance, `None` when `t` is unreachable from `s`.
    pub fn distance(&self, s: NodeId, t: NodeId) -> Option<Distance> {
        let d = self.dist[s.index() * self.labels.len() + t.index()];
        (d != UNREACHABLE).then_some(Distance(d))
    }

    /// Seconds needed to drive `d` at the network speed.
    pub fn travel_time(&self, d: Distance) -> f64 {
        d.meters() / self.speed_mps
    }

    pub fn shortest_path(&self, s: NodeId, t: NodeId) -> Result<ShortestPath, NetworkError> {
        let n = self.labels.len();
        for v in [s, t] {
            if v.index() >= n {
                return Err(NetworkError::UnknownNode(format!("#{}", v.0)));
            }
        }
        let distance = self.distance(s, t).ok_or_else(|| NetworkError::Unreachable {
            from: self.label(s).to_string(),
            to: self.label(t).to_string(),
        })?;
        let row = &self.pred[s.index() * n..(s.index() + 1) * n];
        let mut nodes = vec![t];
        let mut cur = t;
        while cur != s {
            cur = NodeId(row[cur.index()]);
            nodes.push(cur);
        }
        nodes.reverse();
        Ok(ShortestPath { distance, duration_s: self.travel_time(distance), nodes })
    }

    /// First node after `s` on the cached shortest path to `t`.
    pub fn next_hop(&self, s: NodeId, t: NodeId) -> Option<NodeId> {
        if s == t || self.distance(s, t).is_none() {
            return None;
        }
        let n = self.labels.len();
        let row = &self.pred[s.index() * n..(s.index() + 1) * n];
        let mut cur = t;
        loop {
            let p = NodeId(row[cur.index()]);
            if p == s {
                return Some(cur);
            }
            cur = p;
        }
    }

    /// Label-based convenience wrapper around [`RoadNetwork::shortest_path`].
    pub fn shortest_path_by_label(&self, s: &str, t: &str) -> Result<ShortestPath, NetworkError> {
        let lookup = |l: &str| self.node(l).ok_or_else(|| NetworkError::UnknownNode(l.to_string()));
        self.shortest_path(lookup(s)?, lookup(t)?)
    }
}

fn positive_length(len_m: f64) -> Option<Distance> {
    if !(len_m.is_finite() && len_m > 0.0) {
        return None;
    }
    Distance::from_meters(len_m).filter(|d| d.mm() > 0)
}

fn dijkstra(adj: &[Vec<(u32, u64)>], source: usize, dist: &mut [u64], pred: &mut [u32]) {
    let mut heap = BinaryHeap::new();
    dist[source] = 0;
    pred[source] = source as u32;
    heap.push(Reverse((0u64, source as u32)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u as usize] {
            continue;
        }
        for &(v, len) in &adj[u as usize] {
            let nd = d + len;
            if nd < dist[v as usize] {
                dist[v as usize] = nd;
                pred[v as usize] = u;
                heap.push(Reverse((nd, v)));
            }
        }
    }
}

/// Bidirectional 4-neighbour grid. Nodes are labelled by their row-major index.
pub fn make_grid(
    rows: usize,
    cols: usize,
    edge_len_m: f64,
    speed_mps: f64,
) -> Result<RoadNetwork, NetworkError> {
    if rows == 0 || cols == 0 {
        return Err(NetworkError::InvalidDimension);
    }
    let length = positive_length(edge_len_m).ok_or(NetworkError::InvalidDimension)?;
    let labels: Vec<String> = (0..rows * cols).map(|i| i.to_string()).collect();
    let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), NodeId(i as u32))).collect();
    let id = |r: usize, c: usize| NodeId((r * cols + c) as u32);
    let mut edges = Vec::with_capacity(2 * (rows * (cols - 1) + cols * (rows - 1)));
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push(Edge { from: id(r, c), to: id(r, c + 1), length });
                edges.push(Edge { from: id(r, c + 1), to: id(r, c), length });
            }
            if r + 1 < rows {
                edges.push(Edge { from: id(r, c), to: id(r + 1, c), length });
                edges.push(Edge { from: id(r + 1, c), to: id(r, c), length });
            }
        }
    }
    RoadNetwork::from_parts(labels, index, edges, speed_mps)
}

/// Parses the two-section network CSV (`#nodes` then `#edges`).
pub fn parse_network_csv(text: &str, speed_mps: f64) -> Result<RoadNetwork, NetworkError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Nodes,
        Edges,
    }
    let mut section = Section::None;
    let mut labels = Vec::new();
    let mut index: HashMap<String, NodeId> = HashMap::new();
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "#nodes" => {
                if section != Section::None {
                    return Err(malformed(line_no, "`#nodes` must be the first section"));
                }
                section = Section::Nodes;
                continue;
            }
            "#edges" => {
                if section != Section::Nodes {
                    return Err(malformed(line_no, "`#edges` must follow `#nodes`"));
                }
                section = Section::Edges;
                continue;
            }
            _ => {}
        }
        match section {
            Section::None => return Err(malformed(line_no, "expected `#nodes` header")),
            Section::Nodes => {
                if line.contains(',') {
                    return Err(malformed(line_no, "node rows hold a single identifier"));
                }
                let id = NodeId(labels.len() as u32);
                if index.insert(line.to_string(), id).is_some() {
                    return Err(malformed(line_no, &format!("duplicate node `{line}`")));
                }
                labels.push(line.to_string());
            }
            Section::Edges => {
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                let [from, to, len] = fields[..] else {
                    return Err(malformed(line_no, "edge rows are `from,to,length_m`"));
                };
                let len: f64 = len
                    .parse()
                    .map_err(|_| malformed(line_no, &format!("invalid length `{len}`")))?;
                let length = positive_length(len)
                    .ok_or_else(|| malformed(line_no, "edge length must be strictly positive"))?;
                let endpoint = |n: &str| {
                    index.get(n).copied().ok_or_else(|| NetworkError::DanglingEdgeEndpoint {
                        line: line_no,
                        node: n.to_string(),
                    })
                };
                edges.push(Edge { from: endpoint(from)?, to: endpoint(to)?, length });
            }
        }
    }
    if section == Section::None {
        return Err(malformed(1, "missing `#nodes` section"));
    }
    RoadNetwork::from_parts(labels, index, edges, speed_mps)
}

fn malformed(line: usize, reason: &str) -> NetworkError {
    NetworkError::MalformedRow { line, reason: reason.to_string() }
}

pub fn load_network(path: &Path, speed_mps: f64) -> Result<RoadNetwork, NetworkError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => NetworkError::MissingFile(path.display().to_string()),
        _ => NetworkError::Io { path: path.display().to_string(), reason: e.to_string() },
    })?;
    parse_network_csv(&text, speed_mps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line_abc() -> RoadNetwork {
        parse_network_csv("#nodes\nA\nB\nC\n#edges\nA,B,100\nB,C,100\n", 10.0).unwrap()
    }

    #[test]
    fn minimal_csv() {
        let net = parse_network_csv("#nodes\nA\nB\n#edges\nA,B,100\n", 10.0).unwrap();
        assert_eq!(net.node_count(), 2);
        assert_eq!(net.edge_count(), 1);
    }

    #[test]
    fn dangling_endpoint_rejected() {
        let err = parse_network_csv("#nodes\nA\n#edges\nA,B,100\n", 10.0).unwrap_err();
        assert_eq!(err, NetworkError::DanglingEdgeEndpoint { line: 4, node: "B".into() });
    }

    #[test]
    fn empty_edge_section_is_valid_but_disconnected() {
        let net = parse_network_csv("#nodes\nA\nB\n#edges\n", 10.0).unwrap();
        assert_eq!(net.edge_count(), 0);
        assert!(matches!(
            net.shortest_path_by_label("A", "B"),
            Err(NetworkError::Unreachable { .. })
        ));
    }

    #[test]
    fn malformed_rows() {
        for bad in [
            "A\n#nodes\n",
            "#nodes\nA\n#edges\nA,A\n",
            "#nodes\nA\nB\n#edges\nA,B,abc\n",
            "#nodes\nA\nB\n#edges\nA,B,-3\n",
            "#nodes\nA\nB\n#edges\nA,B,0\n",
            "#nodes\nA\nA\n",
            "#edges\n",
        ] {
            assert!(
                matches!(parse_network_csv(bad, 10.0), Err(NetworkError::MalformedRow { .. })),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn missing_file() {
        let err = load_network(Path::new("/definitely/not/here.csv"), 10.0).unwrap_err();
        assert!(matches!(err, NetworkError::MissingFile(_)));
    }

    #[test]
    fn grid_counts() {
        let g = make_grid(1, 1, 100.0, 10.0).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
        let g = make_grid(2, 2, 100.0, 10.0).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (4, 8));
        let g = make_grid(3, 4, 100.0, 10.0).unwrap();
        assert_eq!(g.edge_count(), 2 * (3 * 3 + 4 * 2));
        assert_eq!(make_grid(0, 3, 100.0, 10.0).unwrap_err(), NetworkError::InvalidDimension);
        assert_eq!(make_grid(3, 3, 0.0, 10.0).unwrap_err(), NetworkError::InvalidDimension);
        assert_eq!(make_grid(3, 3, 10.0, 0.0).unwrap_err(), NetworkError::InvalidSpeed(0.0));
    }

    #[test]
    fn identity_path() {
        let net = line_abc();
        let a = net.node("A").unwrap();
        let p = net.shortest_path(a, a).unwrap();
        assert_eq!(p, ShortestPath { distance: Distance::ZERO, duration_s: 0.0, nodes: vec![a] });
    }

    #[test]
    fn line_path() {
        let net = line_abc();
        let p = net.shortest_path_by_label("A", "C").unwrap();
        assert_eq!(p.distance.meters(), 200.0);
        assert_eq!(p.duration_s, 20.0);
        let labels: Vec<_> = p.nodes.iter().map(|&n| net.label(n)).collect();
        assert_eq!(labels, ["A", "B", "C"]);
        // directed: no way back
        assert!(net.shortest_path_by_label("C", "A").is_err());
        assert!(matches!(
            net.shortest_path_by_label("A", "Z"),
            Err(NetworkError::UnknownNode(_))
        ));
    }

    #[test]
    fn triangle_inequality_on_small_grids() {
        for (r, c) in [(1, 5), (2, 3), (4, 4), (5, 5)] {
            let g = make_grid(r, c, 150.0, 7.0).unwrap();
            let nodes: Vec<_> = g.nodes().collect();
            for &a in &nodes {
                for &b in &nodes {
                    for &cc in &nodes {
                        let ab = g.distance(a, b).unwrap();
                        let bc = g.distance(b, cc).unwrap();
                        assert!(g.distance(a, cc).unwrap() <= ab + bc);
                    }
                }
            }
        }
    }

    /// Minimum over every simple directed path, found by depth-first enumeration.
    fn enumerate_min(
        n: usize,
        edges: &[(usize, usize, u64)],
        s: usize,
        t: usize,
    ) -> Option<u64> {
        fn go(
            u: usize,
            t: usize,
            acc: u64,
            seen: &mut Vec<bool>,
            edges: &[(usize, usize, u64)],
            best: &mut Option<u64>,
        ) {
            if u == t {
                *best = Some(best.map_or(acc, |b: u64| b.min(acc)));
                return;
            }
            for &(a, b, w) in edges {
                if a == u && !seen[b] {
                    seen[b] = true;
                    go(b, t, acc + w, seen, edges, best);
                    seen[b] = false;
                }
            }
        }
        let mut seen = vec![false; n];
        seen[s] = true;
        let mut best = None;
        go(s, t, 0, &mut seen, edges, &mut best);
        best
    }

    proptest! {
        #[test]
        fn matches_path_enumeration(
            n in 1usize..=6,
            raw in proptest::collection::vec((0usize..6, 0usize..6, 1u64..500), 0..14),
            speed in 1.0f64..20.0,
        ) {
            let edges: Vec<(usize, usize, u64)> =
                raw.into_iter().filter(|(a, b, _)| *a < n && *b < n && a != b).collect();
            let labels: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
            let spec: Vec<(String, String, f64)> = edges
                .iter()
                .map(|&(a, b, w)| (labels[a].clone(), labels[b].clone(), w as f64))
                .collect();
            let net = RoadNetwork::new(labels, &spec, speed).unwrap();
            for s in 0..n {
                for t in 0..n {
                    let expect = enumerate_min(n, &edges, s, t).map(|m| m * 1000);
                    let got = net.shortest_path(NodeId(s as u32), NodeId(t as u32));
                    match expect {
                        None => prop_assert!(got.is_err()),
                        Some(mm) => {
                            let p = got.unwrap();
                            prop_assert_eq!(p.distance.mm(), mm);
                            let m = p.distance.meters();
                            prop_assert!((p.duration_s * speed - m).abs() <= 1e-12 * m.max(1.0));
                            prop_assert_eq!(p.nodes.first().copied(), Some(NodeId(s as u32)));
                            prop_assert_eq!(p.nodes.last().copied(), Some(NodeId(t as u32)));
                            // the returned node sequence really has that length
                            let walked: u64 = p.nodes.windows(2).map(|w| {
                                edges.iter()
                                    .filter(|e| e.0 == w[0].index() && e.1 == w[1].index())
                                    .map(|e| e.2 * 1000)
                                    .min()
                                    .unwrap()
                            }).sum();
                            prop_assert_eq!(walked, mm);
                        }
                    }
                }
            }
        }
    }
}
