//! Exact trip-vehicle assignment by LP-based branch and bound.
//!
//! Costs are integers in units of 1e-4 (minutes, miles or dollars), so
//! every comparison between candidate assignments is exact. Ties on the
//! objective go to fewer chosen trips, then to the lexicographically
//! smallest set of chosen edge ids.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lp::{solve_lp, LinearProgram, LpError, LpOutcome, Relation};
use crate::model::RequestId;
use crate::rtv::{RtvGraph, TvEdge};

/// Objective units per whole minute, mile or dollar.
pub const SCORE_SCALE: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Added rider delay in minutes plus the penalty per unserved request.
    MinDelayPenalty,
    /// Added vehicle miles plus the penalty per unserved request.
    MinVmtPenalty,
    /// Negated profit; unserved requests cost nothing.
    MaxProfit,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::MinDelayPenalty => "min_delay_penalty",
            Objective::MinVmtPenalty => "min_vmt_penalty",
            Objective::MaxProfit => "max_profit",
        }
    }

    pub fn parse(s: &str) -> Option<Objective> {
        [Objective::MinDelayPenalty, Objective::MinVmtPenalty, Objective::MaxProfit]
            .into_iter()
            .find(|o| o.name() == s)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AssignmentProblem<'a> {
    pub graph: &'a RtvGraph,
    pub objective: Objective,
    pub penalty: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    /// Chosen edge ids into `graph.edges`, ascending.
    pub chosen: Vec<usize>,
    pub unserved: Vec<RequestId>,
    /// Objective in units of 1e-4.
    pub score: i64,
}

impl Assignment {
    pub fn objective_value(&self) -> f64 {
        self.score as f64 / SCORE_SCALE
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("penalty must be finite and non-negative, got {0}")]
    InvalidPenalty(f64),
    #[error("instance has {requests} requests and {vehicles} vehicles; brute force allows 8 and 5")]
    TooLarge { requests: usize, vehicles: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
}

fn scaled(v: f64) -> i64 {
    (v * SCORE_SCALE).round() as i64
}

pub fn edge_cost(e: &TvEdge, objective: Objective) -> i64 {
    match objective {
        Objective::MinDelayPenalty => scaled(e.added_delay_s / 60.0),
        Objective::MinVmtPenalty => scaled(e.added_distance.miles()),
        Objective::MaxProfit => -(e.profit.mills() * 10),
    }
}

pub fn penalty_cost(p: &AssignmentProblem) -> Result<i64, SolveError> {
    if !(p.penalty.is_finite() && p.penalty >= 0.0) {
        return Err(SolveError::InvalidPenalty(p.penalty));
    }
    Ok(match p.objective {
        Objective::MaxProfit => 0,
        _ => scaled(p.penalty),
    })
}

/// Builds the assignment record for a chosen edge set.
pub(crate) fn finish(p: &AssignmentProblem, chosen: Vec<usize>, pen: i64) -> Assignment {
    let g = p.graph;
    let mut served: Vec<RequestId> = chosen.iter().flat_map(|&e| g.trips[g.edges[e].trip].iter().copied()).collect();
    served.sort();
    let unserved: Vec<RequestId> = g.requests.iter().copied().filter(|r| served.binary_search(r).is_err()).collect();
    let score = chosen.iter().map(|&e| edge_cost(&g.edges[e], p.objective)).sum::<i64>() + pen * unserved.len() as i64;
    Assignment { chosen, unserved, score }
}

/// A 0/1 program over edges: each vehicle and each request used at most once.
struct Packing {
    /// Resources (vehicle index, then request indices) touched by each variable.
    uses: Vec<Vec<usize>>,
    resources: usize,
}

#[derive(Clone)]
struct Node {
    bound: f64,
    seq: u64,
    fix: Vec<Option<bool>>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    /// Max-heap order: lowest bound first, then newest node.
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then(self.seq.cmp(&o.seq))
    }
}

impl Packing {
    fn new(g: &RtvGraph, vars: &[usize]) -> Self {
        let mut index: BTreeMap<(u8, u32), usize> = BTreeMap::new();
        let mut uses = Vec::with_capacity(vars.len());
        for &e in vars {
            let edge = &g.edges[e];
            let mut u = Vec::new();
            let next = index.len();
            u.push(*index.entry((0, edge.vehicle.0)).or_insert(next));
            for r in &g.trips[edge.trip] {
                let next = index.len();
                u.push(*index.entry((1, r.0)).or_insert(next));
            }
            uses.push(u);
        }
        Packing { uses, resources: index.len() }
    }

    fn conflicts(&self, a: usize, b: usize) -> bool {
        self.uses[a].iter().any(|r| self.uses[b].contains(r))
    }

    /// Propagates fixings: a variable sharing a resource with a variable
    /// fixed to 1 is fixed to 0. Returns false when two 1-fixings clash.
    fn propagate(&self, fix: &mut [Option<bool>]) -> bool {
        let ones: Vec<usize> = (0..fix.len()).filter(|&i| fix[i] == Some(true)).collect();
        for (k, &a) in ones.iter().enumerate() {
            if ones[k + 1..].iter().any(|&b| self.conflicts(a, b)) {
                return false;
            }
        }
        for i in 0..fix.len() {
            if fix[i].is_none() && ones.iter().any(|&a| self.conflicts(a, i)) {
                fix[i] = Some(false);
            }
        }
        true
    }

    fn relax(&self, obj: &[i64], fix: &[Option<bool>]) -> Result<Option<(f64, Vec<f64>)>, LpError> {
        let free: Vec<usize> = (0..fix.len()).filter(|&i| fix[i].is_none()).collect();
        let base = (0..fix.len()).filter(|&i| fix[i] == Some(true)).map(|i| obj[i]).sum::<i64>() as f64;
        let mut lp = LinearProgram::new(free.iter().map(|&i| obj[i] as f64).collect());
        for res in 0..self.resources {
            let row: Vec<f64> = free.iter().map(|&i| if self.uses[i].contains(&res) { 1.0 } else { 0.0 }).collect();
            if row.iter().any(|&v| v > 0.0) {
                lp.push(row, Relation::Le, 1.0);
            }
        }
        if free.is_empty() {
            let x = fix.iter().map(|f| if *f == Some(true) { 1.0 } else { 0.0 }).collect();
            return Ok(Some((base, x)));
        }
        match solve_lp(&lp)? {
            LpOutcome::Optimal { value, x } => {
                let mut full = vec![0.0; fix.len()];
                for (k, &i) in free.iter().enumerate() {
                    full[i] = x[k];
                }
                for i in 0..fix.len() {
                    if fix[i] == Some(true) {
                        full[i] = 1.0;
                    }
                }
                Ok(Some((value + base, full)))
            }
            LpOutcome::Infeasible => Ok(None),
            LpOutcome::Unbounded => unreachable!("packing relaxations are bounded"),
        }
    }

    fn integer_ok(&self, x: &[bool]) -> bool {
        let mut used = vec![false; self.resources];
        for (i, _) in x.iter().enumerate().filter(|(_, &b)| b) {
            for &r in &self.uses[i] {
                if used[r] {
                    return false;
                }
                used[r] = true;
            }
        }
        true
    }

    /// Minimises `obj·x` over integer solutions honouring `fix`. With a
    /// `cutoff`, only solutions scoring at most that are accepted and the
    /// first one found is returned.
    fn branch_and_bound(
        &self,
        obj: &[i64],
        fix: Vec<Option<bool>>,
        cutoff: Option<i64>,
    ) -> Result<Option<(i64, Vec<bool>)>, LpError> {
        let mut best: Option<(i64, Vec<bool>)> = None;
        let limit = |best: &Option<(i64, Vec<bool>)>| match best {
            Some((b, _)) => Some(*b - 1),
            None => cutoff,
        };
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        let mut fix = fix;
        if !self.propagate(&mut fix) {
            return Ok(None);
        }
        heap.push(Node { bound: f64::NEG_INFINITY, seq, fix });
        while let Some(node) = heap.pop() {
            if limit(&best).is_some_and(|l| node.bound > l as f64 + 0.5) {
                break;
            }
            let Some((bound, x)) = self.relax(obj, &node.fix)? else { continue };
            if limit(&best).is_some_and(|l| bound > l as f64 + 0.5) {
                continue;
            }
            let frac = (0..x.len())
                .filter(|&i| node.fix[i].is_none())
                .map(|i| (i, x[i].min(1.0 - x[i])))
                .filter(|&(_, f)| f > 1e-6)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            match frac {
                None => {
                    let xi: Vec<bool> = x.iter().map(|&v| v > 0.5).collect();
                    if !self.integer_ok(&xi) {
                        continue;
                    }
                    let val: i64 = xi.iter().zip(obj).filter(|(&b, _)| b).map(|(_, &c)| c).sum();
                    if limit(&best).is_none_or(|l| val <= l) {
                        best = Some((val, xi));
                        if cutoff.is_some() {
                            return Ok(best);
                        }
                    }
                }
                Some((i, _)) => {
                    for val in [false, true] {
                        let mut f = node.fix.clone();
                        f[i] = Some(val);
                        if self.propagate(&mut f) {
                            seq += 1;
                            heap.push(Node { bound, seq, fix: f });
                        }
                    }
                }
            }
        }
        Ok(best)
    }
}

/// Groups candidate edges into independent blocks sharing no vehicle or request.
fn components(g: &RtvGraph, vars: &[usize]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..vars.len()).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut owner: BTreeMap<(u8, u32), usize> = BTreeMap::new();
    for (k, &e) in vars.iter().enumerate() {
        let edge = &g.edges[e];
        let keys = std::iter::once((0u8, edge.vehicle.0)).chain(g.trips[edge.trip].iter().map(|r| (1u8, r.0)));
        for key in keys {
            match owner.get(&key) {
                Some(&o) => {
                    let (a, b) = (root(&mut parent, o), root(&mut parent, k));
                    parent[a.max(b)] = a.min(b);
                }
                None => {
                    owner.insert(key, k);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..vars.len() {
        let r = root(&mut parent, k);
        groups.entry(r).or_default().push(vars[k]);
    }
    groups.into_values().collect()
}

fn solve_block(g: &RtvGraph, vars: &[usize], gain: &[i64], exact_ties: bool) -> Result<Vec<usize>, LpError> {
    let pk = Packing::new(g, vars);
    let n = vars.len();
    let none = vec![None; n];
    if !exact_ties {
        let (_, x) = pk.branch_and_bound(gain, none, None)?.expect("empty assignment is feasible");
        return Ok((0..n).filter(|&i| x[i]).map(|i| vars[i]).collect());
    }
    // Objective first, trip count second, folded into one integer cost.
    let w = n as i64 + 1;
    let cost: Vec<i64> = gain.iter().map(|&c| c * w + 1).collect();
    let (target, mut inc) = pk.branch_and_bound(&cost, none.clone(), None)?.expect("empty assignment is feasible");
    let mut fix = none;
    // Variables are in ascending edge-id order, so fixing greedily from the
    // front yields the lexicographically smallest optimal set.
    for i in 0..n {
        if fix[i].is_some() {
            continue;
        }
        if inc[i] {
            fix[i] = Some(true);
            pk.propagate(&mut fix);
            continue;
        }
        let mut trial = fix.clone();
        trial[i] = Some(true);
        match pk.branch_and_bound(&cost, trial, Some(target))? {
            Some((_, sol)) => {
                inc = sol;
                fix[i] = Some(true);
                pk.propagate(&mut fix);
            }
            None => fix[i] = Some(false),
        }
    }
    Ok((0..n).filter(|&i| inc[i]).map(|i| vars[i]).collect())
}

fn solve_inner(p: &AssignmentProblem, exact_ties: bool) -> Result<Assignment, SolveError> {
    let pen = penalty_cost(p)?;
    let g = p.graph;
    // Only edges that beat leaving their requests unserved can be optimal.
    let mut vars = Vec::new();
    let mut gain_of = BTreeMap::new();
    for (e, edge) in g.edges.iter().enumerate() {
        let gain = edge_cost(edge, p.objective) - pen * g.trips[edge.trip].len() as i64;
        if gain < 0 {
            vars.push(e);
            gain_of.insert(e, gain);
        }
    }
    let mut chosen = Vec::new();
    for block in components(g, &vars) {
        let gain: Vec<i64> = block.iter().map(|e| gain_of[e]).collect();
        chosen.extend(solve_block(g, &block, &gain, exact_ties)?);
    }
    chosen.sort();
    Ok(finish(p, chosen, pen))
}

/// Optimal assignment with full tie-breaking.
pub fn solve_assignment(p: &AssignmentProblem) -> Result<Assignment, SolveError> {
    solve_inner(p, true)
}

/// Optimal objective only; the chosen set is some optimum, not the canonical one.
pub fn optimal_score(p: &AssignmentProblem) -> Result<i64, SolveError> {
    solve_inner(p, false).map(|a| a.score)
}
