//! Dense two-phase simplex with Bland's anti-cycling rule.

use thiserror::Error;

const EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 1_000_000;
/// Consecutive degenerate pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Constraint { coeffs, relation, rhs }
    }
}

/// `min c·x` subject to the constraints and `x_j ≥ lower_bounds[j]`
/// (`None` leaves the variable free).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower_bounds: Vec<Option<f64>>,
}

impl LinearProgram {
    /// All variables non-negative.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram { objective, constraints: Vec::new(), lower_bounds: vec![Some(0.0); n] }
    }

    pub fn push(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint::new(coeffs, relation, rhs));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("constraint {row} has {got} coefficients, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, got: usize },
    #[error("{0} lower bounds given for {1} variables")]
    BoundsMismatch(usize, usize),
    #[error("non-finite coefficient in the program")]
    NonFinite,
    #[error("pivot limit reached")]
    IterationLimit,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
    /// Reduced costs of the current phase; the last entry is minus the value.
    obj: Vec<f64>,
}

enum Step {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn price(&mut self, cost: &[f64]) {
        let mut obj = cost.to_vec();
        obj.push(0.0);
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
        self.obj = obj;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = std::mem::take(&mut self.rows[r]);
        for row in self.rows.iter_mut().chain(std::iter::once(&mut self.obj)) {
            if row.is_empty() {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.rows[r] = pivot_row;
        self.basis[r] = c;
    }

    /// Dantzig pricing until pivots stall, then Bland's rule for the rest
    /// of the phase, which cannot cycle.
    fn run(&mut self, allowed: &[bool], pivots: &mut usize) -> Result<Step, LpError> {
        let mut bland = false;
        let mut stalled = 0usize;
        loop {
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.width {
                let d = self.obj[j];
                if !allowed[j] || d >= -EPS {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.is_none_or(|(_, best)| d < best) {
                    entering = Some((j, d));
                }
            }
            let Some((c, _)) = entering else { return Ok(Step::Optimal) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - EPS || (ratio <= best + EPS && self.basis[i] < self.basis[k]) {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else { return Ok(Step::Unbounded) };
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(LpError::IterationLimit);
            }
            if ratio <= EPS {
                stalled += 1;
                bland |= stalled > STALL_LIMIT;
            } else {
                stalled = 0;
            }
            self.pivot(r, c);
        }
    }

    fn value(&self) -> f64 {
        -self.obj[self.width]
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    let n = lp.objective.len();
    if lp.lower_bounds.len() != n {
        return Err(LpError::BoundsMismatch(lp.lower_bounds.len(), n));
    }
    for (row, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(LpError::DimensionMismatch { row, expected: n, got: c.coeffs.len() });
        }
        if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite);
        }
    }
    if lp.objective.iter().chain(lp.lower_bounds.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(LpError::NonFinite);
    }

    // Column map: shifted variables take one column, free ones two.
    let mut cols: Vec<(usize, f64)> = Vec::new();
    let mut shift = vec![0.0; n];
    for j in 0..n {
        match lp.lower_bounds[j] {
            Some(l) => {
                shift[j] = l;
                cols.push((j, 1.0));
            }
            None => {
                cols.push((j, 1.0));
                cols.push((j, -1.0));
            }
        }
    }
    let ns = cols.len();
    let m = lp.constraints.len();
    let mut rel = Vec::with_capacity(m);
    let mut a = Vec::with_capacity(m);
    let mut b = Vec::with_capacity(m);
    for c in &lp.constraints {
        let mut row: Vec<f64> = cols.iter().map(|&(j, s)| s * c.coeffs[j]).collect();
        let mut rhs = c.rhs - c.coeffs.iter().zip(&shift).map(|(x, l)| x * l).sum::<f64>();
        let mut r = c.relation;
        if rhs < 0.0 {
            rhs = -rhs;
            row.iter_mut().for_each(|v| *v = -*v);
            r = match r {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        rel.push(r);
        a.push(row);
        b.push(rhs);
    }
    let n_slack = rel.iter().filter(|r| **r != Relation::Eq).count();
    let n_art = rel.iter().filter(|r| **r != Relation::Le).count();
    let width = ns + n_slack + n_art;
    let art_start = ns + n_slack;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut s, mut t) = (ns, art_start);
    for i in 0..m {
        let mut row = vec![0.0; width + 1];
        row[..ns].copy_from_slice(&a[i]);
        row[width] = b[i];
        match rel[i] {
            Relation::Le => {
                row[s] = 1.0;
                basis.push(s);
                s += 1;
            }
            Relation::Ge => {
                row[s] = -1.0;
                s += 1;
                row[t] = 1.0;
                basis.push(t);
                t += 1;
            }
            Relation::Eq => {
                row[t] = 1.0;
                basis.push(t);
                t += 1;
            }
        }
        rows.push(row);
    }
    let mut tab = Tableau { rows, basis, width, obj: Vec::new() };
    let mut pivots = 0;

    if n_art > 0 {
        let mut cost1 = vec![0.0; width];
        cost1[art_start..].iter_mut().for_each(|v| *v = 1.0);
        let all = vec![true; width];
        tab.price(&cost1);
        tab.run(&all, &mut pivots)?;
        let scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if tab.value() > EPS * scale * 1e3 {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive zero-level artificials out; drop rows that are redundant.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= art_start {
                match (0..art_start).find(|&j| tab.rows[i][j].abs() > EPS && !tab.basis.contains(&j)) {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.rows.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut cost2 = vec![0.0; width];
    for (k, &(j, s)) in cols.iter().enumerate() {
        cost2[k] = s * lp.objective[j];
    }
    let allowed: Vec<bool> = (0..width).map(|j| j < art_start).collect();
    tab.price(&cost2);
    match tab.run(&allowed, &mut pivots)? {
        Step::Unbounded => Ok(LpOutcome::Unbounded),
        Step::Optimal => {
            let mut y = vec![0.0; width];
            for (i, &bv) in tab.basis.iter().enumerate() {
                y[bv] = tab.rhs(i);
            }
            let mut x = shift;
            for (k, &(j, s)) in cols.iter().enumerate() {
                x[j] += s * y[k];
            }
            let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            Ok(LpOutcome::Optimal { value, x })
        }
    }
}
