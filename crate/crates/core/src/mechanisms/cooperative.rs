//! Core-constrained profit allocations solved as linear programs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::game::{Allocation, CoalitionGame};
use crate::solve::{solve_lp, LinearProgram, LpError, LpOutcome, Relation};

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("player `{0}` has non-positive standalone value")]
    NonpositiveStandalone(String),
    #[error("player `{0}` has non-positive contribution weight")]
    ZeroWeight(String),
    #[error("{got} weights given for {expected} players")]
    WeightCount { expected: usize, got: usize },
    #[error("costs and revenues must be non-negative and of equal length")]
    InvalidInput,
    #[error("contribution ratio has a zero or negative denominator")]
    ZeroDenominator,
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum CoreOutcome {
    /// `gap` is the optimal α (EPM) or β (contribution-based).
    Allocated { allocation: Allocation, gap: f64 },
    CoreEmpty,
}

/// Solves `min gap` subject to `gap ≥ (x_i − a_i)/s_i − (x_j − a_j)/s_j`
/// for all ordered pairs, the core constraints and `x ≥ 0`.
fn core_lp(game: &CoalitionGame, shift: &[f64], scale: &[f64]) -> Result<CoreOutcome, AllocError> {
    let n = game.n();
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut lp = LinearProgram::new(objective);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut row = vec![0.0; n + 1];
            row[i] = 1.0 / scale[i];
            row[j] = -1.0 / scale[j];
            row[n] = -1.0;
            lp.push(row, Relation::Le, shift[i] / scale[i] - shift[j] / scale[j]);
        }
    }
    let full = game.grand();
    for s in 1..full {
        let mut row: Vec<f64> = (0..n).map(|i| if s & (1 << i) != 0 { 1.0 } else { 0.0 }).collect();
        row.push(0.0);
        lp.push(row, Relation::Ge, game.value(s).expect("non-empty").dollars());
    }
    let mut row = vec![1.0; n];
    row.push(0.0);
    lp.push(row, Relation::Eq, game.grand_value().dollars());
    match solve_lp(&lp)? {
        LpOutcome::Optimal { x, .. } => Ok(CoreOutcome::Allocated {
            gap: x[n],
            allocation: Allocation { players: game.players().to_vec(), x: x[..n].to_vec() },
        }),
        LpOutcome::Infeasible => Ok(CoreOutcome::CoreEmpty),
        LpOutcome::Unbounded => unreachable!("gap is bounded below by zero"),
    }
}

/// Equal Profit Method: minimise the largest gap in relative profit `x_i / v({i})`.
pub fn epm_allocate(game: &CoalitionGame) -> Result<CoreOutcome, AllocError> {
    let mut scale = Vec::with_capacity(game.n());
    for i in 0..game.n() {
        let v = game.standalone(i);
        if !v.is_positive() {
            return Err(AllocError::NonpositiveStandalone(game.players()[i].clone()));
        }
        scale.push(v.dollars());
    }
    core_lp(game, &vec![0.0; game.n()], &scale)
}

/// Minimises the largest gap in profit gain per unit of contribution weight.
pub fn contribution_allocate(game: &CoalitionGame, w: &[f64]) -> Result<CoreOutcome, AllocError> {
    if w.len() != game.n() {
        return Err(AllocError::WeightCount { expected: game.n(), got: w.len() });
    }
    if let Some(i) = w.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(AllocError::ZeroWeight(game.players()[i].clone()));
    }
    let shift: Vec<f64> = (0..game.n()).map(|i| game.standalone(i).dollars()).collect();
    core_lp(game, &shift, w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContributionWeights {
    pub w: Vec<f64>,
    /// Profit margin on cost: net revenue over total cost.
    pub theta1: f64,
    /// Gross profit margin: net revenue over total profit.
    pub theta2: f64,
    /// Set when net revenue and profit coincide, so that `theta2 == 1`.
    pub theta2_is_unity: bool,
}

/// Weights from per-platform costs and revenues, taking total profit equal
/// to total net revenue.
pub fn contribution_weights(costs: &[f64], revenues: &[f64]) -> Result<ContributionWeights, AllocError> {
    let net: f64 = revenues.iter().sum::<f64>() - costs.iter().sum::<f64>();
    contribution_weights_with_profit(costs, revenues, net)
}

/// `w_i = (θ1 c_i + θ2 R_i) / (θ1 Σc + θ2 ΣR)`.
pub fn contribution_weights_with_profit(
    costs: &[f64],
    revenues: &[f64],
    total_profit: f64,
) -> Result<ContributionWeights, AllocError> {
    let valid = |v: &&f64| v.is_finite() && **v >= 0.0;
    if costs.len() != revenues.len() || costs.is_empty() || !costs.iter().all(|v| valid(&v)) || !revenues.iter().all(|v| valid(&v)) {
        return Err(AllocError::InvalidInput);
    }
    let sum_c: f64 = costs.iter().sum();
    let sum_r: f64 = revenues.iter().sum();
    let net = sum_r - sum_c;
    if !(net > 0.0 && sum_c > 0.0 && total_profit > 0.0) {
        return Err(AllocError::ZeroDenominator);
    }
    let theta1 = net / sum_c;
    let theta2 = net / total_profit;
    let den = theta1 * sum_c + theta2 * sum_r;
    let w = costs.iter().zip(revenues).map(|(c, r)| (theta1 * c + theta2 * r) / den).collect();
    Ok(ContributionWeights { w, theta1, theta2, theta2_is_unity: (theta2 - 1.0).abs() < 1e-12 })
}
