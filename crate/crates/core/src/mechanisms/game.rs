//! Cooperative games over platforms and their profit allocations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Money;

pub const MAX_PLAYERS: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("a game needs at least one player")]
    NoPlayers,
    #[error("{0} players exceed the limit of 12")]
    TooManyPlayers(usize),
    #[error("duplicate player `{0}`")]
    DuplicatePlayer(String),
    #[error("no value for coalition {{{0}}}")]
    MissingCoalition(String),
    #[error("coalition is empty")]
    EmptyCoalition,
}

/// Players and a characteristic function on every non-empty coalition.
/// Coalitions are bitmasks over player positions.
#[derive(Clone, Debug, PartialEq)]
pub struct CoalitionGame {
    players: Vec<String>,
    values: Vec<Money>,
}

impl CoalitionGame {
    pub fn new(players: Vec<String>, mut v: impl FnMut(u32) -> Option<Money>) -> Result<Self, GameError> {
        let n = players.len();
        if n == 0 {
            return Err(GameError::NoPlayers);
        }
        if n > MAX_PLAYERS {
            return Err(GameError::TooManyPlayers(n));
        }
        for (i, p) in players.iter().enumerate() {
            if players[..i].contains(p) {
                return Err(GameError::DuplicatePlayer(p.clone()));
            }
        }
        let mut values = vec![Money::ZERO; 1 << n];
        for mask in 1..(1u32 << n) {
            values[mask as usize] = v(mask).ok_or_else(|| GameError::MissingCoalition(describe(&players, mask)))?;
        }
        Ok(CoalitionGame { players, values })
    }

    pub fn players(&self) -> &[String] {
        &self.players
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn grand(&self) -> u32 {
        (1u32 << self.n()) - 1
    }

    pub fn value(&self, mask: u32) -> Result<Money, GameError> {
        if mask == 0 {
            return Err(GameError::EmptyCoalition);
        }
        Ok(self.values[mask as usize])
    }

    pub fn standalone(&self, i: usize) -> Money {
        self.values[1 << i]
    }

    pub fn grand_value(&self) -> Money {
        self.values[self.grand() as usize]
    }

    fn v(&self, mask: u32) -> i128 {
        self.values[mask as usize].mills() as i128
    }
}

fn describe(players: &[String], mask: u32) -> String {
    players.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, p)| p.as_str()).collect::<Vec<_>>().join(",")
}

/// Profit shares in dollars, one per player in game order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub players: Vec<String>,
    pub x: Vec<f64>,
}

fn factorial(k: usize) -> i128 {
    (1..=k as i128).product()
}

/// Exact Shapley values as numerators in mills over the common denominator `n!`.
pub fn shapley_exact(game: &CoalitionGame) -> (Vec<i128>, i128) {
    let n = game.n();
    let weights: Vec<i128> = (0..n).map(|s| factorial(s) * factorial(n - s - 1)).collect();
    let mut num = vec![0i128; n];
    for (i, acc) in num.iter_mut().enumerate() {
        let bit = 1u32 << i;
        for s in 0..(1u32 << n) {
            if s & bit != 0 {
                continue;
            }
            let without = if s == 0 { 0 } else { game.v(s) };
            *acc += weights[s.count_ones() as usize] * (game.v(s | bit) - without);
        }
    }
    (num, factorial(n))
}

pub fn shapley(game: &CoalitionGame) -> Allocation {
    let (num, den) = shapley_exact(game);
    Allocation {
        players: game.players.clone(),
        x: num.iter().map(|&k| k as f64 / den as f64 / 1000.0).collect(),
    }
}

/// Efficiency plus every coalition's rationality constraint, within `tol` dollars.
pub fn in_core(game: &CoalitionGame, x: &[f64], tol: f64) -> bool {
    if x.len() != game.n() {
        return false;
    }
    let sum = |mask: u32| (0..game.n()).filter(|i| mask & (1 << i) != 0).map(|i| x[i]).sum::<f64>();
    let full = game.grand();
    if (sum(full) - game.grand_value().dollars()).abs() > tol {
        return false;
    }
    (1..full).all(|s| sum(s) >= game.values[s as usize].dollars() - tol)
}
