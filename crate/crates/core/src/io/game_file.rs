use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{json_error, read_text, IoError};
use crate::mechanisms::CoalitionGame;
use crate::model::Money;

/// `{"players": [...], "v": {"1": 10.0, "1,2": 36.0}}`, values in dollars.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameFile {
    players: Vec<Value>,
    v: BTreeMap<String, f64>,
}

pub fn load_game(path: &Path) -> Result<CoalitionGame, IoError> {
    parse_game_json(&read_text(path)?)
}

pub fn parse_game_json(text: &str) -> Result<CoalitionGame, IoError> {
    let file: GameFile = serde_json::from_str(text).map_err(|e| json_error("game", e))?;
    let players: Vec<String> = file
        .players
        .iter()
        .map(|p| match p {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(IoError::validation("players", "player ids are strings or numbers")),
        })
        .collect::<Result<_, _>>()?;
    if players.len() > crate::mechanisms::game::MAX_PLAYERS {
        return Err(IoError::validation("players", format!("at most {} players", crate::mechanisms::game::MAX_PLAYERS)));
    }
    let index: HashMap<&str, usize> = players.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut values: HashMap<u32, Money> = HashMap::new();
    for (key, &val) in &file.v {
        let mut mask = 0u32;
        for part in key.split(',').map(str::trim) {
            let i = *index.get(part).ok_or_else(|| IoError::validation(format!("v[{key}]"), format!("unknown player `{part}`")))?;
            if mask & (1 << i) != 0 {
                return Err(IoError::validation(format!("v[{key}]"), format!("player `{part}` repeated")));
            }
            mask |= 1 << i;
        }
        if !(val.is_finite() && val.abs() < 1e12) {
            return Err(IoError::validation(format!("v[{key}]"), "value must be a finite dollar amount"));
        }
        if values.insert(mask, Money::from_dollars(val)).is_some() {
            return Err(IoError::validation(format!("v[{key}]"), "coalition listed twice"));
        }
    }
    CoalitionGame::new(players, |m| values.get(&m).copied()).map_err(|e| IoError::validation("v", e))
}

/// Coalition keys list players in game order.
pub fn game_to_json(game: &CoalitionGame) -> String {
    let players = game.players();
    let v = (1..=game.grand())
        .map(|m| {
            let key: Vec<&str> = (0..game.n()).filter(|i| m & (1 << i) != 0).map(|i| players[i].as_str()).collect();
            (key.join(","), game.value(m).expect("non-empty").dollars())
        })
        .collect();
    let file = GameFile { players: players.iter().map(|p| Value::String(p.clone())).collect(), v };
    let mut out = serde_json::to_string_pretty(&file).expect("serializable");
    out.push('\n');
    out
}
