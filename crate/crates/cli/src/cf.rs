//! Characteristic function files.
//!
//! One coalition per line as `S:value`, where `S` lists 1-based player
//! numbers separated by commas, optionally inside braces:
//!
//! ```text
//! # seller 1, buyers 2 and 3
//! 1,2: 2
//! {1,3}: 5
//! 1,2,3: 5
//! ```
//!
//! Blank lines and `#` comments are ignored. Coalitions that are not
//! listed are worth 0; the player count is the largest number seen.

use std::path::Path;

use csof_core::bargain::{Coalition, MAX_PLAYERS};
use csof_core::CharacteristicFunction;

use crate::error::{CliError, Result};

pub fn parse(text: &str, path: &Path) -> Result<CharacteristicFunction> {
    let fail = |line: usize, reason: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut entries: Vec<(usize, Coalition, f64)> = Vec::new();
    let mut players = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (set, value) = body
            .split_once(':')
            .ok_or_else(|| fail(line, "expected `S:value`".into()))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| fail(line, format!("`{}` is not a number", value.trim())))?;
        if !(value.is_finite() && value >= 0.0) {
            return Err(fail(line, "values must be finite and >= 0".into()));
        }
        let set = set.trim();
        let set = set
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .unwrap_or(set);
        let mut coalition: Coalition = 0;
        for tok in set.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let p: usize = tok
                .parse()
                .map_err(|_| fail(line, format!("`{tok}` is not a player number")))?;
            if p == 0 || p > MAX_PLAYERS {
                return Err(fail(
                    line,
                    format!("player numbers run from 1 to {MAX_PLAYERS}"),
                ));
            }
            if coalition & (1 << (p - 1)) != 0 {
                return Err(fail(line, format!("player {p} listed twice")));
            }
            coalition |= 1 << (p - 1);
            players = players.max(p);
        }
        if coalition == 0 && value != 0.0 {
            return Err(fail(line, "the empty coalition is worth 0".into()));
        }
        if let Some(&(first, _, _)) = entries.iter().find(|e| e.1 == coalition) {
            return Err(fail(
                line,
                format!("coalition already given on line {first}"),
            ));
        }
        entries.push((line, coalition, value));
    }
    if players == 0 {
        return Err(fail(
            text.lines().count().max(1),
            "no coalitions given".into(),
        ));
    }
    let mut f = CharacteristicFunction::new(players)?;
    for (line, coalition, value) in entries {
        f.set(coalition, value)
            .map_err(|e| fail(line, e.to_string()))?;
    }
    Ok(f)
}
