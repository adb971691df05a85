//! Credit-point bargaining as a transferable-utility cooperative game.
//!
//! Players are indexed from 0 and coalitions are bitmasks over those
//! indices. The core is enumerated on a lattice of `granularity` units by
//! depth-first search with partial-sum pruning.

use crate::{Error, Result};

/// Largest supported player count; values are stored for every subset.
pub const MAX_PLAYERS: usize = 16;

const TOL: f64 = 1e-9;

pub type Coalition = u32;

pub fn coalition_of(players: &[usize]) -> Coalition {
    players.iter().fold(0, |m, &i| m | (1 << i))
}

pub fn members(coalition: Coalition) -> impl Iterator<Item = usize> {
    (0..32).filter(move |i| coalition & (1 << i) != 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicFunction {
    players: usize,
    values: Vec<f64>,
}

impl CharacteristicFunction {
    /// The zero game on `players` players.
    pub fn new(players: usize) -> Result<Self> {
        if players == 0 || players > MAX_PLAYERS {
            return Err(Error::param(
                "players",
                format!("must be in 1..={MAX_PLAYERS}"),
            ));
        }
        Ok(CharacteristicFunction {
            players,
            values: vec![0.0; 1 << players],
        })
    }

    /// Builds from a value per coalition, indexed by bitmask.
    pub fn from_values(players: usize, values: Vec<f64>) -> Result<Self> {
        let mut f = Self::new(players)?;
        if values.len() != f.values.len() {
            return Err(Error::param("values", "need one value per coalition"));
        }
        for (mask, v) in values.into_iter().enumerate() {
            f.set(mask as Coalition, v)?;
        }
        Ok(f)
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn grand(&self) -> Coalition {
        ((1u64 << self.players) - 1) as Coalition
    }

    pub fn value(&self, coalition: Coalition) -> f64 {
        self.values[(coalition & self.grand()) as usize]
    }

    pub fn set(&mut self, coalition: Coalition, value: f64) -> Result<()> {
        if coalition & !self.grand() != 0 {
            return Err(Error::UnknownPlayer(
                members(coalition & !self.grand()).next().unwrap_or(0),
            ));
        }
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::param("value", "must be finite and non-negative"));
        }
        if coalition == 0 && value != 0.0 {
            return Err(Error::param("value", "the empty coalition is worth 0"));
        }
        self.values[coalition as usize] = value;
        Ok(())
    }

    pub fn coalitions(&self) -> impl Iterator<Item = Coalition> {
        0..=self.grand()
    }

    pub fn marginal_contribution(&self, player: usize) -> Result<f64> {
        if player >= self.players {
            return Err(Error::UnknownPlayer(player));
        }
        Ok(self.marginal_contribution_set(1 << player))
    }

    /// f(N) − f(N \ S).
    pub fn marginal_contribution_set(&self, coalition: Coalition) -> f64 {
        let n = self.grand();
        self.value(n) - self.value(n & !coalition)
    }

    pub fn is_superadditive(&self) -> bool {
        self.coalitions().all(|s| {
            self.coalitions()
                .filter(|t| s & t == 0)
                .all(|t| self.value(s | t) + TOL >= self.value(s) + self.value(t))
        })
    }
}

/// Division of value among players; `shares[i]` goes to player `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub shares: Vec<f64>,
}

impl Allocation {
    pub fn new(shares: Vec<f64>) -> Self {
        Allocation { shares }
    }

    /// x(S).
    pub fn coalition_sum(&self, coalition: Coalition) -> f64 {
        members(coalition)
            .filter(|&i| i < self.shares.len())
            .map(|i| self.shares[i])
            .sum()
    }

    fn covers(&self, f: &CharacteristicFunction) -> bool {
        self.shares.len() == f.players()
    }
}

pub fn is_individually_rational(x: &Allocation, f: &CharacteristicFunction) -> bool {
    x.covers(f) && (0..f.players()).all(|i| x.shares[i] + TOL >= f.value(1 << i))
}

pub fn is_efficient(x: &Allocation, f: &CharacteristicFunction) -> bool {
    x.covers(f) && (x.coalition_sum(f.grand()) - f.value(f.grand())).abs() <= TOL
}

pub fn satisfies_mc_principle(x: &Allocation, f: &CharacteristicFunction) -> bool {
    x.covers(f)
        && (0..f.players()).all(|i| x.shares[i] <= f.marginal_contribution_set(1 << i) + TOL)
}

pub fn in_core(x: &Allocation, f: &CharacteristicFunction) -> bool {
    is_efficient(x, f)
        && f.coalitions()
            .all(|s| x.coalition_sum(s) + TOL >= f.value(s))
}

/// All core allocations whose shares are non-negative multiples of
/// `granularity`, in lexicographic order.
pub fn enumerate_core(f: &CharacteristicFunction, granularity: f64) -> Result<Vec<Allocation>> {
    if !(granularity.is_finite() && granularity > 0.0) {
        return Err(Error::param("granularity", "must be positive"));
    }
    let grand_units = f.value(f.grand()) / granularity;
    let total = grand_units.round();
    if (grand_units - total).abs() > 1e-6 {
        return Err(Error::param(
            "granularity",
            "the grand coalition value must be a multiple of it",
        ));
    }
    let total = total as i64;
    let required: Vec<i64> = f
        .coalitions()
        .map(|s| (f.value(s) / granularity - 1e-9).ceil() as i64)
        .collect();

    let mut search = CoreSearch {
        n: f.players(),
        total,
        required,
        units: vec![0; f.players()],
        found: Vec::new(),
    };
    search.descend(0, 0);
    Ok(search
        .found
        .into_iter()
        .map(|u| Allocation::new(u.into_iter().map(|k| k as f64 * granularity).collect()))
        .collect())
}

struct CoreSearch {
    n: usize,
    total: i64,
    required: Vec<i64>,
    units: Vec<i64>,
    found: Vec<Vec<i64>>,
}

impl CoreSearch {
    fn descend(&mut self, player: usize, used: i64) {
        let remaining = self.total - used;
        if player + 1 == self.n {
            self.units[player] = remaining;
            if self.feasible(player) {
                self.found.push(self.units.clone());
            }
            return;
        }
        for k in 0..=remaining {
            self.units[player] = k;
            if self.feasible(player) {
                self.descend(player + 1, used + k);
            }
        }
    }

    /// Every coalition can still reach its requirement with players
    /// `0..=last` fixed and the rest of the budget going to its free members.
    fn feasible(&self, last: usize) -> bool {
        let fixed: Coalition = ((1u64 << (last + 1)) - 1) as Coalition;
        let used: i64 = self.units[..=last].iter().sum();
        let slack = self.total - used;
        (0..self.required.len()).all(|s| {
            let s = s as Coalition;
            let assigned: i64 = members(s & fixed).map(|i| self.units[i]).sum();
            let open = if s & !fixed != 0 { slack } else { 0 };
            assigned + open >= self.required[s as usize]
        })
    }
}

/// One seller (player 0) offering a credit point at `price` to buyers
/// (players 1..) with the given valuations. A coalition is worth the best
/// surplus of a buyer it contains, if it also contains the seller.
pub fn buyer_seller_cf(price: f64, valuations: &[f64]) -> Result<CharacteristicFunction> {
    if valuations.is_empty() {
        return Err(Error::param("valuations", "need at least one buyer"));
    }
    if !(price.is_finite() && price >= 0.0)
        || valuations.iter().any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(Error::param(
            "valuations",
            "prices and valuations must be >= 0",
        ));
    }
    let mut f = CharacteristicFunction::new(valuations.len() + 1)?;
    for s in f.coalitions().collect::<Vec<_>>() {
        if s & 1 == 0 {
            continue;
        }
        let best = members(s)
            .filter(|&i| i >= 1)
            .map(|i| valuations[i - 1] - price)
            .filter(|gain| *gain >= 0.0)
            .fold(0.0f64, f64::max);
        f.set(s, best)?;
    }
    Ok(f)
}
