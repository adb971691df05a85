//! Conflict resolution between vehicles that claim the same token.
//!
//! A pair game is decided by driving mode, then by credit points, then by a
//! draw against the light's own draw. Winners pay one credit to losers, so
//! the ledger total never changes. Groups larger than two play a ladder of
//! pair games in ascending VIN order.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::token::Vin;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Relaxed = 0,
    Normal = 1,
    Rush = 2,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Relaxed, Mode::Normal, Mode::Rush];

    pub fn value(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Player {
    pub vin: Vin,
    pub mode: Mode,
    pub credits: i64,
}

/// Tie-break level that decided a pair game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    Mode,
    Credits,
    Random,
}

impl Tier {
    pub fn label(self) -> &'static str {
        match self {
            Tier::Mode => "mode",
            Tier::Credits => "credits",
            Tier::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairOutcome {
    pub winner: Vin,
    pub loser: Vin,
    pub tier: Tier,
}

/// Credits moved from winner to loser by every pair game.
pub const CREDIT_TRANSFER: i64 = 1;

/// Orders the draws `a` and `b` by distance to the light's draw `light`;
/// `Less` means `a` is closer.
pub fn closer_to_light(a: f64, b: f64, light: f64) -> Ordering {
    (a - light).abs().total_cmp(&(b - light).abs())
}

/// Plays one pair game. `rng` supplies the vehicles' draws and `light_rng`
/// the light's draw; both are only touched when modes and credits tie.
pub fn play_pair<R: Rng + ?Sized, L: Rng + ?Sized>(
    a: Player,
    b: Player,
    rng: &mut R,
    light_rng: &mut L,
) -> PairOutcome {
    let (first, tier) = match a.mode.cmp(&b.mode) {
        Ordering::Greater => (true, Tier::Mode),
        Ordering::Less => (false, Tier::Mode),
        Ordering::Equal => match a.credits.cmp(&b.credits) {
            Ordering::Greater => (true, Tier::Credits),
            Ordering::Less => (false, Tier::Credits),
            Ordering::Equal => loop {
                let light: f64 = light_rng.random();
                let da: f64 = rng.random();
                let db: f64 = rng.random();
                match closer_to_light(da, db, light) {
                    Ordering::Less => break (true, Tier::Random),
                    Ordering::Greater => break (false, Tier::Random),
                    Ordering::Equal => continue,
                }
            },
        },
    };
    let (winner, loser) = if first {
        (a.vin, b.vin)
    } else {
        (b.vin, a.vin)
    };
    PairOutcome {
        winner,
        loser,
        tier,
    }
}

/// Credit points per vehicle. Unknown vehicles start at zero; balances may
/// go negative.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CreditLedger {
    credits: BTreeMap<Vin, i64>,
}

impl CreditLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn credits(&self, vin: Vin) -> i64 {
        self.credits.get(&vin).copied().unwrap_or(0)
    }

    pub fn set(&mut self, vin: Vin, credits: i64) {
        self.credits.insert(vin, credits);
    }

    pub fn apply(&mut self, outcome: &PairOutcome) {
        *self.credits.entry(outcome.winner).or_insert(0) -= CREDIT_TRANSFER;
        *self.credits.entry(outcome.loser).or_insert(0) += CREDIT_TRANSFER;
    }

    /// Moves `amount` credits from `seller` to `buyer`.
    pub fn transfer(&mut self, seller: Vin, buyer: Vin, amount: i64) {
        *self.credits.entry(seller).or_insert(0) -= amount;
        *self.credits.entry(buyer).or_insert(0) += amount;
    }

    pub fn total(&self) -> i64 {
        self.credits.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vin, i64)> + '_ {
        self.credits.iter().map(|(v, c)| (*v, *c))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tournament {
    pub holder: Vin,
    /// Losers in elimination order.
    pub losers: Vec<Vin>,
    pub games: Vec<PairOutcome>,
}

/// Runs the ladder for a group sharing one token. Credits are updated after
/// every pair game, so later games see the new balances.
pub fn resolve_conflict<F, R, L>(
    group: &[Vin],
    mode_of: F,
    ledger: &mut CreditLedger,
    rng: &mut R,
    light_rng: &mut L,
) -> Result<Tournament>
where
    F: Fn(Vin) -> Mode,
    R: Rng + ?Sized,
    L: Rng + ?Sized,
{
    let mut order = group.to_vec();
    order.sort();
    order.dedup();
    if order.len() < 2 {
        return Err(Error::param(
            "group",
            "a conflict needs at least two vehicles",
        ));
    }
    let player = |vin: Vin, ledger: &CreditLedger| Player {
        vin,
        mode: mode_of(vin),
        credits: ledger.credits(vin),
    };
    let mut holder = order[0];
    let mut losers = Vec::with_capacity(order.len() - 1);
    let mut games = Vec::with_capacity(order.len() - 1);
    for &challenger in &order[1..] {
        let outcome = play_pair(
            player(holder, ledger),
            player(challenger, ledger),
            rng,
            light_rng,
        );
        ledger.apply(&outcome);
        holder = outcome.winner;
        losers.push(outcome.loser);
        games.push(outcome);
    }
    Ok(Tournament {
        holder,
        losers,
        games,
    })
}

/// Two-player, two-strategy game in cost form (lower is better).
/// `costs[r][c]` is `(row cost, column cost)` when row plays `r` and
/// column plays `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFormGame2x2 {
    costs: [[(f64, f64); 2]; 2],
}

pub type Profile = (usize, usize);

impl NormalFormGame2x2 {
    pub fn new(costs: [[(f64, f64); 2]; 2]) -> Result<Self> {
        let ok = costs
            .iter()
            .flatten()
            .all(|&(r, c)| r.is_finite() && c.is_finite() && r >= 0.0 && c >= 0.0);
        if !ok {
            return Err(Error::param("costs", "must be finite and non-negative"));
        }
        Ok(NormalFormGame2x2 { costs })
    }

    pub fn cost(&self, p: Profile) -> (f64, f64) {
        self.costs[p.0][p.1]
    }

    fn profiles() -> [Profile; 4] {
        [(0, 0), (0, 1), (1, 0), (1, 1)]
    }

    /// Profiles where neither player lowers its cost by deviating alone.
    pub fn pure_nash(&self) -> Vec<Profile> {
        Self::profiles()
            .into_iter()
            .filter(|&(r, c)| {
                let (row, col) = self.cost((r, c));
                self.cost((1 - r, c)).0 >= row && self.cost((r, 1 - c)).1 >= col
            })
            .collect()
    }

    /// Profiles no other profile weakly improves for both players with a
    /// strict gain for one.
    pub fn pareto_optimal(&self) -> Vec<Profile> {
        let all = Self::profiles();
        all.into_iter()
            .filter(|&p| {
                let (a, b) = self.cost(p);
                !all.iter().any(|&q| {
                    let (x, y) = self.cost(q);
                    x <= a && y <= b && (x < a || y < b)
                })
            })
            .collect()
    }
}

/// Idling cost of one trip: per segment, the seconds spent stopped, or zero
/// if the vehicle never stopped there.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripCost {
    segments: BTreeMap<usize, f64>,
}

impl TripCost {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one step of `dt` seconds on `segment`.
    pub fn observe(&mut self, segment: usize, stopped: bool, dt: f64) {
        let cost = self.segments.entry(segment).or_insert(0.0);
        if stopped {
            *cost += dt;
        }
    }

    pub fn segment(&self, segment: usize) -> f64 {
        self.segments.get(&segment).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.segments.values().sum()
    }
}
