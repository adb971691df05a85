//! Time-token allocation for a single approach.
//!
//! A green window is cut into slots of `Tsd = 1/mu` seconds. Slot `tau`
//! spans `[(tau-1)/mu, tau/mu]` measured from the start of the green, the
//! first `N_q` slots (counted from the slot currently being served) belong to
//! the standing queue, and the rest are offered to approaching vehicles by
//! their time to intersection.
//!
//! Allocation records a claim on the slot containing the vehicle's TTI even
//! when another vehicle already owns it; such collisions are reported by
//! [`detect_conflicts`] and settled by the game module.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::signal::{Indication, SignalState};
use crate::{Error, Result};

/// Vehicle identification number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Vin(pub u64);

impl fmt::Display for Vin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeToken {
    pub index: u32,
    /// a_i, seconds from the start of the green.
    pub lower: f64,
    /// b_i, seconds from the start of the green.
    pub upper: f64,
    pub cycle: i64,
    pub owner: Vin,
}

/// Window `(a, b)` of token `tau`, shifted by `red_offset` (R_r while the
/// light is red, 0 at the start of a green).
pub fn token_window(tau: u32, departure_rate: f64, red_offset: f64) -> Result<(f64, f64)> {
    if tau < 1 {
        return Err(Error::param("tau", "token indices start at 1"));
    }
    if !(departure_rate.is_finite() && departure_rate > 0.0) {
        return Err(Error::param("departure_rate", "must be positive"));
    }
    Ok(slot_bounds(tau, departure_rate, red_offset))
}

fn slot_bounds(tau: u32, departure_rate: f64, offset: f64) -> (f64, f64) {
    let tsd = 1.0 / departure_rate;
    (
        offset + tsd * f64::from(tau - 1),
        offset + tsd * f64::from(tau),
    )
}

/// Offset that turns green-relative slot bounds into seconds from now.
fn now_offset(signal: &SignalState) -> f64 {
    match signal.indication {
        Indication::Green { elapsed, .. } => -elapsed,
        Indication::Red { remaining } => remaining,
    }
}

/// First slot index that may be offered to an approaching vehicle.
fn first_offered(signal: &SignalState) -> u32 {
    let queue = signal.queue_length as u32;
    match signal.indication {
        Indication::Green { elapsed, .. } => {
            let serving = (elapsed * signal.departure_rate).floor() as u32 + 1;
            serving + queue
        }
        Indication::Red { .. } => queue + 1,
    }
}

/// Groups of vehicles requesting the same token, keyed by token index.
/// Only groups of two or more are returned; members are sorted by VIN.
pub fn detect_conflicts(requests: &[(Vin, u32)]) -> BTreeMap<u32, Vec<Vin>> {
    let mut by_token: BTreeMap<u32, Vec<Vin>> = BTreeMap::new();
    for &(vin, tau) in requests {
        let group = by_token.entry(tau).or_default();
        if !group.contains(&vin) {
            group.push(vin);
        }
    }
    by_token.retain(|_, group| group.len() >= 2);
    for group in by_token.values_mut() {
        group.sort();
    }
    by_token
}

/// Slot ownership for one approach and one green window.
#[derive(Debug, Clone)]
pub struct TokenTable {
    cycle: i64,
    departure_rate: f64,
    capacity: u32,
    /// Index 0 is unused so that `owners[tau]` reads naturally.
    owners: Vec<Option<Vin>>,
    /// Slots already consumed by a crossing; never offered again this cycle.
    blocked: Vec<bool>,
    claims: Vec<(Vin, u32)>,
}

impl TokenTable {
    pub fn new(departure_rate: f64, capacity: u32, cycle: i64) -> Self {
        TokenTable {
            cycle,
            departure_rate,
            capacity,
            owners: vec![None; capacity as usize + 1],
            blocked: vec![false; capacity as usize + 1],
            claims: Vec::new(),
        }
    }

    pub fn cycle(&self) -> i64 {
        self.cycle
    }

    /// N_dep.
    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    /// Moves the table to `cycle`. Tokens of an older window expire; the
    /// expired `(owner, tau)` pairs are returned.
    pub fn roll(&mut self, cycle: i64) -> Vec<(Vin, u32)> {
        if cycle == self.cycle {
            return Vec::new();
        }
        let expired = self.holdings();
        self.cycle = cycle;
        self.owners.iter_mut().for_each(|o| *o = None);
        self.blocked.iter_mut().for_each(|b| *b = false);
        self.claims.clear();
        expired
    }

    pub fn owner(&self, tau: u32) -> Option<Vin> {
        self.owners.get(tau as usize).copied().flatten()
    }

    pub fn is_free(&self, tau: u32) -> bool {
        tau >= 1 && tau <= self.capacity && self.owner(tau).is_none() && !self.is_blocked(tau)
    }

    pub fn is_blocked(&self, tau: u32) -> bool {
        self.blocked.get(tau as usize).copied().unwrap_or(false)
    }

    /// Marks `tau` as consumed. Ownership is kept; pending claims on it are
    /// dropped.
    pub fn block(&mut self, tau: u32) {
        if tau >= 1 && tau <= self.capacity {
            self.blocked[tau as usize] = true;
            self.claims.retain(|&(_, t)| t != tau);
        }
    }

    pub fn token_of(&self, vin: Vin) -> Option<u32> {
        self.owners
            .iter()
            .position(|o| *o == Some(vin))
            .map(|i| i as u32)
    }

    /// All current `(owner, tau)` pairs in slot order.
    pub fn holdings(&self) -> Vec<(Vin, u32)> {
        self.owners
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.map(|v| (v, i as u32)))
            .collect()
    }

    pub fn token(&self, tau: u32) -> Option<TimeToken> {
        let owner = self.owner(tau)?;
        let (lower, upper) = slot_bounds(tau, self.departure_rate, 0.0);
        Some(TimeToken {
            index: tau,
            lower,
            upper,
            cycle: self.cycle,
            owner,
        })
    }

    /// Window of `tau` in seconds from now.
    pub fn window_from_now(&self, tau: u32, signal: &SignalState) -> (f64, f64) {
        slot_bounds(tau, self.departure_rate, now_offset(signal))
    }

    /// Token allocation for one request. Returns the claimed slot, or `None`
    /// when the TTI does not fall in an offerable slot of this green.
    ///
    /// A vehicle holds at most one token, so any slot it owns is released
    /// first. The claim stays pending until [`TokenTable::settle`].
    pub fn allocate(&mut self, vin: Vin, tti: f64, signal: &SignalState) -> Option<u32> {
        self.release(vin);
        self.claims.retain(|&(v, _)| v != vin);
        let tau = self.containing_slot(tti, signal)?;
        self.claims.push((vin, tau));
        Some(tau)
    }

    fn containing_slot(&self, tti: f64, signal: &SignalState) -> Option<u32> {
        if !(tti.is_finite() && tti >= 0.0) {
            return None;
        }
        let tsd = 1.0 / self.departure_rate;
        let queue = signal.queue_length as f64;
        // In green only free slots are offered; in red an owned slot can be
        // claimed, which starts a conflict with its owner.
        let contestable = !signal.is_green();
        let first = match signal.indication {
            Indication::Green { remaining, .. } => {
                if tti > remaining {
                    return None;
                }
                first_offered(signal)
            }
            Indication::Red { remaining } => {
                if tti < remaining {
                    return None;
                }
                if !(tti > remaining + tsd * queue && tti <= remaining + signal.green_duration) {
                    return None;
                }
                first_offered(signal)
            }
        };
        let offset = now_offset(signal);
        let mut hit = None;
        for tau in first..=self.capacity {
            let (a, b) = slot_bounds(tau, self.departure_rate, offset);
            if tti >= a && tti <= b {
                if self.is_blocked(tau) {
                    continue;
                }
                if self.owner(tau).is_none() {
                    return Some(tau);
                }
                // Boundary ties may still land in a free neighbour.
                if contestable {
                    hit.get_or_insert(tau);
                }
            } else if a > tti {
                break;
            }
        }
        hit
    }

    /// Pending claims together with the current owners of claimed slots.
    pub fn requests(&self) -> Vec<(Vin, u32)> {
        let mut out = Vec::with_capacity(self.claims.len() * 2);
        for &(vin, tau) in &self.claims {
            if let Some(owner) = self.owner(tau) {
                if !out.contains(&(owner, tau)) {
                    out.push((owner, tau));
                }
            }
            out.push((vin, tau));
        }
        out
    }

    pub fn pending_claims(&self) -> &[(Vin, u32)] {
        &self.claims
    }

    /// Grants `tau` to `vin` and drops every pending claim on it.
    pub fn settle(&mut self, tau: u32, vin: Vin) {
        if tau < 1 || tau > self.capacity {
            return;
        }
        self.release(vin);
        self.owners[tau as usize] = Some(vin);
        self.claims.retain(|&(v, t)| t != tau && v != vin);
    }

    /// Grants every claim that nobody else contests.
    pub fn settle_uncontested(&mut self) -> Vec<(Vin, u32)> {
        let contested = detect_conflicts(&self.requests());
        let granted: Vec<(Vin, u32)> = self
            .claims
            .iter()
            .copied()
            .filter(|(_, tau)| !contested.contains_key(tau))
            .collect();
        for &(vin, tau) in &granted {
            self.settle(tau, vin);
        }
        granted
    }

    /// Frees the slot held by `vin`. Returns `false` when it held none.
    pub fn release(&mut self, vin: Vin) -> bool {
        let mut found = false;
        for owner in self.owners.iter_mut() {
            if *owner == Some(vin) {
                *owner = None;
                found = true;
            }
        }
        found
    }

    /// Finds a different free slot for a vehicle that lost `lost`.
    ///
    /// `reach` is the range of arrival times (seconds from now) the vehicle
    /// can still achieve, typically `[d/v_max, d/v_min]`. Later slots are
    /// preferred (the loser slows down); earlier ones are tried next.
    pub fn reassign(
        &mut self,
        vin: Vin,
        lost: u32,
        reach: (f64, f64),
        signal: &SignalState,
    ) -> Option<u32> {
        self.release(vin);
        self.claims.retain(|&(v, _)| v != vin);
        let first = first_offered(signal).max(1);
        if first > self.capacity {
            return None;
        }
        let later = (lost + 1).max(first)..=self.capacity;
        let earlier = (first..lost.min(self.capacity + 1)).rev();
        let candidates = later.chain(earlier);
        for tau in candidates {
            if !self.is_free(tau) {
                continue;
            }
            let (a, b) = self.window_from_now(tau, signal);
            let limit = match signal.indication {
                Indication::Green { remaining, .. } => remaining,
                Indication::Red { remaining } => remaining + signal.green_duration,
            };
            let lo = a.max(reach.0).max(0.0);
            let hi = b.min(reach.1).min(limit);
            if lo <= hi {
                self.settle(tau, vin);
                return Some(tau);
            }
        }
        None
    }

    /// True when no vehicle owns more than one slot.
    pub fn is_consistent(&self) -> bool {
        let mut seen: Vec<Vin> = self.owners.iter().flatten().copied().collect();
        let n = seen.len();
        seen.sort();
        seen.dedup();
        seen.len() == n
    }
}
