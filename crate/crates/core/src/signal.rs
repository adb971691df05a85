//! Two-phase fixed-cycle traffic lights.
//!
//! For a light with offset `o`, local cycle time `τ = (t - o) mod T_c` runs
//!
//! ```text
//! [0, T_g)                east-west green
//! [T_g, T_g + gap)        all red
//! [T_g + gap, T_c - gap)  north-south green
//! [T_c - gap, T_c)        all red
//! ```
//!
//! East-west approaches see exactly `T_g` of green and `T_r` of red, so
//! `T_c = T_g + T_r` holds for the configured phase. Both all-red gaps are
//! taken out of the cross street's green.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The leg of an intersection a vehicle arrives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    East,
    West,
    North,
    South,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::East,
        Approach::West,
        Approach::North,
        Approach::South,
    ];

    pub fn is_east_west(self) -> bool {
        matches!(self, Approach::East | Approach::West)
    }

    pub fn label(self) -> &'static str {
        match self {
            Approach::East => "east",
            Approach::West => "west",
            Approach::North => "north",
            Approach::South => "south",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    GreenEastWest,
    GreenNorthSouth,
    AllRed,
}

/// What a single approach sees at an instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Indication {
    /// `remaining` is R_g; `elapsed` is the time since this green began.
    Green { remaining: f64, elapsed: f64 },
    /// `remaining` is R_r, the time until this approach's next green.
    Red { remaining: f64 },
}

/// Signal information delivered to vehicles on one approach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalState {
    pub phase: Phase,
    pub indication: Indication,
    /// Green time this approach receives per cycle.
    pub green_duration: f64,
    /// Red time this approach receives per cycle (all-red gaps included).
    pub red_duration: f64,
    pub departure_rate: f64,
    /// n(t), maintained by the simulation engine.
    pub queue_length: usize,
}

impl SignalState {
    pub fn is_green(&self) -> bool {
        matches!(self.indication, Indication::Green { .. })
    }

    /// R_g when green, R_r when red.
    pub fn remaining(&self) -> f64 {
        match self.indication {
            Indication::Green { remaining, .. } | Indication::Red { remaining } => remaining,
        }
    }

    pub fn with_queue(mut self, queue_length: usize) -> Self {
        self.queue_length = queue_length;
        self
    }

    /// Slot duration Tsd = 1/mu.
    pub fn slot_duration(&self) -> f64 {
        1.0 / self.departure_rate
    }

    /// Highest token index in one green window.
    pub fn max_tokens(&self) -> u32 {
        departures_per_green(self.departure_rate, self.green_duration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    /// T_g of the east-west phase, seconds (yellow included).
    pub green: f64,
    /// T_r of the east-west phase, seconds.
    pub red: f64,
    pub all_red_gap: f64,
    pub offset: f64,
    /// mu, vehicles per second per approach.
    pub departure_rate: f64,
    /// Nominal lambda per approach, vehicles per second.
    pub arrival_rate: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            green: 24.0,
            red: 36.0,
            all_red_gap: 1.0,
            offset: 0.0,
            departure_rate: 0.333,
            arrival_rate: 0.25,
        }
    }
}

impl SignalConfig {
    pub fn cycle(&self) -> f64 {
        self.green + self.red
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("green", self.green),
            ("red", self.red),
            ("departure_rate", self.departure_rate),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {value}")));
            }
        }
        if !(self.all_red_gap.is_finite() && self.all_red_gap >= 0.0) {
            return Err(Error::param("all_red_gap", "must be non-negative"));
        }
        if 2.0 * self.all_red_gap >= self.red {
            return Err(Error::param(
                "all_red_gap",
                "two all-red gaps must fit inside the red time",
            ));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return Err(Error::param("arrival_rate", "must be non-negative"));
        }
        if !self.offset.is_finite() {
            return Err(Error::param("offset", "must be finite"));
        }
        Ok(())
    }

    pub fn green_duration(&self, approach: Approach) -> f64 {
        if approach.is_east_west() {
            self.green
        } else {
            self.red - 2.0 * self.all_red_gap
        }
    }

    pub fn red_duration(&self, approach: Approach) -> f64 {
        self.cycle() - self.green_duration(approach)
    }

    fn green_start_local(&self, approach: Approach) -> f64 {
        if approach.is_east_west() {
            0.0
        } else {
            self.green + self.all_red_gap
        }
    }

    /// Splits `t` into (green index, time since that green began).
    fn green_frame(&self, t: f64, approach: Approach) -> (i64, f64) {
        let cycle = self.cycle();
        let s = t - self.offset - self.green_start_local(approach);
        let k = (s / cycle).floor();
        let mut within = s - k * cycle;
        let mut k = k as i64;
        if within >= cycle {
            within -= cycle;
            k += 1;
        }
        (k, within.max(0.0))
    }

    pub fn phase_at(&self, t: f64) -> Phase {
        let tau = (t - self.offset).rem_euclid(self.cycle());
        if tau < self.green {
            Phase::GreenEastWest
        } else if tau < self.green + self.all_red_gap {
            Phase::AllRed
        } else if tau < self.cycle() - self.all_red_gap {
            Phase::GreenNorthSouth
        } else {
            Phase::AllRed
        }
    }

    /// Signal state for `approach` at time `t`, with an empty queue.
    pub fn state_at(&self, t: f64, approach: Approach) -> SignalState {
        let green = self.green_duration(approach);
        let (_, within) = self.green_frame(t, approach);
        let indication = if within < green {
            Indication::Green {
                remaining: green - within,
                elapsed: within,
            }
        } else {
            Indication::Red {
                remaining: self.cycle() - within,
            }
        };
        SignalState {
            phase: self.phase_at(t),
            indication,
            green_duration: green,
            red_duration: self.red_duration(approach),
            departure_rate: self.departure_rate,
            queue_length: 0,
        }
    }

    /// Index of the current green if `approach` is green at `t`, otherwise
    /// of the next one. Tokens and stop-line slots are keyed by this index.
    pub fn green_cycle(&self, t: f64, approach: Approach) -> i64 {
        let (k, within) = self.green_frame(t, approach);
        if within < self.green_duration(approach) {
            k
        } else {
            k + 1
        }
    }

    /// Absolute start time of green number `cycle` for `approach`.
    pub fn green_start(&self, cycle: i64, approach: Approach) -> f64 {
        self.offset + self.green_start_local(approach) + cycle as f64 * self.cycle()
    }

    pub fn max_tokens(&self, approach: Approach) -> u32 {
        departures_per_green(self.departure_rate, self.green_duration(approach))
    }

    /// Nominal N_arr for the east-west phase.
    pub fn arrivals_per_red(&self) -> f64 {
        arrivals_per_red(self.arrival_rate, self.red)
    }
}

/// T_q = n / mu, the time needed to discharge a standing queue.
pub fn queue_clear_time(queue_length: usize, departure_rate: f64) -> Result<f64> {
    if !(departure_rate.is_finite() && departure_rate > 0.0) {
        return Err(Error::param(
            "departure_rate",
            format!("must be positive, got {departure_rate}"),
        ));
    }
    Ok(queue_length as f64 / departure_rate)
}

/// N_arr = lambda * T_r.
pub fn arrivals_per_red(arrival_rate: f64, red: f64) -> f64 {
    arrival_rate * red
}

/// N_dep, the number of departure slots in one green and the highest token
/// index. mu * T_g is rounded to the nearest vehicle, so mu = 0.333 over
/// 24 s yields 8. Every slot counted this way opens before the green ends.
pub fn departures_per_green(departure_rate: f64, green: f64) -> u32 {
    let n = departure_rate * green;
    if n.is_finite() && n > 0.0 {
        (n + 0.5).floor() as u32
    } else {
        0
    }
}
