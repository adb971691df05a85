//! Per-step speed commands.
//!
//! Every decision is expressed as a window of arrival times `[lo, hi]`
//! (seconds from now) at the stop line. A window maps to the speed band
//! `[d/hi, d/lo] ∩ [v_min, v_max]`; the objective then picks the lowest,
//! the highest, or the current speed clamped into that band.

use std::fmt;

use crate::signal::{Indication, SignalState};
use crate::{Error, Result};

const BAND_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub speed: f64,
    pub distance_to_stop: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl KinematicState {
    pub fn new(speed: f64, distance_to_stop: f64, v_min: f64, v_max: f64) -> Result<Self> {
        if !(v_min >= 0.0 && v_max > v_min && v_max.is_finite()) {
            return Err(Error::param("v_max", "need 0 <= v_min < v_max"));
        }
        if !(distance_to_stop >= 0.0 && distance_to_stop.is_finite()) {
            return Err(Error::param("distance_to_stop", "must be finite and >= 0"));
        }
        if !(speed >= 0.0 && speed <= v_max + BAND_EPS) {
            return Err(Error::param("speed", "must lie in [0, v_max]"));
        }
        Ok(KinematicState {
            speed,
            distance_to_stop,
            v_min,
            v_max,
        })
    }

    /// TTI used for case selection. A vehicle slower than `v_min` (braking
    /// or stopped) is assumed to resume at `v_min`.
    pub fn reference_tti(&self) -> f64 {
        let v = self.speed.max(self.v_min);
        if v > 0.0 {
            self.distance_to_stop / v
        } else if self.distance_to_stop == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Arrival-time window, seconds from now.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Self {
        Window { lo, hi }
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi && self.hi > 0.0
    }

    /// Pulls both ends inwards by `margin` when the window is wide enough.
    pub fn shrink(self, margin: f64) -> Self {
        if self.hi - self.lo > 2.0 * margin + BAND_EPS {
            Window::new(self.lo + margin, self.hi - margin)
        } else {
            self
        }
    }

    pub fn clip_hi(self, limit: f64) -> Self {
        Window::new(self.lo, self.hi.min(limit))
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    MinSpeed,
    MaxSpeed,
    Hold,
}

/// Case selected by the dispatcher; the predicates partition the TTI axis
/// for each signal indication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    /// Green, TTI ≤ R_g.
    GreenPass,
    /// Green, R_g < TTI ≤ R_g + T_r.
    GreenCatch,
    /// Green, TTI beyond R_g + T_r.
    GreenCruise,
    /// Red, TTI < R_r.
    RedEarly,
    /// Red, R_r ≤ TTI ≤ R_r + T_g.
    RedPass,
    /// Red, TTI > R_r + T_g.
    RedLate,
}

impl Case {
    pub fn label(self) -> &'static str {
        match self {
            Case::GreenPass => "green1",
            Case::GreenCatch => "green2",
            Case::GreenCruise => "green3",
            Case::RedEarly => "red1",
            Case::RedPass => "red2",
            Case::RedLate => "red3",
        }
    }
}

/// How the vehicle coordinates with the light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coordination {
    /// Token-based; `token` is the granted window in seconds from now.
    Cooperative { token: Option<Window> },
    /// Token-based, but the request for the coming green was refused; the
    /// vehicle aims at the green after it when it still can.
    Denied,
    /// Timing-only advisory that assumes the whole green is available.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plan {
    pub speed: f64,
    pub case: Case,
    pub objective: Objective,
    /// Window the speed was planned into; `None` when every window was
    /// infeasible or the case holds speed unconditionally.
    pub window: Option<Window>,
    pub feasible: bool,
}

/// Linear density to speed law.
pub fn density_speed(density: f64, max_density: f64, v_max: f64) -> Result<f64> {
    if !(max_density > 0.0) {
        return Err(Error::param("max_density", "must be positive"));
    }
    if !(density >= 0.0) || density > max_density {
        return Err(Error::param("density", "must lie in [0, max_density]"));
    }
    Ok(v_max * (1.0 - density / max_density))
}

pub fn tti(distance: f64, speed: f64) -> Result<f64> {
    if !(speed > 0.0) {
        return Err(Error::UndefinedTti { speed });
    }
    Ok(distance / speed)
}

/// Speed band reaching the stop line inside `window`, or `None`.
pub fn speed_band(k: &KinematicState, window: Window) -> Option<(f64, f64)> {
    if !(window.hi > 0.0 && window.hi > window.lo) {
        return None;
    }
    let d = k.distance_to_stop;
    let need_at_least = d / window.hi;
    let allowed_at_most = if window.lo <= 0.0 {
        f64::INFINITY
    } else {
        d / window.lo
    };
    let lo = need_at_least.max(k.v_min);
    let hi = allowed_at_most.min(k.v_max);
    if lo <= hi + BAND_EPS {
        Some((lo, hi.max(lo)))
    } else {
        None
    }
}

pub fn plan_to_window(k: &KinematicState, window: Window, objective: Objective) -> Option<f64> {
    let (lo, hi) = speed_band(k, window)?;
    Some(match objective {
        Objective::MinSpeed => lo,
        Objective::MaxSpeed => hi,
        Objective::Hold => k.speed.clamp(lo, hi),
    })
}

pub fn classify(tti: f64, signal: &SignalState) -> Case {
    match signal.indication {
        Indication::Green { remaining, .. } => {
            if tti <= remaining {
                Case::GreenPass
            } else if tti <= remaining + signal.red_duration {
                Case::GreenCatch
            } else {
                Case::GreenCruise
            }
        }
        Indication::Red { remaining } => {
            if tti < remaining {
                Case::RedEarly
            } else if tti <= remaining + signal.green_duration {
                Case::RedPass
            } else {
                Case::RedLate
            }
        }
    }
}

/// Dispatches one case and returns the command. `queue_clear` is the time
/// the standing queue needs to discharge at the start of the next green.
pub fn plan(
    k: &KinematicState,
    signal: &SignalState,
    coordination: Coordination,
    queue_clear: f64,
) -> Plan {
    plan_with_margin(k, signal, coordination, queue_clear, 0.0)
}

/// As [`plan`], with every window narrowed by `margin` seconds at both ends
/// where it is wide enough.
pub fn plan_with_margin(
    k: &KinematicState,
    signal: &SignalState,
    coordination: Coordination,
    queue_clear: f64,
    margin: f64,
) -> Plan {
    let t_g = signal.green_duration;
    let t_r = signal.red_duration;
    let t_q = queue_clear.max(0.0);
    let case = classify(k.reference_tti(), signal);

    let denied = coordination == Coordination::Denied;
    let coordination = if denied {
        Coordination::Cooperative { token: None }
    } else {
        coordination
    };
    let mut attempts: Vec<(Window, Objective)> = Vec::with_capacity(4);
    match (case, signal.indication) {
        (Case::GreenPass, Indication::Green { remaining: rg, .. }) => {
            let next = Window::new(rg + t_r + t_q, rg + t_r + t_g);
            match coordination {
                Coordination::Cooperative { token: Some(w) } => {
                    attempts.push((w, Objective::Hold));
                }
                Coordination::Cooperative { token: None } | Coordination::Denied => {
                    // Without a slot, prefer the next green; only try the
                    // rest of this one when that is out of reach.
                    attempts.push((next, Objective::MinSpeed));
                    attempts.push((Window::new(0.0, rg), Objective::Hold));
                }
                Coordination::Independent => attempts.push((Window::new(0.0, rg), Objective::Hold)),
            }
            attempts.push((next, Objective::MinSpeed));
        }
        (Case::GreenCatch, Indication::Green { remaining: rg, .. }) => {
            let next = Window::new(rg + t_r + t_q, rg + t_r + t_g);
            match coordination {
                Coordination::Cooperative { token: Some(w) } => {
                    attempts.push((w, Objective::MaxSpeed));
                }
                Coordination::Cooperative { token: None } | Coordination::Denied => {
                    attempts.push((next, Objective::MinSpeed));
                    attempts.push((Window::new(0.0, rg), Objective::MaxSpeed));
                }
                Coordination::Independent => {
                    attempts.push((Window::new(0.0, rg), Objective::MaxSpeed));
                }
            }
            attempts.push((next, Objective::MinSpeed));
        }
        (Case::RedEarly, Indication::Red { remaining: rr }) => {
            attempts.push((Window::new(rr + t_q, rr + t_g), Objective::MinSpeed));
        }
        (Case::RedPass, Indication::Red { remaining: rr }) => {
            let this_green = Window::new(rr + t_q, rr + t_g);
            match coordination {
                Coordination::Cooperative { token: Some(w) } => attempts.push((w, Objective::Hold)),
                Coordination::Cooperative { token: None } | Coordination::Denied => {
                    attempts.push((this_green, Objective::MinSpeed));
                }
                Coordination::Independent => attempts.push((this_green, Objective::Hold)),
            }
            attempts.push((
                Window::new(rr + t_g + t_r + t_q, rr + t_r + 2.0 * t_g),
                Objective::MinSpeed,
            ));
        }
        (Case::RedLate, Indication::Red { remaining: rr }) => {
            attempts.push((
                Window::new(rr + t_g + t_r + t_q, rr + t_r + 2.0 * t_g),
                Objective::MinSpeed,
            ));
        }
        _ => {
            return Plan {
                speed: k.speed.clamp(k.v_min, k.v_max),
                case,
                objective: Objective::Hold,
                window: None,
                feasible: true,
            };
        }
    }

    if denied {
        let following = match signal.indication {
            Indication::Green { remaining: rg, .. } => Window::new(rg + t_r + t_q, rg + t_r + t_g),
            Indication::Red { remaining: rr } => {
                Window::new(rr + t_g + t_r + t_q, rr + t_r + 2.0 * t_g)
            }
        };
        attempts.insert(0, (following, Objective::MinSpeed));
    }
    for (window, objective) in attempts {
        let window = window.shrink(margin);
        if let Some(speed) = plan_to_window(k, window, objective) {
            return Plan {
                speed,
                case,
                objective,
                window: Some(window),
                feasible: true,
            };
        }
    }
    Plan {
        speed: k.v_min,
        case,
        objective: Objective::MinSpeed,
        window: None,
        feasible: false,
    }
}
