use serde::{Deserialize, Serialize};

use crate::energy::EnergyParams;
use crate::game::Mode;
use crate::signal::{Approach, SignalConfig};
use crate::{Error, Result};

/// Arrival process used by every route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalKind {
    Poisson,
    /// Evenly spaced arrivals, the first at t = 0.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeWeights {
    pub relaxed: f64,
    pub normal: f64,
    pub rush: f64,
}

impl Default for ModeWeights {
    fn default() -> Self {
        ModeWeights {
            relaxed: 0.2,
            normal: 0.6,
            rush: 0.2,
        }
    }
}

impl ModeWeights {
    pub fn weight(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Relaxed => self.relaxed,
            Mode::Normal => self.normal,
            Mode::Rush => self.rush,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Metres.
    pub length: f64,
    /// Standstill bumper gap, metres.
    pub min_gap: f64,
    /// Seconds.
    pub time_gap: f64,
    /// Seconds.
    pub reaction_time: f64,
    /// Controller acceleration and deceleration, m/s².
    pub comfort_accel: f64,
    /// Braking used by the hard no-contact cap, m/s².
    pub brake_decel: f64,
    /// Seconds between lane changes of one vehicle.
    pub lane_change_cooldown: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            length: 5.0,
            min_gap: 1.0,
            time_gap: 2.0,
            reaction_time: 1.1,
            comfort_accel: 2.5,
            brake_decel: 4.5,
            lane_change_cooldown: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightConfig {
    /// Phase offset added to the shared timing plan, seconds.
    pub offset: f64,
}

impl Default for LightConfig {
    fn default() -> Self {
        LightConfig { offset: 0.0 }
    }
}

/// A road segment ending at the stop line of `light` on `approach`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub length: f64,
    pub lanes: usize,
    pub light: usize,
    pub approach: Approach,
}

/// Ordered segments travelled by one stream of vehicles. `share` is the
/// fraction of `SimConfig::volume` entering at the first segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteConfig {
    pub segments: Vec<usize>,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub lights: Vec<LightConfig>,
    pub segments: Vec<SegmentConfig>,
    pub routes: Vec<RouteConfig>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::corridor(3, 1000.0, 2)
    }
}

impl NetworkConfig {
    /// `lights` intersections in a west-to-east line. Eastbound and
    /// westbound routes run the full corridor; every intersection also has
    /// a one-segment northbound and southbound route. The volume is split
    /// evenly over all routes, so it is the total entering the corridor.
    pub fn corridor(lights: usize, segment_length: f64, lanes: usize) -> Self {
        let mut segments = Vec::new();
        let mut routes = Vec::new();
        let add = |light: usize, approach: Approach, segments: &mut Vec<SegmentConfig>| {
            segments.push(SegmentConfig {
                length: segment_length,
                lanes,
                light,
                approach,
            });
            segments.len() - 1
        };
        let east: Vec<usize> = (0..lights)
            .map(|l| add(l, Approach::East, &mut segments))
            .collect();
        let west: Vec<usize> = (0..lights)
            .rev()
            .map(|l| add(l, Approach::West, &mut segments))
            .collect();
        routes.push(RouteConfig {
            segments: east,
            share: 0.0,
        });
        routes.push(RouteConfig {
            segments: west,
            share: 0.0,
        });
        for l in 0..lights {
            for approach in [Approach::North, Approach::South] {
                let s = add(l, approach, &mut segments);
                routes.push(RouteConfig {
                    segments: vec![s],
                    share: 0.0,
                });
            }
        }
        let share = 1.0 / routes.len() as f64;
        for r in &mut routes {
            r.share = share;
        }
        NetworkConfig {
            lights: vec![LightConfig::default(); lights],
            segments,
            routes,
        }
    }

    /// One intersection with a single eastbound approach carrying the
    /// whole volume.
    pub fn single_approach(segment_length: f64, lanes: usize) -> Self {
        NetworkConfig {
            lights: vec![LightConfig::default()],
            segments: vec![SegmentConfig {
                length: segment_length,
                lanes,
                light: 0,
                approach: Approach::East,
            }],
            routes: vec![RouteConfig {
                segments: vec![0],
                share: 1.0,
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Seconds of simulated time.
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Vehicles per hour; each route receives `share` of it.
    pub volume: f64,
    pub arrivals: ArrivalKind,
    /// V2I range, metres from the stop line.
    pub activation_distance: f64,
    /// Speed before activation and at spawn, m/s.
    pub cruise_speed: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Probability of keeping the previous command instead of re-planning.
    pub replan_probability: f64,
    pub modes: ModeWeights,
    pub vehicle: VehicleParams,
    /// Vehicles per km per lane.
    pub max_density: f64,
    /// Spawning stops once a segment reaches this fraction of `max_density`.
    pub density_cap: f64,
    /// Seconds trimmed from both ends of planning windows.
    pub window_margin: f64,
    pub signal: SignalConfig,
    pub energy: EnergyParams,
    pub network: NetworkConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: 3.0 * 3600.0,
            dt: 0.1,
            seed: 1,
            volume: 900.0,
            arrivals: ArrivalKind::Poisson,
            activation_distance: 500.0,
            cruise_speed: 50.0 / 3.6,
            v_min: 10.0 / 3.6,
            v_max: 60.0 / 3.6,
            replan_probability: 0.0,
            modes: ModeWeights::default(),
            vehicle: VehicleParams::default(),
            max_density: 150.0,
            density_cap: 0.85,
            window_margin: 0.5,
            signal: SignalConfig::default(),
            energy: EnergyParams::default(),
            network: NetworkConfig::default(),
        }
    }
}

fn positive(location: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::config(location, "must be positive"))
    }
}

fn non_negative(location: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(location, "must be finite and >= 0"))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        non_negative("duration", self.duration)?;
        positive("dt", self.dt)?;
        non_negative("volume", self.volume)?;
        positive("activation_distance", self.activation_distance)?;
        positive("v_max", self.v_max)?;
        non_negative("v_min", self.v_min)?;
        if self.v_min >= self.v_max {
            return Err(Error::config("v_min", "must be below v_max"));
        }
        if !(self.cruise_speed >= self.v_min && self.cruise_speed <= self.v_max) {
            return Err(Error::config("cruise_speed", "must lie in [v_min, v_max]"));
        }
        if !(0.0..=1.0).contains(&self.replan_probability) {
            return Err(Error::config("replan_probability", "must lie in [0, 1]"));
        }
        let w = &self.modes;
        for (name, v) in [
            ("modes.relaxed", w.relaxed),
            ("modes.normal", w.normal),
            ("modes.rush", w.rush),
        ] {
            non_negative(name, v)?;
        }
        if w.relaxed + w.normal + w.rush <= 0.0 {
            return Err(Error::config("modes", "weights must not all be zero"));
        }
        let v = &self.vehicle;
        positive("vehicle.length", v.length)?;
        positive("vehicle.min_gap", v.min_gap)?;
        positive("vehicle.time_gap", v.time_gap)?;
        non_negative("vehicle.reaction_time", v.reaction_time)?;
        positive("vehicle.comfort_accel", v.comfort_accel)?;
        positive("vehicle.brake_decel", v.brake_decel)?;
        non_negative("vehicle.lane_change_cooldown", v.lane_change_cooldown)?;
        positive("max_density", self.max_density)?;
        if !(self.density_cap > 0.0 && self.density_cap <= 1.0) {
            return Err(Error::config("density_cap", "must lie in (0, 1]"));
        }
        non_negative("window_margin", self.window_margin)?;
        self.signal
            .validate()
            .map_err(|e| Error::config("signal", e.to_string()))?;
        self.energy
            .validate()
            .map_err(|e| Error::config("energy", e.to_string()))?;
        self.validate_network()
    }

    fn validate_network(&self) -> Result<()> {
        let n = &self.network;
        if n.lights.is_empty() {
            return Err(Error::config("network.lights", "need at least one light"));
        }
        for (i, l) in n.lights.iter().enumerate() {
            if !l.offset.is_finite() {
                return Err(Error::config(
                    format!("network.lights[{i}].offset"),
                    "must be finite",
                ));
            }
        }
        let mut seen = Vec::new();
        for (i, s) in n.segments.iter().enumerate() {
            let at = |field: &str| format!("network.segments[{i}].{field}");
            positive(&at("length"), s.length)?;
            if s.lanes < 2 {
                return Err(Error::config(
                    at("lanes"),
                    "segments need at least two lanes",
                ));
            }
            if s.light >= n.lights.len() {
                return Err(Error::config(at("light"), "unknown light"));
            }
            if self.activation_distance > s.length {
                return Err(Error::config(
                    at("length"),
                    "shorter than the activation distance",
                ));
            }
            if seen.contains(&(s.light, s.approach)) {
                return Err(Error::config(
                    at("approach"),
                    "another segment already ends on this approach",
                ));
            }
            seen.push((s.light, s.approach));
        }
        if n.routes.is_empty() {
            return Err(Error::config("network.routes", "need at least one route"));
        }
        for (i, r) in n.routes.iter().enumerate() {
            let at = format!("network.routes[{i}]");
            non_negative(&format!("{at}.share"), r.share)?;
            if r.segments.is_empty() {
                return Err(Error::config(format!("{at}.segments"), "route is empty"));
            }
            for (j, &s) in r.segments.iter().enumerate() {
                if s >= n.segments.len() {
                    return Err(Error::config(
                        format!("{at}.segments[{j}]"),
                        "unknown segment",
                    ));
                }
                if r.segments[..j].contains(&s) {
                    return Err(Error::config(
                        format!("{at}.segments[{j}]"),
                        "segment repeats",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Signal timing of `light`, including its offset.
    pub fn light_signal(&self, light: usize) -> SignalConfig {
        let mut s = self.signal.clone();
        s.offset += self.network.lights[light].offset;
        s
    }

    /// Arrival rate of `route` in vehicles per second.
    pub fn route_rate(&self, route: usize) -> f64 {
        self.volume * self.network.routes[route].share / 3600.0
    }

    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }
}
