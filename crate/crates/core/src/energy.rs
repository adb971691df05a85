//! Per-step energy accounting for an electric vehicle.
//!
//! Six components are tracked: uphill draw, downhill credit, resistive
//! losses, acceleration draw, deceleration regeneration and on-board
//! devices. Exactly one of the two grade terms and one of the two speed
//! change terms is nonzero per step.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Device {
    /// Watts.
    pub power: f64,
    /// Seconds the device runs from the start of the trip.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    pub efficiency: f64,
    /// kg.
    pub mass: f64,
    pub gravity: f64,
    pub rolling_friction: f64,
    /// kg/m³.
    pub air_density: f64,
    /// m².
    pub frontal_area: f64,
    pub drag_coefficient: f64,
    /// Watts.
    pub motor_power: f64,
    pub devices: Vec<Device>,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            efficiency: 0.9,
            mass: 1500.0,
            gravity: 9.81,
            rolling_friction: 0.01,
            air_density: 1.2,
            frontal_area: 2.3,
            drag_coefficient: 0.28,
            motor_power: 80_000.0,
            devices: Vec::new(),
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::param("efficiency", "must lie in (0, 1]"));
        }
        let positive = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("rolling_friction", self.rolling_friction),
            ("air_density", self.air_density),
            ("frontal_area", self.frontal_area),
            ("drag_coefficient", self.drag_coefficient),
            ("motor_power", self.motor_power),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        if self
            .devices
            .iter()
            .any(|d| !(d.power.is_finite() && d.power >= 0.0 && d.duration >= 0.0))
        {
            return Err(Error::param("devices", "power and duration must be >= 0"));
        }
        Ok(())
    }
}

/// Grade energy for an elevation change of `rise` metres: positive uphill,
/// negative (credited) downhill.
pub fn potential(p: &EnergyParams, rise: f64) -> f64 {
    p.mass * p.gravity * rise / p.efficiency
}

/// Rolling and aerodynamic losses while moving at `speed` for `dt` seconds.
pub fn loss(p: &EnergyParams, speed: f64, dt: f64) -> f64 {
    let rolling = p.rolling_friction * p.mass * p.gravity * speed;
    let aero = 0.5 * p.air_density * p.frontal_area * p.drag_coefficient * speed.powi(3);
    (rolling + aero) * dt / p.efficiency
}

/// Motor energy for a speed change over `distance` metres; negative when
/// decelerating (regeneration) and zero without a change.
pub fn accel_energy(p: &EnergyParams, v_prev: f64, v_now: f64, distance: f64) -> f64 {
    let dv = v_now - v_prev;
    if dv == 0.0 {
        return 0.0;
    }
    dv.signum() * p.motor_power * distance / (dv.abs() * p.efficiency)
}

/// Σ power · duration over all devices.
pub fn device_energy(p: &EnergyParams) -> f64 {
    p.devices.iter().map(|d| d.power * d.duration).sum()
}

/// Device energy drawn during `[elapsed, elapsed + dt)` of a trip.
pub fn device_step(p: &EnergyParams, elapsed: f64, dt: f64) -> f64 {
    p.devices
        .iter()
        .map(|d| {
            let on = (d.duration.min(elapsed + dt) - elapsed).max(0.0);
            d.power * on
        })
        .sum()
}

/// Components of one step, joules.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepEnergy {
    pub uphill: f64,
    pub downhill: f64,
    pub loss: f64,
    pub accel: f64,
    pub decel: f64,
    pub devices: f64,
}

impl StepEnergy {
    /// `dv_deadband` treats smaller speed changes as none; the speed-change
    /// term grows without bound as the change goes to zero.
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        p: &EnergyParams,
        v_prev: f64,
        v_now: f64,
        distance: f64,
        rise: f64,
        elapsed: f64,
        dt: f64,
        dv_deadband: f64,
    ) -> Self {
        let grade = potential(p, rise);
        let change = if (v_now - v_prev).abs() < dv_deadband {
            0.0
        } else {
            accel_energy(p, v_prev, v_now, distance)
        };
        StepEnergy {
            uphill: grade.max(0.0),
            downhill: grade.min(0.0),
            loss: loss(p, v_now, dt),
            accel: change.max(0.0),
            decel: change.min(0.0),
            devices: device_step(p, elapsed, dt),
        }
    }

    pub fn total(&self) -> f64 {
        self.uphill + self.downhill + self.loss + self.accel + self.decel + self.devices
    }
}

/// Running sums of every component over a trip.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyLedger {
    pub components: StepEnergy,
    pub total: f64,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, step: &StepEnergy) {
        let c = &mut self.components;
        c.uphill += step.uphill;
        c.downhill += step.downhill;
        c.loss += step.loss;
        c.accel += step.accel;
        c.decel += step.decel;
        c.devices += step.devices;
        self.total += step.total();
    }
}
